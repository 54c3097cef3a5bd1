#include "bpre/experiments.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "bpre/error.hpp"
#include "bpre/io.hpp"
#include "bpre/parallel.hpp"

namespace bpre {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

int exit_code_for(const Error& e) {
  switch (e.kind()) {
    case Error::Kind::kConfig:
      return kExitConfig;
    case Error::Kind::kNumeric:
      return kExitNumeric;
    case Error::Kind::kBudget:
      return kExitBudget;
    case Error::Kind::kInvalidArgument:
    case Error::Kind::kIo:
      return kExitFailed;
  }
  return kExitFailed;
}

bool RunResult::all_pass() const {
  return std::all_of(rows.begin(), rows.end(), [](const ReportRow& r) { return r.pass; });
}

namespace {

struct Context {
  const ExperimentConfig& cfg;
  fs::path out;
  std::size_t workers;
  std::uint64_t seed;
  RunResult result;
};

SimulationSpec simulation_spec(const ExperimentConfig& cfg) {
  SimulationSpec spec;
  spec.n = static_cast<int>(cfg.integer("model.n"));
  spec.horizon = cfg.decimal("model.horizon");
  spec.substeps = static_cast<int>(cfg.integer("model.substeps"));
  spec.max_particles = cfg.count("model.max_particles");
  return spec;
}

SimulationResult run_replica(const ExperimentConfig& cfg, const RhoKernel& rho, const CorrelationKernel& kappa,
                             std::uint64_t seed, std::size_t r) {
  const SimulationSpec spec = simulation_spec(cfg);
  Rng init_rng(derive_seed(seed, {"init", static_cast<std::uint64_t>(r)}));
  const EmpiricalMeasure mu0 = cfg.initial().sample(spec.n, init_rng);
  Rng rng(derive_seed(seed, {"replica", static_cast<std::uint64_t>(r)}));
  return simulate(spec, mu0, rho, kappa, rng);
}

// n * X_t(1) == alive count, up to the rounding of count / n.
bool mass_matches_count(double mass, std::size_t count, int n) {
  const double c = static_cast<double>(count);
  return std::abs(mass * n - c) <= 1e-12 * std::max(1.0, c);
}

ReportRow within_se(const std::string& name, double value, double reference, double se, double k,
                    const std::string& note) {
  const double dev = value - reference;
  return ReportRow{name, value, se, k * se, std::abs(dev) <= k * se, note};
}

ReportRow within_rel(const std::string& name, double value, double reference, double se, double rel,
                     const std::string& note) {
  const double tol = std::max(3.0 * se, rel * std::abs(reference));
  return ReportRow{name, value, se, tol, std::abs(value - reference) <= tol, note};
}

ordered_json kernel_json(const ExperimentConfig& cfg) {
  const MatrixKernel h = cfg.kernel_h();
  const RhoKernel rho = cfg.rho();
  const CorrelationKernel kappa = cfg.kappa();
  ordered_json k;
  k["h"] = describe_kernel(h);
  k["h_l2_norm_sq"] = h.l2_norm_sq();
  k["h_norm_bound"] = h.norm_bound();
  k["rho0_trace"] = rho.rho0().trace();
  k["kappa"] = cfg.get("kernel.kappa");
  k["kappa_sup_norm"] = kappa.sup_norm();
  k["kappa_mode"] = kappa.label();
  return k;
}

void write_metadata(Context& ctx) {
  const auto& cfg = ctx.cfg;
  ordered_json j;
  j["schema"] = 1;
  j["experiment"] = cfg.experiment();
  j["seed"] = ctx.seed;
  j["config_hash"] = cfg.hash();
  j["d"] = cfg.integer("model.dim");
  j["n"] = cfg.integer("model.n");
  j["m"] = cfg.integer("model.substeps");
  j["T"] = cfg.get("model.horizon");
  j["replicas"] = cfg.integer("run.replicas");
  j["kernel"] = kernel_json(cfg);
  ordered_json c = ordered_json::object();
  for (const auto& key : ExperimentConfig::keys()) c[key] = cfg.get(key);
  j["config"] = c;
  const fs::path path = ctx.out / "metadata.json";
  write_json(path, j);
  ctx.result.files.push_back(path);
}

void write_report(Context& ctx, ordered_json extra = ordered_json::object()) {
  ordered_json j;
  j["schema"] = 1;
  j["experiment"] = ctx.cfg.experiment();
  j["config_hash"] = ctx.cfg.hash();
  for (auto it = extra.begin(); it != extra.end(); ++it) j[it.key()] = it.value();
  ordered_json rows = ordered_json::array();
  const fs::path csv_path = ctx.out / "report.csv";
  CsvWriter csv(csv_path, {"statistic", "value", "std_error", "tolerance", "pass", "note"});
  for (const auto& r : ctx.result.rows) {
    ordered_json row;
    row["statistic"] = r.statistic;
    row["value"] = r.value;
    row["std_error"] = r.std_error;
    row["tolerance"] = r.tolerance;
    row["pass"] = r.pass;
    row["note"] = r.note;
    rows.push_back(row);
    csv.row({r.statistic, format_number(r.value), format_number(r.std_error), format_number(r.tolerance),
             r.pass ? "true" : "false", r.note});
  }
  j["rows"] = rows;
  j["all_pass"] = ctx.result.all_pass();
  const fs::path json_path = ctx.out / "report.json";
  write_json(json_path, j);
  ctx.result.files.push_back(json_path);
  ctx.result.files.push_back(csv_path);
}

// --- simulate ---------------------------------------------------------------

void run_simulate(Context& ctx) {
  const auto& cfg = ctx.cfg;
  const std::size_t R = cfg.count("run.replicas");
  const RhoKernel rho = cfg.rho();
  const CorrelationKernel kappa = cfg.kappa();
  const int n = static_cast<int>(cfg.integer("model.n"));
  std::vector<SimulationResult> runs(R);
  parallel_for(R, ctx.workers, [&](std::size_t r) { runs[r] = run_replica(cfg, rho, kappa, ctx.seed, r); });

  const bool histogram = cfg.get("output.positions") == "histogram";
  const std::size_t bins = cfg.count("output.bins");
  const double range = cfg.decimal("output.range");
  std::vector<std::string> header = {"time", "atom_count", "mass"};
  if (histogram) {
    for (std::size_t b = 0; b < bins; ++b) header.push_back(fmt::format("bin_{}", b));
  } else {
    header.push_back("positions");
  }
  CsvWriter mass_csv(ctx.out / "mass.csv", {"replica", "time", "atom_count", "mass"});
  std::size_t violations = 0;
  std::vector<double> final_dev, increments;
  std::size_t extinct = 0;
  for (std::size_t r = 0; r < R; ++r) {
    const fs::path path = ctx.out / fmt::format("trajectory_{:04}.csv", r);
    CsvWriter csv(path, header);
    const auto& snaps = runs[r].snapshots;
    for (std::size_t s = 0; s < snaps.size(); ++s) {
      const auto& m = snaps[s].measure;
      const std::size_t count = m.size();
      const double mass = m.total_mass();
      if (!mass_matches_count(mass, count, n)) ++violations;
      std::vector<std::string> row = {format_number(snaps[s].time), std::to_string(count), format_number(mass)};
      if (histogram) {
        std::vector<std::size_t> hist(bins, 0);
        for (std::size_t a = 0; a < count; ++a) {
          const double x = m.atom(a)[0];
          if (x < -range || x >= range) continue;
          const auto b = static_cast<std::size_t>((x + range) / (2.0 * range) * static_cast<double>(bins));
          ++hist[std::min(b, bins - 1)];
        }
        for (std::size_t b = 0; b < bins; ++b) row.push_back(std::to_string(hist[b]));
      } else {
        std::string pos;
        for (std::size_t a = 0; a < count; ++a) {
          if (a) pos += ' ';
          for (int k = 0; k < m.dim; ++k) {
            if (k) pos += ';';
            pos += format_number(m.atom(a)[static_cast<std::size_t>(k)]);
          }
        }
        row.push_back(pos);
      }
      csv.row(row);
      mass_csv.row({std::to_string(r), format_number(snaps[s].time), std::to_string(count), format_number(mass)});
      if (s > 0) increments.push_back(mass - snaps[s - 1].measure.total_mass());
    }
    ctx.result.files.push_back(path);
    final_dev.push_back(runs[r].final_state.measure().total_mass() - snaps.front().measure.total_mass());
    if (runs[r].extinct) ++extinct;
  }
  ctx.result.files.push_back(mass_csv.path());

  auto& rows = ctx.result.rows;
  rows.push_back(ReportRow{"mass_bookkeeping_violations", static_cast<double>(violations), 0.0, 0.0, violations == 0,
                           "n * X_t(1) equals the alive count at every snapshot"});
  const MeanSe fin = mean_se(final_dev);
  rows.push_back(within_se("total_mass_drift", fin.mean, 0.0, fin.se, 3.0, "mean of X_T(1) - X_0(1) within 3 SE of 0"));
  const MeanSe inc = mean_se(increments);
  rows.push_back(within_se("mass_increment_mean", inc.mean, 0.0, inc.se, 3.0,
                           "increments of X(1) across branching times, mean within 3 SE of 0"));
  rows.push_back(ReportRow{"extinct_replicas", static_cast<double>(extinct), 0.0, 0.0, true, "informational"});
  if (R >= 100) {
    std::vector<std::vector<Snapshot>> snaps(R);
    for (std::size_t r = 0; r < R; ++r) snaps[r] = runs[r].snapshots;
    const int d = static_cast<int>(cfg.integer("model.dim"));
    const auto phi = TestFunction::gaussian_bump(std::vector<double>(static_cast<std::size_t>(d), 0.0), 1.0);
    const auto mart = martingale_diagnostics(snaps, phi, rho, kappa);
    for (auto row : mart.rows(0.1)) {
      row.note += " (" + kappa.label() + ")";
      rows.push_back(row);
    }
  }
}

// --- moments ----------------------------------------------------------------

TestFunction moment_test_function(const ExperimentConfig& cfg) {
  const auto d = static_cast<std::size_t>(cfg.integer("model.dim"));
  if (cfg.get("moments.f") == "one") return TestFunction::constant(static_cast<int>(d), 1.0);
  return TestFunction::gaussian_bump(std::vector<double>(d, 0.0), cfg.decimal("moments.f_width"));
}

void run_moments(Context& ctx) {
  const auto& cfg = ctx.cfg;
  const int order = static_cast<int>(cfg.integer("moments.order"));
  const double t = cfg.decimal("model.horizon");
  const TestFunction phi = moment_test_function(cfg);
  const std::vector<double> mc = forward_moment_samples(cfg, phi, order, cfg.count("run.replicas"), ctx.seed);
  const MeanSe m = mean_se(mc);
  const MomentOracle oracle = moment_oracle(cfg, phi, order, cfg.count("moments.jump_replicas"), ctx.seed);
  const CorrelationKernel kappa = cfg.kappa();
  const double rel_dev = oracle.pde_value != 0.0 ? std::abs(m.mean - oracle.pde_value) / std::abs(oracle.pde_value) : 0.0;

  CsvWriter csv(ctx.out / "moments.csv", {"quantity", "value", "std_error"});
  csv.row({"mc_value", format_number(m.mean), format_number(m.se)});
  csv.row({"pde_value", format_number(oracle.pde_value), "0"});
  csv.row({"jump_value", format_number(oracle.jump.value), format_number(oracle.jump.std_error)});
  ctx.result.files.push_back(csv.path());
  CsvWriter samples(ctx.out / "mc_samples.csv", {"replica", "value"});
  for (std::size_t r = 0; r < mc.size(); ++r) samples.row({std::to_string(r), format_number(mc[r])});
  ctx.result.files.push_back(samples.path());

  auto& rows = ctx.result.rows;
  const std::string mode = kappa.label();
  rows.push_back(within_rel("mc_vs_pde", m.mean, oracle.pde_value, m.se, 0.10,
                            "forward Monte Carlo vs moment PDE, max(3 SE, 10%) (" + mode + ")"));
  // Splitting Euler steps at jump times perturbs each path by O(dt^2 A^2);
  // the allowance matters only when the estimator has (near) zero variance.
  const double allowance = 1e-6 * std::abs(oracle.pde_value);
  const double jump_tol = 3.0 * oracle.jump.std_error + allowance;
  rows.push_back(ReportRow{"jump_vs_pde", oracle.jump.value, oracle.jump.std_error, jump_tol,
                           std::abs(oracle.jump.value - oracle.pde_value) <= jump_tol,
                           "dual jump estimator vs moment PDE, 3 SE + 1e-6 relative (" + mode + ")"});
  if (kappa.is_constant() && cfg.get("moments.f") == "one") {
    const double c = kappa.sup_norm();
    const double closed = std::exp(clock_rate(order) * c * t);
    rows.push_back(ReportRow{"pde_vs_closed_form", oracle.pde_value, 0.0, 1e-3 * closed,
                             std::abs(oracle.pde_value - closed) <= 1e-3 * closed,
                             fmt::format("exp(lambda_n c t) = {} (test-mode)", format_number(closed))});
  }

  ordered_json extra;
  extra["n"] = order;
  extra["t"] = t;
  extra["f-id"] = phi.id;
  extra["mc_value"] = m.mean;
  extra["mc_se"] = m.se;
  extra["pde_value"] = oracle.pde_value;
  extra["jump_value"] = oracle.jump.value;
  extra["jump_se"] = oracle.jump.std_error;
  extra["rel_dev"] = rel_dev;
  extra["kappa_mode"] = mode;
  extra["grid_half_width"] = oracle.half_width;
  extra["grid_spacing"] = oracle.spacing;
  extra["pde_steps"] = oracle.steps;
  write_report(ctx, extra);
}

// --- mild / holder -----------------------------------------------------------

std::vector<PicardResult> mild_replicas(Context& ctx, const char* label) {
  const auto& cfg = ctx.cfg;
  const MildSpec spec = mild_spec(cfg);
  const MatrixKernel h = cfg.kernel_h();
  const CorrelationKernel kappa = cfg.kappa();
  const GridField mu = cfg.initial().on_grid(Grid({spec.grid}));
  const std::size_t R = cfg.count("run.replicas");
  std::vector<PicardResult> out(R);
  parallel_for(R, ctx.workers, [&](std::size_t r) {
    out[r] = mild_solve(mu, h, kappa, spec, derive_seed(ctx.seed, {label, static_cast<std::uint64_t>(r)}));
  });
  return out;
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

void run_mild(Context& ctx) {
  const auto& cfg = ctx.cfg;
  const MildSpec spec = mild_spec(cfg);
  const auto runs = mild_replicas(ctx, "mild");
  const CorrelationKernel kappa = cfg.kappa();
  CsvWriter u_csv(ctx.out / "u.csv", {"replica", "x", "u"});
  CsvWriter d_csv(ctx.out / "diffs.csv", {"replica", "k", "diff"});
  double exit_rate = 0.0;
  for (std::size_t r = 0; r < runs.size(); ++r) {
    for (std::size_t i = 0; i < spec.grid.count; ++i) {
      u_csv.row({std::to_string(r), format_number(spec.grid.node(i)), format_number(runs[r].final.values[i])});
    }
    for (std::size_t k = 0; k < runs[r].diffs.size(); ++k) {
      d_csv.row({std::to_string(r), std::to_string(k + 1), format_number(runs[r].diffs[k])});
    }
    exit_rate = std::max(exit_rate, runs[r].exit_rate);
  }
  ctx.result.files.push_back(u_csv.path());
  ctx.result.files.push_back(d_csv.path());

  auto& rows = ctx.result.rows;
  const std::size_t K = spec.iterations;
  rows.push_back(ReportRow{"max_exit_rate", exit_rate, 0.0, spec.max_exit_rate, exit_rate <= spec.max_exit_rate,
                           "paths leaving the environment grid"});
  if (kappa.is_zero()) {
    double late = 0.0;
    for (const auto& run : runs) {
      for (std::size_t k = 1; k < run.diffs.size(); ++k) late = std::max(late, run.diffs[k]);
    }
    rows.push_back(ReportRow{"noise_free_diffs_after_first", late, 0.0, 0.0, late == 0.0,
                             "kappa = 0: d*_k = 0 for k >= 2"});
  } else if (K >= 5) {
    std::vector<double> med;
    for (std::size_t k = 0; k + 1 < K; ++k) {
      std::vector<double> ratio;
      for (const auto& run : runs) ratio.push_back(run.diffs[k] > 0.0 ? run.diffs[k + 1] / run.diffs[k] : 0.0);
      med.push_back(median(ratio));
      rows.push_back(ReportRow{fmt::format("median_ratio_{}", k + 1), med.back(), 0.0, 0.0, true,
                               fmt::format("median of d*_{}/d*_{}", k + 2, k + 1)});
    }
    bool decreasing = true;
    for (std::size_t k = 1; k < std::min<std::size_t>(4, med.size()); ++k) decreasing = decreasing && med[k] < med[k - 1];
    rows.push_back(ReportRow{"median_ratio_strictly_decreasing", decreasing ? 1.0 : 0.0, 0.0, 0.0, decreasing,
                             "k = 1..4"});
    std::vector<double> total;
    for (const auto& run : runs) total.push_back(run.diffs[0] > 0.0 ? run.diffs[4] / run.diffs[0] : 0.0);
    const double q = median(total);
    rows.push_back(ReportRow{"median_d5_over_d1", q, 0.0, 1e-2, q < 1e-2, "d*_5 / d*_1 < 1e-2"});
  }
  // Mean pairing against a bump vs the n = 1 dual formula X_0(T_t phi).
  const TestFunction phi = TestFunction::gaussian_bump({0.0}, 1.0);
  std::vector<double> pairing;
  for (const auto& run : runs) {
    double s = 0.0;
    for (std::size_t i = 0; i < spec.grid.count; ++i) {
      const double x = spec.grid.node(i);
      s += run.final.values[i] * phi.eval(std::span<const double>(&x, 1)) * spec.grid.spacing;
    }
    pairing.push_back(s);
  }
  const MeanSe ps = mean_se(pairing);
  const MomentOracle oracle = moment_oracle(cfg, phi, 1, 1, ctx.seed);
  rows.push_back(within_rel("mean_u_phi_vs_dual", ps.mean, oracle.pde_value, ps.se, 0.10,
                            "E <u_T, phi> vs X_0(T_t phi), max(3 SE, 10%)"));
  write_report(ctx);
}

void run_holder(Context& ctx) {
  const auto& cfg = ctx.cfg;
  const MildSpec spec = mild_spec(cfg);
  const auto runs = mild_replicas(ctx, "holder");
  std::vector<std::size_t> lags;
  for (std::size_t l = 1; l <= cfg.count("holder.max_lag"); l *= 2) lags.push_back(l);
  IncrementMoments space(lags), time(lags);
  const std::size_t N = spec.grid.count;
  const std::size_t first = N / 4, last = N - 1 - N / 4;
  for (const auto& run : runs) {
    space.add_spatial(run.final.values, first, last);
    time.add_temporal(run.u, 1, first, last);
  }
  const auto sm = space.moments(spec.grid.spacing);
  const auto tm = time.moments(spec.horizon / static_cast<double>(spec.time_steps));
  const HolderFit sf = holder_exponent(sm);
  const HolderFit tf = holder_exponent(tm);
  CsvWriter csv(ctx.out / "holder.csv", {"direction", "lag", "moment"});
  for (const auto& m : sm) csv.row({"space", format_number(m.lag), format_number(m.moment)});
  for (const auto& m : tm) csv.row({"time", format_number(m.lag), format_number(m.moment)});
  ctx.result.files.push_back(csv.path());
  auto& rows = ctx.result.rows;
  rows.push_back(ReportRow{"space_exponent", sf.exponent, sf.std_error, 1.15, sf.exponent > 0.1 && sf.exponent <= 1.15,
                           "band (0.1, 1.15]"});
  rows.push_back(ReportRow{"time_exponent", tf.exponent, tf.std_error, 0.65, tf.exponent > 0.1 && tf.exponent <= 0.65,
                           "band (0.1, 0.65]"});
  write_report(ctx);
}

void run_validate(Context& ctx) {
  ctx.result.rows = invariant_suite(ctx.cfg);
  write_report(ctx);
}

}  // namespace

MildSpec mild_spec(const ExperimentConfig& cfg) {
  MildSpec spec;
  spec.grid = Axis::symmetric(cfg.decimal("mild.half_width"), cfg.count("mild.nodes"));
  spec.horizon = cfg.decimal("model.horizon");
  spec.time_steps = cfg.count("mild.time_steps");
  spec.substeps = cfg.count("mild.substeps");
  spec.paths = cfg.count("mild.paths");
  spec.iterations = cfg.count("mild.iterations");
  return spec;
}

std::vector<double> forward_moment_samples(const ExperimentConfig& cfg, const TestFunction& phi, int order,
                                           std::size_t replicas, std::uint64_t seed) {
  const RhoKernel rho = cfg.rho();
  const CorrelationKernel kappa = cfg.kappa();
  std::vector<double> out(replicas);
  parallel_for(replicas, cfg.count("run.workers"), [&](std::size_t r) {
    const SimulationResult run = run_replica(cfg, rho, kappa, seed, r);
    out[r] = std::pow(pair(run.final_state.measure(), phi), order);
  });
  return out;
}

MomentOracle moment_oracle(const ExperimentConfig& cfg, const TestFunction& phi, int order, std::size_t jump_replicas,
                           std::uint64_t seed) {
  const int d = static_cast<int>(cfg.integer("model.dim"));
  if (order * d > 2) throw InvalidArgument("moment oracles are shipped for order * dim <= 2");
  const RhoKernel rho = cfg.rho();
  const CorrelationKernel kappa = cfg.kappa();
  const InitialDensity init = cfg.initial();
  const double t = cfg.decimal("model.horizon");
  const double h = cfg.decimal("moments.spacing");
  const double rho_norm = rho.rho0().norm();
  const double spread = init.scale * init.scale + t * (1.0 + rho_norm);
  const double half = std::ceil(truncation_half_width(spread) / h) * h;
  const auto nodes = static_cast<std::size_t>(std::llround(2.0 * half / h)) + 1;

  MomentOracle out;
  out.half_width = half;
  out.spacing = h;
  const Grid single(std::vector<Axis>(static_cast<std::size_t>(d), Axis{-half, h, nodes}));
  const GridField mu = init.on_grid(single);
  const Grid product = single.power(static_cast<std::size_t>(order));
  GridField f(product);
  std::vector<double> x(product.rank());
  for (std::size_t i = 0; i < product.size(); ++i) {
    product.coordinates(i, x);
    double v = 1.0;
    for (int k = 0; k < order; ++k) v *= phi.eval(std::span<const double>(x).subspan(static_cast<std::size_t>(k * d), static_cast<std::size_t>(d)));
    f.values[i] = v;
  }
  const NParticleGenerator gen{order, d, rho};
  const MomentOperator op(product, gen);
  out.steps = static_cast<int>(std::ceil(t / (0.9 * op.max_stable_dt())));
  const GridField v = solve_moment_pde(f, kappa, gen, t, out.steps);
  out.pde_value = moment_from_dual(mu, v, order);
  Rng rng(derive_seed(seed, {"dual-jump"}));
  out.jump = simulate_dual_jump(f, kappa, gen, mu, t, out.steps, rng, jump_replicas);
  return out;
}

RunResult run_experiment(const ExperimentConfig& cfg) {
  RunResult failed;
  try {
    cfg.validate();
    Context ctx{cfg, cfg.output(), cfg.count("run.workers"), cfg.seed(), {}};
    std::error_code ec;
    fs::create_directories(ctx.out, ec);
    if (ec) throw IoError("cannot create output directory " + ctx.out.string() + ": " + ec.message());
    write_metadata(ctx);
    const std::string exp = cfg.experiment();
    if (exp == "simulate") {
      run_simulate(ctx);
      write_report(ctx);
    } else if (exp == "moments") {
      run_moments(ctx);
    } else if (exp == "mild") {
      run_mild(ctx);
    } else if (exp == "holder") {
      run_holder(ctx);
    } else {
      run_validate(ctx);
    }
    ctx.result.exit_code = (exp == "validate" && !ctx.result.all_pass()) ? kExitFailed : kExitOk;
    if (!ctx.result.all_pass()) ctx.result.message = "one or more report rows failed";
    return ctx.result;
  } catch (const Error& e) {
    failed.exit_code = exit_code_for(e);
    failed.message = e.what();
  }
  return failed;
}

}  // namespace bpre
