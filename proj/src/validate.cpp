#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>
#include <fmt/format.h>

#include "bpre/error.hpp"
#include "bpre/experiments.hpp"

namespace bpre {

namespace {

ReportRow bound_row(const std::string& name, double value, double tolerance, const std::string& note) {
  return ReportRow{name, value, 0.0, tolerance, value <= tolerance, note};
}

std::vector<double> random_points(Rng& rng, std::size_t count, int dim, double spread) {
  std::vector<double> pts(count * static_cast<std::size_t>(dim));
  for (double& p : pts) p = spread * (2.0 * rng.uniform() - 1.0);
  return pts;
}

void kernel_checks(const ExperimentConfig& cfg, Rng& rng, std::vector<ReportRow>& rows) {
  const MatrixKernel h = cfg.kernel_h();
  const RhoKernel rho = cfg.rho();
  const CorrelationKernel kappa = cfg.kappa();
  const int d = h.dim();
  const double R = h.support_radius();

  double reflect = 0.0, hs_excess = -INFINITY;
  std::vector<double> x(static_cast<std::size_t>(d)), mx(static_cast<std::size_t>(d));
  for (int s = 0; s < 200; ++s) {
    for (int a = 0; a < d; ++a) {
      x[a] = 2.5 * R * (2.0 * rng.uniform() - 1.0);
      mx[a] = -x[a];
    }
    const Matrix r = rho.eval(x);
    reflect = std::max(reflect, (r.transpose() - rho.eval(mx)).cwiseAbs().maxCoeff());
    hs_excess = std::max(hs_excess, r.norm() - h.l2_norm_sq());
  }
  rows.push_back(bound_row("rho_transpose_reflection", reflect, 1e-8, "max |rho(x)^T - rho(-x)|"));
  rows.push_back(bound_row("rho_hilbert_schmidt_excess", hs_excess, 1e-6 * std::max(1.0, h.l2_norm_sq()),
                           "sup ||rho(x)||_HS - ||h||_2^2"));
  const Eigen::SelfAdjointEigenSolver<Matrix> eig0(rho.rho0());
  rows.push_back(ReportRow{"rho0_min_eigenvalue", eig0.eigenvalues().minCoeff(), 0.0, -1e-10,
                           eig0.eigenvalues().minCoeff() >= -1e-10, "rho(0) is PSD"});

  // sum_{k,l} xi_k^T rho(x_k - x_l) xi_l >= 0 for unit xi_k.
  double min_form = INFINITY;
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t m = 6;
    const auto pts = random_points(rng, m, d, 2.0 * R);
    std::vector<Vector> xi(m);
    for (auto& v : xi) {
      v = Vector(d);
      for (int a = 0; a < d; ++a) v[a] = rng.normal();
      v /= std::max(v.norm(), 1e-300);
    }
    double form = 0.0;
    std::vector<double> diff(static_cast<std::size_t>(d));
    for (std::size_t k = 0; k < m; ++k) {
      for (std::size_t l = 0; l < m; ++l) {
        for (int a = 0; a < d; ++a) diff[a] = pts[k * d + a] - pts[l * d + a];
        form += xi[k].dot(rho.eval(diff) * xi[l]);
      }
    }
    min_form = std::min(min_form, form);
  }
  rows.push_back(ReportRow{"rho_quadratic_form_min", min_form, 0.0, -1e-8, min_form >= -1e-8,
                           "sum xi_k^T rho(x_k - x_l) xi_l >= -1e-8"});

  double asym = 0.0, sup = 0.0;
  for (int s = 0; s < 200; ++s) {
    const auto p = random_points(rng, 2, d, 3.0);
    const std::span<const double> a(p.data(), static_cast<std::size_t>(d)), b(p.data() + d, static_cast<std::size_t>(d));
    asym = std::max(asym, std::abs(kappa(a, b) - kappa(b, a)));
    sup = std::max(sup, kappa(a, b));
  }
  rows.push_back(bound_row("kappa_asymmetry", asym, 0.0, "kappa(x, y) == kappa(y, x) exactly"));
  rows.push_back(bound_row("kappa_sup_excess", sup - kappa.sup_norm(), 0.0, "sampled sup <= sup_norm"));

  const auto pts = random_points(rng, 40, d, 3.0);
  const Matrix gram = correlation_gram(kappa, pts, d);
  const GaussianSampler sampler(gram);
  const Eigen::SelfAdjointEigenSolver<Matrix> eig(gram);
  rows.push_back(ReportRow{"kappa_gram_min_eigenvalue", eig.eigenvalues().minCoeff(), 0.0,
                           -1e-8 * std::max(1.0, kappa.sup_norm()), true,
                           sampler.clipped() ? "negative eigenvalues clipped" : "no clipping needed"});

  const int n = static_cast<int>(cfg.integer("model.n"));
  double worst = 0.0;
  for (int s = 0; s < 200; ++s) {
    const auto field = sample_branching_field(kappa, pts, d, std::sqrt(static_cast<double>(n)), rng);
    for (double v : field) worst = std::max(worst, std::abs(v));
  }
  rows.push_back(bound_row("branching_field_clamp", worst, std::sqrt(static_cast<double>(n)), "|xi| <= sqrt(n)"));

  // White noise variance over >= 1e4 cells.
  const WhiteNoiseGrid noise(Grid({Axis{0.0, 0.05, 200}}), 1, 0.01, 60, cfg.seed());
  double s2 = 0.0, s4 = 0.0;
  for (double v : noise.data()) {
    s2 += v * v;
    s4 += v * v * v * v;
  }
  const double cnt = static_cast<double>(noise.data().size());
  const double var = s2 / cnt;
  const double se = std::sqrt(std::max(s4 / cnt - var * var, 0.0) / cnt);
  rows.push_back(ReportRow{"white_noise_variance", var, se, 5.0 * se, std::abs(var - noise.variance()) <= 5.0 * se,
                           fmt::format("dt * cell volume = {}", noise.variance())});

  // Determinism of seeded streams.
  Rng a(derive_seed(cfg.seed(), {"validate", 1})), b(derive_seed(cfg.seed(), {"validate", 1}));
  const Vector va = sampler.sample(a), vb = sampler.sample(b);
  rows.push_back(ReportRow{"seeded_sampling_reproducible", (va - vb).cwiseAbs().maxCoeff(), 0.0, 0.0, va == vb,
                           "identical seeds give identical samples"});
}

void particle_checks(const ExperimentConfig& cfg, std::vector<ReportRow>& rows) {
  SimulationSpec spec;
  spec.n = static_cast<int>(std::min<long long>(cfg.integer("model.n"), 20));
  spec.horizon = 0.5;
  spec.substeps = 4;
  spec.max_particles = cfg.count("model.max_particles");
  Rng rng(derive_seed(cfg.seed(), {"validate", "particles"}));
  const EmpiricalMeasure init = cfg.initial().sample(spec.n, rng);
  const SimulationResult run = simulate(spec, init, cfg.rho(), cfg.kappa(), rng, true);
  std::size_t bad_mass = 0;
  for (const auto& s : run.snapshots) {
    const double c = static_cast<double>(s.measure.size());
    if (std::abs(s.measure.total_mass() * spec.n - c) > 1e-12 * std::max(1.0, c)) ++bad_mass;
  }
  rows.push_back(bound_row("mass_bookkeeping_violations", static_cast<double>(bad_mass), 0.0,
                           "n * X_t(1) equals the alive count"));
  std::size_t bad_gen = 0, bad_pos = 0;
  const auto& sys = run.final_state;
  for (const auto& id : sys.ids) {
    if (id.generation() != sys.generation()) ++bad_gen;
    for (std::size_t k = 0; k <= id.generation(); ++k) {
      if (id.ancestor(k).generation() != id.generation() - k) ++bad_gen;
    }
  }
  for (double p : sys.positions) {
    if (!std::isfinite(p)) ++bad_pos;
  }
  rows.push_back(bound_row("genealogy_violations", static_cast<double>(bad_gen), 0.0,
                           "alive particles have |alpha| = generation and an unbroken ancestor line"));
  rows.push_back(bound_row("non_finite_positions", static_cast<double>(bad_pos), 0.0, "all positions finite"));
  double prob_excess = 0.0;
  for (const auto& e : run.events) prob_excess = std::max(prob_excess, std::abs(e.xi) - std::sqrt(double(spec.n)));
  rows.push_back(bound_row("offspring_probability_excess", prob_excess, 0.0, "|xi| / sqrt(n) <= 1"));
}

void measure_checks(const ExperimentConfig& cfg, Rng& rng, std::vector<ReportRow>& rows) {
  const int d = static_cast<int>(cfg.integer("model.dim"));
  const auto phi = TestFunction::gaussian_bump(std::vector<double>(static_cast<std::size_t>(d), 0.1), 0.8);
  double worst = 0.0;
  const double h = 1e-4;
  for (int s = 0; s < 100; ++s) {
    std::vector<double> x(static_cast<std::size_t>(d));
    for (double& v : x) v = 2.0 * rng.normal();
    const Vector g = phi.gradient(x);
    const Matrix H = phi.hessian(x);
    for (int a = 0; a < d; ++a) {
      auto xp = x, xm = x;
      xp[a] += h;
      xm[a] -= h;
      const double fd = (phi.eval(xp) - phi.eval(xm)) / (2.0 * h);
      worst = std::max(worst, std::abs(fd - g[a]) / std::max(1e-3, std::abs(g[a])));
      const Vector gd = (phi.gradient(xp) - phi.gradient(xm)) / (2.0 * h);
      for (int b = 0; b < d; ++b) {
        worst = std::max(worst, std::abs(gd[b] - H(a, b)) / std::max(1e-3, std::abs(H(a, b))));
      }
    }
  }
  rows.push_back(bound_row("test_function_derivative_mismatch", worst, 1e-4, "finite differences vs analytic"));
  const EmpiricalMeasure mu = cfg.initial().sample(50, rng);
  const double one = pair(mu, TestFunction::constant(d, 1.0));
  rows.push_back(bound_row("pairing_with_one_error", std::abs(one - mu.total_mass()), 0.0, "<mu, 1> = total mass"));
}

void duality_checks(const ExperimentConfig& cfg, std::vector<ReportRow>& rows) {
  const RhoKernel rho = cfg.rho().dim() == 1 ? cfg.rho() : build_rho(MatrixKernel::separable(1, Profile{}, 1.0));
  const CorrelationKernel kappa = cfg.kappa();
  const Grid single({Axis::symmetric(4.0, 41)});
  const Grid grid = single.power(2);
  const NParticleGenerator gen{2, 1, rho};
  GridField one(grid, 1.0);
  const GridField a1 = apply_generator(one, gen);
  double interior = 0.0;
  std::vector<std::size_t> idx(2);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    grid.unravel(i, idx);
    if (idx[0] < 2 || idx[1] < 2 || idx[0] > 38 || idx[1] > 38) continue;
    interior = std::max(interior, std::abs(a1.values[i]));
  }
  rows.push_back(bound_row("generator_on_constants", interior, 1e-12, "A^(2) 1 = 0 at interior nodes"));

  GridField f(grid);
  std::vector<double> x(2);
  double fmax = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    grid.coordinates(i, x);
    f.values[i] = std::exp(-(x[0] * x[0] + x[1] * x[1]));
    fmax = std::max(fmax, f.values[i]);
  }
  const MomentOperator op(grid, gen);
  const int steps = static_cast<int>(std::ceil(0.2 / (0.9 * op.max_stable_dt())));
  const GridField full = solve_moment_pde(f, kappa, gen, 0.2, 2 * steps);
  const GridField half = solve_moment_pde(solve_moment_pde(f, kappa, gen, 0.1, steps), kappa, gen, 0.1, steps);
  double min_v = INFINITY, semi = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    min_v = std::min(min_v, full.values[i]);
    semi = std::max(semi, std::abs(full.values[i] - half.values[i]));
  }
  rows.push_back(ReportRow{"pde_positivity_min", min_v, 0.0, -1e-12 * fmax, min_v >= -1e-12 * fmax,
                           "f >= 0, kappa >= 0 => v_t >= 0 (roundoff slack)"});
  rows.push_back(bound_row("pde_semigroup_mismatch", semi, 1e-12 * fmax, "solve(0.2) vs solve(0.1) o solve(0.1)"));
  rows.push_back(ReportRow{"clock_rate_n2", clock_rate(2), 0.0, 0.0, clock_rate(2) == 1.0, "lambda_2 = 1"});

  const GridField mu = InitialDensity{InitialDensity::Shape::kGauss, 0.5, 1}.on_grid(single);
  Rng rng(derive_seed(cfg.seed(), {"validate", "jump"}));
  const auto est = simulate_dual_jump(f, kappa, gen, mu, 1e-3, 1, rng, 200);
  const double exact = moment_from_dual(mu, f, 2);
  rows.push_back(ReportRow{"jump_small_time_limit", est.value, est.std_error, 3.0 * est.std_error + 2e-3 * exact,
                           std::abs(est.value - exact) <= 3.0 * est.std_error + 2e-3 * exact,
                           "t -> 0: estimator -> mu^(x)2(f)"});
}

void mild_checks(const ExperimentConfig& cfg, std::vector<ReportRow>& rows) {
  MildSpec spec;
  spec.grid = Axis::symmetric(3.0, 25);
  spec.time_steps = 4;
  spec.substeps = 2;
  spec.paths = 1000;
  spec.iterations = 3;
  const MatrixKernel h = MatrixKernel::separable(1, Profile{}, 1.0);
  const GridField mu = InitialDensity{InitialDensity::Shape::kGauss, 0.5, 1}.on_grid(Grid({spec.grid}));
  const auto run = mild_solve(mu, h, CorrelationKernel::constant(0.0), spec, cfg.seed());
  double late = 0.0;
  for (std::size_t k = 1; k < run.diffs.size(); ++k) late = std::max(late, run.diffs[k]);
  rows.push_back(bound_row("mild_noise_free_late_diffs", late, 0.0, "kappa = 0: d*_k = 0 for k >= 2"));

  const auto env = FrozenEnvironment::create(h, spec.grid.origin, spec.grid.last(), spec.horizon, 8, cfg.seed());
  const KernelBank a(env, spec, 7), b(env, spec, 7);
  double replay = 0.0, negative = 0.0;
  for (std::size_t i = 0; i < spec.time_steps; ++i) {
    for (std::size_t j = i + 1; j <= spec.time_steps; ++j) {
      const auto pa = a.block(i, j), pb = b.block(i, j);
      for (std::size_t k = 0; k < pa.size(); ++k) {
        replay = std::max(replay, std::abs(pa[k] - pb[k]));
        negative = std::min(negative, pa[k]);
      }
    }
  }
  rows.push_back(bound_row("environment_replay_mismatch", replay, 0.0, "same environment + streams => identical p^W"));
  rows.push_back(ReportRow{"conditional_density_min", negative, 0.0, 0.0, negative >= 0.0, "p^W >= 0"});
  rows.push_back(bound_row("kernel_bank_exit_rate", a.exit_rate(), 0.01, "paths leaving the W grid"));
}

}  // namespace

std::vector<ReportRow> invariant_suite(const ExperimentConfig& cfg) {
  std::vector<ReportRow> rows;
  Rng rng(derive_seed(cfg.seed(), {"validate"}));
  kernel_checks(cfg, rng, rows);
  particle_checks(cfg, rows);
  measure_checks(cfg, rng, rows);
  duality_checks(cfg, rows);
  mild_checks(cfg, rows);
  return rows;
}

}  // namespace bpre
