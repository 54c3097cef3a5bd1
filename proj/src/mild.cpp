#include "bpre/mild.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>

#include <fmt/format.h>
#include "json.hpp"

#include "bpre/error.hpp"

namespace bpre {

namespace {

constexpr double kTimeTol = 1e-9;

const char* shape_name(ProfileShape s) {
  switch (s) {
    case ProfileShape::kBox:
      return "box";
    case ProfileShape::kHat:
      return "hat";
    case ProfileShape::kGauss:
      return "gauss";
  }
  return "unknown";
}

std::size_t time_index(const FrozenEnvironment& env, double t, const char* what) {
  const double k = std::round(t / env.dt());
  if (std::abs(k * env.dt() - t) > kTimeTol * std::max(1.0, std::abs(t)) || k < 0.0 ||
      k > static_cast<double>(env.steps())) {
    throw InvalidArgument(fmt::format("{} = {} is not on the environment time grid (dt = {})", what, t, env.dt()));
  }
  return static_cast<std::size_t>(k);
}

double default_eps(const Axis& axis, double elapsed) { return std::max(axis.spacing * axis.spacing, elapsed / 16.0); }

// Runs `x.size()` paths from env step `first` and calls record(k, x) after
// each step listed in `records` (ascending). Exited paths become NaN.
template <class Record>
std::size_t run_paths(const FrozenEnvironment& env, std::size_t first, std::span<double> x,
                      std::span<const std::size_t> records, Rng& rng, Record&& record) {
  const double sd = std::sqrt(env.dt());
  std::size_t exits = 0;
  std::size_t next = 0;
  const std::size_t last = records.empty() ? first : records.back();
  for (std::size_t s = first; s < last; ++s) {
    for (double& xi : x) {
      if (std::isnan(xi)) continue;
      // One normal per live path per step keeps the stream aligned with the path set.
      const double db = sd * rng.normal();
      xi += db + env.drift(s, xi);
      if (!env.contains(xi)) {
        xi = std::numeric_limits<double>::quiet_NaN();
        ++exits;
      }
    }
    while (next < records.size() && records[next] == s + 1) record(next++, std::span<const double>(x));
  }
  return exits;
}

}  // namespace

std::string describe_kernel(const MatrixKernel& h) {
  if (h.is_zero()) return fmt::format("zero:dim={}", h.dim());
  if (h.is_separable()) {
    return fmt::format("{}:dim={}:scale={:.17g}:amplitude={:.17g}", shape_name(h.profile().shape), h.dim(),
                       h.profile().scale, h.amplitude());
  }
  return fmt::format("general:dim={}:radius={:.17g}", h.dim(), h.support_radius());
}

FrozenEnvironment FrozenEnvironment::create(const MatrixKernel& h, double x_lo, double x_hi, double horizon,
                                            std::size_t steps, std::uint64_t seed) {
  if (h.dim() != 1) throw InvalidArgument("the mild solver is shipped for d = 1 only");
  if (!(x_hi > x_lo)) throw InvalidArgument("environment needs x_hi > x_lo");
  if (!(horizon > 0.0) || steps < 1) throw InvalidArgument("environment needs horizon > 0 and steps >= 1");
  const double radius = h.support_radius();
  const double lo = x_lo - 4.0 * radius;
  const double hi = x_hi + 4.0 * radius;
  const auto cells = static_cast<std::size_t>(std::ceil((hi - lo) / (radius / 8.0) - 1e-9));
  const double spacing = (hi - lo) / static_cast<double>(cells);
  Grid grid({Axis{lo + 0.5 * spacing, spacing, cells}});
  return FrozenEnvironment(h, WhiteNoiseGrid(std::move(grid), 1, horizon / static_cast<double>(steps), steps, seed));
}

FrozenEnvironment::FrozenEnvironment(const MatrixKernel& h, WhiteNoiseGrid noise)
    : h_(h), noise_(std::move(noise)) {
  if (h_.dim() != 1 || noise_.grid().rank() != 1 || noise_.components() != 1) {
    throw InvalidArgument("the mild solver is shipped for d = 1 only");
  }
  const Axis& a = noise_.grid().axis(0);
  cell0_ = a.origin;
  spacing_ = a.spacing;
  cells_ = a.count;
  lo_ = a.origin - 0.5 * a.spacing;
  hi_ = a.last() + 0.5 * a.spacing;
  box_ = h_.is_separable() && h_.profile().shape == ProfileShape::kBox;
  if (box_ && !h_.is_zero()) {
    prefix_.assign((cells_ + 1) * noise_.steps(), 0.0);
    for (std::size_t s = 0; s < noise_.steps(); ++s) {
      const auto dw = noise_.step(s);
      double* p = prefix_.data() + s * (cells_ + 1);
      for (std::size_t c = 0; c < cells_; ++c) p[c + 1] = p[c] + dw[c];
    }
  }
}

double FrozenEnvironment::drift(std::size_t s, double x) const {
  if (h_.is_zero()) return 0.0;
  double plo = -h_.support_radius(), phi = h_.support_radius();
  if (h_.is_separable()) {
    plo = h_.profile().lo();
    phi = h_.profile().hi();
  }
  // Cells whose centre y_c satisfies y_c - x in [plo, phi].
  const double first = std::ceil((x + plo - cell0_) / spacing_);
  const double last = std::floor((x + phi - cell0_) / spacing_);
  const auto c0 = static_cast<std::ptrdiff_t>(std::max(first, 0.0));
  const auto c1 = static_cast<std::ptrdiff_t>(std::min(last, static_cast<double>(cells_) - 1.0));
  if (c1 < c0) return 0.0;
  if (box_) {
    const double* p = prefix_.data() + s * (cells_ + 1);
    return h_.amplitude() * (p[c1 + 1] - p[c0]);
  }
  const auto dw = noise_.step(s);
  double acc = 0.0;
  for (std::ptrdiff_t c = c0; c <= c1; ++c) {
    const double y = cell0_ + static_cast<double>(c) * spacing_ - x;
    const double hv = h_.is_separable() ? h_.eval1(y) : h_.eval(std::span<const double>(&y, 1))(0, 0);
    acc += hv * dw[static_cast<std::size_t>(c)];
  }
  return acc;
}

void FrozenEnvironment::save(const std::filesystem::path& stem) const {
  auto bin = stem;
  bin += ".bin";
  auto hdr = stem;
  hdr += ".json";
  const auto data = noise_.data();
  {
    std::ofstream out(bin, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + bin.string());
    out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(double)));
    if (!out) throw IoError("failed writing " + bin.string());
  }
  const Axis& a = noise_.grid().axis(0);
  nlohmann::ordered_json j;
  j["schema"] = 1;
  j["kind"] = "environment";
  j["shape"] = {noise_.steps(), a.count, noise_.components()};
  j["dtype"] = "float64-le";
  j["dt"] = noise_.dt();
  j["origin"] = a.origin;
  j["spacing"] = a.spacing;
  j["seed"] = noise_.seed();
  j["kernel"] = describe_kernel(h_);
  std::ofstream out(hdr, std::ios::trunc);
  if (!out) throw IoError("cannot write " + hdr.string());
  out << j.dump(2) << "\n";
}

FrozenEnvironment FrozenEnvironment::load(const std::filesystem::path& stem, const MatrixKernel& h) {
  auto bin = stem;
  bin += ".bin";
  auto hdr = stem;
  hdr += ".json";
  std::ifstream in(hdr);
  if (!in) throw IoError("cannot read " + hdr.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed environment header " + hdr.string() + ": " + e.what());
  }
  if (j.value("schema", 0) != 1 || j.value("kind", "") != "environment") {
    throw IoError("unsupported environment header " + hdr.string());
  }
  if (j.at("kernel").get<std::string>() != describe_kernel(h)) {
    throw InvalidArgument("environment was recorded with kernel " + j.at("kernel").get<std::string>());
  }
  const auto steps = j.at("shape").at(0).get<std::size_t>();
  const auto cells = j.at("shape").at(1).get<std::size_t>();
  const auto comps = j.at("shape").at(2).get<int>();
  std::vector<double> data(steps * cells * static_cast<std::size_t>(comps));
  std::ifstream raw(bin, std::ios::binary);
  if (!raw) throw IoError("cannot read " + bin.string());
  raw.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(double)));
  if (raw.gcount() != static_cast<std::streamsize>(data.size() * sizeof(double)) || raw.peek() != EOF) {
    throw IoError("environment data size does not match header in " + bin.string());
  }
  Grid grid({Axis{j.at("origin").get<double>(), j.at("spacing").get<double>(), cells}});
  return FrozenEnvironment(h, WhiteNoiseGrid::from_data(std::move(grid), comps, j.at("dt").get<double>(), steps,
                                                        j.at("seed").get<std::uint64_t>(), std::move(data)));
}

void binned_kde(std::span<const double> samples, double weight, const Axis& axis, double eps, std::span<double> out) {
  if (!(eps > 0.0)) throw InvalidArgument("KDE bandwidth must be positive");
  if (out.size() != axis.count) throw InvalidArgument("KDE output size mismatch");
  const double sd = std::sqrt(eps);
  const auto pad = static_cast<std::ptrdiff_t>(std::ceil(6.0 * sd / axis.spacing)) + 1;
  const auto n = static_cast<std::ptrdiff_t>(axis.count);
  std::vector<double> bins(static_cast<std::size_t>(n + 2 * pad), 0.0);
  for (double s : samples) {
    if (std::isnan(s)) continue;
    const double u = (s - axis.origin) / axis.spacing;
    const double fl = std::floor(u);
    const auto k = static_cast<std::ptrdiff_t>(fl);
    if (k < -pad || k + 1 >= n + pad) continue;
    const double frac = u - fl;
    bins[static_cast<std::size_t>(k + pad)] += weight * (1.0 - frac);
    bins[static_cast<std::size_t>(k + 1 + pad)] += weight * frac;
  }
  std::vector<double> taps(static_cast<std::size_t>(2 * pad + 1));
  const double norm = 1.0 / std::sqrt(2.0 * std::numbers::pi * eps);
  for (std::ptrdiff_t m = -pad; m <= pad; ++m) {
    const double dx = static_cast<double>(m) * axis.spacing;
    taps[static_cast<std::size_t>(m + pad)] = norm * std::exp(-0.5 * dx * dx / eps);
  }
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    double acc = 0.0;
    // Node i sees bins i - pad .. i + pad, stored at offset +pad.
    const double* b = bins.data() + i;
    for (std::ptrdiff_t m = 0; m <= 2 * pad; ++m) acc += b[m] * taps[static_cast<std::size_t>(2 * pad - m)];
    out[static_cast<std::size_t>(i)] = acc;
  }
}

ConditionalDensity estimate_conditional_density(const FrozenEnvironment& env, double r, std::span<const double> sources,
                                                double t, const Axis& target, std::size_t paths, double eps, Rng& rng) {
  if (!(r < t)) throw InvalidArgument("conditional density needs r < t");
  if (paths < 1000) throw InvalidArgument("conditional density needs at least 1000 paths per source");
  if (sources.empty() || target.count < 2) throw InvalidArgument("conditional density needs sources and a target grid");
  const std::size_t kr = time_index(env, r, "r");
  const std::size_t kt = time_index(env, t, "t");
  if (eps <= 0.0) eps = default_eps(target, t - r);

  ConditionalDensity out;
  out.r = r;
  out.t = t;
  out.sources.assign(sources.begin(), sources.end());
  out.target = target;
  out.values.assign(sources.size() * target.count, 0.0);
  out.paths_used = paths;
  const std::uint64_t base = rng.engine()();
  std::vector<double> x(paths);
  const std::size_t records[] = {kt};
  for (std::size_t zi = 0; zi < sources.size(); ++zi) {
    Rng path_rng(derive_seed(base, {"source", static_cast<std::uint64_t>(zi)}));
    std::fill(x.begin(), x.end(), sources[zi]);
    out.exits += run_paths(env, kr, x, records, path_rng, [&](std::size_t, std::span<const double> pos) {
      binned_kde(pos, 1.0 / static_cast<double>(paths), target,
                 eps, std::span<double>(out.values).subspan(zi * target.count, target.count));
    });
  }
  return out;
}

ColoredNoise sample_colored_noise(const CorrelationKernel& kappa, const Axis& grid, double dt, std::size_t steps,
                                  Rng& rng) {
  if (!(dt > 0.0)) throw InvalidArgument("colored noise dt must be positive");
  ColoredNoise noise;
  noise.grid = grid;
  noise.dt = dt;
  noise.steps = steps;
  noise.increments.assign(steps * grid.count, 0.0);
  if (kappa.is_zero()) return noise;
  std::vector<double> nodes(grid.count);
  for (std::size_t i = 0; i < grid.count; ++i) nodes[i] = grid.node(i);
  const Matrix gram = correlation_gram(kappa, nodes, 1) * dt;
  const GaussianSampler sampler(gram);
  for (std::size_t s = 0; s < steps; ++s) {
    sampler.sample_into(rng, std::span<double>(noise.increments).subspan(s * grid.count, grid.count));
  }
  return noise;
}

KernelBank::KernelBank(const FrozenEnvironment& env, const MildSpec& spec, std::uint64_t seed)
    : time_steps_(spec.time_steps), nodes_(spec.grid.count) {
  if (spec.time_steps < 1 || spec.substeps < 1) throw InvalidArgument("mild solver needs time_steps, substeps >= 1");
  if (spec.paths < 1000) throw InvalidArgument("mild solver needs at least 1000 paths per source");
  if (env.steps() != spec.time_steps * spec.substeps) {
    throw InvalidArgument("environment steps must equal time_steps * substeps");
  }
  if (std::abs(env.horizon() - spec.horizon) > kTimeTol * spec.horizon) {
    throw InvalidArgument("environment horizon differs from the solver horizon");
  }
  if (!env.contains(spec.grid.origin) || !env.contains(spec.grid.last())) {
    throw InvalidArgument("environment does not cover the x grid");
  }
  const std::size_t J = time_steps_;
  const double coarse = spec.horizon / static_cast<double>(J);
  blocks_.resize(J * (J + 1));
  std::vector<double> x(spec.paths);
  std::vector<std::size_t> records;
  const double weight = 1.0 / static_cast<double>(spec.paths);
  for (std::size_t i = 0; i < J; ++i) {
    records.clear();
    for (std::size_t j = i + 1; j <= J; ++j) {
      records.push_back(j * spec.substeps);
      blocks_[index(i, j)].assign(nodes_ * nodes_, 0.0);
    }
    for (std::size_t z = 0; z < nodes_; ++z) {
      Rng rng(derive_seed(seed, {"pw", static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(z)}));
      std::fill(x.begin(), x.end(), spec.grid.node(z));
      exits_ += run_paths(env, i * spec.substeps, x, records, rng, [&](std::size_t k, std::span<const double> pos) {
        const std::size_t j = i + 1 + k;
        const double eps = default_eps(spec.grid, static_cast<double>(j - i) * coarse);
        binned_kde(pos, weight, spec.grid, eps,
                   std::span<double>(blocks_[index(i, j)]).subspan(z * nodes_, nodes_));
      });
      paths_total_ += spec.paths;
    }
  }
}

std::size_t KernelBank::index(std::size_t i, std::size_t j) const { return i * (time_steps_ + 1) + j; }

std::span<const double> KernelBank::block(std::size_t i, std::size_t j) const {
  if (!(i < j && j <= time_steps_)) throw InvalidArgument("kernel bank block needs i < j <= time_steps");
  return blocks_[index(i, j)];
}

PicardResult picard_solve(const GridField& mu, const KernelBank& bank, const ColoredNoise& noise, const MildSpec& spec) {
  if (mu.grid.rank() != 1 || !(mu.grid.axis(0) == spec.grid)) {
    throw InvalidArgument("initial density must live on the solver grid");
  }
  if (!(noise.grid == spec.grid) || noise.steps != spec.time_steps) {
    throw InvalidArgument("colored noise must be sampled on the solver grid and coarse time steps");
  }
  if (bank.time_steps() != spec.time_steps || bank.nodes() != spec.grid.count) {
    throw InvalidArgument("kernel bank does not match the solver grid");
  }
  if (spec.iterations < 1) throw InvalidArgument("picard iteration needs K >= 1");
  if (bank.exit_rate() > spec.max_exit_rate) {
    throw NumericError(fmt::format("path exit rate {:.4g} exceeds the limit {:.4g}; widen the environment padding",
                                   bank.exit_rate(), spec.max_exit_rate));
  }
  mu.check_finite("initial density");
  const std::size_t J = spec.time_steps;
  const std::size_t N = spec.grid.count;
  const double dz = spec.grid.spacing;

  PicardResult res;
  res.exit_rate = bank.exit_rate();
  for (std::size_t j = 0; j <= J; ++j) res.times.push_back(spec.horizon * static_cast<double>(j) / static_cast<double>(J));

  // Deterministic part sum_z mu(z) p(0, z; t_j, x) dz.
  std::vector<std::vector<double>> base(J + 1, std::vector<double>(N, 0.0));
  base[0] = mu.values;
  for (std::size_t j = 1; j <= J; ++j) {
    const auto p = bank.block(0, j);
    for (std::size_t z = 0; z < N; ++z) {
      const double w = mu.values[z] * dz;
      if (w == 0.0) continue;
      const double* row = p.data() + z * N;
      for (std::size_t x = 0; x < N; ++x) base[j][x] += w * row[x];
    }
  }

  std::vector<std::vector<double>> prev(J + 1, mu.values), next(J + 1);
  std::vector<double> w(N);
  for (std::size_t k = 1; k <= spec.iterations; ++k) {
    for (std::size_t j = 0; j <= J; ++j) next[j] = base[j];
    for (std::size_t i = 0; i < J; ++i) {
      const auto dv = noise.step(i);
      bool any = false;
      for (std::size_t z = 0; z < N; ++z) {
        w[z] = prev[i][z] * dv[z] * dz;
        any = any || w[z] != 0.0;
      }
      if (!any) continue;
      for (std::size_t j = i + 1; j <= J; ++j) {
        const auto p = bank.block(i, j);
        auto& out = next[j];
        for (std::size_t z = 0; z < N; ++z) {
          if (w[z] == 0.0) continue;
          const double* row = p.data() + z * N;
          for (std::size_t x = 0; x < N; ++x) out[x] += w[z] * row[x];
        }
      }
    }
    double diff = 0.0;
    for (std::size_t x = 0; x < N; ++x) diff = std::max(diff, std::abs(next[J][x] - prev[J][x]));
    res.diffs.push_back(diff);
    std::swap(prev, next);
  }
  res.u = prev;
  res.final = GridField(mu.grid, 0.0, spec.horizon);
  res.final.values = prev[J];
  res.final.check_finite("picard iterate");
  return res;
}

PicardResult mild_solve(const GridField& mu, const MatrixKernel& h, const CorrelationKernel& kappa,
                        const MildSpec& spec, std::uint64_t seed) {
  const FrozenEnvironment env = FrozenEnvironment::create(h, spec.grid.origin, spec.grid.last(), spec.horizon,
                                                          spec.time_steps * spec.substeps,
                                                          derive_seed(seed, {"environment"}));
  const KernelBank bank(env, spec, derive_seed(seed, {"kernel-bank"}));
  Rng vrng(derive_seed(seed, {"colored-noise"}));
  const ColoredNoise noise = sample_colored_noise(kappa, spec.grid, spec.horizon / static_cast<double>(spec.time_steps),
                                                  spec.time_steps, vrng);
  return picard_solve(mu, bank, noise, spec);
}

}  // namespace bpre
