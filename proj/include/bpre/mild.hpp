#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "bpre/grid.hpp"
#include "bpre/kernels.hpp"
#include "bpre/rng.hpp"

namespace bpre {

/// One realization of the environment W on [0, horizon] for d = 1, with the
/// rule for the W-integral at an arbitrary point:
///   int h(y - x) W(dt, dy) ~ sum_c h(y_c - x) dW_c  over the cells c.
class FrozenEnvironment {
 public:
  /// Cell spacing <= support_radius(h) / 8, domain [x_lo, x_hi] padded by
  /// 4 support radii on both sides, `steps` time steps of horizon / steps.
  static FrozenEnvironment create(const MatrixKernel& h, double x_lo, double x_hi, double horizon, std::size_t steps,
                                  std::uint64_t seed);
  /// Same as create() but with an existing realization (replay).
  FrozenEnvironment(const MatrixKernel& h, WhiteNoiseGrid noise);

  const MatrixKernel& kernel() const { return h_; }
  const WhiteNoiseGrid& noise() const { return noise_; }
  double dt() const { return noise_.dt(); }
  std::size_t steps() const { return noise_.steps(); }
  double horizon() const { return noise_.dt() * static_cast<double>(noise_.steps()); }
  /// Covered interval [lo, hi] (outer cell faces).
  double lo() const { return lo_; }
  double hi() const { return hi_; }
  bool contains(double x) const { return x >= lo_ && x <= hi_; }

  /// sum_c h(y_c - x) dW_c for time step s.
  double drift(std::size_t s, double x) const;

  /// Writes `<stem>.bin` (raw little-endian doubles) and `<stem>.json`
  /// (shape, dt, spacing, seed, kernel) for exact replay.
  void save(const std::filesystem::path& stem) const;
  /// Reads a pair written by save(); the caller supplies the kernel, whose
  /// description must match the header.
  static FrozenEnvironment load(const std::filesystem::path& stem, const MatrixKernel& h);

 private:
  MatrixKernel h_;
  WhiteNoiseGrid noise_;
  double lo_ = 0.0;
  double hi_ = 0.0;
  double cell0_ = 0.0;    // centre of cell 0
  double spacing_ = 1.0;
  std::size_t cells_ = 0;
  bool box_ = false;
  std::vector<double> prefix_;  // per step prefix sums of dW (box kernels only)
};

/// Description of a kernel for headers and metadata.
std::string describe_kernel(const MatrixKernel& h);

/// KDE p^W(r, z; t, x) on a target axis for every source point z.
struct ConditionalDensity {
  double r = 0.0;
  double t = 0.0;
  std::vector<double> sources;
  Axis target;
  std::vector<double> values;  // [source * target.count + node]
  std::size_t paths_used = 0;  // M per source
  std::size_t exits = 0;       // paths that left the environment grid

  double at(std::size_t source, std::size_t node) const { return values[source * target.count + node]; }
};

/// Gaussian KDE on a uniform axis with bandwidth variance eps: linear binning
/// of the samples followed by a discrete Gaussian convolution truncated at
/// 6 standard deviations. Samples carry mass `weight` each.
void binned_kde(std::span<const double> samples, double weight, const Axis& axis, double eps, std::span<double> out);

/// Conditional transition density of one particle given the frozen W.
/// r and t must lie on the environment's time grid; eps <= 0 selects
/// max(spacing^2, (t - r) / 16). Paths through the same environment with the
/// same rng reproduce bit-for-bit.
ConditionalDensity estimate_conditional_density(const FrozenEnvironment& env, double r, std::span<const double> sources,
                                                double t, const Axis& target, std::size_t paths, double eps, Rng& rng);

/// Per-step Gaussian vectors on grid nodes with covariance dt * (kappa(x_i, x_j)).
struct ColoredNoise {
  Axis grid;
  double dt = 0.0;
  std::size_t steps = 0;
  std::vector<double> increments;  // [step * grid.count + node]

  std::span<const double> step(std::size_t s) const {
    return std::span<const double>(increments).subspan(s * grid.count, grid.count);
  }
};

ColoredNoise sample_colored_noise(const CorrelationKernel& kappa, const Axis& grid, double dt, std::size_t steps,
                                  Rng& rng);

struct MildSpec {
  Axis grid;                      // x grid (also the z grid of the iteration)
  double horizon = 0.25;
  std::size_t time_steps = 16;    // coarse times t_j = j * horizon / time_steps
  std::size_t substeps = 4;       // environment steps per coarse step
  std::size_t paths = 1000;       // M per source point
  std::size_t iterations = 5;     // K
  double max_exit_rate = 0.01;
};

/// All conditional densities p^W(t_i, z; t_j, x), i < j, on the shared time grid.
class KernelBank {
 public:
  /// Paths from (t_i, z) use the stream derive_seed(seed, {"pw", i, z_index})
  /// and only the environment steps after t_i.
  KernelBank(const FrozenEnvironment& env, const MildSpec& spec, std::uint64_t seed);

  std::size_t time_steps() const { return time_steps_; }
  std::size_t nodes() const { return nodes_; }
  /// Row-major [z * nodes + x] density block for the pair (i, j), i < j.
  std::span<const double> block(std::size_t i, std::size_t j) const;
  std::size_t exits() const { return exits_; }
  std::size_t paths_total() const { return paths_total_; }
  double exit_rate() const {
    return paths_total_ ? static_cast<double>(exits_) / static_cast<double>(paths_total_) : 0.0;
  }

 private:
  std::size_t index(std::size_t i, std::size_t j) const;

  std::size_t time_steps_;
  std::size_t nodes_;
  std::vector<std::vector<double>> blocks_;
  std::size_t exits_ = 0;
  std::size_t paths_total_ = 0;
};

struct PicardResult {
  std::vector<double> times;            // t_0 .. t_J
  std::vector<std::vector<double>> u;   // u^K(t_j, .) per time
  std::vector<double> diffs;            // d*_k = sup_x |u^k(T) - u^{k-1}(T)|, k = 1..K
  GridField final;                      // u^K(T, .)
  double exit_rate = 0.0;
};

/// Picard iteration of the mild equation with one fixed environment and one
/// fixed colored-noise realization:
///   u^0 = mu,
///   u^k(t_j, x) = sum_z mu(z) p(0, z; t_j, x) dz
///               + sum_{i < j} sum_z p(t_i, z; t_j, x) u^{k-1}(t_i, z) dV(t_i, z) dz.
/// Throws NumericError when the exit rate exceeds spec.max_exit_rate.
PicardResult picard_solve(const GridField& mu, const KernelBank& bank, const ColoredNoise& noise,
                          const MildSpec& spec);

/// Convenience: environment, bank and noise from one seed, then picard_solve.
/// Streams: derive_seed(seed, {"environment"}), {"kernel-bank"}, {"colored-noise"}.
PicardResult mild_solve(const GridField& mu, const MatrixKernel& h, const CorrelationKernel& kappa,
                        const MildSpec& spec, std::uint64_t seed);

}  // namespace bpre
