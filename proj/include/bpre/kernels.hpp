#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "bpre/grid.hpp"
#include "bpre/rng.hpp"

namespace bpre {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class ProfileShape { kBox, kHat, kGauss };

/// Compactly supported 1-D profile g.
///   box:   1 on [0, scale]
///   hat:   (1 - |s|/scale)+ on [-scale, scale]
///   gauss: exp(-s^2 / (2 scale^2)) on [-4 scale, 4 scale], exactly 0 outside
struct Profile {
  ProfileShape shape = ProfileShape::kBox;
  double scale = 1.0;

  double operator()(double s) const;
  double lo() const;
  double hi() const;
};

/// The d x d environment-smoothing kernel h.
class MatrixKernel {
 public:
  using EvalFn = std::function<Matrix(std::span<const double>)>;

  /// h(x) = amplitude * prod_a g(x_a) * I_d.
  static MatrixKernel separable(int dim, Profile profile, double amplitude);
  static MatrixKernel zero(int dim);
  /// Arbitrary kernel vanishing outside the ball of `support_radius`.
  static MatrixKernel general(int dim, EvalFn fn, double support_radius);

  int dim() const { return dim_; }
  Matrix eval(std::span<const double> x) const;
  double support_radius() const { return support_radius_; }
  /// Numeric sum_ij ||h^ij||_2^2.
  double l2_norm_sq() const { return l2_norm_sq_; }
  /// Configured upper bound standing in for ||h||_{3,2}^2. Defaults to l2_norm_sq().
  double norm_bound() const { return norm_bound_; }
  void set_norm_bound(double bound);

  bool is_separable() const { return separable_; }
  bool is_zero() const { return amplitude_ == 0.0; }
  const Profile& profile() const { return profile_; }
  double amplitude() const { return amplitude_; }
  /// Scalar h for d = 1 separable kernels (hot path for frozen environments).
  double eval1(double x) const { return amplitude_ * profile_(x); }

 private:
  int dim_ = 1;
  bool separable_ = true;
  Profile profile_{};
  double amplitude_ = 0.0;
  EvalFn fn_;
  double support_radius_ = 0.0;
  double l2_norm_sq_ = 0.0;
  double norm_bound_ = 0.0;
};

/// rho(x) = int h(z - x) h^*(z) dz, evaluated by midpoint quadrature.
class RhoKernel {
 public:
  int dim() const;
  Matrix eval(std::span<const double> x) const;
  /// rho(x) for d = 1.
  double eval1(double x) const;
  const Matrix& rho0() const;
  double quad_step() const;
  bool is_zero() const;

 private:
  struct Impl;
  std::shared_ptr<const Impl> impl_;
  friend RhoKernel build_rho(const MatrixKernel& h, double quad_step);
};

/// Throws InvalidArgument for quad_step <= 0 or a kernel without finite support.
RhoKernel build_rho(const MatrixKernel& h, double quad_step);
/// Default step: support_radius / 256.
RhoKernel build_rho(const MatrixKernel& h);

/// Symmetric branching correlation kappa(x, y) >= 0.
class CorrelationKernel {
 public:
  enum class Decay { kVanishing, kStationary, kConstantTestMode };

  /// amplitude * exp(-|x-y|^2 / scale^2), times exp(-(|x|^2+|y|^2) / (2 envelope^2))
  /// when envelope > 0.
  static CorrelationKernel gaussian(double amplitude, double scale, double envelope = 0.0);
  /// kappa == c. Violates vanishing at infinity; test mode only.
  static CorrelationKernel constant(double c);

  double operator()(std::span<const double> x, std::span<const double> y) const;
  double sup_norm() const { return amplitude_; }
  Decay decay() const;
  std::string label() const;
  bool is_zero() const { return amplitude_ == 0.0; }
  bool is_constant() const { return constant_; }

 private:
  bool constant_ = true;
  double amplitude_ = 0.0;
  double scale_ = 1.0;
  double envelope_ = 0.0;
};

/// Cached factor of a covariance matrix. Negative eigenvalues (quadrature
/// noise) are clipped to zero.
class GaussianSampler {
 public:
  /// Throws InvalidArgument on non-square, asymmetric (> 1e-10) or NaN input.
  explicit GaussianSampler(const Matrix& gram);

  std::size_t dim() const { return static_cast<std::size_t>(factor_.rows()); }
  void sample_into(Rng& rng, std::span<double> out) const;
  Vector sample(Rng& rng) const;
  /// True when the eigenvalue-clipping fallback was needed.
  bool clipped() const { return clipped_; }

 private:
  Matrix factor_;
  bool clipped_ = false;
};

Vector sample_correlated_gaussian(const Matrix& gram, Rng& rng);

/// Gram matrix (kappa(x_i, x_j)) of points stored flat with stride `dim`.
Matrix correlation_gram(const CorrelationKernel& kappa, std::span<const double> positions, int dim);

/// Gaussian xi at each position with Gram kappa, clamped to [-truncation, truncation].
std::vector<double> sample_branching_field(const CorrelationKernel& kappa, std::span<const double> positions,
                                           int dim, double truncation, Rng& rng);

/// Space-time white noise on a cell grid: per step, `components` independent
/// normals per cell with variance dt * cell volume. Step s draws from its own
/// substream derive_seed(seed, {"white-noise", s}).
class WhiteNoiseGrid {
 public:
  WhiteNoiseGrid(Grid cells, int components, double dt, std::size_t steps, std::uint64_t seed);
  /// Rebuilds a realization from stored increments (environment replay).
  static WhiteNoiseGrid from_data(Grid cells, int components, double dt, std::size_t steps, std::uint64_t seed,
                                  std::vector<double> increments);

  const Grid& grid() const { return cells_; }
  int components() const { return components_; }
  double dt() const { return dt_; }
  std::size_t steps() const { return steps_; }
  std::uint64_t seed() const { return seed_; }
  double variance() const { return dt_ * cells_.cell_volume(); }
  /// Increments of step s, cell-major: [cell * components + component].
  std::span<const double> step(std::size_t s) const;
  std::span<const double> data() const { return increments_; }

 private:
  Grid cells_;
  int components_ = 1;
  double dt_ = 0.0;
  std::size_t steps_ = 0;
  std::uint64_t seed_ = 0;
  std::vector<double> increments_;

  WhiteNoiseGrid() = default;
};

}  // namespace bpre
