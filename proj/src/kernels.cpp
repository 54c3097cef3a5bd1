#include "bpre/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "bpre/error.hpp"

namespace bpre {

double Profile::operator()(double s) const {
  switch (shape) {
    case ProfileShape::kBox:
      return (s >= 0.0 && s <= scale) ? 1.0 : 0.0;
    case ProfileShape::kHat: {
      const double a = std::abs(s);
      return a < scale ? 1.0 - a / scale : 0.0;
    }
    case ProfileShape::kGauss:
      return std::abs(s) <= 4.0 * scale ? std::exp(-s * s / (2.0 * scale * scale)) : 0.0;
  }
  return 0.0;
}

double Profile::lo() const { return shape == ProfileShape::kBox ? 0.0 : -hi(); }

double Profile::hi() const {
  switch (shape) {
    case ProfileShape::kBox:
    case ProfileShape::kHat:
      return scale;
    case ProfileShape::kGauss:
      return 4.0 * scale;
  }
  return scale;
}

namespace {

// Midpoint rule for int g(z)^2 dz over [lo, hi].
double profile_l2_sq(const Profile& g) {
  const std::size_t cells = 1 << 16;
  const double step = (g.hi() - g.lo()) / static_cast<double>(cells);
  double sum = 0.0;
  for (std::size_t i = 0; i < cells; ++i) {
    const double v = g(g.lo() + (static_cast<double>(i) + 0.5) * step);
    sum += v * v;
  }
  return sum * step;
}

// Calls fn(point) at every midpoint of the cube [-radius, radius]^dim with `cells` per axis.
template <class Fn>
void for_each_midpoint(int dim, double radius, std::size_t cells, Fn&& fn) {
  const double step = 2.0 * radius / static_cast<double>(cells);
  std::vector<std::size_t> idx(static_cast<std::size_t>(dim), 0);
  std::vector<double> z(static_cast<std::size_t>(dim));
  while (true) {
    for (int a = 0; a < dim; ++a) z[a] = -radius + (static_cast<double>(idx[a]) + 0.5) * step;
    fn(std::span<const double>(z));
    int a = dim - 1;
    while (a >= 0 && ++idx[a] == cells) idx[a--] = 0;
    if (a < 0) break;
  }
}

}  // namespace

MatrixKernel MatrixKernel::separable(int dim, Profile profile, double amplitude) {
  if (dim < 1 || dim > 3) throw InvalidArgument("kernel dimension must be 1, 2 or 3");
  if (!(profile.scale > 0.0)) throw InvalidArgument("kernel scale must be positive");
  if (!std::isfinite(amplitude)) throw InvalidArgument("kernel amplitude must be finite");
  MatrixKernel k;
  k.dim_ = dim;
  k.separable_ = true;
  k.profile_ = profile;
  k.amplitude_ = amplitude;
  const double reach = std::max(std::abs(profile.lo()), std::abs(profile.hi()));
  k.support_radius_ = reach * std::sqrt(static_cast<double>(dim));
  k.l2_norm_sq_ = dim * amplitude * amplitude * std::pow(profile_l2_sq(profile), dim);
  k.norm_bound_ = k.l2_norm_sq_;
  return k;
}

MatrixKernel MatrixKernel::zero(int dim) { return separable(dim, Profile{ProfileShape::kBox, 1.0}, 0.0); }

MatrixKernel MatrixKernel::general(int dim, EvalFn fn, double support_radius) {
  if (dim < 1 || dim > 3) throw InvalidArgument("kernel dimension must be 1, 2 or 3");
  if (!fn) throw InvalidArgument("kernel function is empty");
  if (!(support_radius > 0.0) || !std::isfinite(support_radius)) {
    throw InvalidArgument("kernel must have a finite positive support radius");
  }
  MatrixKernel k;
  k.dim_ = dim;
  k.separable_ = false;
  k.amplitude_ = 1.0;
  k.fn_ = std::move(fn);
  k.support_radius_ = support_radius;
  const std::size_t cells = dim == 1 ? 4096 : (dim == 2 ? 256 : 48);
  const double cellvol = std::pow(2.0 * support_radius / static_cast<double>(cells), dim);
  double sum = 0.0;
  for_each_midpoint(dim, support_radius, cells, [&](std::span<const double> z) {
    sum += k.eval(z).squaredNorm();
  });
  k.l2_norm_sq_ = sum * cellvol;
  k.norm_bound_ = k.l2_norm_sq_;
  return k;
}

Matrix MatrixKernel::eval(std::span<const double> x) const {
  if (static_cast<int>(x.size()) != dim_) throw InvalidArgument("kernel point has wrong dimension");
  double r2 = 0.0;
  for (double v : x) r2 += v * v;
  if (r2 > support_radius_ * support_radius_) return Matrix::Zero(dim_, dim_);
  if (!separable_) return fn_(x);
  double g = amplitude_;
  for (double v : x) g *= profile_(v);
  return g * Matrix::Identity(dim_, dim_);
}

void MatrixKernel::set_norm_bound(double bound) {
  if (!(bound >= l2_norm_sq_)) {
    throw InvalidArgument("norm bound must dominate the numeric ||h||_2^2");
  }
  norm_bound_ = bound;
}

// ---------------------------------------------------------------------------

struct RhoKernel::Impl {
  int dim = 1;
  double step = 0.0;
  bool zero = false;
  Matrix rho0;
  // Separable path: c(k * step) for k = 0..table.size()-1, zero beyond.
  bool separable = true;
  double amp_sq = 0.0;
  std::vector<double> table;
  // General path.
  MatrixKernel h;

  double axis_corr(double s) const {
    const double u = std::abs(s) / step;
    const auto k = static_cast<std::size_t>(u);
    if (k + 1 >= table.size()) return 0.0;
    const double w = u - static_cast<double>(k);
    return (1.0 - w) * table[k] + w * table[k + 1];
  }

  Matrix quadrature(std::span<const double> x) const {
    const double radius = h.support_radius();
    const auto cells = static_cast<std::size_t>(std::ceil(2.0 * radius / step));
    const double r = 0.5 * static_cast<double>(cells) * step;
    Matrix acc = Matrix::Zero(dim, dim);
    std::vector<double> shifted(static_cast<std::size_t>(dim));
    for_each_midpoint(dim, r, cells, [&](std::span<const double> z) {
      const Matrix hz = h.eval(z);
      if (hz.isZero(0.0)) return;
      for (int a = 0; a < dim; ++a) shifted[a] = z[a] - x[a];
      acc.noalias() += h.eval(shifted) * hz.transpose();
    });
    return acc * std::pow(step, dim);
  }
};

int RhoKernel::dim() const { return impl_->dim; }
const Matrix& RhoKernel::rho0() const { return impl_->rho0; }
double RhoKernel::quad_step() const { return impl_->step; }
bool RhoKernel::is_zero() const { return impl_->zero; }

Matrix RhoKernel::eval(std::span<const double> x) const {
  const auto& m = *impl_;
  if (static_cast<int>(x.size()) != m.dim) throw InvalidArgument("rho point has wrong dimension");
  if (m.zero) return Matrix::Zero(m.dim, m.dim);
  if (!m.separable) return m.quadrature(x);
  double c = m.amp_sq;
  for (double v : x) c *= m.axis_corr(v);
  return c * Matrix::Identity(m.dim, m.dim);
}

double RhoKernel::eval1(double x) const {
  const auto& m = *impl_;
  if (m.zero) return 0.0;
  if (m.separable) return m.amp_sq * m.axis_corr(x);
  return m.quadrature(std::span<const double>(&x, 1))(0, 0);
}

RhoKernel build_rho(const MatrixKernel& h, double quad_step) {
  if (!(quad_step > 0.0) || !std::isfinite(quad_step)) throw InvalidArgument("quad_step must be positive");
  if (!(h.support_radius() > 0.0) || !std::isfinite(h.support_radius())) {
    throw InvalidArgument("rho needs a kernel with finite support");
  }
  auto impl = std::make_shared<RhoKernel::Impl>();
  impl->dim = h.dim();
  impl->step = quad_step;
  impl->zero = h.is_zero();
  impl->separable = h.is_separable();
  if (h.is_separable()) {
    const Profile& g = h.profile();
    const double width = g.hi() - g.lo();
    const auto cells = static_cast<std::size_t>(std::ceil(width / quad_step - 1e-9));
    std::vector<double> nodes(cells);
    for (std::size_t i = 0; i < cells; ++i) nodes[i] = g(g.lo() + (static_cast<double>(i) + 0.5) * quad_step);
    // c(k step) = step * sum_i g(z_i - k step) g(z_i); shifting by whole steps keeps midpoints aligned.
    impl->table.assign(cells + 1, 0.0);
    for (std::size_t k = 0; k < cells; ++k) {
      double sum = 0.0;
      for (std::size_t i = k; i < cells; ++i) sum += nodes[i - k] * nodes[i];
      impl->table[k] = sum * quad_step;
    }
    impl->amp_sq = h.amplitude() * h.amplitude();
  } else {
    impl->h = h;
  }
  std::vector<double> origin(static_cast<std::size_t>(h.dim()), 0.0);
  RhoKernel rho;
  rho.impl_ = impl;
  impl->rho0 = rho.eval(origin);
  return rho;
}

RhoKernel build_rho(const MatrixKernel& h) { return build_rho(h, h.support_radius() / 256.0); }

// ---------------------------------------------------------------------------

CorrelationKernel CorrelationKernel::gaussian(double amplitude, double scale, double envelope) {
  if (!(amplitude >= 0.0) || !(scale > 0.0) || !(envelope >= 0.0)) {
    throw InvalidArgument("gaussian kappa needs amplitude >= 0, scale > 0, envelope >= 0");
  }
  CorrelationKernel k;
  k.constant_ = false;
  k.amplitude_ = amplitude;
  k.scale_ = scale;
  k.envelope_ = envelope;
  return k;
}

CorrelationKernel CorrelationKernel::constant(double c) {
  if (!(c >= 0.0)) throw InvalidArgument("constant kappa must be nonnegative");
  CorrelationKernel k;
  k.constant_ = true;
  k.amplitude_ = c;
  return k;
}

double CorrelationKernel::operator()(std::span<const double> x, std::span<const double> y) const {
  if (constant_ || amplitude_ == 0.0) return amplitude_;
  double d2 = 0.0;
  double n2 = 0.0;
  for (std::size_t a = 0; a < x.size(); ++a) {
    const double diff = x[a] - y[a];
    d2 += diff * diff;
    n2 += x[a] * x[a] + y[a] * y[a];
  }
  double v = amplitude_ * std::exp(-d2 / (scale_ * scale_));
  if (envelope_ > 0.0) v *= std::exp(-n2 / (2.0 * envelope_ * envelope_));
  return v;
}

CorrelationKernel::Decay CorrelationKernel::decay() const {
  if (constant_) return Decay::kConstantTestMode;
  return envelope_ > 0.0 ? Decay::kVanishing : Decay::kStationary;
}

std::string CorrelationKernel::label() const {
  switch (decay()) {
    case Decay::kConstantTestMode:
      return "test-mode";
    case Decay::kStationary:
      return "stationary";
    case Decay::kVanishing:
      return "vanishing";
  }
  return "";
}

// ---------------------------------------------------------------------------

GaussianSampler::GaussianSampler(const Matrix& gram) {
  if (gram.rows() != gram.cols()) throw InvalidArgument("gram matrix must be square");
  if (!gram.allFinite()) throw InvalidArgument("gram matrix has NaN or infinite entries");
  const double scale = std::max(1.0, gram.cwiseAbs().maxCoeff());
  if ((gram - gram.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
    throw InvalidArgument("gram matrix is not symmetric within 1e-10");
  }
  const Matrix sym = 0.5 * (gram + gram.transpose());
  Eigen::LDLT<Matrix> ldlt(sym);
  Vector d = ldlt.vectorD();
  if (ldlt.info() == Eigen::Success && d.minCoeff() >= -1e-10 * scale) {
    const Vector root = d.cwiseMax(0.0).cwiseSqrt();
    Matrix lower = Matrix(ldlt.matrixL()) * root.asDiagonal();
    factor_ = ldlt.transpositionsP().transpose() * lower;
    return;
  }
  Eigen::SelfAdjointEigenSolver<Matrix> eig(sym);
  if (eig.info() != Eigen::Success) throw NumericError("gram eigendecomposition failed");
  const Vector root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  factor_ = eig.eigenvectors() * root.asDiagonal();
  clipped_ = true;
}

void GaussianSampler::sample_into(Rng& rng, std::span<double> out) const {
  const Eigen::Index n = factor_.rows();
  Vector z(n);
  for (Eigen::Index i = 0; i < n; ++i) z[i] = rng.normal();
  Eigen::Map<Vector> x(out.data(), n);
  x.noalias() = factor_ * z;
}

Vector GaussianSampler::sample(Rng& rng) const {
  Vector out(factor_.rows());
  sample_into(rng, std::span<double>(out.data(), static_cast<std::size_t>(out.size())));
  return out;
}

Vector sample_correlated_gaussian(const Matrix& gram, Rng& rng) { return GaussianSampler(gram).sample(rng); }

Matrix correlation_gram(const CorrelationKernel& kappa, std::span<const double> positions, int dim) {
  const auto m = static_cast<Eigen::Index>(positions.size() / static_cast<std::size_t>(dim));
  Matrix gram(m, m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto xi = positions.subspan(static_cast<std::size_t>(i * dim), static_cast<std::size_t>(dim));
    for (Eigen::Index j = 0; j <= i; ++j) {
      const auto xj = positions.subspan(static_cast<std::size_t>(j * dim), static_cast<std::size_t>(dim));
      gram(i, j) = gram(j, i) = kappa(xi, xj);
    }
  }
  return gram;
}

std::vector<double> sample_branching_field(const CorrelationKernel& kappa, std::span<const double> positions,
                                           int dim, double truncation, Rng& rng) {
  if (positions.empty()) throw InvalidArgument("branching field needs at least one position");
  if (!(truncation > 0.0)) throw InvalidArgument("truncation must be positive");
  const std::size_t m = positions.size() / static_cast<std::size_t>(dim);
  std::vector<double> xi(m, 0.0);
  if (kappa.is_zero()) return xi;
  if (kappa.is_constant()) {
    // Rank-one Gram: every site shares one value.
    const double v = std::sqrt(kappa.sup_norm()) * rng.normal();
    std::fill(xi.begin(), xi.end(), std::clamp(v, -truncation, truncation));
    return xi;
  }
  GaussianSampler(correlation_gram(kappa, positions, dim)).sample_into(rng, xi);
  for (double& v : xi) v = std::clamp(v, -truncation, truncation);
  return xi;
}

// ---------------------------------------------------------------------------

WhiteNoiseGrid::WhiteNoiseGrid(Grid cells, int components, double dt, std::size_t steps, std::uint64_t seed)
    : cells_(std::move(cells)), components_(components), dt_(dt), steps_(steps), seed_(seed) {
  if (components < 1) throw InvalidArgument("white noise needs at least one component");
  if (!(dt > 0.0)) throw InvalidArgument("white noise dt must be positive");
  const std::size_t per_step = cells_.size() * static_cast<std::size_t>(components_);
  increments_.resize(per_step * steps_);
  const double sd = std::sqrt(variance());
  for (std::size_t s = 0; s < steps_; ++s) {
    Rng rng(derive_seed(seed_, {"white-noise", static_cast<std::uint64_t>(s)}));
    double* out = increments_.data() + s * per_step;
    for (std::size_t i = 0; i < per_step; ++i) out[i] = sd * rng.normal();
  }
}

WhiteNoiseGrid WhiteNoiseGrid::from_data(Grid cells, int components, double dt, std::size_t steps,
                                         std::uint64_t seed, std::vector<double> increments) {
  if (components < 1) throw InvalidArgument("white noise needs at least one component");
  if (!(dt > 0.0)) throw InvalidArgument("white noise dt must be positive");
  if (increments.size() != cells.size() * static_cast<std::size_t>(components) * steps) {
    throw InvalidArgument("white noise data size does not match its shape");
  }
  WhiteNoiseGrid w;
  w.cells_ = std::move(cells);
  w.components_ = components;
  w.dt_ = dt;
  w.steps_ = steps;
  w.seed_ = seed;
  w.increments_ = std::move(increments);
  return w;
}

std::span<const double> WhiteNoiseGrid::step(std::size_t s) const {
  const std::size_t per_step = cells_.size() * static_cast<std::size_t>(components_);
  return std::span<const double>(increments_).subspan(s * per_step, per_step);
}

}  // namespace bpre
