#include "bpre/measures.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

#include "bpre/error.hpp"

namespace bpre {

TestFunction TestFunction::constant(int dim, double c) {
  TestFunction f;
  f.eval = [c](std::span<const double>) { return c; };
  f.gradient = [dim](std::span<const double>) { return Vector::Zero(dim).eval(); };
  f.hessian = [dim](std::span<const double>) { return Matrix::Zero(dim, dim).eval(); };
  f.id = "const";
  return f;
}

TestFunction TestFunction::gaussian_bump(std::vector<double> center, double width, double amplitude) {
  if (!(width > 0.0)) throw InvalidArgument("gaussian bump width must be positive");
  const auto dim = static_cast<Eigen::Index>(center.size());
  const Vector c = Eigen::Map<const Vector>(center.data(), dim);
  const double w2 = width * width;
  auto value = [c, w2, amplitude](std::span<const double> x) {
    const Vector dx = Eigen::Map<const Vector>(x.data(), c.size()) - c;
    return amplitude * std::exp(-dx.squaredNorm() / (2.0 * w2));
  };
  TestFunction f;
  f.eval = value;
  f.gradient = [c, w2, value](std::span<const double> x) {
    const Vector dx = Eigen::Map<const Vector>(x.data(), c.size()) - c;
    return (-value(x) / w2 * dx).eval();
  };
  f.hessian = [c, w2, value](std::span<const double> x) {
    const Vector dx = Eigen::Map<const Vector>(x.data(), c.size()) - c;
    const Eigen::Index d = c.size();
    return (value(x) * (dx * dx.transpose() / (w2 * w2) - Matrix::Identity(d, d) / w2)).eval();
  };
  f.id = "gauss-bump";
  return f;
}

TestFunction TestFunction::linear(std::vector<double> direction) {
  const auto dim = static_cast<Eigen::Index>(direction.size());
  const Vector a = Eigen::Map<const Vector>(direction.data(), dim);
  TestFunction f;
  f.eval = [a](std::span<const double> x) { return a.dot(Eigen::Map<const Vector>(x.data(), a.size())); };
  f.gradient = [a](std::span<const double>) { return a; };
  f.hessian = [dim](std::span<const double>) { return Matrix::Zero(dim, dim).eval(); };
  f.bounded = false;
  f.id = "linear";
  return f;
}

double apply_one_particle_generator(const TestFunction& phi, const Matrix& rho0, std::span<const double> x) {
  const Matrix hess = phi.hessian(x);
  return 0.5 * (rho0.cwiseProduct(hess).sum() + hess.trace());
}

double pair(const EmpiricalMeasure& mu, const TestFunction& phi) {
  double sum = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) sum += phi.eval(mu.atom(i));
  return sum / mu.n;
}

double heat_kernel(std::span<const double> x, double eps) {
  double r2 = 0.0;
  for (double v : x) r2 += v * v;
  const double d = static_cast<double>(x.size());
  return std::pow(2.0 * std::numbers::pi * eps, -0.5 * d) * std::exp(-r2 / (2.0 * eps));
}

GridField kde(const EmpiricalMeasure& mu, double eps, const Grid& query) {
  if (!(eps > 0.0)) throw InvalidArgument("kde bandwidth must be positive");
  if (static_cast<int>(query.rank()) != mu.dim) throw InvalidArgument("kde grid rank must equal measure dim");
  GridField out(query);
  const std::size_t d = query.rank();
  std::vector<double> x(d), diff(d);
  const double w = mu.mass_per_atom();
  for (std::size_t i = 0; i < query.size(); ++i) {
    query.coordinates(i, x);
    double sum = 0.0;
    for (std::size_t a = 0; a < mu.size(); ++a) {
      const auto atom = mu.atom(a);
      for (std::size_t k = 0; k < d; ++k) diff[k] = x[k] - atom[k];
      sum += heat_kernel(diff, eps);
    }
    out.values[i] = w * sum;
  }
  return out;
}

double default_bandwidth(const EmpiricalMeasure& mu) {
  const std::size_t count = mu.size();
  if (count < 2) throw InvalidArgument("bandwidth rule needs at least two atoms");
  double spread = 0.0;
  std::vector<double> coord(count);
  for (int a = 0; a < mu.dim; ++a) {
    for (std::size_t i = 0; i < count; ++i) coord[i] = mu.atom(i)[a];
    std::sort(coord.begin(), coord.end());
    auto quantile = [&](double q) {
      const double pos = q * static_cast<double>(count - 1);
      const auto lo = static_cast<std::size_t>(pos);
      const std::size_t hi = std::min(lo + 1, count - 1);
      return coord[lo] + (pos - static_cast<double>(lo)) * (coord[hi] - coord[lo]);
    };
    spread += (quantile(0.75) - quantile(0.25)) / 1.349;
  }
  spread /= mu.dim;
  if (!(spread > 0.0)) throw NumericError("bandwidth rule: zero interquartile range");
  const double h = 1.06 * spread * std::pow(static_cast<double>(count), -1.0 / (mu.dim + 4.0));
  return h * h;
}

double l2_distance(const GridField& a, const GridField& b) {
  if (!(a.grid == b.grid)) throw InvalidArgument("l2_distance: fields live on different grids");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    const double diff = a.values[i] - b.values[i];
    sum += diff * diff;
  }
  return std::sqrt(sum * a.grid.cell_volume());
}

HolderFit holder_exponent(std::span<const LagMoment> samples, double p) {
  if (samples.size() < 4) throw InvalidArgument("holder_exponent needs at least 4 lags");
  if (!(p > 0.0)) throw InvalidArgument("holder_exponent needs p > 0");
  const auto k = static_cast<double>(samples.size());
  double sx = 0.0, sy = 0.0;
  for (const auto& s : samples) {
    if (!(s.lag > 0.0)) throw InvalidArgument("holder_exponent: lags must be positive");
    if (!(s.moment > 0.0)) throw NumericError("holder_exponent: zero or negative moment");
    sx += std::log(s.lag);
    sy += std::log(s.moment);
  }
  const double mx = sx / k, my = sy / k;
  double sxx = 0.0, sxy = 0.0;
  for (const auto& s : samples) {
    const double dx = std::log(s.lag) - mx;
    sxx += dx * dx;
    sxy += dx * (std::log(s.moment) - my);
  }
  if (!(sxx > 0.0)) throw InvalidArgument("holder_exponent: lags must be distinct");
  const double slope = sxy / sxx;
  const double intercept = my - slope * mx;
  double rss = 0.0;
  for (const auto& s : samples) {
    const double r = std::log(s.moment) - intercept - slope * std::log(s.lag);
    rss += r * r;
  }
  const double slope_se = std::sqrt(rss / (k - 2.0) / sxx);
  return HolderFit{slope / (2.0 * p), slope_se / (2.0 * p), intercept};
}

IncrementMoments::IncrementMoments(std::vector<std::size_t> lags, double p)
    : lags_(std::move(lags)), p_(p), sums_(lags_.size(), 0.0), counts_(lags_.size(), 0.0) {}

void IncrementMoments::add_spatial(std::span<const double> u, std::size_t first, std::size_t last) {
  for (std::size_t l = 0; l < lags_.size(); ++l) {
    const std::size_t lag = lags_[l];
    for (std::size_t i = first; i + lag <= last && i + lag < u.size(); ++i) {
      sums_[l] += std::pow(std::abs(u[i + lag] - u[i]), 2.0 * p_);
      counts_[l] += 1.0;
    }
  }
}

void IncrementMoments::add_temporal(const std::vector<std::vector<double>>& frames, std::size_t first_frame,
                                    std::size_t first, std::size_t last) {
  for (std::size_t l = 0; l < lags_.size(); ++l) {
    const std::size_t lag = lags_[l];
    for (std::size_t j = first_frame; j + lag < frames.size(); ++j) {
      for (std::size_t i = first; i <= last && i < frames[j].size(); ++i) {
        sums_[l] += std::pow(std::abs(frames[j + lag][i] - frames[j][i]), 2.0 * p_);
        counts_[l] += 1.0;
      }
    }
  }
}

std::vector<LagMoment> IncrementMoments::moments(double unit) const {
  std::vector<LagMoment> out;
  for (std::size_t l = 0; l < lags_.size(); ++l) {
    if (counts_[l] > 0.0) out.push_back(LagMoment{static_cast<double>(lags_[l]) * unit, sums_[l] / counts_[l]});
  }
  return out;
}

MeanSe mean_se(std::span<const double> xs) {
  if (xs.empty()) return {};
  const auto n = static_cast<double>(xs.size());
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  if (xs.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / (n - 1.0) / n)};
}

namespace {

double qv_integrand(const EmpiricalMeasure& mu, const TestFunction& phi, const RhoKernel& rho,
                    const CorrelationKernel& kappa) {
  const std::size_t m = mu.size();
  if (m == 0) return 0.0;
  std::vector<Vector> grads(m);
  std::vector<double> vals(m);
  for (std::size_t a = 0; a < m; ++a) {
    grads[a] = phi.gradient(mu.atom(a));
    vals[a] = phi.eval(mu.atom(a));
  }
  std::vector<double> diff(static_cast<std::size_t>(mu.dim));
  double sum = 0.0;
  for (std::size_t a = 0; a < m; ++a) {
    for (std::size_t b = 0; b < m; ++b) {
      for (int k = 0; k < mu.dim; ++k) diff[k] = mu.atom(a)[k] - mu.atom(b)[k];
      const double drift = rho.is_zero() ? 0.0 : grads[a].dot(rho.eval(diff) * grads[b]);
      sum += drift + kappa(mu.atom(a), mu.atom(b)) * vals[a] * vals[b];
    }
  }
  const double w = mu.mass_per_atom();
  return w * w * sum;
}

}  // namespace

MartingaleReport martingale_diagnostics(const std::vector<std::vector<Snapshot>>& replicas, const TestFunction& phi,
                                        const RhoKernel& rho, const CorrelationKernel& kappa,
                                        std::size_t min_replicas) {
  if (replicas.size() < min_replicas) {
    throw InvalidArgument("martingale diagnostics need at least " + std::to_string(min_replicas) + " replicas");
  }
  if (!phi.hessian) throw InvalidArgument("martingale diagnostics need a test function with a hessian");
  MartingaleReport report;
  for (const auto& s : replicas.front()) report.times.push_back(s.time);
  const std::size_t steps = report.times.size();
  for (const auto& rep : replicas) {
    if (rep.size() != steps) throw InvalidArgument("martingale diagnostics: mismatched snapshot grids");
    for (std::size_t j = 0; j < steps; ++j) {
      if (rep[j].time != report.times[j]) throw InvalidArgument("martingale diagnostics: mismatched snapshot grids");
    }
  }

  const Matrix& rho0 = rho.rho0();
  std::vector<double> qv(replicas.size());
  for (std::size_t r = 0; r < replicas.size(); ++r) {
    const auto& rep = replicas[r];
    std::vector<double> generator(steps), quad(steps);
    for (std::size_t j = 0; j < steps; ++j) {
      const auto& mu = rep[j].measure;
      double g = 0.0;
      for (std::size_t a = 0; a < mu.size(); ++a) g += apply_one_particle_generator(phi, rho0, mu.atom(a));
      generator[j] = g / mu.n;
      quad[j] = qv_integrand(mu, phi, rho, kappa);
    }
    double drift = 0.0, qv_int = 0.0;
    for (std::size_t j = 1; j < steps; ++j) {
      const double dt = report.times[j] - report.times[j - 1];
      drift += 0.5 * dt * (generator[j] + generator[j - 1]);
      qv_int += 0.5 * dt * (quad[j] + quad[j - 1]);
    }
    report.martingale_values.push_back(pair(rep.back().measure, phi) - pair(rep.front().measure, phi) - drift);
    qv[r] = qv_int;
  }

  const auto ms = mean_se(report.martingale_values);
  report.mean = ms.mean;
  report.mean_se = ms.se;
  const auto n = static_cast<double>(replicas.size());
  double m2 = 0.0, m4 = 0.0;
  for (double v : report.martingale_values) {
    const double c = v - ms.mean;
    m2 += c * c;
    m4 += c * c * c * c;
  }
  report.variance = m2 / (n - 1.0);
  report.variance_se = std::sqrt(std::max(0.0, m4 / n - (m2 / n) * (m2 / n)) / n);
  const auto qs = mean_se(qv);
  report.expected_qv = qs.mean;
  report.expected_qv_se = qs.se;
  const double denom = std::max(std::abs(report.expected_qv), 1e-300);
  report.relative_deviation = std::abs(report.variance - report.expected_qv) / denom;
  return report;
}

std::vector<ReportRow> MartingaleReport::rows(double qv_tolerance) const {
  std::vector<ReportRow> out;
  const double z = mean_se > 0.0 ? std::abs(mean) / mean_se : (mean == 0.0 ? 0.0 : INFINITY);
  out.push_back(ReportRow{"martingale_mean", mean, mean_se, 3.0, z <= 3.0, "|mean|/se <= 3"});
  // Sampling error of both sides widens the band.
  const double slack = expected_qv > 0.0 ? 3.0 * std::hypot(variance_se, expected_qv_se) / expected_qv : 0.0;
  const double tol = qv_tolerance + slack;
  const bool degenerate = expected_qv == 0.0 && variance == 0.0;
  out.push_back(ReportRow{"martingale_qv_relative_deviation", degenerate ? 0.0 : relative_deviation, variance_se, tol,
                          degenerate || relative_deviation <= tol, "Var M_T vs E<M>_T"});
  return out;
}

}  // namespace bpre
