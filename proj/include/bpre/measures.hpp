#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "bpre/grid.hpp"
#include "bpre/kernels.hpp"
#include "bpre/particles.hpp"

namespace bpre {

/// C_b^2 test function with analytic derivatives.
struct TestFunction {
  std::function<double(std::span<const double>)> eval;
  std::function<Vector(std::span<const double>)> gradient;
  std::function<Matrix(std::span<const double>)> hessian;
  bool bounded = true;
  std::string id;

  static TestFunction constant(int dim, double c);
  /// amplitude * exp(-|x - center|^2 / (2 width^2)).
  static TestFunction gaussian_bump(std::vector<double> center, double width, double amplitude = 1.0);
  /// x -> <direction, x>. Unbounded; meant for truncated domains.
  static TestFunction linear(std::vector<double> direction);
};

/// Generator A phi = 1/2 sum_ij rho^ij(0) d_ij phi + 1/2 Laplacian phi.
double apply_one_particle_generator(const TestFunction& phi, const Matrix& rho0, std::span<const double> x);

/// <mu, phi> = (1/n) sum over atoms.
double pair(const EmpiricalMeasure& mu, const TestFunction& phi);

/// Heat kernel p_eps(x) = (2 pi eps)^{-d/2} exp(-|x|^2 / (2 eps)).
double heat_kernel(std::span<const double> x, double eps);

/// values[x] = <mu, p_eps(x - .)> on every node of `query`.
GridField kde(const EmpiricalMeasure& mu, double eps, const Grid& query);

/// Plug-in bandwidth (variance units): (1.06 * IQR/1.349 * N^{-1/(d+4)})^2.
double default_bandwidth(const EmpiricalMeasure& mu);

/// L2 distance between two fields on the same grid.
double l2_distance(const GridField& a, const GridField& b);

struct LagMoment {
  double lag = 0.0;
  double moment = 0.0;  // mean |Delta u|^{2p}
};

struct HolderFit {
  double exponent = 0.0;
  double std_error = 0.0;
  double intercept = 0.0;
};

/// OLS of log(mean |Delta|^{2p}) against log(lag), slope divided by 2p.
/// Needs >= 4 positive lags and positive moments.
HolderFit holder_exponent(std::span<const LagMoment> samples, double p = 1.0);

/// Accumulates mean |Delta u|^{2p} per lag across fields (replicas).
class IncrementMoments {
 public:
  IncrementMoments(std::vector<std::size_t> lags, double p = 1.0);

  /// Spatial increments u[i + lag] - u[i] for i in [first, last - lag].
  void add_spatial(std::span<const double> u, std::size_t first, std::size_t last);
  /// Temporal increments between rows of `frames` (frames[j] = u(t_j, .)),
  /// for j >= first_frame, at nodes [first, last].
  void add_temporal(const std::vector<std::vector<double>>& frames, std::size_t first_frame, std::size_t first,
                    std::size_t last);

  /// Lags scaled by `unit` (grid spacing or time step).
  std::vector<LagMoment> moments(double unit) const;

 private:
  std::vector<std::size_t> lags_;
  double p_;
  std::vector<double> sums_;
  std::vector<double> counts_;
};

/// One row of a pass/fail report.
struct ReportRow {
  std::string statistic;
  double value = 0.0;
  double std_error = 0.0;
  double tolerance = 0.0;
  bool pass = false;
  std::string note;
};

struct MartingaleReport {
  std::vector<double> times;
  double mean = 0.0;          // mean of M_T(phi)
  double mean_se = 0.0;
  double variance = 0.0;      // empirical Var M_T(phi)
  double variance_se = 0.0;
  double expected_qv = 0.0;   // E <M(phi)>_T
  double expected_qv_se = 0.0;
  double relative_deviation = 0.0;
  std::vector<double> martingale_values;  // per replica M_T(phi)
  std::vector<ReportRow> rows(double qv_tolerance) const;
};

/// M_t(phi) = X_t(phi) - X_0(phi) - int_0^t X_s(A phi) ds (trapezoid over snapshots)
/// and the quadratic-variation integrand
/// X_s^{x2}(grad phi^T rho(x-y) grad phi) + X_s^{x2}(kappa phi (x) phi).
/// Requires >= 100 replicas sharing one snapshot grid.
MartingaleReport martingale_diagnostics(const std::vector<std::vector<Snapshot>>& replicas, const TestFunction& phi,
                                        const RhoKernel& rho, const CorrelationKernel& kappa,
                                        std::size_t min_replicas = 100);

/// Sample mean and standard error.
struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};
MeanSe mean_se(std::span<const double> xs);

}  // namespace bpre
