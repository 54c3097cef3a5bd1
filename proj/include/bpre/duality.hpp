#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "bpre/grid.hpp"
#include "bpre/kernels.hpp"
#include "bpre/rng.hpp"

namespace bpre {

/// Generator A^(n) = 1/2 (Laplacian + B^(n)) of n particles driven by the
/// same environment, acting on functions of (x_1, ..., x_n) in R^{nd}.
struct NParticleGenerator {
  int n = 1;
  int d = 1;
  RhoKernel rho;
};

/// lambda_n = n (n - 1) / 2.
double clock_rate(int n);

/// Finite-difference discretization of A^(n) (+ optional zeroth-order term
/// 1/2 sum_{i != j} kappa(x_i, x_j)) on a truncated grid with homogeneous
/// Dirichlet values outside. Central second differences on the diagonal, the
/// 4-point cross difference for mixed derivatives.
class MomentOperator {
 public:
  MomentOperator(const Grid& grid, const NParticleGenerator& gen, const CorrelationKernel* kappa = nullptr);

  const Grid& grid() const { return grid_; }
  /// out = (A^(n) + potential) v.
  void apply(std::span<const double> v, std::span<double> out) const;
  /// out = (A^(n) + potential)^T g with respect to the plain dot product.
  void apply_adjoint(std::span<const double> g, std::span<double> out) const;
  /// One Lie-split step: v <- exp(dt potential) (v + dt A v). The
  /// zeroth-order term is integrated exactly; A by explicit Euler.
  void step(std::vector<double>& v, double dt) const;
  /// Exact adjoint of step().
  void step_adjoint(std::vector<double>& g, double dt) const;
  /// Explicit Euler bound: spacing^2 / (2 n d (1 + ||rho(0)||)).
  double max_stable_dt() const;

 private:
  void cross_terms(std::span<const double> v, std::span<double> out, bool adjoint) const;
  void apply_pure(std::span<const double> v, std::span<double> out, bool adjoint) const;

  Grid grid_;
  int rank_;
  double bound_dt_;
  std::vector<double> diag_coef_;                  // per axis: 1/2 (1 + rho^ii(0)) / h^2
  std::vector<std::vector<std::ptrdiff_t>> plus_;  // per axis neighbour index or -1
  std::vector<std::vector<std::ptrdiff_t>> minus_;
  struct CrossPair {
    int p = 0;
    int q = 0;
    double constant = 0.0;        // used when coef is empty
    std::vector<double> coef;     // per node, already divided by 4 h_p h_q
  };
  std::vector<CrossPair> cross_;
  std::vector<double> potential_;
  mutable std::vector<double> scratch_;
};

/// A^(n) v on the grid. Each axis needs >= 5 nodes.
GridField apply_generator(const GridField& v, const NParticleGenerator& gen);

/// v_t for dv/dt = A^(n) v + 1/2 sum_{i != j} kappa(x_i, x_j) v, v_0 = f, with
/// `steps` Lie-split steps (explicit Euler for A^(n), exact exponential for the
/// zeroth-order term). Refuses unstable step sizes with a
/// NumericError carrying the bound.
GridField solve_moment_pde(const GridField& f, const CorrelationKernel& kappa, const NParticleGenerator& gen, double t,
                           int steps);

/// mu^{(x)n}(v): n-fold product quadrature of v against the density mu.
double moment_from_dual(const GridField& mu, const GridField& v, int n);

/// State of one dual path: the current function and its jump count.
struct DualJumpState {
  GridField value;
  std::size_t jumps_so_far = 0;
  double clock_rate = 0.0;
};

struct JumpEstimate {
  double value = 0.0;
  double std_error = 0.0;
  std::size_t replicas = 0;
  double mean_jumps = 0.0;
  std::size_t max_jumps = 0;
};

/// Monte Carlo of exp(lambda_n t) E[mu^{(x)n}(Y_t)] for the dual jump process:
/// pure-semigroup flow between exponential(lambda_n) jump times, pointwise
/// multiplication by kappa(x_1, x_2) at each jump. Shipped for n in {1, 2}.
/// Throws BudgetError when a path needs more than `jump_cap` jumps.
JumpEstimate simulate_dual_jump(const GridField& f, const CorrelationKernel& kappa, const NParticleGenerator& gen,
                                const GridField& mu, double t, int steps, Rng& rng, std::size_t replicas,
                                std::size_t jump_cap = 64);

/// Runs one dual path explicitly (no caching). Used to cross-check the
/// cached estimator; returns mu^{(x)n}(Y_t) without the exp(lambda t) factor.
double dual_jump_path(const GridField& f, const CorrelationKernel& kappa, const NParticleGenerator& gen,
                      const GridField& mu, double t, int steps, std::span<const double> jump_times,
                      DualJumpState* final_state = nullptr);

/// Truncation half-width L so that the Gaussian mass of N(0, var) beyond L is < tail.
double truncation_half_width(double variance, double tail = 1e-6);

}  // namespace bpre
