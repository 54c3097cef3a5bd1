#include "bpre/duality.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "bpre/error.hpp"
#include "bpre/measures.hpp"

namespace bpre {

double clock_rate(int n) { return 0.5 * n * (n - 1); }

namespace {

void check_generator(const Grid& grid, const NParticleGenerator& gen) {
  if (gen.n < 1 || gen.d < 1) throw InvalidArgument("generator needs n >= 1 and d >= 1");
  if (gen.rho.dim() != gen.d) throw InvalidArgument("generator rho dimension differs from d");
  if (static_cast<int>(grid.rank()) != gen.n * gen.d) {
    throw InvalidArgument("grid rank must equal n * d for the n-particle generator");
  }
  if (gen.n * gen.d > 3) throw InvalidArgument("n * d > 3 is not supported");
  for (std::size_t k = 0; k < grid.rank(); ++k) {
    if (grid.axis(k).count < 5) {
      throw InvalidArgument("grid too small: axis " + std::to_string(k) + " needs at least 5 nodes");
    }
  }
}

// Sum over unordered particle pairs of kappa(x_i, x_j), i.e. 1/2 sum_{i != j}.
double pair_potential(const CorrelationKernel& kappa, std::span<const double> x, int n, int d) {
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) sum += kappa(x.subspan(i * d, d), x.subspan(j * d, d));
  }
  return sum;
}

}  // namespace

MomentOperator::MomentOperator(const Grid& grid, const NParticleGenerator& gen, const CorrelationKernel* kappa)
    : grid_(grid), rank_(static_cast<int>(grid.rank())) {
  check_generator(grid, gen);
  const int d = gen.d;
  const Matrix& rho0 = gen.rho.rho0();
  const std::size_t size = grid.size();

  double hmin = grid.axis(0).spacing;
  for (int p = 0; p < rank_; ++p) hmin = std::min(hmin, grid.axis(p).spacing);
  bound_dt_ = hmin * hmin / (2.0 * gen.n * gen.d * (1.0 + rho0.norm()));

  diag_coef_.resize(rank_);
  plus_.assign(rank_, std::vector<std::ptrdiff_t>(size, -1));
  minus_.assign(rank_, std::vector<std::ptrdiff_t>(size, -1));
  std::vector<std::size_t> idx(rank_);
  for (std::size_t i = 0; i < size; ++i) {
    grid.unravel(i, idx);
    for (int p = 0; p < rank_; ++p) {
      const auto stride = static_cast<std::ptrdiff_t>(grid.stride(p));
      if (idx[p] + 1 < grid.axis(p).count) plus_[p][i] = static_cast<std::ptrdiff_t>(i) + stride;
      if (idx[p] > 0) minus_[p][i] = static_cast<std::ptrdiff_t>(i) - stride;
    }
  }
  for (int p = 0; p < rank_; ++p) {
    const double h = grid.axis(p).spacing;
    diag_coef_[p] = 0.5 * (1.0 + rho0(p % d, p % d)) / (h * h);
  }

  std::vector<double> x(rank_), diff(d), back(d);
  for (int p = 0; p < rank_; ++p) {
    for (int q = p + 1; q < rank_; ++q) {
      CrossPair cp;
      cp.p = p;
      cp.q = q;
      const int kp = p / d, kq = q / d, ip = p % d, iq = q % d;
      const double scale = 1.0 / (4.0 * grid.axis(p).spacing * grid.axis(q).spacing);
      if (kp == kq) {
        // Same particle: 1/2 (rho^{ij}(0) + rho^{ji}(0)).
        cp.constant = 0.5 * (rho0(ip, iq) + rho0(iq, ip)) * scale;
      } else if (!gen.rho.is_zero()) {
        cp.coef.resize(size);
        for (std::size_t i = 0; i < size; ++i) {
          grid.coordinates(i, x);
          for (int a = 0; a < d; ++a) {
            diff[a] = x[kp * d + a] - x[kq * d + a];
            back[a] = -diff[a];
          }
          const double c = d == 1 ? gen.rho.eval1(diff[0])
                                  : 0.5 * (gen.rho.eval(diff)(ip, iq) + gen.rho.eval(back)(iq, ip));
          cp.coef[i] = c * scale;
        }
      }
      if (!cp.coef.empty() || cp.constant != 0.0) cross_.push_back(std::move(cp));
    }
  }

  if (kappa && gen.n >= 2 && !kappa->is_zero()) {
    potential_.resize(size);
    for (std::size_t i = 0; i < size; ++i) {
      grid.coordinates(i, x);
      potential_[i] = pair_potential(*kappa, x, gen.n, d);
    }
  }
  scratch_.resize(size);
}

double MomentOperator::max_stable_dt() const { return bound_dt_; }

void MomentOperator::cross_terms(std::span<const double> v, std::span<double> out, bool adjoint) const {
  for (const auto& cp : cross_) {
    const auto& pp = plus_[cp.p];
    const auto& pm = minus_[cp.p];
    const auto& qp = plus_[cp.q];
    const auto& qm = minus_[cp.q];
    auto weighted = [&](std::ptrdiff_t j) {
      if (j < 0) return 0.0;
      const auto u = static_cast<std::size_t>(j);
      const double c = cp.coef.empty() ? cp.constant : cp.coef[u];
      return c * v[u];
    };
    for (std::size_t i = 0; i < v.size(); ++i) {
      const std::ptrdiff_t a = pp[i], b = pm[i];
      const std::ptrdiff_t npp = a >= 0 ? qp[a] : -1;
      const std::ptrdiff_t npm = a >= 0 ? qm[a] : -1;
      const std::ptrdiff_t nmp = b >= 0 ? qp[b] : -1;
      const std::ptrdiff_t nmm = b >= 0 ? qm[b] : -1;
      if (adjoint) {
        out[i] += weighted(npp) - weighted(npm) - weighted(nmp) + weighted(nmm);
      } else {
        auto at = [&](std::ptrdiff_t j) { return j < 0 ? 0.0 : v[static_cast<std::size_t>(j)]; };
        const double c = cp.coef.empty() ? cp.constant : cp.coef[i];
        out[i] += c * (at(npp) - at(npm) - at(nmp) + at(nmm));
      }
    }
  }
}

void MomentOperator::apply(std::span<const double> v, std::span<double> out) const {
  const std::size_t size = grid_.size();
  if (v.size() != size || out.size() != size) throw InvalidArgument("moment operator: field size mismatch");
  for (std::size_t i = 0; i < size; ++i) {
    double acc = 0.0;
    for (int p = 0; p < rank_; ++p) {
      const std::ptrdiff_t a = plus_[p][i], b = minus_[p][i];
      const double up = a >= 0 ? v[static_cast<std::size_t>(a)] : 0.0;
      const double dn = b >= 0 ? v[static_cast<std::size_t>(b)] : 0.0;
      acc += diag_coef_[p] * (up - 2.0 * v[i] + dn);
    }
    if (!potential_.empty()) acc += potential_[i] * v[i];
    out[i] = acc;
  }
  cross_terms(v, out, false);
}

void MomentOperator::apply_adjoint(std::span<const double> g, std::span<double> out) const {
  const std::size_t size = grid_.size();
  if (g.size() != size || out.size() != size) throw InvalidArgument("moment operator: field size mismatch");
  // The diagonal stencil and the potential are symmetric.
  for (std::size_t i = 0; i < size; ++i) {
    double acc = 0.0;
    for (int p = 0; p < rank_; ++p) {
      const std::ptrdiff_t a = plus_[p][i], b = minus_[p][i];
      const double up = a >= 0 ? g[static_cast<std::size_t>(a)] : 0.0;
      const double dn = b >= 0 ? g[static_cast<std::size_t>(b)] : 0.0;
      acc += diag_coef_[p] * (up - 2.0 * g[i] + dn);
    }
    if (!potential_.empty()) acc += potential_[i] * g[i];
    out[i] = acc;
  }
  cross_terms(g, out, true);
}

void MomentOperator::apply_pure(std::span<const double> v, std::span<double> out, bool adjoint) const {
  for (std::size_t i = 0; i < v.size(); ++i) {
    double acc = 0.0;
    for (int p = 0; p < rank_; ++p) {
      const std::ptrdiff_t a = plus_[p][i], b = minus_[p][i];
      const double up = a >= 0 ? v[static_cast<std::size_t>(a)] : 0.0;
      const double dn = b >= 0 ? v[static_cast<std::size_t>(b)] : 0.0;
      acc += diag_coef_[p] * (up - 2.0 * v[i] + dn);
    }
    out[i] = acc;
  }
  cross_terms(v, out, adjoint);
}

void MomentOperator::step(std::vector<double>& v, double dt) const {
  apply_pure(v, scratch_, false);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] += dt * scratch_[i];
  if (!potential_.empty()) {
    for (std::size_t i = 0; i < v.size(); ++i) v[i] *= std::exp(dt * potential_[i]);
  }
}

void MomentOperator::step_adjoint(std::vector<double>& g, double dt) const {
  if (!potential_.empty()) {
    for (std::size_t i = 0; i < g.size(); ++i) g[i] *= std::exp(dt * potential_[i]);
  }
  apply_pure(g, scratch_, true);
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += dt * scratch_[i];
}

GridField apply_generator(const GridField& v, const NParticleGenerator& gen) {
  MomentOperator op(v.grid, gen);
  GridField out(v.grid, 0.0, v.time_label);
  op.apply(v.values, out.values);
  return out;
}

namespace {

void check_stability(const MomentOperator& op, double dt) {
  if (dt > op.max_stable_dt() * (1.0 + 1e-12)) {
    std::ostringstream msg;
    msg.precision(6);
    msg << "explicit Euler unstable: dt = " << dt << " exceeds bound spacing^2/(2 n d (1+||rho(0)||)) = "
        << op.max_stable_dt();
    throw NumericError(msg.str());
  }
}

// Advances u from time a to time b on the step grid k * dt, splitting at grid points.
void advance(const MomentOperator& op, std::vector<double>& u, double a, double b, double dt) {
  if (b <= a) return;
  const double eps = 1e-9 * dt;
  auto next_grid = static_cast<long>(std::ceil((a - eps) / dt));
  double cur = a;
  const double first_stop = std::min(b, static_cast<double>(next_grid) * dt);
  if (first_stop - cur > eps) {
    op.step(u, first_stop - cur);
  }
  cur = first_stop;
  if (b - cur <= eps) return;
  const auto last_grid = static_cast<long>(std::floor((b + eps) / dt));
  for (long k = next_grid; k < last_grid; ++k) op.step(u, dt);
  cur = static_cast<double>(std::max(last_grid, next_grid)) * dt;
  if (b - cur > eps) op.step(u, b - cur);
}

void apply_jump(std::vector<double>& u, const Grid& grid, const CorrelationKernel& kappa, int n, int d, Rng* rng) {
  int i = 0, j = 1;
  if (n > 2 && rng) {
    // Uniform ordered pair (i, j), i != j.
    const auto pick = static_cast<int>(rng->uniform() * n * (n - 1));
    i = pick / (n - 1);
    j = pick % (n - 1);
    if (j >= i) ++j;
  }
  std::vector<double> x(grid.rank());
  for (std::size_t node = 0; node < grid.size(); ++node) {
    grid.coordinates(node, x);
    u[node] *= kappa(std::span<const double>(x).subspan(i * d, d), std::span<const double>(x).subspan(j * d, d));
  }
}

std::vector<double> product_weights(const GridField& mu, int n) {
  const Grid target = mu.grid.power(n);
  std::vector<double> w(target.size());
  std::vector<std::size_t> idx(target.rank());
  const std::size_t d = mu.grid.rank();
  std::vector<std::size_t> sub(d);
  for (std::size_t i = 0; i < target.size(); ++i) {
    target.unravel(i, idx);
    double prod = 1.0;
    for (int k = 0; k < n; ++k) {
      std::size_t flat = 0;
      for (std::size_t a = 0; a < d; ++a) flat += idx[k * d + a] * mu.grid.stride(a);
      prod *= mu.values[flat];
    }
    w[i] = prod * target.cell_volume();
  }
  return w;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

GridField solve_moment_pde(const GridField& f, const CorrelationKernel& kappa, const NParticleGenerator& gen, double t,
                           int steps) {
  if (steps < 1) throw InvalidArgument("solve_moment_pde needs steps >= 1");
  if (!(t >= 0.0)) throw InvalidArgument("solve_moment_pde needs t >= 0");
  MomentOperator op(f.grid, gen, &kappa);
  const double dt = t / steps;
  check_stability(op, dt);
  GridField v = f;
  for (int s = 0; s < steps; ++s) op.step(v.values, dt);
  v.time_label = f.time_label + t;
  v.check_finite("solve_moment_pde");
  return v;
}

double moment_from_dual(const GridField& mu, const GridField& v, int n) {
  if (n < 1) throw InvalidArgument("moment order must be >= 1");
  if (!(v.grid == mu.grid.power(static_cast<std::size_t>(n)))) {
    throw InvalidArgument("moment_from_dual: v grid is not the n-fold product of the mu grid");
  }
  for (double m : mu.values) {
    if (m < 0.0) throw InvalidArgument("moment_from_dual: mu must be nonnegative");
  }
  return dot(product_weights(mu, n), v.values);
}

double dual_jump_path(const GridField& f, const CorrelationKernel& kappa, const NParticleGenerator& gen,
                      const GridField& mu, double t, int steps, std::span<const double> jump_times,
                      DualJumpState* final_state) {
  MomentOperator op(f.grid, gen);
  const double dt = t / steps;
  check_stability(op, dt);
  std::vector<double> u = f.values;
  double cur = 0.0;
  for (double s : jump_times) {
    advance(op, u, cur, s, dt);
    apply_jump(u, f.grid, kappa, gen.n, gen.d, nullptr);
    cur = s;
  }
  advance(op, u, cur, t, dt);
  if (final_state) {
    final_state->value = GridField(f.grid, 0.0, t);
    final_state->value.values = u;
    final_state->jumps_so_far = jump_times.size();
    final_state->clock_rate = clock_rate(gen.n);
  }
  return dot(product_weights(mu, gen.n), u);
}

JumpEstimate simulate_dual_jump(const GridField& f, const CorrelationKernel& kappa, const NParticleGenerator& gen,
                                const GridField& mu, double t, int steps, Rng& rng, std::size_t replicas,
                                std::size_t jump_cap) {
  if (replicas < 1) throw InvalidArgument("simulate_dual_jump needs replicas >= 1");
  if (gen.n > 2) throw InvalidArgument("dual jump estimator is shipped for n <= 2");
  if (!(mu.grid.power(static_cast<std::size_t>(gen.n)) == f.grid)) {
    throw InvalidArgument("simulate_dual_jump: f grid is not the n-fold product of the mu grid");
  }
  MomentOperator op(f.grid, gen);
  const double dt = t / steps;
  check_stability(op, dt);
  const double lambda = clock_rate(gen.n);

  // Cached flows: forward[k] = E^k f, backward[k] = (E^T)^k w with w the
  // product-measure weights, so <w, E^k u> = <backward[k], u>.
  const auto nsteps = static_cast<std::size_t>(steps);
  std::vector<std::vector<double>> forward(nsteps + 1), backward(nsteps + 1);
  forward[0] = f.values;
  backward[0] = product_weights(mu, gen.n);
  for (std::size_t k = 1; k <= nsteps; ++k) {
    forward[k] = forward[k - 1];
    op.step(forward[k], dt);
    backward[k] = backward[k - 1];
    op.step_adjoint(backward[k], dt);
  }
  const double base = dot(backward[0], forward[nsteps]);
  const double growth = std::exp(lambda * t);
  const double eps = 1e-9 * dt;

  std::vector<double> values(replicas);
  std::vector<double> jumps;
  double total_jumps = 0.0;
  std::size_t max_jumps = 0;
  std::vector<double> u;
  for (std::size_t r = 0; r < replicas; ++r) {
    jumps.clear();
    if (lambda > 0.0) {
      double s = rng.exponential(lambda);
      while (s < t) {
        jumps.push_back(s);
        if (jumps.size() > jump_cap) {
          throw BudgetError("dual jump path exceeded jump_cap = " + std::to_string(jump_cap) +
                            " (||kappa||_inf too large for t)");
        }
        s += rng.exponential(lambda);
      }
    }
    total_jumps += static_cast<double>(jumps.size());
    max_jumps = std::max(max_jumps, jumps.size());
    if (jumps.empty()) {
      values[r] = growth * base;
      continue;
    }
    // Flow to the first jump from the cached forward field.
    const auto k1 = static_cast<std::size_t>(std::floor((jumps[0] + eps) / dt));
    u = forward[std::min(k1, nsteps)];
    if (jumps[0] - static_cast<double>(k1) * dt > eps) op.step(u, jumps[0] - static_cast<double>(k1) * dt);
    apply_jump(u, f.grid, kappa, gen.n, gen.d, &rng);
    double cur = jumps[0];
    for (std::size_t j = 1; j < jumps.size(); ++j) {
      advance(op, u, cur, jumps[j], dt);
      apply_jump(u, f.grid, kappa, gen.n, gen.d, &rng);
      cur = jumps[j];
    }
    // Flow to the next grid point, then pair with the cached adjoint flow.
    const auto g = static_cast<std::size_t>(std::ceil((cur - eps) / dt));
    advance(op, u, cur, static_cast<double>(g) * dt, dt);
    values[r] = growth * dot(backward[nsteps - std::min(g, nsteps)], u);
  }
  const auto ms = mean_se(values);
  return JumpEstimate{ms.mean, ms.se, replicas, total_jumps / static_cast<double>(replicas), max_jumps};
}

double truncation_half_width(double variance, double tail) {
  if (!(variance > 0.0) || !(tail > 0.0 && tail < 1.0)) throw InvalidArgument("truncation needs variance > 0");
  double lo = 0.0, hi = 50.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (std::erfc(mid / std::sqrt(2.0)) < tail ? hi : lo) = mid;
  }
  return hi * std::sqrt(variance);
}

}  // namespace bpre
