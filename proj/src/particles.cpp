#include "bpre/particles.hpp"

#include <cassert>
#include <cmath>
#include <numbers>
#include <string>

#include "bpre/error.hpp"

namespace bpre {

MultiIndex MultiIndex::ancestor(std::size_t k) const {
  if (k > path.size()) throw InvalidArgument("ancestor beyond the root");
  MultiIndex a{root, path};
  a.path.resize(path.size() - k);
  return a;
}

MultiIndex MultiIndex::child(std::uint8_t slot) const {
  MultiIndex c{root, path};
  c.path.push_back(slot);
  return c;
}

double InitialDensity::operator()(std::span<const double> x) const {
  double v = 1.0;
  for (double c : x) {
    if (shape == Shape::kGauss) {
      v *= std::exp(-0.5 * c * c / (scale * scale)) / (scale * std::sqrt(2.0 * std::numbers::pi));
    } else {
      v *= std::abs(c) <= scale ? 0.5 / scale : 0.0;
    }
  }
  return v;
}

EmpiricalMeasure InitialDensity::sample(int n, Rng& rng) const {
  EmpiricalMeasure mu{n, dim, {}};
  mu.atoms.resize(static_cast<std::size_t>(n) * static_cast<std::size_t>(dim));
  for (double& x : mu.atoms) {
    x = shape == Shape::kGauss ? scale * rng.normal() : scale * (2.0 * rng.uniform() - 1.0);
  }
  return mu;
}

GridField InitialDensity::on_grid(const Grid& grid) const {
  if (static_cast<int>(grid.rank()) != dim) throw InvalidArgument("density grid rank must equal dim");
  GridField f(grid);
  std::vector<double> x(grid.rank());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    grid.coordinates(i, x);
    f.values[i] = (*this)(x);
  }
  return f;
}

ParticleSystem ParticleSystem::from_measure(const EmpiricalMeasure& init, int substeps) {
  ParticleSystem sys;
  sys.n = init.n;
  sys.dim = init.dim;
  sys.substeps = substeps;
  sys.positions = init.atoms;
  sys.ids.reserve(init.size());
  for (std::size_t i = 0; i < init.size(); ++i) sys.ids.push_back(MultiIndex{static_cast<std::uint32_t>(i + 1), {}});
  return sys;
}

std::vector<double> motion_step(std::span<const double> positions, int dim, const MotionConfig& cfg, Rng& rng) {
  if (cfg.mode != MotionConfig::Mode::kCoupledExact) {
    throw InvalidArgument("motion_step only handles the coupled-exact mode");
  }
  if (positions.empty()) throw InvalidArgument("motion_step needs at least one particle");
  for (double x : positions) {
    if (!std::isfinite(x)) throw NumericError("motion_step: non-finite particle position");
  }
  const std::size_t total = positions.size();
  const std::size_t m = total / static_cast<std::size_t>(dim);
  std::vector<double> out(positions.begin(), positions.end());
  const double sd = std::sqrt(cfg.dt);

  if (cfg.rho.is_zero()) {
    for (double& x : out) x += sd * rng.normal();
    return out;
  }

  Matrix cov(static_cast<Eigen::Index>(total), static_cast<Eigen::Index>(total));
  if (dim == 1) {
    for (std::size_t k = 0; k < m; ++k) {
      cov(k, k) = cfg.dt * (1.0 + cfg.rho.rho0()(0, 0));
      for (std::size_t l = 0; l < k; ++l) {
        cov(k, l) = cov(l, k) = cfg.dt * cfg.rho.eval1(positions[k] - positions[l]);
      }
    }
  } else {
    std::vector<double> diff(static_cast<std::size_t>(dim));
    for (std::size_t k = 0; k < m; ++k) {
      for (std::size_t l = 0; l <= k; ++l) {
        for (int a = 0; a < dim; ++a) diff[a] = positions[k * dim + a] - positions[l * dim + a];
        Matrix block = cfg.rho.eval(diff);
        if (k == l) block += Matrix::Identity(dim, dim);
        block *= cfg.dt;
        cov.block(k * dim, l * dim, dim, dim) = block;
        // rho(x_l - x_k) = rho(x_k - x_l)^T keeps the full matrix symmetric.
        cov.block(l * dim, k * dim, dim, dim) = block.transpose();
      }
    }
  }
  std::vector<double> inc(total);
  GaussianSampler(cov).sample_into(rng, inc);
  for (std::size_t i = 0; i < total; ++i) out[i] += inc[i];
  return out;
}

ParticleSystem branch(const ParticleSystem& sys, const CorrelationKernel& kappa, Rng& rng,
                      std::vector<BranchEvent>* events) {
  if (sys.substep != 0 || sys.interval == 0) {
    throw InvalidArgument("branch called away from a branching time k/n, k >= 1");
  }
  ParticleSystem next = sys;
  next.ids.clear();
  next.positions.clear();
  if (sys.count() == 0) return next;

  const double root_n = std::sqrt(static_cast<double>(sys.n));
  const std::vector<double> xi = sample_branching_field(kappa, sys.positions, sys.dim, root_n, rng);
  next.ids.reserve(2 * sys.count());
  next.positions.reserve(2 * sys.positions.size());
  for (std::size_t k = 0; k < sys.count(); ++k) {
    const double p2 = std::max(xi[k], 0.0) / root_n;
    const double p0 = std::max(-xi[k], 0.0) / root_n;
    assert(p2 >= 0.0 && p0 >= 0.0 && p2 + p0 <= 1.0 + 1e-15);
    const double u = rng.uniform();
    const int offspring = u < p2 ? 2 : (u < p2 + p0 ? 0 : 1);
    if (events) events->push_back(BranchEvent{xi[k], offspring});
    for (int slot = 1; slot <= offspring; ++slot) {
      next.ids.push_back(sys.ids[k].child(static_cast<std::uint8_t>(slot)));
      const auto pos = std::span<const double>(sys.positions).subspan(k * sys.dim, sys.dim);
      next.positions.insert(next.positions.end(), pos.begin(), pos.end());
    }
  }
  return next;
}

long branching_intervals(int n, double horizon) {
  if (n < 1) throw InvalidArgument("branching rate n must be >= 1");
  const double nt = n * horizon;
  const long k = std::lround(nt);
  if (!(horizon > 0.0) || std::abs(nt - static_cast<double>(k)) > 1e-9 * std::max(1.0, nt)) {
    throw InvalidArgument("n * horizon must be a positive integer");
  }
  return k;
}

SimulationResult simulate(const SimulationSpec& spec, const EmpiricalMeasure& init, const RhoKernel& rho,
                          const CorrelationKernel& kappa, Rng& rng, bool record_events) {
  if (spec.substeps < 1) throw InvalidArgument("substeps must be >= 1");
  if (init.n != spec.n) throw InvalidArgument("initial measure must carry the same n as the simulation");
  const long intervals = branching_intervals(spec.n, spec.horizon);

  SimulationResult result;
  ParticleSystem sys = ParticleSystem::from_measure(init, spec.substeps);
  MotionConfig motion{1.0 / (static_cast<double>(spec.n) * spec.substeps), rho, MotionConfig::Mode::kCoupledExact};
  result.snapshots.push_back(Snapshot{0.0, sys.measure()});

  for (long k = 0; k < intervals; ++k) {
    for (int j = 0; j < spec.substeps; ++j) {
      if (sys.count() > 0) sys.positions = motion_step(sys.positions, sys.dim, motion, rng);
      sys.substep = j + 1;
      if (sys.substep == spec.substeps) {
        sys.substep = 0;
        sys.interval = k + 1;
      }
      const bool stride_hit = spec.snapshot_stride > 0 && sys.substep != 0 && (j + 1) % spec.snapshot_stride == 0;
      if (stride_hit) result.snapshots.push_back(Snapshot{sys.time(), sys.measure()});
    }
    result.snapshots.push_back(Snapshot{sys.time(), sys.measure()});
    if (sys.count() > 0) {
      result.branch_events += sys.count();
      sys = branch(sys, kappa, rng, record_events ? &result.events : nullptr);
      if (sys.count() > spec.max_particles) {
        throw BudgetError("particle count " + std::to_string(sys.count()) + " exceeds max_particles " +
                          std::to_string(spec.max_particles));
      }
    }
    if (sys.count() == 0) result.extinct = true;
  }
  result.final_state = std::move(sys);
  return result;
}

}  // namespace bpre
