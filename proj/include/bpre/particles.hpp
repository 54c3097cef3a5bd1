#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "bpre/grid.hpp"
#include "bpre/kernels.hpp"
#include "bpre/rng.hpp"

namespace bpre {

/// Genealogical label: root id followed by the offspring slots (1 or 2)
/// taken at each branching.
struct MultiIndex {
  std::uint32_t root = 1;
  std::vector<std::uint8_t> path;

  std::size_t generation() const { return path.size(); }
  /// Ancestor k generations back; k <= generation().
  MultiIndex ancestor(std::size_t k) const;
  MultiIndex child(std::uint8_t slot) const;

  friend bool operator==(const MultiIndex&, const MultiIndex&) = default;
  friend auto operator<=>(const MultiIndex&, const MultiIndex&) = default;
};

/// Atomic measure with mass 1/n per atom. Atoms are stored flat with stride dim.
struct EmpiricalMeasure {
  int n = 1;
  int dim = 1;
  std::vector<double> atoms;

  std::size_t size() const { return atoms.size() / static_cast<std::size_t>(dim); }
  double mass_per_atom() const { return 1.0 / n; }
  double total_mass() const { return static_cast<double>(size()) / n; }
  std::span<const double> atom(std::size_t i) const {
    return std::span<const double>(atoms).subspan(i * static_cast<std::size_t>(dim), static_cast<std::size_t>(dim));
  }
};

/// Bounded initial density mu on R^d.
struct InitialDensity {
  enum class Shape { kGauss, kUniform };
  Shape shape = Shape::kGauss;
  /// Standard deviation (gauss) or half-width of the cube (uniform).
  double scale = 0.5;
  int dim = 1;

  double operator()(std::span<const double> x) const;
  /// n i.i.d. draws, each with mass 1/n, so the result has total mass 1.
  EmpiricalMeasure sample(int n, Rng& rng) const;
  /// Density values on a d-dimensional grid.
  GridField on_grid(const Grid& grid) const;
};

struct ParticleSystem {
  int n = 1;
  int dim = 1;
  int substeps = 8;
  /// Time is interval + substep / substeps, in units of 1/n.
  long interval = 0;
  int substep = 0;
  std::vector<MultiIndex> ids;
  std::vector<double> positions;

  double time() const { return (static_cast<double>(interval) + static_cast<double>(substep) / substeps) / n; }
  std::size_t generation() const { return static_cast<std::size_t>(interval); }
  std::size_t count() const { return ids.size(); }
  EmpiricalMeasure measure() const { return EmpiricalMeasure{n, dim, positions}; }

  static ParticleSystem from_measure(const EmpiricalMeasure& init, int substeps);
};

struct MotionConfig {
  enum class Mode { kCoupledExact, kFrozenGrid };
  double dt = 0.0;
  RhoKernel rho;
  Mode mode = Mode::kCoupledExact;
};

/// One Euler step of the coupled motion. The stacked increment is Gaussian
/// with block covariance dt * (delta_{kl} I + rho(x_k - x_l)), rho frozen at
/// the pre-step positions.
std::vector<double> motion_step(std::span<const double> positions, int dim, const MotionConfig& cfg, Rng& rng);

/// Per-particle outcome of one branching, for diagnostics.
struct BranchEvent {
  double xi = 0.0;
  int offspring = 0;
};

/// Branch every particle at the current branching time. Appends one
/// BranchEvent per parent to `events` when given.
ParticleSystem branch(const ParticleSystem& sys, const CorrelationKernel& kappa, Rng& rng,
                      std::vector<BranchEvent>* events = nullptr);

struct SimulationSpec {
  int n = 1;
  double horizon = 1.0;
  int substeps = 8;
  std::size_t max_particles = 1'000'000;
  /// Extra snapshots every `snapshot_stride` substeps; 0 means branching times only.
  int snapshot_stride = 0;
};

struct Snapshot {
  double time = 0.0;
  EmpiricalMeasure measure;
};

struct SimulationResult {
  std::vector<Snapshot> snapshots;
  ParticleSystem final_state;
  bool extinct = false;
  std::size_t branch_events = 0;
  std::vector<BranchEvent> events;
};

/// Forward simulation over [0, horizon]. Snapshots at time 0, at every
/// branching time k/n (left limit, before branching) and at the optional
/// stride. After extinction the remaining snapshots are empty measures.
/// Throws BudgetError when the particle count exceeds max_particles.
SimulationResult simulate(const SimulationSpec& spec, const EmpiricalMeasure& init, const RhoKernel& rho,
                          const CorrelationKernel& kappa, Rng& rng, bool record_events = false);

/// Number of branching intervals n * horizon; throws if not integral.
long branching_intervals(int n, double horizon);

}  // namespace bpre
