#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "bpre/config.hpp"
#include "bpre/duality.hpp"
#include "bpre/error.hpp"
#include "bpre/measures.hpp"
#include "bpre/mild.hpp"

namespace bpre {

/// Process exit codes of the runner.
enum ExitCode : int {
  kExitOk = 0,
  kExitFailed = 1,   // validation failure, I/O or invalid argument
  kExitConfig = 2,
  kExitNumeric = 3,
  kExitBudget = 4,
};

int exit_code_for(const Error& e);

struct RunResult {
  int exit_code = kExitOk;
  std::vector<ReportRow> rows;
  std::vector<std::filesystem::path> files;
  std::string message;

  bool all_pass() const;
};

/// Runs the configured experiment into cfg.output(). Library errors are
/// mapped to exit codes, never thrown. Identical configs produce
/// byte-identical files.
RunResult run_experiment(const ExperimentConfig& cfg);

/// X_T^{(x)n}(f) for the product test function f = phi^{(x)n}, one value per
/// replica. Replica r uses derive_seed(seed, {"replica", r}).
std::vector<double> forward_moment_samples(const ExperimentConfig& cfg, const TestFunction& phi, int order,
                                           std::size_t replicas, std::uint64_t seed);

/// Moment oracles on a truncated grid for the product test function
/// f = phi^{(x)order}: PDE value and the jump estimator.
struct MomentOracle {
  double pde_value = 0.0;
  JumpEstimate jump;
  double half_width = 0.0;
  double spacing = 0.0;
  int steps = 0;
};
MomentOracle moment_oracle(const ExperimentConfig& cfg, const TestFunction& phi, int order, std::size_t jump_replicas,
                           std::uint64_t seed);

/// MildSpec from the mild.* keys.
MildSpec mild_spec(const ExperimentConfig& cfg);

/// Invariant suite over all primary modules at desk scale (used by the
/// `validate` experiment).
std::vector<ReportRow> invariant_suite(const ExperimentConfig& cfg);

}  // namespace bpre
