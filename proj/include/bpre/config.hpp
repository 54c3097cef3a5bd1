#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "bpre/kernels.hpp"
#include "bpre/particles.hpp"

namespace bpre {

/// Experiment configuration: a flat, ordered `section.key = value` file.
/// Values are kept as the strings the user wrote (decimals are never
/// re-rendered), so serialization round-trips bit-exactly. Every key has a
/// default; serialize() always writes the full key set in schema order.
class ExperimentConfig {
 public:
  /// All defaults.
  ExperimentConfig();

  /// Throws ConfigError naming the offending key (or "line N" for syntax).
  static ExperimentConfig parse(std::string_view text);
  static ExperimentConfig load(const std::filesystem::path& path);

  /// Canonical text: one `key = value` line per schema key.
  std::string serialize() const;
  /// Git-style blob id: SHA-1 of "blob <len>\0" + serialize(), lower-case hex.
  std::string hash() const;

  const std::string& get(const std::string& key) const;
  /// Validates the key name and the value syntax.
  void set(const std::string& key, const std::string& value);

  double decimal(const std::string& key) const;
  long long integer(const std::string& key) const;
  std::size_t count(const std::string& key) const { return static_cast<std::size_t>(integer(key)); }

  std::string experiment() const { return get("run.experiment"); }
  std::uint64_t seed() const;
  std::filesystem::path output() const { return get("run.output"); }

  /// Cross-key checks: n * T integral (exact decimal arithmetic), dimension
  /// limits of the selected experiment.
  void validate() const;

  MatrixKernel kernel_h() const;
  RhoKernel rho() const;
  CorrelationKernel kappa() const;
  InitialDensity initial() const;

  /// Schema key names in canonical order.
  static const std::vector<std::string>& keys();

  bool operator==(const ExperimentConfig& other) const { return values_ == other.values_; }

 private:
  std::map<std::string, std::string> values_;
};

/// Git-style SHA-1 blob id of arbitrary text.
std::string git_blob_hash(std::string_view text);

}  // namespace bpre
