#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <variant>

namespace bpre {

/// One component of a stream label: either a name or an integer id.
class SeedLabel {
 public:
  SeedLabel(std::string_view name) : value_(std::string(name)) {}
  SeedLabel(const char* name) : value_(std::string(name)) {}
  SeedLabel(std::uint64_t id) : value_(id) {}
  SeedLabel(int id) : value_(static_cast<std::uint64_t>(static_cast<std::int64_t>(id))) {}
  SeedLabel(long id) : value_(static_cast<std::uint64_t>(static_cast<std::int64_t>(id))) {}
  SeedLabel(unsigned id) : value_(static_cast<std::uint64_t>(id)) {}

  std::uint64_t hash() const;

 private:
  std::variant<std::string, std::uint64_t> value_;
};

/// Hash-based stream splitting. The mixing is a chain of SplitMix64
/// finalizers over typed label hashes, so the result depends on label order
/// and type. The algorithm is frozen: changing it changes every seeded output.
std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<SeedLabel> labels);
std::uint64_t derive_seed(std::uint64_t master, std::span<const SeedLabel> labels);

/// Per-worker random stream. Never shared between threads.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  double exponential(double rate) { return -std::log1p(-uniform()) / rate; }
  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace bpre
