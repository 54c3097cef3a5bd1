#include "bpre/rng.hpp"

namespace bpre {
namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

}  // namespace

std::uint64_t SeedLabel::hash() const {
  if (const auto* s = std::get_if<std::string>(&value_)) {
    return mix64(fnv1a(*s) ^ 0x5354524E47000000ULL);  // "STRNG" tag
  }
  return mix64(std::get<std::uint64_t>(value_) + 0x494E540000000000ULL);  // "INT" tag
}

std::uint64_t derive_seed(std::uint64_t master, std::span<const SeedLabel> labels) {
  std::uint64_t state = mix64(master + kGolden);
  std::uint64_t position = 0;
  for (const auto& label : labels) {
    ++position;
    state = mix64(state ^ mix64(label.hash() + position * kGolden));
  }
  return mix64(state + static_cast<std::uint64_t>(labels.size()));
}

std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<SeedLabel> labels) {
  return derive_seed(master, std::span<const SeedLabel>(labels.begin(), labels.size()));
}

}  // namespace bpre
