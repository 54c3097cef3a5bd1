#include "bpre/config.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <regex>
#include <sstream>

#include <fmt/format.h>

#include "bpre/error.hpp"

namespace bpre {

namespace {

enum class Type { kChoice, kPositiveInt, kSeed, kPath, kPositiveDecimal, kNonNegDecimal, kAutoOrDecimal };

struct KeySpec {
  std::string name;
  Type type;
  std::string fallback;
  std::vector<std::string> choices;
};

const std::vector<KeySpec>& schema() {
  static const std::vector<KeySpec> specs = {
      {"run.experiment", Type::kChoice, "simulate", {"simulate", "moments", "mild", "holder", "validate"}},
      {"run.seed", Type::kSeed, "1", {}},
      {"run.output", Type::kPath, "out", {}},
      {"run.workers", Type::kPositiveInt, "1", {}},
      {"run.replicas", Type::kPositiveInt, "200", {}},
      {"model.dim", Type::kChoice, "1", {"1", "2", "3"}},
      {"model.n", Type::kPositiveInt, "100", {}},
      {"model.substeps", Type::kPositiveInt, "8", {}},
      {"model.horizon", Type::kPositiveDecimal, "0.25", {}},
      {"model.max_particles", Type::kPositiveInt, "100000", {}},
      {"kernel.h", Type::kChoice, "box", {"box", "hat", "gauss", "zero"}},
      {"kernel.h_scale", Type::kPositiveDecimal, "1", {}},
      {"kernel.h_amplitude", Type::kNonNegDecimal, "1", {}},
      {"kernel.h_norm_bound", Type::kAutoOrDecimal, "auto", {}},
      {"kernel.rho_step", Type::kAutoOrDecimal, "auto", {}},
      {"kernel.kappa", Type::kChoice, "gauss", {"gauss", "const", "zero"}},
      {"kernel.kappa_amplitude", Type::kNonNegDecimal, "1", {}},
      {"kernel.kappa_scale", Type::kPositiveDecimal, "1", {}},
      {"kernel.kappa_envelope", Type::kNonNegDecimal, "0", {}},
      {"init.shape", Type::kChoice, "gauss", {"gauss", "uniform"}},
      {"init.scale", Type::kPositiveDecimal, "0.5", {}},
      {"output.positions", Type::kChoice, "histogram", {"histogram", "atoms"}},
      {"output.bins", Type::kPositiveInt, "64", {}},
      {"output.range", Type::kPositiveDecimal, "4", {}},
      {"moments.order", Type::kChoice, "2", {"1", "2"}},
      {"moments.f", Type::kChoice, "one", {"one", "gauss"}},
      {"moments.f_width", Type::kPositiveDecimal, "1", {}},
      {"moments.spacing", Type::kPositiveDecimal, "0.1", {}},
      {"moments.jump_replicas", Type::kPositiveInt, "10000", {}},
      {"mild.nodes", Type::kPositiveInt, "65", {}},
      {"mild.half_width", Type::kPositiveDecimal, "6", {}},
      {"mild.time_steps", Type::kPositiveInt, "16", {}},
      {"mild.substeps", Type::kPositiveInt, "4", {}},
      {"mild.paths", Type::kPositiveInt, "1000", {}},
      {"mild.iterations", Type::kPositiveInt, "5", {}},
      {"holder.max_lag", Type::kPositiveInt, "8", {}},
  };
  return specs;
}

const KeySpec& spec_of(const std::string& key) {
  for (const auto& s : schema()) {
    if (s.name == key) return s;
  }
  throw ConfigError(key, "unknown key");
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

bool is_decimal(const std::string& v) {
  static const std::regex re(R"([+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?)");
  return std::regex_match(v, re);
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size() || !std::isfinite(out)) {
    throw ConfigError(key, "not a finite decimal: '" + v + "'");
  }
  return out;
}

unsigned long long to_unsigned(const std::string& key, const std::string& v) {
  unsigned long long out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw ConfigError(key, "not a non-negative integer: '" + v + "'");
  }
  return out;
}

void check_value(const KeySpec& s, const std::string& v) {
  switch (s.type) {
    case Type::kChoice:
      if (std::find(s.choices.begin(), s.choices.end(), v) == s.choices.end()) {
        std::string list;
        for (const auto& c : s.choices) list += (list.empty() ? "" : "|") + c;
        throw ConfigError(s.name, "expected one of " + list + ", got '" + v + "'");
      }
      return;
    case Type::kPositiveInt:
      if (to_unsigned(s.name, v) == 0 || to_unsigned(s.name, v) > (1ULL << 40)) {
        throw ConfigError(s.name, "must be a positive integer");
      }
      return;
    case Type::kSeed:
      to_unsigned(s.name, v);
      return;
    case Type::kPath:
      if (v.empty()) throw ConfigError(s.name, "must not be empty");
      return;
    case Type::kAutoOrDecimal:
      if (v == "auto") return;
      [[fallthrough]];
    case Type::kPositiveDecimal:
    case Type::kNonNegDecimal: {
      if (!is_decimal(v)) throw ConfigError(s.name, "not a decimal: '" + v + "'");
      const double x = to_double(s.name, v);
      if (s.type == Type::kNonNegDecimal ? x < 0.0 : !(x > 0.0)) {
        throw ConfigError(s.name, s.type == Type::kNonNegDecimal ? "must be >= 0" : "must be > 0");
      }
      return;
    }
  }
}

// Exact test that n * value is an integer, with value a plain decimal string.
bool integral_product(long long n, const std::string& value) {
  std::string digits;
  long long exponent = 0;
  bool after_dot = false;
  std::size_t i = 0;
  if (i < value.size() && (value[i] == '+' || value[i] == '-')) ++i;
  for (; i < value.size(); ++i) {
    const char c = value[i];
    if (c == '.') {
      after_dot = true;
    } else if (c == 'e' || c == 'E') {
      exponent += std::stoll(value.substr(i + 1));
      break;
    } else {
      digits += c;
      if (after_dot) --exponent;
    }
  }
  // value = digits * 10^exponent; strip trailing zeros of the mantissa.
  while (digits.size() > 1 && digits.back() == '0') {
    digits.pop_back();
    ++exponent;
  }
  if (exponent >= 0) return true;
  if (digits.size() > 18 || -exponent > 18) return false;
  const auto mantissa = static_cast<__int128>(std::stoll(digits));
  __int128 pow10 = 1;
  for (long long k = 0; k < -exponent; ++k) pow10 *= 10;
  return (mantissa * n) % pow10 == 0;
}

}  // namespace

std::string git_blob_hash(std::string_view text) {
  std::string blob = "blob " + std::to_string(text.size());
  blob.push_back('\0');
  blob.append(text);
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(blob.data(), blob.size(), md, &len, EVP_sha1(), nullptr) != 1) {
    throw Error(Error::Kind::kIo, "SHA-1 digest failed");
  }
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", md[i]);
  return hex;
}

ExperimentConfig::ExperimentConfig() {
  for (const auto& s : schema()) values_[s.name] = s.fallback;
}

const std::vector<std::string>& ExperimentConfig::keys() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& s : schema()) out.push_back(s.name);
    return out;
  }();
  return names;
}

ExperimentConfig ExperimentConfig::parse(std::string_view text) {
  ExperimentConfig cfg;
  std::vector<std::string> seen;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string body = trim(line);
    if (body.empty() || body[0] == '#') continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ConfigError(fmt::format("line {}", lineno), "expected 'section.key = value'");
    const std::string key = trim(std::string_view(body).substr(0, eq));
    const std::string value = trim(std::string_view(body).substr(eq + 1));
    if (std::find(seen.begin(), seen.end(), key) != seen.end()) throw ConfigError(key, "duplicate key");
    seen.push_back(key);
    cfg.set(key, value);
  }
  return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read config " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse(text.str());
}

std::string ExperimentConfig::serialize() const {
  std::string out;
  for (const auto& s : schema()) out += s.name + " = " + values_.at(s.name) + "\n";
  return out;
}

std::string ExperimentConfig::hash() const { return git_blob_hash(serialize()); }

const std::string& ExperimentConfig::get(const std::string& key) const {
  spec_of(key);
  return values_.at(key);
}

void ExperimentConfig::set(const std::string& key, const std::string& value) {
  check_value(spec_of(key), value);
  values_[key] = value;
}

double ExperimentConfig::decimal(const std::string& key) const { return to_double(key, get(key)); }

long long ExperimentConfig::integer(const std::string& key) const {
  return static_cast<long long>(to_unsigned(key, get(key)));
}

std::uint64_t ExperimentConfig::seed() const { return to_unsigned("run.seed", get("run.seed")); }

void ExperimentConfig::validate() const {
  for (const auto& s : schema()) check_value(s, values_.at(s.name));
  const long long n = integer("model.n");
  if (!integral_product(n, get("model.horizon"))) {
    throw ConfigError("model.horizon", fmt::format("n * T must be an integer (n = {}, T = {})", n, get("model.horizon")));
  }
  const std::string exp = experiment();
  if ((exp == "mild" || exp == "holder") && integer("model.dim") != 1) {
    throw ConfigError("model.dim", "the mild solver is shipped for d = 1 only");
  }
  if (exp == "moments" && integer("moments.order") * integer("model.dim") > 2) {
    throw ConfigError("model.dim", "moment oracles are shipped for order * dim <= 2");
  }
  if (integer("mild.nodes") < 5) throw ConfigError("mild.nodes", "needs at least 5 nodes");
  if (exp == "holder" && integer("holder.max_lag") < 8) {
    throw ConfigError("holder.max_lag", "needs at least 4 dyadic lags (max_lag >= 8)");
  }
}

MatrixKernel ExperimentConfig::kernel_h() const {
  const int d = static_cast<int>(integer("model.dim"));
  const std::string shape = get("kernel.h");
  MatrixKernel h = MatrixKernel::zero(d);
  if (shape != "zero") {
    const ProfileShape ps = shape == "box" ? ProfileShape::kBox : shape == "hat" ? ProfileShape::kHat : ProfileShape::kGauss;
    h = MatrixKernel::separable(d, Profile{ps, decimal("kernel.h_scale")}, decimal("kernel.h_amplitude"));
  }
  if (get("kernel.h_norm_bound") != "auto") h.set_norm_bound(decimal("kernel.h_norm_bound"));
  return h;
}

RhoKernel ExperimentConfig::rho() const {
  const MatrixKernel h = kernel_h();
  if (get("kernel.rho_step") == "auto") return build_rho(h);
  return build_rho(h, decimal("kernel.rho_step"));
}

CorrelationKernel ExperimentConfig::kappa() const {
  const std::string k = get("kernel.kappa");
  if (k == "zero") return CorrelationKernel::constant(0.0);
  if (k == "const") return CorrelationKernel::constant(decimal("kernel.kappa_amplitude"));
  return CorrelationKernel::gaussian(decimal("kernel.kappa_amplitude"), decimal("kernel.kappa_scale"),
                                     decimal("kernel.kappa_envelope"));
}

InitialDensity ExperimentConfig::initial() const {
  InitialDensity init;
  init.shape = get("init.shape") == "uniform" ? InitialDensity::Shape::kUniform : InitialDensity::Shape::kGauss;
  init.scale = decimal("init.scale");
  init.dim = static_cast<int>(integer("model.dim"));
  return init;
}

}  // namespace bpre
