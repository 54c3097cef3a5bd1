#include <cstdio>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "bpre/bpre.h"

namespace {

int exit_for(bpre_status s) {
  switch (s) {
    case BPRE_OK:
      return 0;
    case BPRE_CONFIG:
      return 2;
    case BPRE_NUMERIC:
      return 3;
    case BPRE_BUDGET:
      return 4;
    default:
      return 1;
  }
}

int report(bpre_status s) {
  std::fprintf(stderr, "error: %s\n", bpre_last_error());
  return exit_for(s);
}

std::string get_string(bpre_status (*fn)(const bpre_config*, char*, size_t, size_t*), const bpre_config* cfg) {
  size_t needed = 0;
  fn(cfg, nullptr, 0, &needed);
  std::string out(needed, '\0');
  if (fn(cfg, out.data(), out.size(), &needed) != BPRE_OK) return {};
  out.resize(needed - 1);
  return out;
}

// Loads the config file and applies `key=value` overrides.
bpre_status load(const std::string& path, const std::vector<std::string>& overrides, bpre_config** cfg) {
  bpre_status s = path.empty() ? bpre_config_new(cfg) : bpre_config_load(path.c_str(), cfg);
  if (s != BPRE_OK) return s;
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) {
      // Route through set() so the error names the malformed override.
      s = bpre_config_set(*cfg, o.c_str(), "");
    } else {
      s = bpre_config_set(*cfg, o.substr(0, eq).c_str(), o.substr(eq + 1).c_str());
    }
    if (s != BPRE_OK) return s;
  }
  return BPRE_OK;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Branching particle systems in a random environment: simulation and verification runner"};
  app.set_version_flag("--version", std::string(bpre_version()));
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  std::string output;
  int workers = 0;

  auto* run = app.add_subcommand("run", "Run the experiment described by a config file");
  run->add_option("config", config_path, "Config file (section.key = value)")->required()->check(CLI::ExistingFile);
  run->add_option("-s,--set", overrides, "Override a key: section.key=value (repeatable)");
  run->add_option("-o,--output", output, "Output directory (overrides run.output)");
  run->add_option("-j,--workers", workers, "Worker threads (overrides run.workers)")->check(CLI::PositiveNumber);

  auto* show = app.add_subcommand("config", "Print the canonical config (all keys, schema order)");
  show->add_option("config", config_path, "Config file; defaults when omitted");
  show->add_option("-s,--set", overrides, "Override a key: section.key=value (repeatable)");

  auto* hash = app.add_subcommand("hash", "Print the git-style content hash of the canonical config");
  hash->add_option("config", config_path, "Config file")->required()->check(CLI::ExistingFile);
  hash->add_option("-s,--set", overrides, "Override a key: section.key=value (repeatable)");

  std::uint64_t master = 0;
  std::vector<std::string> labels;
  auto* seed = app.add_subcommand("seed", "Derive a stream seed from a master seed and labels");
  seed->add_option("master", master, "Master seed")->required();
  seed->add_option("labels", labels, "Labels; all-digit tokens are integer ids, others strings");

  CLI11_PARSE(app, argc, argv);

  if (*seed) {
    std::vector<bpre_seed_label> list;
    for (const auto& l : labels) {
      const bool numeric = !l.empty() && l.find_first_not_of("0123456789") == std::string::npos;
      list.push_back(numeric ? bpre_seed_label{nullptr, std::stoull(l)} : bpre_seed_label{l.c_str(), 0});
    }
    std::uint64_t out = 0;
    const bpre_status s = bpre_derive_seed(master, list.data(), list.size(), &out);
    if (s != BPRE_OK) return report(s);
    std::printf("%llu\n", static_cast<unsigned long long>(out));
    return 0;
  }

  if (!output.empty()) overrides.push_back("run.output=" + output);
  if (workers > 0) overrides.push_back("run.workers=" + std::to_string(workers));
  bpre_config* cfg = nullptr;
  bpre_status s = load(config_path, overrides, &cfg);
  if (s != BPRE_OK) {
    bpre_config_free(cfg);
    return report(s);
  }

  int code = 0;
  if (*show) {
    std::fputs(get_string(bpre_config_serialize, cfg).c_str(), stdout);
  } else if (*hash) {
    char digest[41];
    s = bpre_config_hash(cfg, digest);
    if (s == BPRE_OK) std::printf("%s\n", digest);
  } else {
    s = bpre_run(cfg, &code);
    if (s == BPRE_OK && code != 0) std::fprintf(stderr, "error: %s\n", bpre_last_error());
    if (s == BPRE_OK && code == 0) {
      char dir[4096];
      size_t needed = 0;
      if (bpre_config_get(cfg, "run.output", dir, sizeof dir, &needed) == BPRE_OK) {
        std::printf("wrote %s\n", dir);
      }
      if (*bpre_last_error()) std::printf("note: %s\n", bpre_last_error());
    }
  }
  bpre_config_free(cfg);
  if (s != BPRE_OK) return report(s);
  return code;
}
