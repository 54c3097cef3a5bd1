#include "bpre/bpre.h"

#include <cstring>
#include <string>
#include <vector>

#include "bpre/config.hpp"
#include "bpre/error.hpp"
#include "bpre/experiments.hpp"
#include "bpre/rng.hpp"

struct bpre_config {
  bpre::ExperimentConfig cfg;
};

namespace {

thread_local std::string last_error;
thread_local std::string last_key;

void clear_error() {
  last_error.clear();
  last_key.clear();
}

bpre_status fail(bpre_status status, const std::string& what) {
  last_error = what;
  return status;
}

template <class Fn>
bpre_status guarded(Fn&& fn) {
  clear_error();
  try {
    return fn();
  } catch (const bpre::ConfigError& e) {
    last_key = e.key();
    return fail(BPRE_CONFIG, e.what());
  } catch (const bpre::Error& e) {
    return fail(static_cast<bpre_status>(static_cast<int>(e.kind())), e.what());
  } catch (const std::bad_alloc&) {
    return fail(BPRE_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(BPRE_INTERNAL, e.what());
  } catch (...) {
    return fail(BPRE_INTERNAL, "unknown error");
  }
}

bpre_status copy_out(const std::string& text, char* buf, std::size_t size, std::size_t* needed) {
  if (needed) *needed = text.size() + 1;
  if (!buf || size < text.size() + 1) return fail(BPRE_BUFFER_TOO_SMALL, "buffer too small");
  std::memcpy(buf, text.c_str(), text.size() + 1);
  return BPRE_OK;
}

}  // namespace

extern "C" {

const char* bpre_version(void) { return "1.0.0"; }

const char* bpre_last_error(void) { return last_error.c_str(); }

const char* bpre_last_error_key(void) { return last_key.c_str(); }

bpre_status bpre_config_new(bpre_config** out) {
  return guarded([&] {
    if (!out) return fail(BPRE_INVALID_ARGUMENT, "out is NULL");
    *out = new bpre_config{};
    return BPRE_OK;
  });
}

bpre_status bpre_config_parse(const char* text, bpre_config** out) {
  return guarded([&] {
    if (!text || !out) return fail(BPRE_INVALID_ARGUMENT, "text or out is NULL");
    *out = nullptr;
    auto cfg = bpre::ExperimentConfig::parse(text);
    *out = new bpre_config{std::move(cfg)};
    return BPRE_OK;
  });
}

bpre_status bpre_config_load(const char* path, bpre_config** out) {
  return guarded([&] {
    if (!path || !out) return fail(BPRE_INVALID_ARGUMENT, "path or out is NULL");
    *out = nullptr;
    auto cfg = bpre::ExperimentConfig::load(path);
    *out = new bpre_config{std::move(cfg)};
    return BPRE_OK;
  });
}

void bpre_config_free(bpre_config* cfg) { delete cfg; }

bpre_status bpre_config_set(bpre_config* cfg, const char* key, const char* value) {
  return guarded([&] {
    if (!cfg || !key || !value) return fail(BPRE_INVALID_ARGUMENT, "NULL argument");
    cfg->cfg.set(key, value);
    return BPRE_OK;
  });
}

bpre_status bpre_config_validate(const bpre_config* cfg) {
  return guarded([&] {
    if (!cfg) return fail(BPRE_INVALID_ARGUMENT, "cfg is NULL");
    cfg->cfg.validate();
    return BPRE_OK;
  });
}

bpre_status bpre_config_get(const bpre_config* cfg, const char* key, char* buf, size_t size, size_t* needed) {
  return guarded([&] {
    if (!cfg || !key) return fail(BPRE_INVALID_ARGUMENT, "NULL argument");
    return copy_out(cfg->cfg.get(key), buf, size, needed);
  });
}

bpre_status bpre_config_serialize(const bpre_config* cfg, char* buf, size_t size, size_t* needed) {
  return guarded([&] {
    if (!cfg) return fail(BPRE_INVALID_ARGUMENT, "cfg is NULL");
    return copy_out(cfg->cfg.serialize(), buf, size, needed);
  });
}

bpre_status bpre_config_hash(const bpre_config* cfg, char out[41]) {
  return guarded([&] {
    if (!cfg || !out) return fail(BPRE_INVALID_ARGUMENT, "NULL argument");
    return copy_out(cfg->cfg.hash(), out, 41, nullptr);
  });
}

bpre_status bpre_run(const bpre_config* cfg, int* exit_code) {
  return guarded([&] {
    if (!cfg || !exit_code) return fail(BPRE_INVALID_ARGUMENT, "NULL argument");
    const bpre::RunResult res = bpre::run_experiment(cfg->cfg);
    *exit_code = res.exit_code;
    last_error = res.message;
    return BPRE_OK;
  });
}

bpre_status bpre_derive_seed(uint64_t master, const bpre_seed_label* labels, size_t count, uint64_t* out) {
  return guarded([&] {
    if (!out || (count > 0 && !labels)) return fail(BPRE_INVALID_ARGUMENT, "NULL argument");
    std::vector<bpre::SeedLabel> list;
    list.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
      if (labels[i].name) {
        list.emplace_back(std::string_view(labels[i].name));
      } else {
        list.emplace_back(labels[i].id);
      }
    }
    const std::uint64_t seed = bpre::derive_seed(master, list);
    *out = seed;
    return BPRE_OK;
  });
}

}  // extern "C"
