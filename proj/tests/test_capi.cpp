#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "doctest.h"

#include "bpre/bpre.h"

namespace fs = std::filesystem;

namespace {

struct Config {
  bpre_config* ptr = nullptr;
  ~Config() { bpre_config_free(ptr); }
};

std::string get(const bpre_config* cfg, const char* key) {
  size_t needed = 0;
  REQUIRE(bpre_config_get(cfg, key, nullptr, 0, &needed) == BPRE_BUFFER_TOO_SMALL);
  std::vector<char> buf(needed);
  REQUIRE(bpre_config_get(cfg, key, buf.data(), buf.size(), &needed) == BPRE_OK);
  return buf.data();
}

}  // namespace

TEST_CASE("c api: version and a clean error state") {
  CHECK(std::strlen(bpre_version()) > 0);
  Config cfg;
  REQUIRE(bpre_config_new(&cfg.ptr) == BPRE_OK);
  CHECK(get(cfg.ptr, "run.experiment") == "simulate");
}

TEST_CASE("c api: set, get, serialize and parse round trip") {
  Config cfg;
  REQUIRE(bpre_config_new(&cfg.ptr) == BPRE_OK);
  REQUIRE(bpre_config_set(cfg.ptr, "model.horizon", "0.5") == BPRE_OK);
  REQUIRE(bpre_config_set(cfg.ptr, "kernel.kappa", "const") == BPRE_OK);
  CHECK(get(cfg.ptr, "model.horizon") == "0.5");

  size_t needed = 0;
  char tiny[4];
  CHECK(bpre_config_serialize(cfg.ptr, tiny, sizeof tiny, &needed) == BPRE_BUFFER_TOO_SMALL);
  REQUIRE(needed > sizeof tiny);
  std::vector<char> text(needed);
  REQUIRE(bpre_config_serialize(cfg.ptr, text.data(), text.size(), &needed) == BPRE_OK);
  CHECK(std::strlen(text.data()) + 1 == needed);

  Config again;
  REQUIRE(bpre_config_parse(text.data(), &again.ptr) == BPRE_OK);
  char h1[41], h2[41];
  REQUIRE(bpre_config_hash(cfg.ptr, h1) == BPRE_OK);
  REQUIRE(bpre_config_hash(again.ptr, h2) == BPRE_OK);
  CHECK(std::string(h1) == h2);
  CHECK(std::strlen(h1) == 40);
  CHECK(std::string(h1).find_first_not_of("0123456789abcdef") == std::string::npos);
}

TEST_CASE("c api: config errors report the key") {
  Config cfg;
  REQUIRE(bpre_config_new(&cfg.ptr) == BPRE_OK);
  CHECK(bpre_config_set(cfg.ptr, "model.nn", "3") == BPRE_CONFIG);
  CHECK(std::string(bpre_last_error_key()) == "model.nn");
  CHECK(std::strlen(bpre_last_error()) > 0);
  CHECK(bpre_config_set(cfg.ptr, "model.n", "-1") == BPRE_CONFIG);
  CHECK(std::string(bpre_last_error_key()) == "model.n");

  REQUIRE(bpre_config_set(cfg.ptr, "model.n", "3") == BPRE_OK);
  REQUIRE(bpre_config_set(cfg.ptr, "model.horizon", "0.25") == BPRE_OK);
  CHECK(bpre_config_validate(cfg.ptr) == BPRE_CONFIG);

  bpre_config* bad = nullptr;
  CHECK(bpre_config_parse("model.n = 1\nmodel.n = 2\n", &bad) == BPRE_CONFIG);
  CHECK(bad == nullptr);
  CHECK(bpre_config_load("/nonexistent/bpre.cfg", &bad) != BPRE_OK);
  CHECK(bad == nullptr);
}

TEST_CASE("c api: null arguments are rejected") {
  CHECK(bpre_config_new(nullptr) == BPRE_INVALID_ARGUMENT);
  CHECK(bpre_config_parse(nullptr, nullptr) == BPRE_INVALID_ARGUMENT);
  CHECK(bpre_config_set(nullptr, "model.n", "1") == BPRE_INVALID_ARGUMENT);
  CHECK(bpre_config_validate(nullptr) == BPRE_INVALID_ARGUMENT);
  CHECK(bpre_config_get(nullptr, "model.n", nullptr, 0, nullptr) == BPRE_INVALID_ARGUMENT);
  char hash[41];
  CHECK(bpre_config_hash(nullptr, hash) == BPRE_INVALID_ARGUMENT);
  int code = 0;
  CHECK(bpre_run(nullptr, &code) == BPRE_INVALID_ARGUMENT);
  uint64_t seed = 0;
  CHECK(bpre_derive_seed(1, nullptr, 2, &seed) == BPRE_INVALID_ARGUMENT);
  CHECK(bpre_derive_seed(1, nullptr, 0, nullptr) == BPRE_INVALID_ARGUMENT);
  bpre_config_free(nullptr);
}

TEST_CASE("c api: derive_seed is stable and label sensitive") {
  const bpre_seed_label a[] = {{"replica", 0}, {nullptr, 3}};
  const bpre_seed_label b[] = {{"replica", 0}, {nullptr, 4}};
  const bpre_seed_label c[] = {{"replica", 0}, {"3", 0}};
  uint64_t sa = 0, sa2 = 0, sb = 0, sc = 0;
  REQUIRE(bpre_derive_seed(5, a, 2, &sa) == BPRE_OK);
  REQUIRE(bpre_derive_seed(5, a, 2, &sa2) == BPRE_OK);
  REQUIRE(bpre_derive_seed(5, b, 2, &sb) == BPRE_OK);
  REQUIRE(bpre_derive_seed(5, c, 2, &sc) == BPRE_OK);
  CHECK(sa == sa2);
  CHECK(sa != sb);
  CHECK(sa != sc);
}

TEST_CASE("c api: run a small experiment and report its exit code") {
  const fs::path out = fs::temp_directory_path() / "bpre_test_capi";
  fs::remove_all(out);
  Config cfg;
  REQUIRE(bpre_config_new(&cfg.ptr) == BPRE_OK);
  REQUIRE(bpre_config_set(cfg.ptr, "run.output", out.string().c_str()) == BPRE_OK);
  REQUIRE(bpre_config_set(cfg.ptr, "run.replicas", "2") == BPRE_OK);
  REQUIRE(bpre_config_set(cfg.ptr, "model.n", "8") == BPRE_OK);
  REQUIRE(bpre_config_set(cfg.ptr, "model.horizon", "0.25") == BPRE_OK);
  int code = -1;
  REQUIRE(bpre_run(cfg.ptr, &code) == BPRE_OK);
  CHECK(code == 0);
  CHECK(fs::exists(out / "metadata.json"));

  REQUIRE(bpre_config_set(cfg.ptr, "model.n", "3") == BPRE_OK);
  REQUIRE(bpre_run(cfg.ptr, &code) == BPRE_OK);
  CHECK(code == BPRE_CONFIG);
  CHECK(std::string(bpre_last_error()).find("model.horizon") != std::string::npos);
  fs::remove_all(out);
}
