#include "entrofact/experiments.hpp"
#include "entrofact/parallel.hpp"

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace entrofact;
using experiments::json;

namespace {

namespace fs = std::filesystem;

fs::path temp_dir(const std::string& tag) {
  const fs::path dir = fs::temp_directory_path() / ("entrofact-test-" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run_binary(const std::string& args) {
  const std::string cmd = std::string(ENTROFACT_BIN) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

}  // namespace

TEST_CASE("registry covers the documented experiments") {
  const std::vector<std::string> expected = {
      "verify-shearer",          "curie-weiss-scan",
      "critical-cw-scan",        "sk-spectrum",
      "ising-uniqueness-scan",   "critical-ising-check",
      "localization-martingale", "localization-covariance",
      "localization-stability",  "multicomponent-R",
      "multicomponent-tensorization"};
  for (const auto& name : expected) CHECK(experiments::find(name) != nullptr);
  CHECK(experiments::find("no-such-thing") == nullptr);
  CHECK(experiments::registry().size() == expected.size());
}

TEST_CASE("run validates the config") {
  CHECK_THROWS_AS(experiments::run(json::array(), ".", false),
                  experiments::SchemaError);
  CHECK_THROWS_AS(experiments::run(json{{"experiment", "nope"}}, ".", false),
                  experiments::UnknownExperiment);
  CHECK_THROWS_AS(
      experiments::run(json{{"experiment", "verify-shearer"}, {"seed", "abc"}}, ".",
                       false),
      experiments::SchemaError);
  // Wrongly typed fields surface as schema errors, not raw json exceptions.
  CHECK_THROWS_AS(
      experiments::run(json{{"experiment", "verify-shearer"}, {"budget", "many"}},
                       ".", false),
      experiments::SchemaError);
}

TEST_CASE("localization-martingale writes trajectory artifacts") {
  const auto dir = temp_dir("traj");
  json config{{"experiment", "localization-martingale"}, {"seed", 4},
              {"paths", 50},  {"dt", 1e-2},
              {"T_list", {0.5}}, {"verify_half_dt", false}, {"dump_paths", 2}};
  const auto r = experiments::run(config, dir, true);
  CHECK(r.verdict == report::Verdict::pass);
  REQUIRE(fs::exists(dir / "trajectories.csv"));
  std::ifstream in(dir / "trajectories.csv", std::ios::binary);
  std::string header;
  std::getline(in, header);
  CHECK(header == "path,t,y0,y1,y2,y3,total_prob,rho_probe0");
  int rows = 0;
  std::string line;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 2 * 21);
}

TEST_CASE("verify-shearer on a product passes and is deterministic") {
  json config{{"experiment", "verify-shearer"},
              {"model", {{"type", "product"}, {"arities", {2, 2}}}},
              {"budget", 40},
              {"seed", 5}};
  const auto a = experiments::run(config, ".", false);
  CHECK(a.verdict == report::Verdict::pass);
  const auto b = experiments::run(config, ".", false);
  CHECK(a.payload.dump() == b.payload.dump());

  // Worker count must not influence the payload.
  const int saved = worker_count();
  worker_count() = 1;
  const auto c = experiments::run(config, ".", false);
  worker_count() = 2;
  const auto d = experiments::run(config, ".", false);
  worker_count() = saved;
  CHECK(c.payload.dump() == d.payload.dump());
  CHECK(a.payload.dump() == c.payload.dump());
}

TEST_CASE("multicomponent-R experiment passes with a small budget") {
  json config{{"experiment", "multicomponent-R"}, {"budget", 40},
              {"batteries", 3}, {"seed", 2}};
  const auto r = experiments::run(config, ".", false);
  CHECK(r.verdict == report::Verdict::pass);
}

TEST_CASE("multicomponent experiments accept a JSON manifest") {
  json manifest{{"components",
                 {{{"type", "conditioned_bernoulli"}, {"probs", {0.5, 0.5, 0.5}},
                   {"k", 1}}}}};
  json config{{"experiment", "multicomponent-R"}, {"budget", 40}, {"seed", 2},
              {"manifest", manifest}, {"r_upper", 2.0}};
  const auto r = experiments::run(config, ".", false);
  CHECK(r.verdict == report::Verdict::pass);
  CHECK(r.payload["fitted"].contains("R_estimate"));

  json tens{{"experiment", "multicomponent-tensorization"}, {"budget", 60},
            {"seed", 2},
            {"manifest", json{{"components",
                               {{{"type", "product"}, {"sites", {{0.4, 0.6}}}},
                                {{"type", "product"}, {"sites", {{0.3, 0.7}}}}}}}},
            {"component_constants", {1.0, 1.0}},
            {"r_upper", 1.0}};
  const auto t = experiments::run(tens, ".", false);
  CHECK(t.verdict == report::Verdict::pass);
}

TEST_CASE("every experiment passes at a reduced scale") {
  const std::vector<json> configs = {
      json{{"experiment", "verify-shearer"}, {"budget", 40}},
      json{{"experiment", "curie-weiss-scan"}, {"budget", 60},
           {"betas", {0.3, 0.7}}, {"n", 4}},
      json{{"experiment", "critical-cw-scan"}, {"budget", 60},
           {"n_list", {4, 6, 8, 10}}},
      json{{"experiment", "sk-spectrum"}, {"n", 60}, {"seeds", 20}},
      json{{"experiment", "ising-uniqueness-scan"}, {"graph", "k4"}, {"tilts", 3}},
      json{{"experiment", "critical-ising-check"}, {"budget", 40},
           {"graphs", {"k4", "prism3"}}},
      json{{"experiment", "localization-martingale"}, {"paths", 200},
           {"dt", 5e-3}, {"T_list", {1.0}}, {"verify_half_dt", false}},
      json{{"experiment", "localization-covariance"}, {"v_samples", 5},
           {"critical_n_list", {4, 6}}, {"critical_tilts", 5}},
      json{{"experiment", "localization-stability"}, {"paths", 300}, {"f_count", 2},
           {"dt", 5e-3}},
      json{{"experiment", "multicomponent-R"}, {"budget", 30}, {"batteries", 2}},
      json{{"experiment", "multicomponent-tensorization"}, {"budget", 60},
           {"random_alphas", 1}},
  };
  for (auto config : configs) {
    config["seed"] = 11;
    INFO(config["experiment"].get<std::string>());
    const auto r = experiments::run(config, ".", false);
    CHECK(r.verdict != report::Verdict::fail);
  }
}

TEST_CASE("enumeration cap maps to its own exit code") {
  const auto dir = temp_dir("cap");
  {
    std::ofstream out(dir / "big.json");
    // 2^24 states exceed the default cap of 2^20.
    out << R"({"experiment":"curie-weiss-scan","n":24,"betas":[0.5],"budget":5})";
  }
  CHECK(run_binary("run " + (dir / "big.json").string()) == 66);
}

TEST_CASE("cli binary: run, list, and error exit codes") {
  const auto dir = temp_dir("cli");
  const auto config_path = dir / "config.json";
  {
    std::ofstream out(config_path);
    out << R"({"experiment":"verify-shearer","model":{"type":"product","arities":[2,2]},)"
        << R"("budget":40,"seed":5})";
  }
  const auto out1 = dir / "run1";
  const auto out2 = dir / "run2";
  CHECK(run_binary("run " + config_path.string() + " --out " + out1.string()) == 0);
  CHECK(run_binary("run " + config_path.string() + " --out " + out2.string()) == 0);

  // Byte-identical payloads; wall clock lives outside the payload.
  const auto r1 = json::parse(slurp(out1 / "verify-shearer-report.json"));
  const auto r2 = json::parse(slurp(out2 / "verify-shearer-report.json"));
  CHECK(r1.at("payload").dump() == r2.at("payload").dump());
  CHECK(r1.contains("wall_clock_ms"));

  CHECK(run_binary("list") == 0);
  CHECK(run_binary("list localization") == 0);
  CHECK(run_binary("list zzz-no-match") == 0);

  // Usage, unknown experiment, schema errors.
  CHECK(run_binary("frobnicate") == 64);
  {
    std::ofstream out(dir / "unknown.json");
    out << R"({"experiment":"nope"})";
  }
  CHECK(run_binary("run " + (dir / "unknown.json").string()) == 64);
  {
    std::ofstream out(dir / "bad.json");
    out << R"({"experiment": 12)";
  }
  CHECK(run_binary("run " + (dir / "bad.json").string()) == 65);
  CHECK(run_binary("run " + (dir / "missing.json").string()) == 64);
}
