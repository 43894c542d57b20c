#include "doctest.h"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <random>
#include <sstream>

#include "json.hpp"
#include "physio/common.hpp"
#include "physio/pipeline.hpp"
#include "physio/registry.hpp"
#include "test_util.hpp"

using namespace physio;
using namespace physio::pipeline;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// 30 participants x 8 videos; the response loads on one feature at 0.5 in
// standardized units when `planted` is set.
void write_features(const std::string& path, const std::string& planted, unsigned seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> normal;
  dataset::FeatureTable t;
  t.config_hash = "synthetic";
  t.col_names = feature_names();
  const std::size_t k = planted.empty() ? 0 : feature_index(planted);
  for (int p = 1; p <= 30; ++p)
    for (int v = 1; v <= 8; ++v) {
      dataset::DesignRow r;
      r.key = {std::to_string(p), std::to_string(v)};
      for (std::size_t j = 0; j < t.col_names.size(); ++j) r.features.push_back(normal(gen));
      r.response = (planted.empty() ? 0.0 : 0.5 * r.features[k]) + std::sqrt(0.75) * normal(gen);
      t.rows.push_back(r);
    }
  dataset::write_features_csv(path, t);
}

PipelineConfig config_for(const std::string& out, std::uint64_t seed = 42) {
  json j;
  j["output_dir"] = out;
  j["videos"] = {"1", "2"};
  j["video_classes"] = {{"1", "calm"}, {"2", "tense"}};
  j["selector"] = {{"alpha", 0.1}, {"K", 40}, {"seed", seed}, {"alpha_grid", {0.05, 0.1, 0.2}}};
  j["threads"] = 1;
  return parse_config(j, out, {}, false);
}

std::string run(int (*cmd)(const PipelineConfig&, std::ostream&), const PipelineConfig& cfg) {
  std::ostringstream log;
  CHECK(cmd(cfg, log) == 0);
  return log.str();
}

}  // namespace

TEST_CASE("config validation") {
  SUBCASE("unknown keys are rejected") {
    json j;
    j["selektor"] = json::object();
    CHECK_THROWS_AS(parse_config(j, ".", {}, false), Error);
    json k;
    k["selector"] = {{"alfa", 0.1}};
    CHECK_THROWS_AS(parse_config(k, ".", {}, false), Error);
  }
  SUBCASE("alpha grid must lie in (0, 1)") {
    json j;
    j["selector"] = {{"alpha_grid", {0.1, 1.5}}};
    try {
      parse_config(j, ".", {}, false);
      FAIL("expected error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::config);
      CHECK(exit_code_for(e.kind()) == 4);
    }
  }
  SUBCASE("referenced files must exist") {
    json j;
    j["participants"] = {{{"id", "1"}, {"physio", "nowhere.csv"}, {"annotations", "nowhere_either.csv"}}};
    CHECK_THROWS_AS(parse_config(j, "/nonexistent", {}, true), Error);
    CHECK_NOTHROW(parse_config(j, "/nonexistent", {}, false));
  }
  SUBCASE("command-line overrides win and are echoed") {
    Overrides ov;
    ov.alpha = 0.2;
    ov.variant = "plain";
    ov.seed = 9;
    json j;
    j["selector"] = {{"alpha", 0.1}};
    const auto c = parse_config(j, ".", ov, false);
    CHECK(c.selector.alpha == 0.2);
    CHECK(c.selector.variant == trex::Variant::plain);
    CHECK(c.selector.seed == 9);
    CHECK(c.echo["selector"]["alpha"] == 0.2);
  }
  SUBCASE("hash ignores threads and output directory only") {
    json j = json::object();
    const auto a = parse_config(j, ".", {}, false);
    Overrides ov;
    ov.threads = 3;
    ov.output_dir = "elsewhere";
    CHECK(parse_config(j, ".", ov, false).hash == a.hash);
    Overrides seed;
    seed.seed = 1234;
    CHECK(parse_config(j, ".", seed, false).hash != a.hash);
    CHECK(a.echo.contains("cvxeda"));
    CHECK(a.echo["selector"]["K"] == 100);
  }
  SUBCASE("top level must be an object") {
    CHECK_THROWS_WITH_AS(parse_config(json::array(), ".", {}, false), "configuration must be a JSON object", Error);
  }
}

TEST_CASE("FNV-1a reference values") {
  CHECK(fnv1a_hex("") == "cbf29ce484222325");
  CHECK(fnv1a_hex("a") == "af63dc4c8601ec8c");
  CHECK(fnv1a_hex("foobar") == "85944171f73967e8");
}

TEST_CASE("stages fail with a dependency error when inputs are missing") {
  testutil::TempDir dir("pipeline_missing");
  const auto cfg = config_for(dir.path().string());
  std::ostringstream log;
  for (auto cmd : {cmd_select, cmd_fit, cmd_report}) {
    try {
      cmd(cfg, log);
      FAIL("expected error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::dependency);
    }
  }
}

TEST_CASE("select, fit and report on a planted feature") {
  testutil::TempDir dir("pipeline_planted");
  write_features(dir.file("features.csv"), "SMNA_mean", 5);
  const auto cfg = config_for(dir.path().string());

  run(cmd_select, cfg);
  const auto sel1 = testutil::read_file(dir.file("selection.json"));
  run(cmd_select, cfg);
  CHECK(testutil::read_file(dir.file("selection.json")) == sel1);
  CHECK(fs::exists(dir.file("alpha_sweep.svg")));

  const auto sel = json::parse(sel1);
  REQUIRE(sel["selected"].size() >= 1);
  CHECK(sel["selected"][0] == "SMNA_mean");
  CHECK(sel["config_hash"] == cfg.hash);
  CHECK(sel["alpha_sweep"].size() == 3);

  run(cmd_fit, cfg);
  const auto model1 = testutil::read_file(dir.file("model.json"));
  run(cmd_fit, cfg);
  CHECK(testutil::read_file(dir.file("model.json")) == model1);
  CHECK(fs::exists(dir.file("effects.svg")));
  const auto model = json::parse(model1);
  for (const auto& c : model["models"]["lmer"]["coefficients"])
    if (c["name"] == "SMNA_mean") {
      const double est = c["estimate"], se = c["se"];
      MESSAGE("planted slope estimate " << est << " (SE " << se << ")");
      CHECK(std::abs(est - 0.5) <= 3.0 * se);
    }
  CHECK(model["models"].contains("rlmer"));

  const auto log = run(cmd_report, cfg);
  const auto summary1 = testutil::read_file(dir.file("summary.txt"));
  run(cmd_report, cfg);
  CHECK(testutil::read_file(dir.file("summary.txt")) == summary1);
  CHECK(summary1.find("Confirmation rate: 100%") != std::string::npos);
  CHECK(summary1.find("Configuration") != std::string::npos);
  CHECK(log.find("Configuration") == std::string::npos);
  CHECK(summary1.find(cfg.hash) != std::string::npos);
}

TEST_CASE("null data: empty selection, nothing to fit, no discoveries") {
  testutil::TempDir dir("pipeline_null");
  write_features(dir.file("features.csv"), "", 6);
  const auto cfg = config_for(dir.path().string());
  run(cmd_select, cfg);
  const auto sel = json::parse(testutil::read_file(dir.file("selection.json")));
  CHECK(sel["selected"].empty());
  const auto log = run(cmd_fit, cfg);
  CHECK(log.find("nothing to fit") != std::string::npos);
  CHECK(!fs::exists(dir.file("model.json")));
  run(cmd_report, cfg);
  CHECK(testutil::read_file(dir.file("summary.txt")).find("No discoveries") != std::string::npos);
}

TEST_CASE("malformed features file is a data error with a line number") {
  testutil::TempDir dir("pipeline_bad");
  write_features(dir.file("features.csv"), "", 7);
  auto text = testutil::read_file(dir.file("features.csv"));
  text += "1,9,not-a-row\n";
  testutil::write_file(dir.file("features.csv"), text);
  const auto cfg = config_for(dir.path().string());
  std::ostringstream log;
  try {
    cmd_select(cfg, log);
    FAIL("expected error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::data);
    CHECK(std::string(e.what()).find("line") != std::string::npos);
  }
}

TEST_CASE("extract on a tiny recording set is deterministic") {
  // Two participants with one clip each, written by the demo generator
  // (see tests/CMakeLists.txt).
  const char* root = std::getenv("PHYSIO_TINY_DATA");
  if (root == nullptr) {
    MESSAGE("PHYSIO_TINY_DATA not set, skipping");
    return;
  }
  testutil::TempDir out("pipeline_extract");
  Overrides ov;
  ov.output_dir = out.path().string();
  ov.threads = 1;
  const auto cfg = load_config((fs::path(root) / "config.json").string(), ov);
  run(cmd_extract, cfg);
  const auto first = testutil::read_file(out.file("features.csv"));
  const auto table = dataset::read_features_csv(out.file("features.csv"));
  CHECK(table.rows.size() == 2);
  CHECK(table.col_names.size() == 162);
  CHECK(table.config_hash == cfg.hash);
  run(cmd_extract, cfg);
  CHECK(testutil::read_file(out.file("features.csv")) == first);
}
