#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "lobdiff/data/synth_market.hpp"
#include "lobdiff/pipeline/pipeline.hpp"

using namespace lobdiff;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("lobdiff_pipeline_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

nlohmann::json minimal() { return {{"seed", 3}}; }

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Message from parse_run_config, or "" when it parses.
std::string config_error(const nlohmann::json& j) {
  try {
    parse_run_config(j);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(RunConfig, DefaultsAndDerivedSeeds) {
  const auto c = parse_run_config(minimal());
  EXPECT_EQ(c.network, NetworkConfig::desk(true));
  EXPECT_TRUE(c.train_config().conditional);
  EXPECT_NE(c.train_config().seed, c.sampler_config().seed);
  EXPECT_NE(c.sampler_config().seed, c.gbdt_config().seed);
  EXPECT_EQ(c.train_config().seed, parse_run_config(minimal()).train_config().seed);
  auto other = minimal();
  other["seed"] = 4;
  EXPECT_NE(parse_run_config(other).train_config().seed, c.train_config().seed);
}

TEST(RunConfig, StrictKeys) {
  EXPECT_NE(config_error({{"out", "x"}}).find("'seed' is required"), std::string::npos);
  auto j = minimal();
  j["data"] = {{"n_second", 10}};
  EXPECT_NE(config_error(j).find("n_second"), std::string::npos);
  j = minimal();
  j["network"] = {{"chanels", 8}};
  EXPECT_NE(config_error(j).find("chanels"), std::string::npos);
  j = minimal();
  j["train"] = {{"seed", 5}};
  EXPECT_NE(config_error(j).find("train.seed"), std::string::npos);
  j = minimal();
  j["downstream"] = {{"forecast", {{"gbdt", {{"seed", 1}}}}}};
  EXPECT_NE(config_error(j).find("downstream.forecast.gbdt.seed"), std::string::npos);
  j = minimal();
  j["train"] = {{"conditional", false}};
  EXPECT_NE(config_error(j).find("train.conditional"), std::string::npos);
  j = minimal();
  j["data"] = {{"source", "snapshots"}, {"snapshot_files", {"/no/such/file.csv"}}};
  EXPECT_NE(config_error(j).find("/no/such/file.csv"), std::string::npos);
  j = minimal();
  j["bogus"] = 1;
  EXPECT_NE(config_error(j).find("bogus"), std::string::npos);
}

TEST(RunConfig, PartialModuleKeysKeepOtherDefaults) {
  auto j = minimal();
  j["network"] = {{"channels", 16}};
  j["train"] = {{"max_epochs", 4}};
  const auto c = parse_run_config(j);
  EXPECT_EQ(c.network.channels, 16);
  EXPECT_EQ(c.network.n_res_layers, NetworkConfig::desk().n_res_layers);
  EXPECT_TRUE(c.network.liquidity_conditioned);
  EXPECT_EQ(c.train.max_epochs, 4);
  EXPECT_EQ(c.train.batch_size, TrainConfig{}.batch_size);
}

TEST(RunConfig, OverridesAndJsonRoundTrip) {
  auto j = minimal();
  apply_override(j, "train.max_epochs=7");
  apply_override(j, "out=somewhere");
  apply_override(j, "sampler.omega=0.5");
  const auto c = parse_run_config(j);
  EXPECT_EQ(c.train.max_epochs, 7);
  EXPECT_EQ(c.out, fs::path("somewhere"));
  EXPECT_EQ(c.sampler.omega, 0.5);
  EXPECT_THROW(apply_override(j, "noequals"), ConfigError);
  EXPECT_THROW(apply_override(j, "seed.x=1"), ConfigError);
  const auto again = parse_run_config(run_config_json(c));
  EXPECT_EQ(run_config_json(again), run_config_json(c));
}

TEST(RunConfig, FileWithCommentsAndRelativePaths) {
  const auto dir = temp_dir("cfg");
  auto cfg = SynthMarketConfig::desk(1, "d");
  cfg.n_seconds = 200;
  write_snapshot_file(synth_market(cfg), dir / "d.csv");
  std::ofstream(dir / "run.json") << "// comment\n{\"seed\": 1, \"data\": {\"source\": \"snapshots\", "
                                     "\"snapshot_files\": [\"d.csv\"]}}\n";
  const auto c = load_run_config(dir / "run.json", {"eval.max_lag=5"});
  ASSERT_EQ(c.data.snapshot_files.size(), 1u);
  EXPECT_EQ(fs::path(c.data.snapshot_files[0]), (dir / "d.csv").lexically_normal());
  EXPECT_EQ(c.eval.max_lag, 5);
  EXPECT_THROW(load_run_config(dir / "missing.json"), ConfigError);
}

TEST(Splits, ChronologicalRowRanges) {
  SnapshotSeries s;
  s.day = "d";
  s.snapshots.resize(1000);
  const auto sp = chronological_splits(std::span(&s, 1), 0.7, 0.1);
  ASSERT_EQ(sp.size(), 1u);
  EXPECT_EQ(sp[0].train_end, 700u);
  EXPECT_EQ(sp[0].val_end, 800u);
  EXPECT_EQ(sp[0].n, 1000u);
}

TEST(Splits, WindowsInKeepFullSeriesAnchors) {
  auto cfg = SynthMarketConfig::desk(2, "d");
  cfg.n_seconds = 400;
  const auto series = synth_market(cfg);
  const auto spec = fit_normalization(std::span(&series, 1));
  const auto w = windows_in(series, 100, 300, spec, 32, 5);
  ASSERT_FALSE(w.empty());
  EXPECT_EQ(w.front().anchor_index, 100u + 63u);
  for (const auto& x : w) {
    EXPECT_LT(x.anchor_index, 300u);
    EXPECT_GE(x.anchor_index, 163u);
  }
  EXPECT_THROW(slice(series, 10, 401), ContractError);
}

TEST(Pipeline, SmokeRunEndToEnd) {
  const auto dir = temp_dir("smoke");
  const auto c = load_run_config(fs::path(LOBDIFF_CONFIG_DIR) / "smoke.json",
                                 {"out=" + nlohmann::json(dir.string()).dump()});
  // Stages refuse to run before their inputs exist.
  EXPECT_THROW(run_command("train", c), StageError);
  for (const auto& cmd : pipeline_commands()) run_command(cmd, c);

  for (const char* f : {"data/day0.csv", "preprocess/normalization.json", "train/checkpoint.bin",
                        "train/training_log.csv", "sample/factual.csv", "counterfactual/over_liquidity.csv",
                        "counterfactual/grid.csv", "evaluate/marginals.csv", "evaluate/metrics.json",
                        "downstream/forecast.json", "report/table1_realism.csv", "report/table2_counterfactual.csv",
                        "report/table3_forecast.csv"}) {
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  }
  // Manifests snapshot the config and hash every input and output.
  for (const auto& stage : {"data", "preprocess", "train", "sample", "counterfactual", "evaluate", "downstream",
                            "report"}) {
    std::ifstream in(dir / stage / "manifest.json");
    ASSERT_TRUE(in) << stage;
    const auto m = nlohmann::json::parse(in);
    EXPECT_EQ(m.at("seed").get<std::uint64_t>(), c.seed);
    EXPECT_EQ(m.at("config"), run_config_json(c));
    EXPECT_FALSE(m.at("tool_version").get<std::string>().empty());
    for (const auto& [name, hash] : m.at("outputs").items()) {
      EXPECT_EQ(hash.get<std::string>(), file_hash(dir / name)) << stage << " " << name;
    }
  }
  std::ifstream mj(dir / "sample" / "manifest.json");
  EXPECT_TRUE(nlohmann::json::parse(mj).at("inputs").contains("train/checkpoint.bin"));

  // Metrics validate: one row per level, finite non-negative distances.
  std::ifstream in(dir / "evaluate" / "metrics.json");
  const auto m = nlohmann::json::parse(in);
  ASSERT_EQ(m.at("marginals").at("wasserstein").size(), static_cast<std::size_t>(kLevels));
  for (const auto& v : m.at("marginals").at("ks")) {
    EXPECT_GE(v.get<double>(), 0.0);
    EXPECT_LE(v.get<double>(), 1.0);
  }
  // The report is rendered from stored JSON: a second render is identical.
  const auto t2 = read_text(dir / "report" / "table2_counterfactual.csv");
  run_report(c);
  EXPECT_EQ(read_text(dir / "report" / "table2_counterfactual.csv"), t2);
  EXPECT_NE(t2.find("Real_bin VS Fake_OL_all"), std::string::npos);
}

TEST(Pipeline, CounterfactualNeedsConditionalNetwork) {
  auto j = minimal();
  j["network"] = {{"liquidity_conditioned", false}};
  const auto c = parse_run_config(j);
  EXPECT_THROW(run_counterfactual(c), ConfigError);
  EXPECT_THROW(run_command("fly", c), ConfigError);
}

#ifdef LOBDIFF_CLI
namespace {

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(LOBDIFF_CLI) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace
#endif

TEST(Cli, ExitCodes) {
#ifndef LOBDIFF_CLI
  GTEST_SKIP() << "tool not built";
#else
  const auto dir = temp_dir("cli");
  const auto log = dir / "log.txt";
  const std::string smoke = (fs::path(LOBDIFF_CONFIG_DIR) / "smoke.json").string();
  std::ofstream(dir / "bad.json") << "{\"seed\": 1, \"train\": {\"learning_rat\": 0.1}}";
  EXPECT_EQ(run_cli("train --config " + (dir / "bad.json").string(), log), 2);
  EXPECT_NE(read_text(log).find("learning_rat"), std::string::npos);
  EXPECT_EQ(run_cli("fly --config " + smoke, log), 2);
  EXPECT_EQ(run_cli("train", log), 2);
  EXPECT_EQ(run_cli("train --config " + smoke + " --device gpu", log), 2);
  EXPECT_EQ(run_cli("train --config " + smoke + " --override nonsense", log), 2);
  // Runtime failure: training before preprocessing names the module.
  EXPECT_EQ(run_cli("train --config " + smoke + " --out " + (dir / "run").string(), log), 1);
  EXPECT_NE(read_text(log).find("training_engine"), std::string::npos);
  EXPECT_EQ(run_cli("synth-data --config " + smoke + " --out " + (dir / "run").string() + " --seed 9", log), 0);
  std::ifstream in(dir / "run" / "data" / "manifest.json");
  EXPECT_EQ(nlohmann::json::parse(in).at("seed").get<int>(), 9);
#endif
}
