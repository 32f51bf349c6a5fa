#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "commands.hpp"
#include "config.hpp"

namespace hsp {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("hsp-cli-" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path write_config(const fs::path& dir, const json& doc) {
  const auto p = dir / "config.json";
  std::ofstream(p) << doc.dump(2);
  return p;
}

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "hsp");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  return app::run_cli(static_cast<int>(argv.size()), argv.data());
}

json small_synthetic() {
  return {{"n_assets", 3}, {"n_common_factors", 1}, {"n_noise_drivers", 3}, {"horizon", 260}, {"start", "2020-01-01"}};
}

std::string validation_message(const json& doc) {
  try {
    app::parse_config(doc);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::validation);
    return e.what();
  }
  ADD_FAILURE() << "accepted: " << doc.dump();
  return {};
}

TEST(Config, ErrorsNameTheField) {
  const json base = {{"data", {{"synthetic", small_synthetic()}}}};
  auto doc = base;
  doc["schedule"] = {{"start", "2020-13-01"}};
  EXPECT_EQ(validation_message(doc).rfind("schedule.start", 0), 0u);

  doc = base;
  doc["selection"] = {{"k", -1}};
  EXPECT_NE(validation_message(doc).find("selection.k"), std::string::npos);

  doc = base;
  doc["bogus"] = 1;
  EXPECT_NE(validation_message(doc).find("bogus"), std::string::npos);

  doc = base;
  doc["methods"] = {"equal_weight", "magic"};
  EXPECT_NE(validation_message(doc).find("methods[1]"), std::string::npos);

  doc = base;
  doc["selection"] = {{"mode", "SELECT"}};
  EXPECT_EQ(validation_message(doc), "selection.override_file: SELECT mode requires an override file");

  doc = base;
  doc["data"]["assets"] = "a.csv";
  EXPECT_NE(validation_message(doc).find("data"), std::string::npos);
  EXPECT_NE(validation_message(json{{"seed", 1}}).find("data"), std::string::npos);

  doc = base;
  doc["allocation"] = {{"hsp_cap", 1.5}};
  EXPECT_NE(validation_message(doc).find("allocation.hsp_cap"), std::string::npos);
}

TEST(Config, CanonicalFormAndHash) {
  const json doc = {{"seed", 4}, {"data", {{"synthetic", small_synthetic()}}}};
  const auto a = app::parse_config(doc);
  auto doc2 = doc;
  doc2["threads"] = 3;
  doc2["output_dir"] = "elsewhere";
  const auto b = app::parse_config(doc2);
  EXPECT_EQ(app::config_hash(a), app::config_hash(b));
  EXPECT_EQ(app::to_json(a)["seed"], 4);
  EXPECT_EQ(a.backtest.seed, 4u);
  EXPECT_EQ(a.synthetic->seed, 4u);
  // The canonical form parses back to the same run.
  auto round = app::to_json(a);
  round.erase("output_dir");
  EXPECT_EQ(app::config_hash(app::parse_config(round)), app::config_hash(a));
  auto doc3 = doc;
  doc3["seed"] = 5;
  EXPECT_NE(app::config_hash(app::parse_config(doc3)), app::config_hash(a));
}

TEST(Cli, ExitCodes) {
  const auto dir = scratch("exit");
  EXPECT_EQ(cli({"backtest"}), 1);
  EXPECT_EQ(cli({"--config", (dir / "missing.json").string(), "backtest"}), 2);
  const auto bad = write_config(dir, {{"data", {{"synthetic", small_synthetic()}}}, {"schedule", {{"hold_days", 0}}}});
  EXPECT_EQ(cli({"--config", bad.string(), "backtest"}), 1);
  // A cap below 1/N is a runtime failure, not a config error.
  const auto infeasible = write_config(dir, {{"data", {{"synthetic", small_synthetic()}}},
                                              {"methods", {"mv_min_vol"}},
                                              {"allocation", {{"mv_cap", 0.2}}},
                                              {"output_dir", (dir / "out").string()}});
  EXPECT_EQ(cli({"--config", infeasible.string(), "backtest"}), 2);
}

TEST(Cli, FlatUniverseEqualWeight) {
  const auto dir = scratch("flat");
  json syn = small_synthetic();
  for (const char* k : {"factor_vol", "idio_vol", "noise_vol", "noise_driver_vol"}) syn[k] = 0.0;
  const auto cfg = write_config(dir, {{"data", {{"synthetic", syn}}},
                                      {"schedule", {{"start", "2020-08-03"}, {"end", "2020-12-01"}}},
                                      {"methods", {"equal_weight"}},
                                      {"output_dir", "out"}});
  ASSERT_EQ(cli({"--config", cfg.string(), "backtest"}), 0);
  EXPECT_EQ(slurp(dir / "out" / "metrics.csv"), "method,return_pct,vol_ann_pct,sharpe,degenerate\nequal_weight,0,0,0,1\n");
  const auto manifest = json::parse(slurp(dir / "out" / "run-manifest.json"));
  EXPECT_EQ(manifest["command"], "backtest");
  EXPECT_TRUE(manifest.contains("config_hash"));
}

TEST(Cli, BacktestIsByteReproducible) {
  const auto dir = scratch("repro");
  const auto cfg = write_config(dir, {{"seed", 3},
                                      {"data", {{"synthetic", small_synthetic()}}},
                                      {"schedule", {{"start", "2020-08-03"}, {"end", "2020-11-02"}}},
                                      {"selection", {{"k", 1}}},
                                      {"model", {{"grid", {{{"layers", 1}, {"units", 4}, {"window", 63}}}}, {"epochs", 30}}},
                                      {"methods", {"hsp", "hrp", "equal_weight"}}});
  ASSERT_EQ(cli({"--config", cfg.string(), "--out", (dir / "a").string(), "backtest"}), 0);
  ASSERT_EQ(cli({"--config", cfg.string(), "--out", (dir / "b").string(), "backtest"}), 0);
  for (const char* f : {"nav.csv", "metrics.csv", "weights.csv", "weights.json", "fits.json"}) {
    EXPECT_EQ(slurp(dir / "a" / f), slurp(dir / "b" / f)) << f;
  }
  const auto nav = slurp(dir / "a" / "nav.csv");
  EXPECT_EQ(nav.substr(0, nav.find('\n')), "date,hsp,hrp,equal_weight");
  EXPECT_NE(nav.find(",100,100,100\n"), std::string::npos);
  ASSERT_EQ(cli({"--config", cfg.string(), "--seed", "4", "--out", (dir / "c").string(), "backtest"}), 0);
  EXPECT_NE(slurp(dir / "a" / "fits.json"), slurp(dir / "c" / "fits.json"));
}

TEST(Cli, SelectDriversAtDate) {
  const auto dir = scratch("select");
  const auto cfg = write_config(dir, {{"data", {{"synthetic", small_synthetic()}}}, {"selection", {{"k", 1}}}});
  ASSERT_EQ(cli({"--config", cfg.string(), "--out", dir.string(), "select-drivers", "--date", "2020-09-01"}), 0);
  const auto sel = json::parse(slurp(dir / "selection-2020-09-01.json"));
  EXPECT_EQ(sel["chosen"].size(), 1u);
  EXPECT_EQ(sel["mode"], "OPT");
  EXPECT_EQ(cli({"--config", cfg.string(), "select-drivers", "--date", "09/01/2020"}), 1);
}

TEST(Cli, VerifyCcpSingleSeed) {
  const auto dir = scratch("ccp");
  const auto cfg = write_config(dir, {{"data", {{"synthetic", small_synthetic()}}},
                                      {"ccp", {{"n_seeds", 1}, {"k", 1}}},
                                      {"output_dir", "out"}});
  ASSERT_EQ(cli({"--config", cfg.string(), "verify-ccp"}), 0);
  const auto csv = slurp(dir / "out" / "ccp.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 2);
  EXPECT_TRUE(json::parse(slurp(dir / "out" / "ccp-summary.json")).is_object());
}

TEST(Cli, SynthRoundTripsThroughFiles) {
  const auto dir = scratch("synth");
  const auto cfg = write_config(dir, {{"data", {{"synthetic", small_synthetic()}}}, {"output_dir", "gen"}});
  ASSERT_EQ(cli({"--config", cfg.string(), "synth"}), 0);
  const auto files = write_config(dir, {{"data", {{"assets", "gen/assets.csv"}, {"drivers", "gen/drivers.csv"}}}});
  const auto from_files = app::load_panel(app::load_config(files));
  const auto generated = app::load_panel(app::load_config(cfg));
  EXPECT_EQ(from_files.dates(), generated.dates());
  ASSERT_EQ(from_files.width(), generated.width());
  for (std::size_t i = 0; i < from_files.width(); ++i) {
    EXPECT_EQ(from_files.series()[i].id, generated.series()[i].id);
    for (std::size_t t = 0; t < from_files.length(); ++t) {
      EXPECT_NEAR(from_files.series()[i].values[t], generated.series()[i].values[t], 1e-9);
    }
  }
}

}  // namespace
}  // namespace hsp
