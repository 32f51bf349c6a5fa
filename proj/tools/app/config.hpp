#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hsp/backtest.hpp"
#include "hsp/ccpverify.hpp"
#include "hsp/data.hpp"

namespace hsp::app {

/// Everything a run needs. Exactly one data source is set.
struct RunConfig {
  std::optional<std::filesystem::path> assets_file;
  std::optional<std::filesystem::path> drivers_file;
  std::optional<data::SyntheticSpec> synthetic;

  std::optional<Date> start;
  std::optional<Date> end;
  backtest::BacktestConfig backtest;
  std::vector<std::string> methods{"hsp", "hrp", "equal_weight"};
  std::optional<std::filesystem::path> override_file;

  ccp::CcpExperiment ccp;

  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "out";

  /// Applies the master seed everywhere randomness enters.
  void set_seed(std::uint64_t seed);
};

/// Parses and validates a config document. Relative paths resolve against
/// `base_dir`. Errors are ErrorCode::validation naming the field path,
/// e.g. `schedule.start`.
RunConfig parse_config(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
RunConfig load_config(const std::filesystem::path& path);

/// Canonical, fully resolved form (defaults filled in). Its hash identifies
/// a run.
nlohmann::json to_json(const RunConfig& config);
std::string config_hash(const RunConfig& config);

data::PricePanel load_panel(const RunConfig& config);

/// The configured schedule; a missing start defaults to the first date with
/// enough history, a missing end to the day after the last price.
backtest::Schedule make_schedule(const RunConfig& config, const data::PricePanel& panel);

}  // namespace hsp::app
