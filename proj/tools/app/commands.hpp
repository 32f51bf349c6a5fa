#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "config.hpp"

namespace hsp::app {

/// Files written by a command, relative to the output directory.
using Outputs = std::vector<std::string>;

/// Writes the generated (or loaded) panel as assets.csv and drivers.csv.
Outputs cmd_synth(const RunConfig& config);
/// One selection-<date>.json per selection date, or only at `date`.
Outputs cmd_select_drivers(const RunConfig& config, std::optional<Date> date = std::nullopt);
/// Grid search per asset at `date` (default: first rebalance) plus the
/// sensitivity distance and Gram matrices.
Outputs cmd_fit(const RunConfig& config, std::optional<Date> date = std::nullopt);
/// Weights of every configured method at `date`.
Outputs cmd_allocate(const RunConfig& config, std::optional<Date> date = std::nullopt);
/// nav.csv, metrics.csv, weights.json, weights.csv, fits.json, report.json.
Outputs cmd_backtest(const RunConfig& config);
/// ccp.csv and ccp-summary.json.
Outputs cmd_verify_ccp(const RunConfig& config);

/// run-manifest.json: resolved config, its hash, the seed and the outputs.
void write_manifest(const RunConfig& config, const std::string& command, const Outputs& outputs);

/// Parses argv, runs the subcommand and maps failures to exit codes:
/// 0 success, 1 validation error, 2 runtime error.
int run_cli(int argc, char** argv);

}  // namespace hsp::app
