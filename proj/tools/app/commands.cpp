#include "commands.hpp"

#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "hsp/allocator.hpp"
#include "hsp/parallel.hpp"
#include "hsp/sensmat.hpp"

namespace hsp::app {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_file(const RunConfig& c, const std::string& name, const std::string& content, Outputs& outputs) {
  fs::create_directories(c.output_dir);
  const auto path = c.output_dir / name;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::io, fmt::format("cannot write '{}'", path.string()));
  out << content;
  if (!out) throw Error(ErrorCode::io, fmt::format("failed writing '{}'", path.string()));
  outputs.push_back(name);
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

Date decision_date(const RunConfig& c, const data::PricePanel& panel, std::optional<Date> date) {
  if (date) return *date;
  return make_schedule(c, panel).rebalance_dates.front();
}

}  // namespace

Outputs cmd_synth(const RunConfig& c) {
  const auto panel = load_panel(c);
  Outputs out;
  std::ostringstream assets, drivers;
  data::write_csv(panel.select(data::SeriesKind::asset), assets);
  data::write_csv(panel.select(data::SeriesKind::driver), drivers);
  write_file(c, "assets.csv", assets.str(), out);
  write_file(c, "drivers.csv", drivers.str(), out);
  return out;
}

Outputs cmd_select_drivers(const RunConfig& c, std::optional<Date> date) {
  const auto panel = load_panel(c);
  const auto returns = data::to_returns(panel, c.backtest.returns);
  std::vector<Date> dates;
  if (date) {
    dates.push_back(*date);
  } else {
    dates = make_schedule(c, panel).selection_dates;
  }
  Outputs out;
  for (const Date d : dates) {
    const auto sel = backtest::select_drivers_at(returns, d, c.backtest);
    write_file(c, fmt::format("selection-{}.json", format_date(d)), dump(drivers::to_json(sel)), out);
  }
  return out;
}

Outputs cmd_fit(const RunConfig& c, std::optional<Date> date) {
  const auto panel = load_panel(c);
  const auto returns = data::to_returns(panel, c.backtest.returns);
  const Date d = decision_date(c, panel, date);
  const auto sel = backtest::select_drivers_at(returns, d, c.backtest);
  const auto history = returns.slice(0, returns.rows_before(d));
  const auto assets = history.ids(data::SeriesKind::asset);
  const Matrix drivers = history.matrix(sel.chosen, 0, history.length());
  const std::uint64_t seed = derive_seed(c.backtest.seed, format_date(d));

  std::vector<nnet::GridSearchResult> results(assets.size());
  parallel_for(assets.size(), c.backtest.threads, [&](std::size_t i) {
    nnet::GridData data{std::span<const double>(history.at(assets[i]).values), drivers, sel.chosen};
    results[i] = nnet::grid_search(assets[i], c.backtest.grid, data, seed, c.backtest.training, 1);
  });

  json fits = json::array();
  std::vector<nnet::FitResult> best;
  for (auto& r : results) {
    json j = nnet::to_json(r.best);
    json cands = json::array();
    for (const auto& cand : r.candidates) {
      cands.push_back({{"architecture", cand.arch.label()},
                       {"mse", cand.mse ? json(*cand.mse) : json(nullptr)},
                       {"note", cand.note}});
    }
    j["candidates"] = std::move(cands);
    j["warnings"] = r.warnings;
    fits.push_back(std::move(j));
    best.push_back(std::move(r.best));
  }

  const auto tag = format_date(d);
  Outputs out;
  write_file(c, fmt::format("fits-{}.json", tag),
             dump({{"date", tag}, {"common_drivers", sel.chosen}, {"fits", std::move(fits)}}), out);
  if (best.size() >= 2) {
    const auto embedding = sensmat::embed(best, sel.chosen);
    const auto m = sensmat::build(embedding);
    std::ostringstream dist, gram;
    sensmat::write_labeled_csv(dist, m.distance, embedding.asset_ids);
    sensmat::write_labeled_csv(gram, m.gram, embedding.asset_ids);
    write_file(c, fmt::format("sensitivity-distance-{}.csv", tag), dist.str(), out);
    write_file(c, fmt::format("sensitivity-gram-{}.csv", tag), gram.str(), out);
  }
  return out;
}

Outputs cmd_allocate(const RunConfig& c, std::optional<Date> date) {
  const auto panel = load_panel(c);
  const auto returns = data::to_returns(panel, c.backtest.returns);
  const Date d = decision_date(c, panel, date);
  const auto registry = backtest::MethodRegistry::builtin();

  std::optional<drivers::CommonDriverSelection> sel;
  for (const auto& m : c.methods) {
    if (registry.at(m).needs_selection && !sel) sel = backtest::select_drivers_at(returns, d, c.backtest);
  }
  json weights = json::object();
  for (const auto& m : c.methods) {
    const auto decision = backtest::decide(returns, d, m, c.backtest, sel ? &*sel : nullptr, registry);
    weights[m] = alloc::to_json(decision.weights);
  }
  const auto tag = format_date(d);
  Outputs out;
  json doc{{"date", tag}, {"weights", std::move(weights)}};
  if (sel) doc["common_drivers"] = sel->chosen;
  write_file(c, fmt::format("weights-{}.json", tag), dump(doc), out);
  return out;
}

Outputs cmd_backtest(const RunConfig& c) {
  const auto panel = load_panel(c);
  const auto schedule = make_schedule(c, panel);
  const auto report = backtest::run(panel, schedule, c.methods, c.backtest, backtest::MethodRegistry::builtin(),
                                    config_hash(c));
  Outputs out;
  write_file(c, "nav.csv", backtest::nav_csv(report), out);
  write_file(c, "metrics.csv", backtest::metrics_csv(report), out);
  write_file(c, "weights.json", dump(backtest::weights_json(report)), out);
  write_file(c, "weights.csv", backtest::weights_csv(report), out);
  const auto fits = backtest::fits_json(report);
  if (!fits.empty()) write_file(c, "fits.json", dump(fits), out);
  for (const auto& sel : report.selections) {
    write_file(c, fmt::format("selection-{}.json", format_date(sel.selection_date)), dump(drivers::to_json(sel)), out);
  }
  write_file(c, "report.json", dump(backtest::to_json(report)), out);
  return out;
}

Outputs cmd_verify_ccp(const RunConfig& c) {
  const auto result = ccp::run_ccp(c.ccp);
  std::ostringstream csv;
  ccp::write_csv(result, csv);
  const json summary{{"n_seeds", result.seeds.size()},
                     {"evaluated", result.evaluated},
                     {"skipped", result.skipped},
                     {"average_pass_fraction", result.average_pass_fraction},
                     {"portfolio_pass_fraction", result.portfolio_pass_fraction},
                     {"monotone_pass_fraction", result.monotone_pass_fraction},
                     {"recovery_fraction", result.recovery_fraction},
                     {"mean_residual_c", result.mean_residual_c},
                     {"mean_residual_not_c", result.mean_residual_not_c}};
  Outputs out;
  write_file(c, "ccp.csv", csv.str(), out);
  write_file(c, "ccp-summary.json", dump(summary), out);
  return out;
}

void write_manifest(const RunConfig& c, const std::string& command, const Outputs& outputs) {
  const json manifest{{"tool", "hsp"},
                      {"version", "0.1.0"},
                      {"command", command},
                      {"seed", c.seed},
                      {"config_hash", config_hash(c)},
                      {"config", to_json(c)},
                      {"outputs", outputs}};
  Outputs ignored;
  write_file(c, "run-manifest.json", dump(manifest), ignored);
}

int run_cli(int argc, char** argv) {
  CLI::App app{"Hierarchical sensitivity parity portfolio pipeline"};
  app.fallthrough();
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<std::string> date_text;
  app.add_option("--config", config_path, "JSON run configuration")->required();
  app.add_option("--seed", seed, "Master seed; overrides the config");
  app.add_option("--out", out_dir, "Output directory; overrides the config");

  const std::vector<std::pair<std::string, std::string>> commands{
      {"synth", "Write the configured panel (synthetic or loaded) as CSV"},
      {"select-drivers", "Select common drivers at each selection date"},
      {"fit", "Fit per-asset networks and write sensitivity matrices"},
      {"allocate", "Compute weights for every configured method at one date"},
      {"backtest", "Run the out-of-sample backtest"},
      {"verify-ccp", "Run the common-cause verification experiment"},
  };
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    if (name == "select-drivers" || name == "fit" || name == "allocate") {
      sub->add_option("--date", date_text, "Decision date YYYY-MM-DD");
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    RunConfig config = load_config(config_path);
    if (seed) config.set_seed(*seed);
    if (out_dir) config.output_dir = *out_dir;
    std::optional<Date> date;
    if (date_text) {
      try {
        date = parse_date(*date_text);
      } catch (const Error&) {
        throw Error(ErrorCode::validation, fmt::format("--date: expected YYYY-MM-DD, got '{}'", *date_text));
      }
    }

    const std::string command = app.get_subcommands().front()->get_name();
    Outputs outputs;
    if (command == "synth") outputs = cmd_synth(config);
    else if (command == "select-drivers") outputs = cmd_select_drivers(config, date);
    else if (command == "fit") outputs = cmd_fit(config, date);
    else if (command == "allocate") outputs = cmd_allocate(config, date);
    else if (command == "backtest") outputs = cmd_backtest(config);
    else outputs = cmd_verify_ccp(config);
    write_manifest(config, command, outputs);
    for (const auto& f : outputs) std::cout << (config.output_dir / f).string() << '\n';
    return 0;
  } catch (const Error& e) {
    std::cerr << "error [" << to_string(e.code()) << "]: " << e.what() << '\n';
    return e.code() == ErrorCode::validation ? 1 : 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}

}  // namespace hsp::app
