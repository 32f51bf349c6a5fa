#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hsp/allocator.hpp"
#include "hsp/baselines.hpp"
#include "hsp/common.hpp"
#include "hsp/data.hpp"
#include "hsp/drivers.hpp"
#include "hsp/nnet.hpp"

namespace hsp::backtest {

constexpr double kTradingDaysPerYear = 252.0;

struct Schedule {
  Date start{};
  Date end{};
  std::vector<Date> selection_dates;
  std::vector<Date> rebalance_dates;
  /// Index into selection_dates of the most recent selection on or before
  /// each rebalance.
  std::vector<std::size_t> governing_selection;
  std::size_t selection_window = 0;
  int selection_refresh_months = 6;
  int hold_days = 30;
};

/// `dates` are the trading (price) dates. Rebalances fall on the first
/// trading day on or after the 1st of each month in [start, end); selections
/// every `refresh_months` calendar months from start, snapped forward to a
/// trading day. `window` returns must precede the first decision. An `end`
/// beyond the last trading date is clamped to it.
Schedule build_schedule(std::span<const Date> dates, Date start, Date end, int refresh_months, int hold_days,
                        std::size_t window);

struct Metrics {
  double total_return_pct = 0.0;
  double annualized_vol_pct = 0.0;
  double sharpe = 0.0;
  bool degenerate = false;  // zero volatility; Sharpe reported as 0
};

/// Sharpe = mean(daily) / std(daily) * sqrt(252), risk-free rate 0.
Metrics metrics(std::span<const double> nav);

struct BacktestConfig {
  data::ReturnMethod returns = data::ReturnMethod::simple;
  std::size_t selection_window = 126;
  int selection_refresh_months = 6;
  int hold_days = 30;
  std::size_t estimation_window = 126;

  drivers::Thresholds thresholds{};
  std::size_t k = 5;
  drivers::SelectionMode mode = drivers::SelectionMode::opt;
  std::optional<std::vector<std::string>> override_ids;

  std::vector<nnet::ArchitectureConfig> grid = nnet::default_grid();
  nnet::TrainingConfig training{};
  alloc::HspOptions hsp{};

  alloc::LinkageMethod hrp_linkage = alloc::LinkageMethod::single;
  std::optional<double> hrp_cap;
  std::optional<double> equal_weight_cap;

  double mv_cap = 0.10;
  double risk_aversion = 1.0;
  double target_return = 0.0;

  std::uint64_t seed = 0;
  unsigned threads = 1;

  /// Longest trailing history any registered method may need.
  std::size_t required_history() const;
};

/// What an allocator may see at a rebalance: returns strictly before `date`.
struct RebalanceContext {
  Date date{};
  const data::ReturnPanel* history = nullptr;  // rows dated < date
  std::vector<std::string> asset_ids;
  std::vector<std::string> driver_ids;
  const drivers::CommonDriverSelection* selection = nullptr;
  const BacktestConfig* config = nullptr;
};

struct AssetFitSummary {
  std::string asset_id;
  std::string label;
  double mse = 0.0;
  std::vector<std::string> driver_ids;
  std::vector<double> mean_sensitivity;
};

struct Decision {
  alloc::WeightVector weights;
  std::vector<AssetFitSummary> fits;  // populated by sensitivity-based methods
  std::vector<std::string> warnings;
};

using Allocator = std::function<Decision(const RebalanceContext&)>;

struct MethodSpec {
  Allocator allocate;
  bool needs_selection = false;
};

/// Built-in methods: hsp, hrp, equal_weight, mv_max_sharpe, mv_min_vol,
/// mv_quadratic_utility, mv_target_return.
class MethodRegistry {
 public:
  static MethodRegistry builtin();

  void add(std::string name, MethodSpec spec);
  const MethodSpec& at(const std::string& name) const;
  bool contains(const std::string& name) const { return methods_.count(name) > 0; }
  std::vector<std::string> names() const;

 private:
  std::map<std::string, MethodSpec> methods_;
};

struct RebalanceRecord {
  Date date{};
  std::optional<std::size_t> selection;  // index into BacktestReport::selections
  Decision decision;
};

struct MethodResult {
  std::string method;
  std::vector<Date> nav_dates;
  std::vector<double> nav;
  std::vector<RebalanceRecord> rebalances;
  Metrics metrics;
};

struct BacktestReport {
  Schedule schedule;
  std::vector<drivers::CommonDriverSelection> selections;
  std::vector<MethodResult> methods;
  std::string config_hash;
  std::uint64_t seed = 0;
};

/// Common-driver selection at `date` from the trailing window strictly
/// before it.
drivers::CommonDriverSelection select_drivers_at(const data::ReturnPanel& returns, Date date,
                                                 const BacktestConfig& config);

/// One allocation at `date` from returns strictly before it. `selection` is
/// required by methods that need common drivers.
Decision decide(const data::ReturnPanel& returns, Date date, const std::string& method, const BacktestConfig& config,
                const drivers::CommonDriverSelection* selection = nullptr,
                const MethodRegistry& registry = MethodRegistry::builtin());

/// Runs every listed method over the schedule. Decisions only use data
/// dated strictly before each decision date.
BacktestReport run(const data::PricePanel& panel, const Schedule& schedule, std::span<const std::string> methods,
                   const BacktestConfig& config, const MethodRegistry& registry = MethodRegistry::builtin(),
                   std::string config_hash = {});

/// Single-method convenience wrapper.
MethodResult run(const data::PricePanel& panel, const Schedule& schedule, const std::string& method,
                 const BacktestConfig& config);

nlohmann::json to_json(const Schedule& schedule);
nlohmann::json weights_json(const BacktestReport& report);
nlohmann::json fits_json(const BacktestReport& report);
nlohmann::json to_json(const BacktestReport& report);
/// date,<method>,... one row per NAV date.
std::string nav_csv(const BacktestReport& report);
/// method,return_pct,vol_ann_pct,sharpe,degenerate
std::string metrics_csv(const BacktestReport& report);
/// date,method,<asset>,... one row per rebalance.
std::string weights_csv(const BacktestReport& report);

}  // namespace hsp::backtest
