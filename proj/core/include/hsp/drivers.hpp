#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "hsp/common.hpp"
#include "hsp/data.hpp"

namespace hsp::drivers {

struct LagThreshold {
  std::size_t lag = 0;
  double threshold = 0.0;
};

/// Absolute-correlation thresholds per lag. The standard screen uses lags
/// {0, 1} with t0 >= t1; extra lags must keep thresholds non-increasing.
class Thresholds {
 public:
  Thresholds() : Thresholds(0.4, 0.2) {}
  Thresholds(double t0, double t1);
  explicit Thresholds(std::vector<LagThreshold> per_lag);

  const std::vector<LagThreshold>& per_lag() const noexcept { return per_lag_; }
  double t0() const;
  double t1() const;
  std::size_t max_lag() const noexcept { return per_lag_.back().lag; }

 private:
  std::vector<LagThreshold> per_lag_;
};

enum class SelectionMode { opt, select };

std::string_view to_string(SelectionMode mode) noexcept;
SelectionMode parse_selection_mode(std::string_view text);

/// Pearson correlation of x_t against y_{t-lag} on the overlapping window.
double lagged_correlation(std::span<const double> x, std::span<const double> y, std::size_t lag);

struct SpecificDriverMap {
  std::vector<std::string> asset_ids;
  std::vector<std::string> driver_ids;
  /// Per asset, the drivers passing every lag threshold, in driver order.
  std::vector<std::vector<std::string>> specific;
  /// |corr| at lag 0, assets x drivers.
  Matrix lag0_abs_corr;
  Date window_start{};
  Date window_end{};
  Thresholds thresholds;

  const std::vector<std::string>& drivers_for(std::string_view asset_id) const;
};

/// Screens every (asset, driver) pair of two aligned return panels.
SpecificDriverMap specific_drivers(const data::ReturnPanel& assets, const data::ReturnPanel& drivers,
                                   const Thresholds& thresholds);

struct RankedDriver {
  std::string id;
  std::size_t count = 0;        // assets for which the driver is specific
  double mean_abs_corr = 0.0;   // across all assets, lag 0
};

struct CommonDriverSelection {
  Date selection_date{};
  Date window_start{};
  Date window_end{};
  std::vector<RankedDriver> ranked;
  std::vector<std::string> chosen;
  SelectionMode mode = SelectionMode::opt;
  std::size_t k = 0;
};

/// Ranks the pool by (count desc, mean |corr| desc, id asc) and finalizes
/// up to `k` winners. SELECT keeps the override order.
CommonDriverSelection common_drivers(const SpecificDriverMap& map, std::size_t k, SelectionMode mode,
                                     const std::optional<std::vector<std::string>>& override_ids = std::nullopt);

/// Ranking over the whole driver universe, including drivers specific to no
/// asset (count 0). The pool returned by common_drivers is its prefix with
/// count >= 1.
std::vector<RankedDriver> rank_all(const SpecificDriverMap& map);

nlohmann::json to_json(const CommonDriverSelection& selection);

}  // namespace hsp::drivers
