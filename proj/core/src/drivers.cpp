#include "hsp/drivers.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <fmt/format.h>
#include <fmt/ranges.h>

namespace hsp::drivers {

Thresholds::Thresholds(double t0, double t1) : Thresholds(std::vector<LagThreshold>{{0, t0}, {1, t1}}) {}

Thresholds::Thresholds(std::vector<LagThreshold> per_lag) : per_lag_(std::move(per_lag)) {
  if (per_lag_.empty()) throw Error(ErrorCode::validation, "thresholds: at least one lag required");
  std::sort(per_lag_.begin(), per_lag_.end(), [](const auto& a, const auto& b) { return a.lag < b.lag; });
  for (std::size_t i = 0; i < per_lag_.size(); ++i) {
    const auto& lt = per_lag_[i];
    if (!(lt.threshold >= 0.0 && lt.threshold <= 1.0)) {
      throw Error(ErrorCode::validation, fmt::format("threshold {} for lag {} outside [0, 1]", lt.threshold, lt.lag));
    }
    if (i > 0) {
      if (lt.lag == per_lag_[i - 1].lag) {
        throw Error(ErrorCode::validation, fmt::format("duplicate threshold for lag {}", lt.lag));
      }
      if (lt.threshold > per_lag_[i - 1].threshold) {
        throw Error(ErrorCode::validation,
                    fmt::format("threshold for lag {} ({}) exceeds threshold for lag {} ({})", lt.lag, lt.threshold,
                                per_lag_[i - 1].lag, per_lag_[i - 1].threshold));
      }
    }
  }
}

double Thresholds::t0() const {
  for (const auto& lt : per_lag_) {
    if (lt.lag == 0) return lt.threshold;
  }
  throw Error(ErrorCode::validation, "no lag-0 threshold configured");
}

double Thresholds::t1() const {
  for (const auto& lt : per_lag_) {
    if (lt.lag == 1) return lt.threshold;
  }
  throw Error(ErrorCode::validation, "no lag-1 threshold configured");
}

std::string_view to_string(SelectionMode mode) noexcept { return mode == SelectionMode::opt ? "OPT" : "SELECT"; }

SelectionMode parse_selection_mode(std::string_view text) {
  if (text == "OPT" || text == "opt") return SelectionMode::opt;
  if (text == "SELECT" || text == "select") return SelectionMode::select;
  throw Error(ErrorCode::validation, fmt::format("unknown selection mode '{}' (expected OPT or SELECT)", text));
}

double lagged_correlation(std::span<const double> x, std::span<const double> y, std::size_t lag) {
  if (x.size() != y.size()) {
    throw Error(ErrorCode::shape, fmt::format("lagged_correlation: lengths {} and {} differ", x.size(), y.size()));
  }
  if (x.size() < lag + 3) {
    throw Error(ErrorCode::insufficient_data,
                fmt::format("lagged_correlation: {} observations too few for lag {}", x.size(), lag));
  }
  const std::size_t n = x.size() - lag;
  const auto xs = x.subspan(lag, n);
  const auto ys = y.subspan(0, n);
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = xs[i] - mx;
    const double dy = ys[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) {
    throw Error(ErrorCode::degenerate_series, "lagged_correlation: constant series slice");
  }
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

const std::vector<std::string>& SpecificDriverMap::drivers_for(std::string_view asset_id) const {
  for (std::size_t i = 0; i < asset_ids.size(); ++i) {
    if (asset_ids[i] == asset_id) return specific[i];
  }
  throw Error(ErrorCode::validation, fmt::format("asset '{}' not in specific-driver map", asset_id));
}

SpecificDriverMap specific_drivers(const data::ReturnPanel& assets, const data::ReturnPanel& drivers,
                                   const Thresholds& thresholds) {
  if (assets.dates() != drivers.dates()) {
    throw Error(ErrorCode::validation, "specific_drivers: asset and driver panels are not aligned");
  }
  if (assets.width() == 0 || drivers.width() == 0) {
    throw Error(ErrorCode::empty_universe, "specific_drivers: empty asset or driver universe");
  }
  if (assets.length() == 0) throw Error(ErrorCode::insufficient_data, "specific_drivers: empty window");

  SpecificDriverMap map;
  map.asset_ids = assets.ids();
  map.driver_ids = drivers.ids();
  map.window_start = assets.dates().front();
  map.window_end = assets.dates().back();
  map.thresholds = thresholds;
  map.specific.resize(assets.width());
  map.lag0_abs_corr = Matrix::Zero(static_cast<Eigen::Index>(assets.width()),
                                   static_cast<Eigen::Index>(drivers.width()));

  for (std::size_t i = 0; i < assets.width(); ++i) {
    const auto& a = assets.series()[i];
    for (std::size_t j = 0; j < drivers.width(); ++j) {
      const auto& d = drivers.series()[j];
      bool pass = true;
      for (const auto& lt : thresholds.per_lag()) {
        double c = 0.0;
        try {
          c = lagged_correlation(a.values, d.values, lt.lag);
        } catch (const Error& e) {
          throw Error(e.code(), fmt::format("asset '{}' vs driver '{}' at lag {}: {}", a.id, d.id, lt.lag, e.what()));
        }
        if (lt.lag == 0) map.lag0_abs_corr(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = std::abs(c);
        if (!(std::abs(c) > lt.threshold)) pass = false;
      }
      if (pass) map.specific[i].push_back(d.id);
    }
  }
  return map;
}

std::vector<RankedDriver> rank_all(const SpecificDriverMap& map) {
  const auto n_assets = map.asset_ids.size();
  std::vector<RankedDriver> ranked;
  ranked.reserve(map.driver_ids.size());
  for (std::size_t j = 0; j < map.driver_ids.size(); ++j) {
    RankedDriver r{map.driver_ids[j], 0, 0.0};
    for (std::size_t i = 0; i < n_assets; ++i) {
      const auto& s = map.specific[i];
      if (std::find(s.begin(), s.end(), r.id) != s.end()) ++r.count;
    }
    if (map.lag0_abs_corr.size() > 0 && n_assets > 0) {
      r.mean_abs_corr = map.lag0_abs_corr.col(static_cast<Eigen::Index>(j)).mean();
    }
    ranked.push_back(std::move(r));
  }
  std::sort(ranked.begin(), ranked.end(), [](const RankedDriver& a, const RankedDriver& b) {
    if (a.count != b.count) return a.count > b.count;
    if (a.mean_abs_corr != b.mean_abs_corr) return a.mean_abs_corr > b.mean_abs_corr;
    return a.id < b.id;
  });
  return ranked;
}

CommonDriverSelection common_drivers(const SpecificDriverMap& map, std::size_t k, SelectionMode mode,
                                     const std::optional<std::vector<std::string>>& override_ids) {
  if (map.asset_ids.empty()) throw Error(ErrorCode::validation, "common_drivers: empty specific-driver map");
  if (k == 0) throw Error(ErrorCode::validation, "common_drivers: k must be >= 1");
  if (mode == SelectionMode::select && !override_ids) {
    throw Error(ErrorCode::validation, "common_drivers: SELECT mode requires an override list");
  }

  CommonDriverSelection sel;
  sel.selection_date = map.window_end;
  sel.window_start = map.window_start;
  sel.window_end = map.window_end;
  sel.mode = mode;
  sel.k = k;
  for (auto& r : rank_all(map)) {
    if (r.count == 0) break;
    sel.ranked.push_back(std::move(r));
  }
  if (sel.ranked.empty()) {
    throw Error(ErrorCode::no_common_drivers, "common_drivers: no driver is specific to any asset");
  }

  if (mode == SelectionMode::opt) {
    for (std::size_t i = 0; i < std::min(k, sel.ranked.size()); ++i) sel.chosen.push_back(sel.ranked[i].id);
    return sel;
  }

  std::set<std::string> pool;
  for (const auto& r : sel.ranked) pool.insert(r.id);
  std::vector<std::string> rejected;
  for (const auto& id : *override_ids) {
    if (!pool.count(id)) rejected.push_back(id);
  }
  if (!rejected.empty()) {
    throw Error(ErrorCode::validation,
                fmt::format("override drivers not in the common pool: {}", fmt::join(rejected, ", ")));
  }
  std::set<std::string> seen;
  for (const auto& id : *override_ids) {
    if (sel.chosen.size() == k) break;
    if (seen.insert(id).second) sel.chosen.push_back(id);
  }
  return sel;
}

nlohmann::json to_json(const CommonDriverSelection& selection) {
  nlohmann::json pool = nlohmann::json::array();
  for (const auto& r : selection.ranked) {
    pool.push_back({{"driver", r.id}, {"count", r.count}, {"mean_abs_corr", r.mean_abs_corr}});
  }
  return {
      {"selection_date", format_date(selection.selection_date)},
      {"window", {{"start", format_date(selection.window_start)}, {"end", format_date(selection.window_end)}}},
      {"mode", std::string(to_string(selection.mode))},
      {"k", selection.k},
      {"pool", std::move(pool)},
      {"chosen", selection.chosen},
  };
}

}  // namespace hsp::drivers
