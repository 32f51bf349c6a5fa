#include "hsp/backtest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "hsp/parallel.hpp"
#include "hsp/sensmat.hpp"

namespace hsp::backtest {

namespace {

using std::chrono::days;
using std::chrono::year_month;
using std::chrono::year_month_day;

// First trading date on or after `d`, if any.
std::optional<Date> snap_forward(std::span<const Date> dates, Date d) {
  const auto it = std::lower_bound(dates.begin(), dates.end(), d);
  if (it == dates.end()) return std::nullopt;
  return *it;
}

std::string at_date(Date d, const std::string& what) { return fmt::format("{}: {}", format_date(d), what); }

}  // namespace

Schedule build_schedule(std::span<const Date> dates, Date start, Date end, int refresh_months, int hold_days,
                        std::size_t window) {
  if (dates.empty()) throw Error(ErrorCode::insufficient_data, "build_schedule: empty panel");
  if (refresh_months < 1) throw Error(ErrorCode::validation, "build_schedule: refresh must be at least 1 month");
  if (hold_days < 1) throw Error(ErrorCode::validation, "build_schedule: hold must be at least 1 day");
  if (!(start < end)) {
    throw Error(ErrorCode::validation,
                fmt::format("build_schedule: start {} must precede end {}", format_date(start), format_date(end)));
  }
  if (start < dates.front() || start > dates.back()) {
    throw Error(ErrorCode::validation,
                fmt::format("build_schedule: start {} outside panel [{}, {}]", format_date(start),
                            format_date(dates.front()), format_date(dates.back())));
  }

  Schedule s;
  s.start = start;
  s.end = end;
  s.selection_window = window;
  s.selection_refresh_months = refresh_months;
  s.hold_days = hold_days;

  auto usable = [&](Date d) { return d < end && d <= dates.back(); };

  const year_month_day ymd{start};
  for (year_month ym{ymd.year(), ymd.month()};; ym += std::chrono::months{1}) {
    const Date anchor = std::max(start, Date{ym / 1});
    if (!usable(anchor)) break;
    const auto r = snap_forward(dates, anchor);
    if (!r || !usable(*r)) break;
    if (s.rebalance_dates.empty() || s.rebalance_dates.back() < *r) s.rebalance_dates.push_back(*r);
  }
  for (int k = 0;; ++k) {
    const Date anchor = add_months(start, k * refresh_months);
    if (!usable(anchor)) break;
    const auto d = snap_forward(dates, anchor);
    if (!d || !usable(*d)) break;
    if (s.selection_dates.empty() || s.selection_dates.back() < *d) s.selection_dates.push_back(*d);
  }
  if (s.rebalance_dates.empty()) throw Error(ErrorCode::insufficient_data, "build_schedule: no rebalance dates");

  for (const Date r : s.rebalance_dates) {
    const auto it = std::upper_bound(s.selection_dates.begin(), s.selection_dates.end(), r);
    if (it == s.selection_dates.begin()) {
      throw Error(ErrorCode::validation, at_date(r, "rebalance precedes every selection date"));
    }
    s.governing_selection.push_back(static_cast<std::size_t>(it - s.selection_dates.begin()) - 1);
  }

  // Returns available strictly before the first decision: one fewer than
  // the preceding price rows.
  const Date first = std::min(s.rebalance_dates.front(), s.selection_dates.front());
  const auto prior_prices = static_cast<std::size_t>(std::lower_bound(dates.begin(), dates.end(), first) - dates.begin());
  const std::size_t prior_returns = prior_prices == 0 ? 0 : prior_prices - 1;
  if (prior_returns < window) {
    throw Error(ErrorCode::insufficient_history,
                fmt::format("build_schedule: {} returns before {} but the window needs {}", prior_returns,
                            format_date(first), window));
  }
  return s;
}

Metrics metrics(std::span<const double> nav) {
  if (nav.size() < 2) throw Error(ErrorCode::insufficient_data, "metrics: NAV needs at least two points");
  for (double v : nav) {
    if (!(v > 0.0) || !std::isfinite(v)) throw Error(ErrorCode::validation, "metrics: NAV must be positive");
  }
  const std::size_t n = nav.size() - 1;
  std::vector<double> r(n);
  for (std::size_t t = 0; t < n; ++t) r[t] = nav[t + 1] / nav[t] - 1.0;
  const double mean = std::accumulate(r.begin(), r.end(), 0.0) / static_cast<double>(n);
  double ss = 0.0;
  for (double x : r) ss += (x - mean) * (x - mean);
  const double sd = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0;

  Metrics m;
  m.total_return_pct = (nav.back() / nav.front() - 1.0) * 100.0;
  m.annualized_vol_pct = sd * std::sqrt(kTradingDaysPerYear) * 100.0;
  m.degenerate = !(sd > 1e-12 * std::max(1.0, std::abs(mean)));
  m.sharpe = m.degenerate ? 0.0 : mean / sd * std::sqrt(kTradingDaysPerYear);
  return m;
}

std::size_t BacktestConfig::required_history() const { return std::max(selection_window, estimation_window); }

namespace {

Matrix trailing(const RebalanceContext& ctx, std::size_t rows) {
  const auto& h = *ctx.history;
  if (h.length() < rows) {
    throw Error(ErrorCode::insufficient_history,
                fmt::format("{} return rows available, estimation window needs {}", h.length(), rows));
  }
  return h.matrix(ctx.asset_ids, h.length() - rows, h.length());
}

Decision wrap(std::vector<std::string> ids, Vector w) { return Decision{alloc::WeightVector{std::move(ids), std::move(w)}, {}, {}}; }

Decision allocate_hsp(const RebalanceContext& ctx) {
  const auto& cfg = *ctx.config;
  const auto& h = *ctx.history;
  const auto& chosen = ctx.selection->chosen;
  const Matrix drivers = h.matrix(chosen, 0, h.length());
  const std::uint64_t seed = derive_seed(cfg.seed, format_date(ctx.date));

  std::vector<nnet::GridSearchResult> results(ctx.asset_ids.size());
  parallel_for(results.size(), cfg.threads, [&](std::size_t i) {
    const auto& values = h.at(ctx.asset_ids[i]).values;
    nnet::GridData data{std::span<const double>(values), drivers, chosen};
    results[i] = nnet::grid_search(ctx.asset_ids[i], cfg.grid, data, seed, cfg.training, 1);
  });

  std::vector<nnet::FitResult> fits;
  fits.reserve(results.size());
  Decision out;
  for (auto& r : results) {
    const auto& f = r.best;
    out.fits.push_back(AssetFitSummary{f.asset_id, f.arch.label(), f.mse, f.driver_ids,
                                       std::vector<double>(f.mean_sensitivity.begin(), f.mean_sensitivity.end())});
    for (auto& w : r.warnings) out.warnings.push_back(fmt::format("{}: {}", f.asset_id, w));
    fits.push_back(std::move(r.best));
  }
  const auto embedding = sensmat::embed(fits, chosen);
  out.weights = alloc::hsp_weights(embedding, cfg.hsp);
  return out;
}

Decision allocate_hrp(const RebalanceContext& ctx) {
  const auto& cfg = *ctx.config;
  Vector w = baselines::hrp_correlation(trailing(ctx, cfg.estimation_window), cfg.hrp_linkage);
  if (cfg.hrp_cap) w = alloc::apply_cap(w, *cfg.hrp_cap);
  return wrap(ctx.asset_ids, std::move(w));
}

Decision allocate_equal(const RebalanceContext& ctx) {
  Vector w = baselines::equal_weight(ctx.asset_ids.size());
  if (ctx.config->equal_weight_cap) w = alloc::apply_cap(w, *ctx.config->equal_weight_cap);
  return wrap(ctx.asset_ids, std::move(w));
}

Allocator mean_variance_method(baselines::MvKind kind) {
  return [kind](const RebalanceContext& ctx) {
    const auto& cfg = *ctx.config;
    baselines::MvObjective obj;
    obj.kind = kind;
    obj.risk_aversion = cfg.risk_aversion;
    obj.target = cfg.target_return;
    obj.cap = cfg.mv_cap;
    return wrap(ctx.asset_ids, baselines::mean_variance(trailing(ctx, cfg.estimation_window), obj));
  };
}

}  // namespace

MethodRegistry MethodRegistry::builtin() {
  MethodRegistry r;
  r.add("hsp", {allocate_hsp, true});
  r.add("hrp", {allocate_hrp, false});
  r.add("equal_weight", {allocate_equal, false});
  for (auto kind : {baselines::MvKind::max_sharpe, baselines::MvKind::min_vol, baselines::MvKind::quadratic_utility,
                    baselines::MvKind::target_return}) {
    r.add(fmt::format("mv_{}", baselines::to_string(kind)), {mean_variance_method(kind), false});
  }
  return r;
}

void MethodRegistry::add(std::string name, MethodSpec spec) {
  if (!spec.allocate) throw Error(ErrorCode::validation, fmt::format("method '{}' has no allocator", name));
  methods_[std::move(name)] = std::move(spec);
}

const MethodSpec& MethodRegistry::at(const std::string& name) const {
  const auto it = methods_.find(name);
  if (it == methods_.end()) throw Error(ErrorCode::validation, fmt::format("unknown method '{}'", name));
  return it->second;
}

std::vector<std::string> MethodRegistry::names() const {
  std::vector<std::string> out;
  for (const auto& [name, spec] : methods_) out.push_back(name);
  return out;
}

drivers::CommonDriverSelection select_drivers_at(const data::ReturnPanel& returns, Date date,
                                                 const BacktestConfig& config) {
  const std::size_t n = returns.rows_before(date);
  if (n < config.selection_window) {
    throw Error(ErrorCode::insufficient_history,
                at_date(date, fmt::format("{} return rows before selection, window needs {}", n,
                                          config.selection_window)));
  }
  try {
    const auto window = returns.slice(n - config.selection_window, n);
    const auto map = drivers::specific_drivers(window.select(data::SeriesKind::asset),
                                               window.select(data::SeriesKind::driver), config.thresholds);
    auto sel = drivers::common_drivers(map, config.k, config.mode, config.override_ids);
    sel.selection_date = date;
    return sel;
  } catch (const Error& e) {
    throw Error(e.code(), at_date(date, fmt::format("driver selection failed: {}", e.what())));
  }
}

namespace {

Decision decide_with(const MethodSpec& spec, const data::ReturnPanel& returns, Date date, const std::string& method,
                     const BacktestConfig& config, const drivers::CommonDriverSelection* selection) {
  const auto asset_ids = returns.ids(data::SeriesKind::asset);
  if (asset_ids.empty()) throw Error(ErrorCode::empty_universe, "backtest: panel has no assets");
  const auto history = returns.slice(0, returns.rows_before(date));
  Decision d;
  try {
    if (spec.needs_selection && selection == nullptr) {
      throw Error(ErrorCode::validation, "no common-driver selection supplied");
    }
    if (asset_ids.size() == 1) {
      d.weights = alloc::WeightVector{asset_ids, Vector::Ones(1)};
    } else {
      RebalanceContext ctx{date, &history, asset_ids, returns.ids(data::SeriesKind::driver), selection, &config};
      d = spec.allocate(ctx);
    }
    d.weights.validate();
  } catch (const Error& e) {
    throw Error(e.code(), at_date(date, fmt::format("method '{}' failed: {}", method, e.what())));
  } catch (const std::exception& e) {
    throw Error(ErrorCode::allocator_failure, at_date(date, fmt::format("method '{}' failed: {}", method, e.what())));
  }
  return d;
}

}  // namespace

Decision decide(const data::ReturnPanel& returns, Date date, const std::string& method, const BacktestConfig& config,
                const drivers::CommonDriverSelection* selection, const MethodRegistry& registry) {
  return decide_with(registry.at(method), returns, date, method, config, selection);
}

BacktestReport run(const data::PricePanel& panel, const Schedule& schedule, std::span<const std::string> methods,
                   const BacktestConfig& config, const MethodRegistry& registry, std::string config_hash) {
  if (methods.empty()) throw Error(ErrorCode::validation, "backtest: no methods requested");
  if (schedule.rebalance_dates.empty()) throw Error(ErrorCode::validation, "backtest: empty schedule");
  std::vector<const MethodSpec*> specs;
  bool need_selection = false;
  for (const auto& m : methods) {
    specs.push_back(&registry.at(m));
    need_selection = need_selection || specs.back()->needs_selection;
  }

  const auto decision_returns = data::to_returns(panel, config.returns);
  const auto nav_returns = data::to_returns(panel, data::ReturnMethod::simple);
  const auto asset_ids = panel.ids(data::SeriesKind::asset);
  if (asset_ids.empty()) throw Error(ErrorCode::empty_universe, "backtest: panel has no assets");

  BacktestReport report;
  report.schedule = schedule;
  report.config_hash = std::move(config_hash);
  report.seed = config.seed;

  if (need_selection) {
    report.selections.resize(schedule.selection_dates.size());
    for (std::size_t i = 0; i < schedule.selection_dates.size(); ++i) {
      report.selections[i] = select_drivers_at(decision_returns, schedule.selection_dates[i], config);
    }
  }

  // NAV runs over return dates from the first rebalance through the end.
  const auto& rdates = nav_returns.dates();
  const std::size_t nav_first = nav_returns.rows_before(schedule.rebalance_dates.front());
  std::size_t nav_last = nav_first;
  while (nav_last < rdates.size() && rdates[nav_last] <= schedule.end) ++nav_last;
  if (nav_first == 0) throw Error(ErrorCode::insufficient_history, "backtest: no price before the first rebalance");

  report.methods.resize(methods.size());
  parallel_for(methods.size(), config.threads, [&](std::size_t m) {
    MethodResult& res = report.methods[m];
    res.method = methods[m];
    const MethodSpec& spec = *specs[m];

    for (std::size_t i = 0; i < schedule.rebalance_dates.size(); ++i) {
      RebalanceRecord rec;
      rec.date = schedule.rebalance_dates[i];
      if (spec.needs_selection) rec.selection = schedule.governing_selection[i];
      rec.decision = decide_with(spec, decision_returns, rec.date, res.method, config,
                                 rec.selection ? &report.selections[*rec.selection] : nullptr);
      res.rebalances.push_back(std::move(rec));
    }

    // Asset columns in weight-vector order, per rebalance.
    std::vector<Vector> held;
    for (const auto& rec : res.rebalances) {
      const auto& wv = rec.decision.weights;
      Vector w(static_cast<Eigen::Index>(asset_ids.size()));
      for (std::size_t a = 0; a < asset_ids.size(); ++a) w(static_cast<Eigen::Index>(a)) = wv[asset_ids[a]];
      held.push_back(std::move(w));
    }
    const Matrix r = nav_returns.matrix(asset_ids, nav_first, nav_last);

    res.nav_dates.push_back(panel.dates()[nav_first]);  // price date preceding the first return
    res.nav.push_back(100.0);
    std::size_t k = 0;
    for (std::size_t t = nav_first; t < nav_last; ++t) {
      while (k + 1 < res.rebalances.size() && res.rebalances[k + 1].date <= rdates[t]) ++k;
      const double port = r.row(static_cast<Eigen::Index>(t - nav_first)).dot(held[k]);
      res.nav_dates.push_back(rdates[t]);
      res.nav.push_back(res.nav.back() * (1.0 + port));
    }
    res.metrics = res.nav.size() >= 2 ? metrics(res.nav) : Metrics{0.0, 0.0, 0.0, true};
  });
  return report;
}

MethodResult run(const data::PricePanel& panel, const Schedule& schedule, const std::string& method,
                 const BacktestConfig& config) {
  const std::vector<std::string> one{method};
  return std::move(run(panel, schedule, one, config).methods.front());
}

nlohmann::json to_json(const Schedule& s) {
  nlohmann::json j;
  j["start"] = format_date(s.start);
  j["end"] = format_date(s.end);
  auto dates = [](const std::vector<Date>& v) {
    nlohmann::json a = nlohmann::json::array();
    for (Date d : v) a.push_back(format_date(d));
    return a;
  };
  j["selection_dates"] = dates(s.selection_dates);
  j["rebalance_dates"] = dates(s.rebalance_dates);
  j["governing_selection"] = s.governing_selection;
  j["selection_window"] = s.selection_window;
  j["selection_refresh_months"] = s.selection_refresh_months;
  j["hold_days"] = s.hold_days;
  return j;
}

nlohmann::json weights_json(const BacktestReport& report) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& m : report.methods) {
    nlohmann::json per = nlohmann::json::object();
    for (const auto& rec : m.rebalances) per[format_date(rec.date)] = alloc::to_json(rec.decision.weights);
    j[m.method] = std::move(per);
  }
  return j;
}

nlohmann::json fits_json(const BacktestReport& report) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& m : report.methods) {
    nlohmann::json per = nlohmann::json::object();
    for (const auto& rec : m.rebalances) {
      if (rec.decision.fits.empty()) continue;
      nlohmann::json fits = nlohmann::json::array();
      for (const auto& f : rec.decision.fits) {
        fits.push_back({{"asset", f.asset_id},
                        {"architecture", f.label},
                        {"mse", f.mse},
                        {"drivers", f.driver_ids},
                        {"mean_sensitivity", f.mean_sensitivity}});
      }
      per[format_date(rec.date)] = {{"fits", std::move(fits)}, {"warnings", rec.decision.warnings}};
    }
    if (!per.empty()) j[m.method] = std::move(per);
  }
  return j;
}

nlohmann::json to_json(const BacktestReport& report) {
  nlohmann::json j;
  j["conventions"] = {
      {"sharpe", "mean(daily) / std(daily) * sqrt(252), risk-free rate 0, sample std"},
      {"annualized_vol", "std(daily) * sqrt(252)"},
      {"total_return", "nav_end / nav_start - 1"},
      {"hold", "weights held until the next monthly rebalance date"},
  };
  j["provenance"] = {{"config_hash", report.config_hash}, {"seed", report.seed}};
  j["schedule"] = to_json(report.schedule);
  j["selections"] = nlohmann::json::array();
  for (const auto& s : report.selections) j["selections"].push_back(drivers::to_json(s));
  j["methods"] = nlohmann::json::array();
  for (const auto& m : report.methods) {
    nlohmann::json mj;
    mj["method"] = m.method;
    mj["metrics"] = {{"total_return_pct", m.metrics.total_return_pct},
                     {"annualized_vol_pct", m.metrics.annualized_vol_pct},
                     {"sharpe", m.metrics.sharpe},
                     {"degenerate", m.metrics.degenerate}};
    nlohmann::json nav = nlohmann::json::array();
    for (std::size_t t = 0; t < m.nav.size(); ++t) nav.push_back({format_date(m.nav_dates[t]), m.nav[t]});
    mj["nav"] = std::move(nav);
    nlohmann::json rebs = nlohmann::json::array();
    for (const auto& rec : m.rebalances) {
      nlohmann::json rj{{"date", format_date(rec.date)}, {"weights", alloc::to_json(rec.decision.weights)}};
      if (rec.selection) rj["selection_date"] = format_date(report.schedule.selection_dates[*rec.selection]);
      rebs.push_back(std::move(rj));
    }
    mj["rebalances"] = std::move(rebs);
    j["methods"].push_back(std::move(mj));
  }
  return j;
}

std::string nav_csv(const BacktestReport& report) {
  std::string out = "date";
  for (const auto& m : report.methods) out += "," + m.method;
  out += '\n';
  if (report.methods.empty()) return out;
  const auto& dates = report.methods.front().nav_dates;
  for (std::size_t t = 0; t < dates.size(); ++t) {
    out += format_date(dates[t]);
    for (const auto& m : report.methods) out += fmt::format(",{}", m.nav[t]);
    out += '\n';
  }
  return out;
}

std::string metrics_csv(const BacktestReport& report) {
  std::string out = "method,return_pct,vol_ann_pct,sharpe,degenerate\n";
  for (const auto& m : report.methods) {
    out += fmt::format("{},{},{},{},{}\n", m.method, m.metrics.total_return_pct, m.metrics.annualized_vol_pct,
                       m.metrics.sharpe, m.metrics.degenerate ? 1 : 0);
  }
  return out;
}

std::string weights_csv(const BacktestReport& report) {
  std::vector<std::string> ids;
  if (!report.methods.empty() && !report.methods.front().rebalances.empty()) {
    ids = report.methods.front().rebalances.front().decision.weights.ids;
    std::sort(ids.begin(), ids.end());
  }
  std::string out = "date,method";
  for (const auto& id : ids) out += "," + id;
  out += '\n';
  for (const auto& m : report.methods) {
    for (const auto& rec : m.rebalances) {
      out += format_date(rec.date) + "," + m.method;
      for (const auto& id : ids) out += fmt::format(",{}", rec.decision.weights[id]);
      out += '\n';
    }
  }
  return out;
}

}  // namespace hsp::backtest
