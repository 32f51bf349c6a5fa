#include "config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <initializer_list>
#include <limits>
#include <string_view>

#include <fmt/format.h>

namespace hsp::app {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& msg) {
  throw Error(ErrorCode::validation, fmt::format("{}: {}", path.empty() ? "config" : path, msg));
}

// Typed access to one JSON object, remembering where it sits in the document.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(path_, "expected an object");
  }

  void allow(std::initializer_list<std::string_view> keys) const {
    for (const auto& [key, value] : j_.items()) {
      if (std::find(keys.begin(), keys.end(), key) == keys.end()) fail(at(key), "unknown field");
    }
  }

  bool has(std::string_view key) const { return j_.contains(key) && !j_.at(std::string(key)).is_null(); }
  const json& raw(std::string_view key) const { return j_.at(std::string(key)); }
  std::string at(std::string_view key) const {
    if (key.empty()) return path_;
    return path_.empty() ? std::string(key) : path_ + "." + std::string(key);
  }
  Reader child(std::string_view key) const { return Reader(raw(key), at(key)); }

  double number(std::string_view key, double def) const {
    if (!has(key)) return def;
    const auto& v = raw(key);
    if (!v.is_number()) fail(at(key), "expected a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) fail(at(key), "expected a finite number");
    return x;
  }

  std::optional<double> optional_number(std::string_view key) const {
    if (!has(key)) return std::nullopt;
    return number(key, 0.0);
  }

  std::uint64_t unsigned_int(std::string_view key, std::uint64_t def) const {
    if (!has(key)) return def;
    const auto& v = raw(key);
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
      fail(at(key), "expected a non-negative integer");
    }
    return v.get<std::uint64_t>();
  }

  std::size_t count(std::string_view key, std::size_t def) const {
    return static_cast<std::size_t>(unsigned_int(key, def));
  }

  int small_int(std::string_view key, int def) const {
    const auto v = unsigned_int(key, static_cast<std::uint64_t>(def));
    if (v > static_cast<std::uint64_t>(std::numeric_limits<int>::max())) fail(at(key), "value too large");
    return static_cast<int>(v);
  }

  bool boolean(std::string_view key, bool def) const {
    if (!has(key)) return def;
    if (!raw(key).is_boolean()) fail(at(key), "expected true or false");
    return raw(key).get<bool>();
  }

  std::string string(std::string_view key, std::string def) const {
    if (!has(key)) return def;
    if (!raw(key).is_string()) fail(at(key), "expected a string");
    return raw(key).get<std::string>();
  }

  std::optional<Date> date(std::string_view key) const {
    if (!has(key)) return std::nullopt;
    try {
      return parse_date(string(key, ""));
    } catch (const Error&) {
      fail(at(key), "expected a date YYYY-MM-DD");
    }
  }

  std::vector<std::string> strings(std::string_view key) const {
    const auto& v = raw(key);
    if (!v.is_array()) fail(at(key), "expected an array of strings");
    std::vector<std::string> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_string()) fail(fmt::format("{}[{}]", at(key), i), "expected a string");
      out.push_back(v[i].get<std::string>());
    }
    return out;
  }

  // Converts library validation errors into errors naming this field.
  template <typename T, typename Fn>
  T parsed(std::string_view key, Fn&& fn) const {
    try {
      return fn();
    } catch (const Error& e) {
      if (e.code() != ErrorCode::validation && e.code() != ErrorCode::format) throw;
      fail(at(key), e.what());
    }
  }

 private:
  const json& j_;
  std::string path_;
};

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_relative() && !base.empty() ? base / path : path;
}

fs::path existing_file(const Reader& r, std::string_view key, const fs::path& base) {
  const auto path = resolve(base, r.string(key, ""));
  if (!fs::is_regular_file(path)) fail(r.at(key), fmt::format("file '{}' does not exist", path.string()));
  return path;
}

data::SyntheticSpec parse_synthetic(const Reader& r) {
  r.allow({"n_assets", "n_common_factors", "n_idio_drivers_per_asset", "n_noise_drivers", "factor_loadings",
           "loading_low", "loading_high", "factor_vol", "persistence", "idio_loading", "idio_vol", "noise_vol",
           "driver_noise_vol", "noise_driver_vol", "horizon", "start", "compounding"});
  data::SyntheticSpec s;
  s.n_assets = r.count("n_assets", s.n_assets);
  s.n_common_factors = r.count("n_common_factors", s.n_common_factors);
  s.n_idio_drivers_per_asset = r.count("n_idio_drivers_per_asset", s.n_idio_drivers_per_asset);
  s.n_noise_drivers = r.count("n_noise_drivers", s.n_noise_drivers);
  s.loading_low = r.number("loading_low", s.loading_low);
  s.loading_high = r.number("loading_high", s.loading_high);
  s.factor_vol = r.number("factor_vol", s.factor_vol);
  s.persistence = r.number("persistence", s.persistence);
  s.idio_loading = r.number("idio_loading", s.idio_loading);
  s.idio_vol = r.number("idio_vol", s.idio_vol);
  s.noise_vol = r.number("noise_vol", s.noise_vol);
  s.driver_noise_vol = r.number("driver_noise_vol", s.driver_noise_vol);
  s.noise_driver_vol = r.number("noise_driver_vol", s.noise_driver_vol);
  s.horizon = r.count("horizon", s.horizon);
  if (auto d = r.date("start")) s.start = *d;
  s.compounding = r.parsed<data::ReturnMethod>("compounding", [&] {
    return data::parse_return_method(r.string("compounding", "simple"));
  });
  if (r.has("factor_loadings")) {
    const auto& rows = r.raw("factor_loadings");
    const auto path = r.at("factor_loadings");
    if (!rows.is_array() || rows.empty()) fail(path, "expected an array of rows");
    const auto width = rows[0].is_array() ? rows[0].size() : 0;
    s.factor_loadings.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(width));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (!rows[i].is_array() || rows[i].size() != width) fail(fmt::format("{}[{}]", path, i), "ragged row");
      for (std::size_t j = 0; j < width; ++j) {
        if (!rows[i][j].is_number()) fail(fmt::format("{}[{}][{}]", path, i, j), "expected a number");
        s.factor_loadings(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j].get<double>();
      }
    }
  }
  r.parsed<int>("", [&] {
    s.validate();
    return 0;
  });
  return s;
}

drivers::Thresholds parse_thresholds(const Reader& parent, std::string_view key) {
  if (!parent.has(key)) return {};
  const auto& v = parent.raw(key);
  const auto path = parent.at(key);
  try {
    if (v.is_object()) {
      Reader r(v, path);
      r.allow({"t0", "t1"});
      return drivers::Thresholds(r.number("t0", 0.4), r.number("t1", 0.2));
    }
    if (v.is_array()) {
      std::vector<drivers::LagThreshold> per_lag;
      for (std::size_t i = 0; i < v.size(); ++i) {
        Reader r(v[i], fmt::format("{}[{}]", path, i));
        r.allow({"lag", "threshold"});
        if (!r.has("lag") || !r.has("threshold")) fail(fmt::format("{}[{}]", path, i), "needs lag and threshold");
        per_lag.push_back({r.count("lag", 0), r.number("threshold", 0.0)});
      }
      return drivers::Thresholds(std::move(per_lag));
    }
  } catch (const Error& e) {
    if (e.code() != ErrorCode::validation) throw;
    if (std::string_view(e.what()).substr(0, path.size()) == path) throw;
    fail(path, e.what());
  }
  fail(path, "expected {\"t0\", \"t1\"} or an array of {\"lag\", \"threshold\"}");
}

std::vector<nnet::ArchitectureConfig> parse_grid(const Reader& r) {
  const bool ar = r.boolean("autoregressive", false);
  if (!r.has("grid")) return nnet::default_grid(ar);
  const auto& v = r.raw("grid");
  const auto path = r.at("grid");
  if (v.is_string()) {
    if (v.get<std::string>() != "default") fail(path, "expected \"default\" or an array of architectures");
    return nnet::default_grid(ar);
  }
  if (!v.is_array() || v.empty()) fail(path, "expected \"default\" or a non-empty array of architectures");
  std::vector<nnet::ArchitectureConfig> grid;
  for (std::size_t i = 0; i < v.size(); ++i) {
    Reader a(v[i], fmt::format("{}[{}]", path, i));
    a.allow({"layers", "units", "lag", "window", "autoregressive"});
    nnet::ArchitectureConfig arch;
    arch.layers = a.count("layers", arch.layers);
    arch.units = a.count("units", arch.units);
    arch.lag = a.count("lag", arch.lag);
    arch.window = a.count("window", arch.window);
    arch.autoregressive = a.boolean("autoregressive", ar);
    a.parsed<int>("", [&] {
      arch.validate();
      return 0;
    });
    grid.push_back(arch);
  }
  return grid;
}

std::vector<std::string> read_override_file(const fs::path& path, const std::string& field) {
  std::ifstream in(path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    fail(field, fmt::format("'{}' is not valid JSON: {}", path.string(), e.what()));
  }
  if (!doc.is_array() || doc.empty()) fail(field, fmt::format("'{}' must hold a non-empty array of ids", path.string()));
  std::vector<std::string> ids;
  for (const auto& x : doc) {
    if (!x.is_string()) fail(field, fmt::format("'{}' must hold strings only", path.string()));
    ids.push_back(x.get<std::string>());
  }
  return ids;
}

json thresholds_json(const drivers::Thresholds& t) {
  json a = json::array();
  for (const auto& lt : t.per_lag()) a.push_back({{"lag", lt.lag}, {"threshold", lt.threshold}});
  return a;
}

json synthetic_json(const data::SyntheticSpec& s) {
  json j{{"n_assets", s.n_assets},
         {"n_common_factors", s.n_common_factors},
         {"n_idio_drivers_per_asset", s.n_idio_drivers_per_asset},
         {"n_noise_drivers", s.n_noise_drivers},
         {"loading_low", s.loading_low},
         {"loading_high", s.loading_high},
         {"factor_vol", s.factor_vol},
         {"persistence", s.persistence},
         {"idio_loading", s.idio_loading},
         {"idio_vol", s.idio_vol},
         {"noise_vol", s.noise_vol},
         {"driver_noise_vol", s.driver_noise_vol},
         {"noise_driver_vol", s.noise_driver_vol},
         {"horizon", s.horizon},
         {"start", format_date(s.start)},
         {"compounding", data::to_string(s.compounding)}};
  if (s.factor_loadings.size() > 0) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < s.factor_loadings.rows(); ++i) {
      json row = json::array();
      for (Eigen::Index k = 0; k < s.factor_loadings.cols(); ++k) row.push_back(s.factor_loadings(i, k));
      rows.push_back(std::move(row));
    }
    j["factor_loadings"] = std::move(rows);
  }
  return j;
}

}  // namespace

void RunConfig::set_seed(std::uint64_t s) {
  seed = s;
  backtest.seed = s;
  ccp.master_seed = s;
  if (synthetic) synthetic->seed = s;
}

RunConfig parse_config(const json& doc, const fs::path& base_dir) {
  Reader root(doc, "");
  root.allow({"seed", "threads", "output_dir", "data", "schedule", "selection", "model", "allocation", "methods",
              "ccp"});
  RunConfig c;
  auto& bt = c.backtest;

  if (!root.has("data")) fail("data", "missing data source");
  {
    const auto d = root.child("data");
    d.allow({"assets", "drivers", "synthetic", "returns"});
    const bool files = d.has("assets") || d.has("drivers");
    if (files == d.has("synthetic")) fail("data", "set either assets/drivers files or synthetic, not both");
    if (files) {
      if (!d.has("assets")) fail(d.at("assets"), "missing asset file");
      if (!d.has("drivers")) fail(d.at("drivers"), "missing driver file");
      c.assets_file = existing_file(d, "assets", base_dir);
      c.drivers_file = existing_file(d, "drivers", base_dir);
    } else {
      c.synthetic = parse_synthetic(d.child("synthetic"));
    }
    bt.returns = d.parsed<data::ReturnMethod>("returns", [&] {
      return data::parse_return_method(d.string("returns", "simple"));
    });
  }

  if (root.has("schedule")) {
    const auto s = root.child("schedule");
    s.allow({"start", "end", "selection_window", "refresh_months", "hold_days", "estimation_window"});
    c.start = s.date("start");
    c.end = s.date("end");
    if (c.start && c.end && !(*c.start < *c.end)) fail(s.at("end"), "must be after schedule.start");
    bt.selection_window = s.count("selection_window", bt.selection_window);
    bt.selection_refresh_months = s.small_int("refresh_months", bt.selection_refresh_months);
    bt.hold_days = s.small_int("hold_days", bt.hold_days);
    bt.estimation_window = s.count("estimation_window", bt.estimation_window);
    if (bt.selection_window < 3) fail(s.at("selection_window"), "must be at least 3");
    if (bt.selection_refresh_months < 1) fail(s.at("refresh_months"), "must be at least 1");
    if (bt.hold_days < 1) fail(s.at("hold_days"), "must be at least 1");
    if (bt.estimation_window < 3) fail(s.at("estimation_window"), "must be at least 3");
  }

  if (root.has("selection")) {
    const auto s = root.child("selection");
    s.allow({"thresholds", "k", "mode", "override_file", "override"});
    bt.thresholds = parse_thresholds(s, "thresholds");
    bt.k = s.count("k", bt.k);
    if (bt.k == 0) fail(s.at("k"), "must be at least 1");
    bt.mode = s.parsed<drivers::SelectionMode>("mode", [&] { return drivers::parse_selection_mode(s.string("mode", "OPT")); });
    if (s.has("override_file") && s.has("override")) fail(s.at("override"), "give override or override_file, not both");
    if (s.has("override_file")) {
      c.override_file = existing_file(s, "override_file", base_dir);
      bt.override_ids = read_override_file(*c.override_file, s.at("override_file"));
    } else if (s.has("override")) {
      bt.override_ids = s.strings("override");
      if (bt.override_ids->empty()) fail(s.at("override"), "must not be empty");
    }
  }
  if (bt.mode == drivers::SelectionMode::select && !bt.override_ids) {
    fail("selection.override_file", "SELECT mode requires an override file");
  }

  {
    const json empty = json::object();
    const auto m = root.has("model") ? root.child("model") : Reader(empty, "model");
    m.allow({"grid", "autoregressive", "epochs", "learning_rate"});
    bt.grid = parse_grid(m);
    bt.training.epochs = m.count("epochs", bt.training.epochs);
    bt.training.learning_rate = m.number("learning_rate", bt.training.learning_rate);
    if (bt.training.epochs == 0) fail(m.at("epochs"), "must be at least 1");
    if (!(bt.training.learning_rate > 0.0)) fail(m.at("learning_rate"), "must be positive");
  }

  if (root.has("allocation")) {
    const auto a = root.child("allocation");
    a.allow({"linkage", "hsp_cap", "hrp_cap", "equal_weight_cap", "mv_cap", "risk_aversion", "target_return"});
    const auto link = a.parsed<alloc::LinkageMethod>("linkage", [&] {
      return alloc::parse_linkage_method(a.string("linkage", "single"));
    });
    bt.hsp.linkage = link;
    bt.hrp_linkage = link;
    bt.hsp.cap = a.optional_number("hsp_cap");
    bt.hrp_cap = a.optional_number("hrp_cap");
    bt.equal_weight_cap = a.optional_number("equal_weight_cap");
    bt.mv_cap = a.number("mv_cap", bt.mv_cap);
    bt.risk_aversion = a.number("risk_aversion", bt.risk_aversion);
    bt.target_return = a.number("target_return", bt.target_return);
    for (auto [key, cap] : {std::pair{"hsp_cap", bt.hsp.cap}, std::pair{"hrp_cap", bt.hrp_cap},
                            std::pair{"equal_weight_cap", bt.equal_weight_cap},
                            std::pair{"mv_cap", std::optional<double>(bt.mv_cap)}}) {
      if (cap && !(*cap > 0.0 && *cap <= 1.0)) fail(a.at(key), "cap must lie in (0, 1]");
    }
    if (!(bt.risk_aversion > 0.0)) fail(a.at("risk_aversion"), "must be positive");
  }

  if (root.has("methods")) {
    c.methods = root.strings("methods");
    if (c.methods.empty()) fail("methods", "must list at least one method");
    const auto registry = backtest::MethodRegistry::builtin();
    for (std::size_t i = 0; i < c.methods.size(); ++i) {
      if (!registry.contains(c.methods[i])) fail(fmt::format("methods[{}]", i), fmt::format("unknown method '{}'", c.methods[i]));
    }
  }

  if (root.has("ccp")) {
    const auto x = root.child("ccp");
    x.allow({"synthetic", "n_seeds", "weights", "weight_draws", "lead", "thresholds", "k", "tolerance"});
    if (x.has("synthetic")) {
      c.ccp.spec = parse_synthetic(x.child("synthetic"));
    } else if (c.synthetic) {
      c.ccp.spec = *c.synthetic;
    }
    c.ccp.n_seeds = x.count("n_seeds", c.ccp.n_seeds);
    c.ccp.weights = x.parsed<ccp::WeightScheme>("weights", [&] { return ccp::parse_weight_scheme(x.string("weights", "equal")); });
    c.ccp.weight_draws = x.count("weight_draws", c.ccp.weight_draws);
    c.ccp.lead = x.count("lead", c.ccp.lead);
    c.ccp.thresholds = x.has("thresholds") ? parse_thresholds(x, "thresholds") : bt.thresholds;
    c.ccp.k = x.count("k", c.ccp.k);
    c.ccp.tolerance = x.number("tolerance", c.ccp.tolerance);
    x.parsed<int>("", [&] {
      c.ccp.validate();
      return 0;
    });
  } else if (c.synthetic) {
    c.ccp.spec = *c.synthetic;
  }

  c.output_dir = resolve(base_dir, root.string("output_dir", "out"));
  const auto threads = root.unsigned_int("threads", 1);
  if (threads > 1024) fail("threads", "at most 1024");
  bt.threads = static_cast<unsigned>(threads);
  c.ccp.threads = bt.threads;
  c.set_seed(root.unsigned_int("seed", 0));
  return c;
}

RunConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io, fmt::format("config: cannot open '{}'", path.string()));
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::validation, fmt::format("config: '{}' is not valid JSON: {}", path.string(), e.what()));
  }
  return parse_config(doc, path.parent_path());
}

json to_json(const RunConfig& c) {
  const auto& bt = c.backtest;
  json data;
  if (c.synthetic) {
    data["synthetic"] = synthetic_json(*c.synthetic);
  } else {
    data["assets"] = c.assets_file->string();
    data["drivers"] = c.drivers_file->string();
  }
  data["returns"] = data::to_string(bt.returns);

  json schedule{{"selection_window", bt.selection_window},
                {"refresh_months", bt.selection_refresh_months},
                {"hold_days", bt.hold_days},
                {"estimation_window", bt.estimation_window}};
  if (c.start) schedule["start"] = format_date(*c.start);
  if (c.end) schedule["end"] = format_date(*c.end);

  json selection{{"thresholds", thresholds_json(bt.thresholds)}, {"k", bt.k}, {"mode", drivers::to_string(bt.mode)}};
  if (bt.override_ids) selection["override"] = *bt.override_ids;

  json grid = json::array();
  for (const auto& a : bt.grid) {
    // Per-architecture seeds are derived from the run seed, not configured.
    auto j = nnet::to_json(a);
    j.erase("seed");
    grid.push_back(std::move(j));
  }

  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  json allocation{{"linkage", alloc::to_string(bt.hsp.linkage)},
                  {"hsp_cap", opt(bt.hsp.cap)},
                  {"hrp_cap", opt(bt.hrp_cap)},
                  {"equal_weight_cap", opt(bt.equal_weight_cap)},
                  {"mv_cap", bt.mv_cap},
                  {"risk_aversion", bt.risk_aversion},
                  {"target_return", bt.target_return}};

  json ccp{{"synthetic", synthetic_json(c.ccp.spec)},
           {"n_seeds", c.ccp.n_seeds},
           {"weights", ccp::to_string(c.ccp.weights)},
           {"weight_draws", c.ccp.weight_draws},
           {"lead", c.ccp.lead},
           {"thresholds", thresholds_json(c.ccp.thresholds)},
           {"k", c.ccp.k},
           {"tolerance", c.ccp.tolerance}};

  return json{{"seed", c.seed},
              {"threads", bt.threads},
              {"output_dir", c.output_dir.string()},
              {"data", std::move(data)},
              {"schedule", std::move(schedule)},
              {"selection", std::move(selection)},
              {"model",
               {{"grid", std::move(grid)},
                {"epochs", bt.training.epochs},
                {"learning_rate", bt.training.learning_rate}}},
              {"allocation", std::move(allocation)},
              {"methods", c.methods},
              {"ccp", std::move(ccp)}};
}

std::string config_hash(const RunConfig& c) {
  // Thread count and output location do not change results.
  auto j = to_json(c);
  j.erase("threads");
  j.erase("output_dir");
  return fmt::format("{:016x}", fnv1a(j.dump()));
}

data::PricePanel load_panel(const RunConfig& c) {
  if (c.synthetic) return data::generate_synthetic(*c.synthetic);
  const std::vector<data::PricePanel> parts{data::load_csv(*c.assets_file, data::SeriesKind::asset),
                                            data::load_csv(*c.drivers_file, data::SeriesKind::driver)};
  return data::align(parts);
}

backtest::Schedule make_schedule(const RunConfig& c, const data::PricePanel& panel) {
  const auto& dates = panel.dates();
  if (dates.empty()) throw Error(ErrorCode::insufficient_data, "panel has no dates");
  Date start;
  if (c.start) {
    start = *c.start;
  } else {
    const std::size_t need = c.backtest.required_history() + 1;
    if (dates.size() <= need) {
      throw Error(ErrorCode::insufficient_history,
                  fmt::format("panel has {} dates, the estimation windows need more than {}", dates.size(), need));
    }
    start = dates[need];
  }
  const Date end = c.end ? *c.end : dates.back() + std::chrono::days{1};
  return backtest::build_schedule(dates, start, end, c.backtest.selection_refresh_months, c.backtest.hold_days,
                                  c.backtest.required_history());
}

}  // namespace hsp::app
