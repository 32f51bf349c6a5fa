#include "hsp/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <unordered_set>

#include <fmt/format.h>

namespace hsp::data {

std::string_view to_string(SeriesKind kind) noexcept {
  return kind == SeriesKind::asset ? "asset" : "driver";
}

std::string_view to_string(ReturnMethod method) noexcept {
  return method == ReturnMethod::simple ? "simple" : "log";
}

ReturnMethod parse_return_method(std::string_view text) {
  if (text == "simple") return ReturnMethod::simple;
  if (text == "log") return ReturnMethod::log;
  throw Error(ErrorCode::validation, fmt::format("unknown return method '{}'", text));
}

namespace detail {

PanelBase::PanelBase(std::vector<Date> dates, std::vector<Series> series)
    : dates_(std::move(dates)), series_(std::move(series)) {
  for (std::size_t i = 1; i < dates_.size(); ++i) {
    if (dates_[i] <= dates_[i - 1]) {
      throw Error(ErrorCode::validation,
                  fmt::format("dates not strictly increasing at row {} ({})", i, format_date(dates_[i])));
    }
  }
  std::unordered_set<std::string_view> seen;
  for (const auto& s : series_) {
    if (s.values.size() != dates_.size()) {
      throw Error(ErrorCode::validation,
                  fmt::format("series '{}' has {} values for {} dates", s.id, s.values.size(), dates_.size()));
    }
    if (!seen.insert(s.id).second) {
      throw Error(ErrorCode::validation, fmt::format("duplicate series id '{}'", s.id));
    }
  }
}

std::optional<std::size_t> PanelBase::find(std::string_view id) const {
  for (std::size_t i = 0; i < series_.size(); ++i) {
    if (series_[i].id == id) return i;
  }
  return std::nullopt;
}

const Series& PanelBase::at(std::string_view id) const {
  if (auto i = find(id)) return series_[*i];
  throw Error(ErrorCode::validation, fmt::format("unknown series '{}'", id));
}

std::vector<std::string> PanelBase::ids() const {
  std::vector<std::string> out;
  out.reserve(series_.size());
  for (const auto& s : series_) out.push_back(s.id);
  return out;
}

std::vector<std::string> PanelBase::ids(SeriesKind kind) const {
  std::vector<std::string> out;
  for (const auto& s : series_) {
    if (s.kind == kind) out.push_back(s.id);
  }
  return out;
}

std::size_t PanelBase::rows_before(Date d) const {
  return static_cast<std::size_t>(std::lower_bound(dates_.begin(), dates_.end(), d) - dates_.begin());
}

Matrix PanelBase::matrix(std::span<const std::string> ids, std::size_t first, std::size_t last) const {
  if (first > last || last > dates_.size()) {
    throw Error(ErrorCode::shape, fmt::format("row range [{}, {}) outside panel of {} rows", first, last,
                                              dates_.size()));
  }
  Matrix m(static_cast<Eigen::Index>(last - first), static_cast<Eigen::Index>(ids.size()));
  for (std::size_t c = 0; c < ids.size(); ++c) {
    const auto& values = at(ids[c]).values;
    for (std::size_t r = first; r < last; ++r) {
      m(static_cast<Eigen::Index>(r - first), static_cast<Eigen::Index>(c)) = values[r];
    }
  }
  return m;
}

}  // namespace detail

PricePanel::PricePanel(std::vector<Date> dates, std::vector<Series> series, std::size_t dropped_rows)
    : PanelBase(std::move(dates), std::move(series)), dropped_rows_(dropped_rows) {
  for (const auto& s : series_) {
    for (std::size_t r = 0; r < s.values.size(); ++r) {
      if (!(s.values[r] > 0.0) || !std::isfinite(s.values[r])) {
        throw Error(ErrorCode::validation,
                    fmt::format("non-positive price {} in series '{}' on {}", s.values[r], s.id,
                                format_date(dates_[r])));
      }
    }
  }
}

PricePanel PricePanel::select(SeriesKind kind) const {
  std::vector<Series> kept;
  for (const auto& s : series_) {
    if (s.kind == kind) kept.push_back(s);
  }
  return PricePanel(dates_, std::move(kept), dropped_rows_);
}

PricePanel PricePanel::truncate_after(Date last) const {
  const auto n = static_cast<std::size_t>(std::upper_bound(dates_.begin(), dates_.end(), last) - dates_.begin());
  std::vector<Series> cut = series_;
  for (auto& s : cut) s.values.resize(n);
  return PricePanel(std::vector<Date>(dates_.begin(), dates_.begin() + static_cast<std::ptrdiff_t>(n)),
                    std::move(cut), dropped_rows_);
}

ReturnPanel::ReturnPanel(std::vector<Date> dates, std::vector<Series> series, ReturnMethod method)
    : PanelBase(std::move(dates), std::move(series)), method_(method) {
  if (method_ == ReturnMethod::simple) {
    for (const auto& s : series_) {
      for (double v : s.values) {
        if (!(v > -1.0)) {
          throw Error(ErrorCode::validation, fmt::format("simple return {} <= -1 in '{}'", v, s.id));
        }
      }
    }
  }
}

ReturnPanel ReturnPanel::select(SeriesKind kind) const {
  std::vector<Series> kept;
  for (const auto& s : series_) {
    if (s.kind == kind) kept.push_back(s);
  }
  return ReturnPanel(dates_, std::move(kept), method_);
}

ReturnPanel ReturnPanel::slice(std::size_t first, std::size_t last) const {
  if (first > last || last > length()) {
    throw Error(ErrorCode::shape, fmt::format("row range [{}, {}) outside panel of {} rows", first, last, length()));
  }
  const auto b = static_cast<std::ptrdiff_t>(first);
  const auto e = static_cast<std::ptrdiff_t>(last);
  std::vector<Series> cut;
  cut.reserve(series_.size());
  for (const auto& s : series_) cut.push_back({s.id, s.kind, {s.values.begin() + b, s.values.begin() + e}});
  return ReturnPanel({dates_.begin() + b, dates_.begin() + e}, std::move(cut), method_);
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::vector<std::string> split_row(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

bool is_missing(const std::string& cell) {
  return cell.empty() || cell == "NA" || cell == "NaN" || cell == "nan" || cell == "null";
}

}  // namespace

PricePanel read_csv(std::istream& in, SeriesKind kind, std::string_view source) {
  std::string line;
  if (!std::getline(in, line)) {
    throw Error(ErrorCode::format, fmt::format("{}: empty file", source));
  }
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);  // UTF-8 BOM
  auto header = split_row(line);
  for (auto& h : header) h = trim(h);
  if (header.size() < 2) {
    throw Error(ErrorCode::format, fmt::format("{}: header needs a date column and at least one series", source));
  }

  std::vector<Date> dates;
  std::vector<Series> series(header.size() - 1);
  for (std::size_t c = 1; c < header.size(); ++c) {
    if (header[c].empty()) throw Error(ErrorCode::format, fmt::format("{}: empty column name {}", source, c));
    series[c - 1].id = header[c];
    series[c - 1].kind = kind;
  }

  std::size_t dropped = 0;
  std::size_t row = 0;
  std::vector<double> values(series.size());
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    auto cells = split_row(line);
    if (cells.size() != header.size()) {
      throw Error(ErrorCode::format, fmt::format("{}: row {} has {} cells, expected {}", source, row,
                                                 cells.size(), header.size()));
    }
    Date date;
    try {
      date = parse_date(trim(cells[0]));
    } catch (const Error& e) {
      throw Error(ErrorCode::format, fmt::format("{}: row {}: {}", source, row, e.what()));
    }
    bool missing = false;
    for (std::size_t c = 1; c < cells.size(); ++c) {
      const auto cell = trim(cells[c]);
      if (is_missing(cell)) {
        missing = true;
        continue;
      }
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(cell, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != cell.size() || !std::isfinite(v)) {
        throw Error(ErrorCode::format,
                    fmt::format("{}: row {} column '{}': cannot parse '{}'", source, row, header[c], cell));
      }
      if (v <= 0.0) {
        throw Error(ErrorCode::format,
                    fmt::format("{}: row {} column '{}': non-positive price {}", source, row, header[c], cell));
      }
      values[c - 1] = v;
    }
    if (missing) {
      ++dropped;
      continue;
    }
    if (!dates.empty() && date <= dates.back()) {
      throw Error(ErrorCode::format,
                  fmt::format("{}: row {}: date {} not after previous", source, row, format_date(date)));
    }
    dates.push_back(date);
    for (std::size_t c = 0; c < series.size(); ++c) series[c].values.push_back(values[c]);
  }
  if (dates.size() < 2) {
    throw Error(ErrorCode::insufficient_data,
                fmt::format("{}: {} usable rows after dropping {} incomplete", source, dates.size(), dropped));
  }
  return PricePanel(std::move(dates), std::move(series), dropped);
}

PricePanel load_csv(const std::filesystem::path& path, SeriesKind kind) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io, fmt::format("cannot open '{}'", path.string()));
  return read_csv(in, kind, path.string());
}

void write_csv(const PricePanel& panel, std::ostream& out) {
  out << "date";
  for (const auto& s : panel.series()) out << ',' << s.id;
  out << '\n';
  for (std::size_t r = 0; r < panel.length(); ++r) {
    out << format_date(panel.dates()[r]);
    for (const auto& s : panel.series()) out << ',' << fmt::format("{}", s.values[r]);
    out << '\n';
  }
}

void write_csv(const PricePanel& panel, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::io, fmt::format("cannot write '{}'", path.string()));
  write_csv(panel, out);
}

// ---------------------------------------------------------------------------
// Transforms

ReturnPanel to_returns(const PricePanel& panel, ReturnMethod method) {
  if (panel.length() < 2) {
    throw Error(ErrorCode::insufficient_data, "to_returns needs at least two dates");
  }
  std::vector<Date> dates(panel.dates().begin() + 1, panel.dates().end());
  std::vector<Series> out;
  out.reserve(panel.width());
  for (const auto& s : panel.series()) {
    Series r{s.id, s.kind, std::vector<double>(dates.size())};
    for (std::size_t t = 1; t < s.values.size(); ++t) {
      const double ratio = s.values[t] / s.values[t - 1];
      r.values[t - 1] = method == ReturnMethod::simple ? ratio - 1.0 : std::log(ratio);
    }
    out.push_back(std::move(r));
  }
  return ReturnPanel(std::move(dates), std::move(out), method);
}

PricePanel cumulate(const ReturnPanel& returns, Date base_date, double base) {
  std::vector<Date> dates;
  dates.reserve(returns.length() + 1);
  dates.push_back(base_date);
  dates.insert(dates.end(), returns.dates().begin(), returns.dates().end());
  std::vector<Series> out;
  for (const auto& s : returns.series()) {
    Series p{s.id, s.kind, {}};
    p.values.reserve(dates.size());
    double level = base;
    p.values.push_back(level);
    for (double r : s.values) {
      level *= returns.method() == ReturnMethod::simple ? 1.0 + r : std::exp(r);
      p.values.push_back(level);
    }
    out.push_back(std::move(p));
  }
  return PricePanel(std::move(dates), std::move(out));
}

PricePanel align(std::span<const PricePanel> panels) {
  if (panels.empty()) throw Error(ErrorCode::validation, "align needs at least one panel");
  std::set<std::string> ids;
  for (const auto& p : panels) {
    for (const auto& s : p.series()) {
      if (!ids.insert(s.id).second) {
        throw Error(ErrorCode::validation, fmt::format("series id '{}' appears in more than one panel", s.id));
      }
    }
  }
  std::vector<Date> common = panels.front().dates();
  for (const auto& p : panels.subspan(1)) {
    std::vector<Date> next;
    std::set_intersection(common.begin(), common.end(), p.dates().begin(), p.dates().end(),
                          std::back_inserter(next));
    common = std::move(next);
  }
  if (common.empty()) throw Error(ErrorCode::no_overlap, "panels share no dates");

  std::vector<Series> merged;
  std::size_t dropped = 0;
  for (const auto& p : panels) {
    dropped += p.dropped_rows();
    std::vector<std::size_t> rows;
    rows.reserve(common.size());
    std::size_t r = 0;
    for (Date d : common) {
      while (p.dates()[r] < d) ++r;
      rows.push_back(r);
    }
    for (const auto& s : p.series()) {
      Series kept{s.id, s.kind, {}};
      kept.values.reserve(rows.size());
      for (auto i : rows) kept.values.push_back(s.values[i]);
      merged.push_back(std::move(kept));
    }
  }
  return PricePanel(std::move(common), std::move(merged), dropped);
}

// ---------------------------------------------------------------------------
// Synthetic universes

void SyntheticSpec::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::validation, "synthetic spec: " + msg); };
  if (n_assets < 1) fail("n_assets must be >= 1");
  if (n_common_factors < 1) fail("n_common_factors must be >= 1");
  if (horizon < 2) fail("horizon must be >= 2");
  if (!(noise_vol >= 0.0) || !(driver_noise_vol >= 0.0) || !(noise_driver_vol >= 0.0) || !(idio_vol >= 0.0) ||
      !(factor_vol >= 0.0)) {
    fail("volatilities must be >= 0");
  }
  if (!(std::abs(persistence) < 1.0)) fail("persistence must lie in (-1, 1)");
  if (factor_loadings.size() > 0) {
    if (factor_loadings.rows() != static_cast<Eigen::Index>(n_assets) ||
        factor_loadings.cols() != static_cast<Eigen::Index>(n_common_factors)) {
      fail(fmt::format("factor_loadings must be {}x{}", n_assets, n_common_factors));
    }
    if (!factor_loadings.allFinite()) fail("factor_loadings must be finite");
  } else if (!(loading_low <= loading_high) || !std::isfinite(loading_low) || !std::isfinite(loading_high)) {
    fail("loading range must satisfy low <= high");
  }
  if (!std::isfinite(idio_loading)) fail("idio_loading must be finite");
}

SyntheticIds synthetic_ids(const SyntheticSpec& spec) {
  auto width = [](std::size_t n) { return std::max<std::size_t>(2, fmt::format("{}", n).size()); };
  SyntheticIds ids;
  const auto wa = width(spec.n_assets);
  for (std::size_t i = 0; i < spec.n_assets; ++i) ids.assets.push_back(fmt::format("A{:0{}}", i + 1, wa));
  const auto wc = width(spec.n_common_factors);
  for (std::size_t k = 0; k < spec.n_common_factors; ++k) {
    ids.common_drivers.push_back(fmt::format("C{:0{}}", k + 1, wc));
  }
  ids.idio_drivers.resize(spec.n_assets);
  for (std::size_t i = 0; i < spec.n_assets; ++i) {
    for (std::size_t j = 0; j < spec.n_idio_drivers_per_asset; ++j) {
      ids.idio_drivers[i].push_back(fmt::format("I{:0{}}_{}", i + 1, wa, j + 1));
    }
  }
  const auto wn = width(spec.n_noise_drivers);
  for (std::size_t j = 0; j < spec.n_noise_drivers; ++j) {
    ids.noise_drivers.push_back(fmt::format("N{:0{}}", j + 1, wn));
  }
  return ids;
}

PricePanel generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  const auto ids = synthetic_ids(spec);
  const std::size_t n = spec.n_assets;
  const std::size_t k = spec.n_common_factors;
  const std::size_t m = spec.n_idio_drivers_per_asset;
  const std::size_t q = spec.n_noise_drivers;
  const std::size_t periods = spec.horizon - 1;

  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  Matrix loadings = spec.factor_loadings;
  if (loadings.size() == 0) {
    std::uniform_real_distribution<double> uniform(spec.loading_low, spec.loading_high);
    loadings.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k));
    for (Eigen::Index i = 0; i < loadings.rows(); ++i) {
      for (Eigen::Index j = 0; j < loadings.cols(); ++j) loadings(i, j) = uniform(rng);
    }
  }

  // Stationary start for the AR(1) factor and idiosyncratic processes.
  const double stationary = 1.0 / std::sqrt(1.0 - spec.persistence * spec.persistence);
  Vector factor(static_cast<Eigen::Index>(k));
  for (auto& f : factor) f = spec.factor_vol * stationary * normal(rng);
  Matrix idio(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m));
  for (Eigen::Index i = 0; i < idio.size(); ++i) idio.data()[i] = spec.idio_vol * stationary * normal(rng);

  // returns[series][t]; series ordered as in the emitted panel.
  const std::size_t n_series = n + k + n * m + q;
  std::vector<std::vector<double>> returns(n_series, std::vector<double>(periods));
  for (std::size_t t = 0; t < periods; ++t) {
    for (std::size_t j = 0; j < k; ++j) {
      const auto jj = static_cast<Eigen::Index>(j);
      factor(jj) = spec.persistence * factor(jj) + spec.factor_vol * normal(rng);
      returns[n + j][t] = factor(jj) + spec.driver_noise_vol * normal(rng);
    }
    for (std::size_t i = 0; i < n; ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      double r = loadings.row(ii).dot(factor);
      for (std::size_t j = 0; j < m; ++j) {
        const auto jj = static_cast<Eigen::Index>(j);
        idio(ii, jj) = spec.persistence * idio(ii, jj) + spec.idio_vol * normal(rng);
        returns[n + k + i * m + j][t] = idio(ii, jj);
        r += spec.idio_loading * idio(ii, jj);
      }
      returns[i][t] = r + spec.noise_vol * normal(rng);
    }
    for (std::size_t j = 0; j < q; ++j) {
      returns[n + k + n * m + j][t] = spec.noise_driver_vol * normal(rng);
    }
  }

  std::vector<Date> dates;
  dates.reserve(spec.horizon);
  Date d = spec.start;
  while (dates.size() < spec.horizon) {
    if (is_weekday(d)) dates.push_back(d);
    d += std::chrono::days{1};
  }

  std::vector<Series> series;
  series.reserve(n_series);
  auto emit = [&](const std::string& id, SeriesKind kind, const std::vector<double>& r) {
    Series s{id, kind, {}};
    s.values.reserve(spec.horizon);
    double level = 100.0;
    s.values.push_back(level);
    for (double x : r) {
      if (spec.compounding == ReturnMethod::simple) {
        if (!(x > -1.0)) {
          throw Error(ErrorCode::validation,
                      fmt::format("synthetic return {} <= -1 in '{}'; lower the volatilities or use log "
                                  "compounding",
                                  x, id));
        }
        level *= 1.0 + x;
      } else {
        level *= std::exp(x);
      }
      s.values.push_back(level);
    }
    series.push_back(std::move(s));
  };
  for (std::size_t i = 0; i < n; ++i) emit(ids.assets[i], SeriesKind::asset, returns[i]);
  for (std::size_t j = 0; j < k; ++j) emit(ids.common_drivers[j], SeriesKind::driver, returns[n + j]);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      emit(ids.idio_drivers[i][j], SeriesKind::driver, returns[n + k + i * m + j]);
    }
  }
  for (std::size_t j = 0; j < q; ++j) emit(ids.noise_drivers[j], SeriesKind::driver, returns[n + k + n * m + j]);
  return PricePanel(std::move(dates), std::move(series));
}

}  // namespace hsp::data
