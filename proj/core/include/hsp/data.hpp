#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hsp/common.hpp"

namespace hsp::data {

enum class SeriesKind { asset, driver };
enum class ReturnMethod { simple, log };

std::string_view to_string(SeriesKind kind) noexcept;
std::string_view to_string(ReturnMethod method) noexcept;
ReturnMethod parse_return_method(std::string_view text);

struct Series {
  std::string id;
  SeriesKind kind = SeriesKind::asset;
  std::vector<double> values;
};

namespace detail {

// Shared storage for date-indexed column panels.
class PanelBase {
 public:
  const std::vector<Date>& dates() const noexcept { return dates_; }
  const std::vector<Series>& series() const noexcept { return series_; }
  std::size_t length() const noexcept { return dates_.size(); }
  std::size_t width() const noexcept { return series_.size(); }

  std::optional<std::size_t> find(std::string_view id) const;
  const Series& at(std::string_view id) const;
  std::vector<std::string> ids() const;
  std::vector<std::string> ids(SeriesKind kind) const;

  /// Number of leading rows dated strictly before `d`.
  std::size_t rows_before(Date d) const;

  /// Column-stacked copy of the named series over rows [first, last).
  Matrix matrix(std::span<const std::string> ids, std::size_t first, std::size_t last) const;

 protected:
  PanelBase() = default;
  PanelBase(std::vector<Date> dates, std::vector<Series> series);

  std::vector<Date> dates_;
  std::vector<Series> series_;
};

}  // namespace detail

/// Date-aligned price levels. Dates strictly increase and every price is
/// strictly positive.
class PricePanel : public detail::PanelBase {
 public:
  PricePanel() = default;
  PricePanel(std::vector<Date> dates, std::vector<Series> series, std::size_t dropped_rows = 0);

  /// Rows dropped at load time because a cell was missing.
  std::size_t dropped_rows() const noexcept { return dropped_rows_; }

  PricePanel select(SeriesKind kind) const;
  /// Keeps rows dated on or before `last`.
  PricePanel truncate_after(Date last) const;

 private:
  std::size_t dropped_rows_ = 0;
};

/// Per-period returns; one row fewer than the originating price panel.
class ReturnPanel : public detail::PanelBase {
 public:
  ReturnPanel() = default;
  ReturnPanel(std::vector<Date> dates, std::vector<Series> series, ReturnMethod method);

  ReturnMethod method() const noexcept { return method_; }
  ReturnPanel select(SeriesKind kind) const;
  /// Rows [first, last).
  ReturnPanel slice(std::size_t first, std::size_t last) const;

 private:
  ReturnMethod method_ = ReturnMethod::simple;
};

PricePanel load_csv(const std::filesystem::path& path, SeriesKind kind);
PricePanel read_csv(std::istream& in, SeriesKind kind, std::string_view source = "<stream>");
void write_csv(const PricePanel& panel, const std::filesystem::path& path);
void write_csv(const PricePanel& panel, std::ostream& out);

ReturnPanel to_returns(const PricePanel& panel, ReturnMethod method = ReturnMethod::simple);

/// Inverse of to_returns: compounds returns from `base` at `base_date`.
PricePanel cumulate(const ReturnPanel& returns, Date base_date, double base = 100.0);

/// Joins panels on the intersection of their date sets.
PricePanel align(std::span<const PricePanel> panels);

/// Seeded common-cause universe. Latent factor returns follow a Gaussian
/// AR(1) with coefficient `persistence`, so factor levels are random walks
/// with persistent increments.
struct SyntheticSpec {
  std::size_t n_assets = 10;
  std::size_t n_common_factors = 3;
  std::size_t n_idio_drivers_per_asset = 1;
  std::size_t n_noise_drivers = 10;
  /// n_assets x n_common_factors; when empty, drawn Uniform(loading_low, loading_high).
  Matrix factor_loadings;
  double loading_low = 0.5;
  double loading_high = 1.0;
  double factor_vol = 0.01;
  double persistence = 0.5;
  double idio_loading = 1.0;
  double idio_vol = 0.01;
  double noise_vol = 0.01;
  double driver_noise_vol = 0.0;
  double noise_driver_vol = 0.01;
  /// Number of price dates.
  std::size_t horizon = 500;
  std::uint64_t seed = 0;
  Date start = Date{std::chrono::year{2019} / 1 / 1};
  ReturnMethod compounding = ReturnMethod::simple;

  void validate() const;
};

/// Series ids produced by generate_synthetic, grouped by role.
struct SyntheticIds {
  std::vector<std::string> assets;
  std::vector<std::string> common_drivers;
  std::vector<std::vector<std::string>> idio_drivers;  // per asset
  std::vector<std::string> noise_drivers;
};

SyntheticIds synthetic_ids(const SyntheticSpec& spec);

/// Assets first, then common, idiosyncratic and noise drivers. Pure
/// function of `spec`.
PricePanel generate_synthetic(const SyntheticSpec& spec);

}  // namespace hsp::data
