#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hsp/common.hpp"
#include "hsp/data.hpp"
#include "hsp/drivers.hpp"

namespace hsp::ccp {

enum class WeightScheme { equal, random };

std::string_view to_string(WeightScheme scheme) noexcept;
WeightScheme parse_weight_scheme(std::string_view text);

/// Monte-Carlo check of the portfolio/driver correlation orderings and the
/// common-cause screening conditions on seeded synthetic universes.
///
/// w weighs assets, q common drivers, z each asset's specific drivers and
/// t the full driver set; under `random` they are flat-Dirichlet draws.
/// The probability bounds X_i and Y of the causality argument have no
/// operational definition and are not computed.
struct CcpExperiment {
  data::SyntheticSpec spec{};
  std::size_t n_seeds = 200;
  WeightScheme weights = WeightScheme::equal;
  std::size_t weight_draws = 1;  // simplex draws tested for the portfolio ordering
  std::size_t lead = 1;          // p, days between driver and portfolio
  drivers::Thresholds thresholds{};
  std::size_t k = 3;
  std::uint64_t master_seed = 0;
  double tolerance = 1e-12;  // slack for the non-strict links of each chain
  unsigned threads = 1;

  void validate() const;
};

/// Conditional-frequency statistics on median-split events A, B (two
/// assets) and C (top common driver), all dated at the same step.
struct Screening {
  double residual_c = 0.0;      // |p(AB|C) - p(A|C) p(B|C)|
  double residual_not_c = 0.0;  // same under not-C
  double margin_a = 0.0;        // p(A|C) - p(A|not C)
  double margin_b = 0.0;        // p(B|C) - p(B|not C)
  bool monotone = false;        // both margins positive
};

struct SeedResult {
  std::size_t index = 0;
  std::uint64_t seed = 0;
  bool skipped = false;
  std::string skip_reason;

  /// Average |corr| of portfolio_{t+p} against common, specific (pooled over
  /// every asset/specific-driver pair) and all drivers at t.
  double avg_common = 0.0;
  double avg_specific = 0.0;
  double avg_all = 0.0;
  bool average_ordering = false;

  /// corr(portfolio_{t+p}, driver portfolio_t) for the common, specific and
  /// all-driver portfolios, first weight draw.
  double corr_common = 0.0;
  double corr_specific = 0.0;
  double corr_all = 0.0;
  bool portfolio_ordering = false;  // across every weight draw

  Screening screening;
  /// Every planted common driver ranks above every pure-noise driver.
  bool recovered = false;
  std::vector<std::string> chosen;
};

struct CcpResult {
  std::vector<SeedResult> seeds;
  std::size_t evaluated = 0;
  std::size_t skipped = 0;
  double average_pass_fraction = 0.0;
  double portfolio_pass_fraction = 0.0;
  double monotone_pass_fraction = 0.0;
  double recovery_fraction = 0.0;
  double mean_residual_c = 0.0;
  double mean_residual_not_c = 0.0;
};

/// Median-split screening statistics for three equal-length series.
Screening screening(std::span<const double> a, std::span<const double> b, std::span<const double> c);

/// Evaluates one seed; `index` picks the derived universe seed.
SeedResult run_seed(const CcpExperiment& experiment, std::size_t index);

CcpResult run_ccp(const CcpExperiment& experiment);

/// One row per seed.
void write_csv(const CcpResult& result, std::ostream& out);

}  // namespace hsp::ccp
