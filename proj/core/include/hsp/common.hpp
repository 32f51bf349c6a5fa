#pragma once

#include <chrono>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Dense>

namespace hsp {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Failure categories surfaced by the library. The CLI maps `validation`
/// to exit code 1 and everything else to exit code 2.
enum class ErrorCode {
  format,
  insufficient_data,
  no_overlap,
  degenerate_series,
  validation,
  no_common_drivers,
  divergence,
  no_viable_architecture,
  shape,
  inconsistent_universe,
  degenerate_embedding,
  degenerate_input,
  degenerate_variance,
  infeasible_cap,
  empty_universe,
  infeasible,
  insufficient_history,
  allocator_failure,
  io,
};

std::string_view to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Calendar date at day resolution.
using Date = std::chrono::sys_days;

/// Parses `YYYY-MM-DD`. Throws Error(format) on anything else.
Date parse_date(std::string_view text);
std::string format_date(Date d);

/// Adds calendar months, clamping the day to the end of the target month.
Date add_months(Date d, int months);

bool is_weekday(Date d);

/// Mixes a 64-bit seed with a string label; stable across platforms.
std::uint64_t derive_seed(std::uint64_t base, std::string_view label);

/// FNV-1a 64-bit hash of arbitrary bytes.
std::uint64_t fnv1a(std::string_view bytes);

}  // namespace hsp
