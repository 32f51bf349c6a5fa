#include "hsp/common.hpp"

#include <charconv>

#include <fmt/format.h>

namespace hsp {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::format: return "format";
    case ErrorCode::insufficient_data: return "insufficient-data";
    case ErrorCode::no_overlap: return "no-overlap";
    case ErrorCode::degenerate_series: return "degenerate-series";
    case ErrorCode::validation: return "validation";
    case ErrorCode::no_common_drivers: return "no-common-drivers";
    case ErrorCode::divergence: return "divergence";
    case ErrorCode::no_viable_architecture: return "no-viable-architecture";
    case ErrorCode::shape: return "shape";
    case ErrorCode::inconsistent_universe: return "inconsistent-universe";
    case ErrorCode::degenerate_embedding: return "degenerate-embedding";
    case ErrorCode::degenerate_input: return "degenerate-input";
    case ErrorCode::degenerate_variance: return "degenerate-variance";
    case ErrorCode::infeasible_cap: return "infeasible-cap";
    case ErrorCode::empty_universe: return "empty-universe";
    case ErrorCode::infeasible: return "infeasible";
    case ErrorCode::insufficient_history: return "insufficient-history";
    case ErrorCode::allocator_failure: return "allocator-failure";
    case ErrorCode::io: return "io";
  }
  return "unknown";
}

namespace {

int parse_int(std::string_view text, std::string_view whole) {
  int value = 0;
  const auto* first = text.data();
  const auto* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc{} || ptr != last) {
    throw Error(ErrorCode::format, fmt::format("invalid date '{}'", whole));
  }
  return value;
}

}  // namespace

Date parse_date(std::string_view text) {
  if (text.size() != 10 || text[4] != '-' || text[7] != '-') {
    throw Error(ErrorCode::format, fmt::format("invalid date '{}', expected YYYY-MM-DD", text));
  }
  using namespace std::chrono;
  const year_month_day ymd{year{parse_int(text.substr(0, 4), text)},
                           month{static_cast<unsigned>(parse_int(text.substr(5, 2), text))},
                           day{static_cast<unsigned>(parse_int(text.substr(8, 2), text))}};
  if (!ymd.ok()) {
    throw Error(ErrorCode::format, fmt::format("invalid calendar date '{}'", text));
  }
  return sys_days{ymd};
}

std::string format_date(Date d) {
  using namespace std::chrono;
  const year_month_day ymd{d};
  return fmt::format("{:04d}-{:02d}-{:02d}", static_cast<int>(ymd.year()),
                     static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
}

Date add_months(Date d, int months) {
  using namespace std::chrono;
  const year_month_day ymd{d};
  year_month_day shifted = ymd + std::chrono::months{months};
  if (!shifted.ok()) {
    shifted = year_month_day{year_month_day_last{shifted.year(), month_day_last{shifted.month()}}};
  }
  return sys_days{shifted};
}

bool is_weekday(Date d) {
  const std::chrono::weekday wd{d};
  return wd != std::chrono::Saturday && wd != std::chrono::Sunday;
}

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t derive_seed(std::uint64_t base, std::string_view label) {
  // splitmix64 finalizer over the combined words
  std::uint64_t z = base ^ (fnv1a(label) + 0x9e3779b97f4a7c15ULL + (base << 6) + (base >> 2));
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace hsp
