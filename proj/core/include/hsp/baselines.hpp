#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

#include "hsp/allocator.hpp"
#include "hsp/common.hpp"

namespace hsp::baselines {

/// n weights of 1/n.
Vector equal_weight(std::size_t n);

enum class MvKind { max_sharpe, min_vol, quadratic_utility, target_return };

std::string_view to_string(MvKind kind) noexcept;
MvKind parse_mv_kind(std::string_view text);

struct MvObjective {
  MvKind kind = MvKind::min_vol;
  double risk_aversion = 1.0;  // quadratic_utility
  double target = 0.0;         // target_return, per-period
  double cap = 1.0;            // per-name upper bound

  void validate(std::size_t n) const;
};

struct SolverOptions {
  std::size_t max_iterations = 5000;
  double tolerance = 1e-10;  // max |w_k+1 - w_k|
};

/// Sample mean and 1/(T-1) covariance of a T x N return window.
struct Moments {
  Vector mean;
  Matrix covariance;
};
Moments estimate_moments(const Matrix& returns);

/// Euclidean projection onto {0 <= w <= cap, sum w = 1}.
Vector project_capped_simplex(const Vector& v, double cap);

/// Long-only mean-variance weights by projected gradient from 1/N.
Vector mean_variance(const Moments& moments, const MvObjective& objective, const SolverOptions& options = {});
Vector mean_variance(const Matrix& returns, const MvObjective& objective, const SolverOptions& options = {});

/// Objective value in minimization form (lower is better).
double mv_objective_value(const Moments& moments, const MvObjective& objective, const Vector& w);

/// Correlation-distance HRP: d = sqrt(0.5 (1 - rho)), then linkage,
/// quasi-diagonalization and recursive bisection on the sample covariance.
Vector hrp_correlation(const Matrix& returns, alloc::LinkageMethod method = alloc::LinkageMethod::single);

}  // namespace hsp::baselines
