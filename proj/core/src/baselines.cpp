#include "hsp/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include <fmt/format.h>

namespace hsp::baselines {

Vector equal_weight(std::size_t n) {
  if (n == 0) throw Error(ErrorCode::empty_universe, "equal_weight: empty universe");
  return Vector::Constant(static_cast<Eigen::Index>(n), 1.0 / static_cast<double>(n));
}

std::string_view to_string(MvKind kind) noexcept {
  switch (kind) {
    case MvKind::max_sharpe: return "max_sharpe";
    case MvKind::min_vol: return "min_vol";
    case MvKind::quadratic_utility: return "quadratic_utility";
    case MvKind::target_return: return "target_return";
  }
  return "min_vol";
}

MvKind parse_mv_kind(std::string_view text) {
  if (text == "max_sharpe") return MvKind::max_sharpe;
  if (text == "min_vol") return MvKind::min_vol;
  if (text == "quadratic_utility") return MvKind::quadratic_utility;
  if (text == "target_return") return MvKind::target_return;
  throw Error(ErrorCode::validation, fmt::format("unknown mean-variance objective '{}'", text));
}

void MvObjective::validate(std::size_t n) const {
  if (n == 0) throw Error(ErrorCode::empty_universe, "mean_variance: empty universe");
  if (!(cap * static_cast<double>(n) >= 1.0 - 1e-12)) {
    throw Error(ErrorCode::infeasible_cap, fmt::format("mean_variance: cap {} below 1/N", cap));
  }
  if (kind == MvKind::quadratic_utility && !(risk_aversion > 0.0)) {
    throw Error(ErrorCode::validation, "mean_variance: risk aversion must be positive");
  }
  if (!std::isfinite(target)) throw Error(ErrorCode::validation, "mean_variance: non-finite target");
}

Moments estimate_moments(const Matrix& returns) {
  const auto T = returns.rows();
  if (T < 2) throw Error(ErrorCode::insufficient_data, "estimate_moments: need at least two observations");
  Moments m;
  m.mean = returns.colwise().mean().transpose();
  const Matrix centered = returns.rowwise() - m.mean.transpose();
  m.covariance = (centered.transpose() * centered) / static_cast<double>(T - 1);
  return m;
}

Vector project_capped_simplex(const Vector& v, double cap) {
  const auto n = v.size();
  auto mass = [&](double tau) { return (v.array() - tau).cwiseMax(0.0).cwiseMin(cap).sum(); };
  double lo = v.minCoeff() - cap - 1.0;  // mass(lo) = n * cap >= 1
  double hi = v.maxCoeff();              // mass(hi) = 0
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    (mass(mid) > 1.0 ? lo : hi) = mid;
  }
  Vector w = (v.array() - 0.5 * (lo + hi)).cwiseMax(0.0).cwiseMin(cap);
  // absorb bisection residue into an interior coordinate
  const double residue = 1.0 - w.sum();
  for (Eigen::Index i = 0; i < n && residue != 0.0; ++i) {
    if (w(i) + residue >= 0.0 && w(i) + residue <= cap && w(i) > 0.0 && w(i) < cap) {
      w(i) += residue;
      break;
    }
  }
  return w;
}

namespace {

using Objective = std::function<double(const Vector&)>;
using Gradient = std::function<Vector(const Vector&)>;

// Projected gradient with backtracking on the standard sufficient-decrease
// condition for composite steps.
Vector projected_gradient(const Objective& f, const Gradient& grad, Vector w, double cap, double step0,
                          const SolverOptions& options) {
  double step = step0;
  double fw = f(w);
  for (std::size_t it = 0; it < options.max_iterations; ++it) {
    const Vector g = grad(w);
    Vector next;
    double fn = 0.0;
    for (int bt = 0; bt < 60; ++bt) {
      next = project_capped_simplex(w - step * g, cap);
      fn = f(next);
      const Vector delta = next - w;
      if (fn <= fw + g.dot(delta) + delta.squaredNorm() / (2.0 * step) + 1e-300) break;
      step *= 0.5;
    }
    const double change = (next - w).cwiseAbs().maxCoeff();
    if (fn <= fw) {
      w = std::move(next);
      fw = fn;
    }
    if (change < options.tolerance) break;
    step *= 1.5;  // let the step grow back after backtracking
  }
  return w;
}

double lipschitz_step(const Matrix& hessian) {
  const double lmax = Eigen::SelfAdjointEigenSolver<Matrix>(hessian, Eigen::EigenvaluesOnly).eigenvalues().maxCoeff();
  return lmax > 0.0 ? 1.0 / lmax : 1.0;
}

Vector solve_quadratic(const Moments& m, double linear_weight, double cap, const SolverOptions& options) {
  // minimize w' S w - linear_weight * mu' w
  const auto& S = m.covariance;
  const auto& mu = m.mean;
  Objective f = [&](const Vector& w) { return w.dot(S * w) - linear_weight * mu.dot(w); };
  Gradient g = [&](const Vector& w) -> Vector { return 2.0 * (S * w) - linear_weight * mu; };
  const auto n = mu.size();
  return projected_gradient(f, g, Vector::Constant(n, 1.0 / static_cast<double>(n)), cap,
                            lipschitz_step(2.0 * S), options);
}

// Greedy fill of the highest (or lowest) means up to the cap.
double extreme_return(const Vector& mu, double cap, bool highest) {
  std::vector<double> v(mu.data(), mu.data() + mu.size());
  std::sort(v.begin(), v.end());
  if (highest) std::reverse(v.begin(), v.end());
  double left = 1.0;
  double out = 0.0;
  for (double x : v) {
    const double take = std::min(cap, left);
    out += take * x;
    left -= take;
    if (left <= 0.0) break;
  }
  return out;
}

}  // namespace

double mv_objective_value(const Moments& m, const MvObjective& objective, const Vector& w) {
  const double var = w.dot(m.covariance * w);
  switch (objective.kind) {
    case MvKind::min_vol:
    case MvKind::target_return: return var;
    case MvKind::quadratic_utility: return -(m.mean.dot(w) - 0.5 * objective.risk_aversion * var);
    case MvKind::max_sharpe: return var > 0.0 ? -m.mean.dot(w) / std::sqrt(var) : 0.0;
  }
  return var;
}

Vector mean_variance(const Moments& m, const MvObjective& objective, const SolverOptions& options) {
  const auto n = static_cast<std::size_t>(m.mean.size());
  objective.validate(n);
  const double cap = std::min(1.0, objective.cap);
  const Vector start = equal_weight(n);

  switch (objective.kind) {
    case MvKind::min_vol: return solve_quadratic(m, 0.0, cap, options);
    case MvKind::quadratic_utility: {
      // mu'w - (lambda/2) w'Sw, scaled by 2/lambda into the common form
      return solve_quadratic(m, 2.0 / objective.risk_aversion, cap, options);
    }
    case MvKind::max_sharpe: {
      const auto& S = m.covariance;
      const auto& mu = m.mean;
      constexpr double floor = 1e-300;
      Objective f = [&](const Vector& w) {
        const double var = std::max(w.dot(S * w), floor);
        return -mu.dot(w) / std::sqrt(var);
      };
      Gradient g = [&](const Vector& w) -> Vector {
        const double var = std::max(w.dot(S * w), floor);
        const double sd = std::sqrt(var);
        return -(mu / sd - (mu.dot(w) / (var * sd)) * (S * w));
      };
      // scale-aware initial step: ratio curvature ~ lambda_max(S) / var
      const double var0 = std::max(start.dot(S * start), floor);
      const double lmax =
          Eigen::SelfAdjointEigenSolver<Matrix>(S, Eigen::EigenvaluesOnly).eigenvalues().maxCoeff();
      const double step0 = lmax > 0.0 ? std::sqrt(var0) / (lmax / std::sqrt(var0) + std::abs(mu.maxCoeff()) + floor)
                                      : 1.0;
      return projected_gradient(f, g, start, cap, step0, options);
    }
    case MvKind::target_return: {
      const double lo = extreme_return(m.mean, cap, false);
      const double hi = extreme_return(m.mean, cap, true);
      if (objective.target > hi + 1e-15) {
        throw Error(ErrorCode::infeasible,
                    fmt::format("mean_variance: target return {} outside attainable range [{}, {}]", objective.target,
                                lo, hi));
      }
      Vector w = solve_quadratic(m, 0.0, cap, options);
      if (m.mean.dot(w) >= objective.target) return w;
      // Lagrangian continuation: mu'w(nu) is non-decreasing in nu.
      double nu_lo = 0.0;
      double nu_hi = 1.0;
      Vector w_hi = solve_quadratic(m, nu_hi, cap, options);
      for (int i = 0; i < 200 && m.mean.dot(w_hi) < objective.target; ++i) {
        nu_lo = nu_hi;
        nu_hi *= 4.0;
        w_hi = solve_quadratic(m, nu_hi, cap, options);
      }
      if (m.mean.dot(w_hi) < objective.target) {
        // Numerically at the boundary: use the maximum-return allocation.
        return project_capped_simplex(m.mean * 1e12, cap);
      }
      for (int i = 0; i < 60 && nu_hi - nu_lo > 1e-12 * nu_hi; ++i) {
        const double mid = 0.5 * (nu_lo + nu_hi);
        Vector wm = solve_quadratic(m, mid, cap, options);
        if (m.mean.dot(wm) >= objective.target) {
          nu_hi = mid;
          w_hi = std::move(wm);
        } else {
          nu_lo = mid;
        }
      }
      return w_hi;
    }
  }
  return start;
}

Vector mean_variance(const Matrix& returns, const MvObjective& objective, const SolverOptions& options) {
  if (returns.rows() <= returns.cols()) {
    throw Error(ErrorCode::insufficient_data,
                fmt::format("mean_variance: window of {} rows must exceed {} assets", returns.rows(), returns.cols()));
  }
  return mean_variance(estimate_moments(returns), objective, options);
}

Vector hrp_correlation(const Matrix& returns, alloc::LinkageMethod method) {
  if (returns.rows() < 3) throw Error(ErrorCode::insufficient_data, "hrp_correlation: window must have >= 3 rows");
  const auto n = returns.cols();
  if (n == 0) throw Error(ErrorCode::empty_universe, "hrp_correlation: empty universe");
  const auto m = estimate_moments(returns);
  const Vector sd = m.covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(sd(i) > 0.0)) {
      throw Error(ErrorCode::degenerate_series, fmt::format("hrp_correlation: asset #{} has constant returns", i));
    }
  }
  if (n == 1) return Vector::Ones(1);
  Matrix d = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double rho = std::clamp(m.covariance(i, j) / (sd(i) * sd(j)), -1.0, 1.0);
      d(i, j) = d(j, i) = std::sqrt(std::max(0.0, 0.5 * (1.0 - rho)));
    }
  }
  const auto order = alloc::quasi_diagonalize(alloc::linkage(d, method));
  return alloc::recursive_bisection(m.covariance, order);
}

}  // namespace hsp::baselines
