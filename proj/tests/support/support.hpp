#pragma once

// Shared helpers for unit and acceptance tests: fixture loading and naive
// reference implementations used as oracles on random inputs.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "hsp/allocator.hpp"
#include "hsp/common.hpp"
#include "hsp/nnet.hpp"

#ifndef HSP_FIXTURE_DIR
#define HSP_FIXTURE_DIR "tests/fixtures"
#endif

namespace hsp::testing {

inline const nlohmann::json& oracles() {
  static const nlohmann::json doc = [] {
    std::ifstream in(std::string(HSP_FIXTURE_DIR) + "/oracles.json");
    return nlohmann::json::parse(in);
  }();
  return doc;
}

inline Matrix to_matrix(const nlohmann::json& rows) {
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) {
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j].get<double>();
    }
  }
  return m;
}

inline Vector to_vector(const nlohmann::json& a) {
  Vector v(static_cast<Eigen::Index>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) v(static_cast<Eigen::Index>(i)) = a[i].get<double>();
  return v;
}

inline double max_abs_diff(const Vector& a, const Vector& b) { return (a - b).cwiseAbs().maxCoeff(); }

inline Matrix euclidean(const Matrix& x) {
  const auto n = x.rows();
  Matrix d(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) d(i, j) = (x.row(i) - x.row(j)).norm();
  }
  return d;
}

// Agglomeration that re-scores every cluster pair from its leaf sets.
inline alloc::Dendrogram naive_linkage(const Matrix& d, alloc::LinkageMethod method) {
  const auto n = static_cast<std::size_t>(d.rows());
  std::map<std::size_t, std::vector<std::size_t>> clusters;
  for (std::size_t i = 0; i < n; ++i) clusters[i] = {i};
  std::map<std::size_t, double> height;
  std::vector<double> centrality(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> row;
    for (std::size_t j = 0; j < n; ++j) row.push_back(d(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
    std::sort(row.begin(), row.end());
    for (double x : row) centrality[i] += x * x;
    height[i] = 0.0;
  }
  const auto key = [&](std::size_t id) {
    const auto& m = clusters[id];
    double c = INFINITY;
    for (auto i : m) c = std::min(c, centrality[i]);
    return std::tuple{-static_cast<double>(m.size()), -height[id], c, *std::min_element(m.begin(), m.end())};
  };
  alloc::Dendrogram out;
  out.leaves = n;
  std::size_t next = n;
  while (clusters.size() > 1) {
    double best = INFINITY;
    std::size_t ba = 0, bb = 0, blo = n, bhi = n;
    for (auto ia = clusters.begin(); ia != clusters.end(); ++ia) {
      for (auto ib = std::next(ia); ib != clusters.end(); ++ib) {
        double agg = method == alloc::LinkageMethod::single ? INFINITY : 0.0;
        for (auto i : ia->second) {
          for (auto j : ib->second) {
            const double x = d(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
            if (method == alloc::LinkageMethod::single) agg = std::min(agg, x);
            else if (method == alloc::LinkageMethod::complete) agg = std::max(agg, x);
            else agg += x;
          }
        }
        if (method == alloc::LinkageMethod::average) {
          agg /= static_cast<double>(ia->second.size() * ib->second.size());
        }
        const auto ma = *std::min_element(ia->second.begin(), ia->second.end());
        const auto mb = *std::min_element(ib->second.begin(), ib->second.end());
        const auto lo = std::min(ma, mb), hi = std::max(ma, mb);
        if (agg < best || (agg == best && std::pair{lo, hi} < std::pair{blo, bhi})) {
          best = agg;
          ba = ma < mb ? ia->first : ib->first;
          bb = ma < mb ? ib->first : ia->first;
          blo = lo;
          bhi = hi;
        }
      }
    }
    if (key(bb) < key(ba)) std::swap(ba, bb);
    auto merged = clusters[ba];
    merged.insert(merged.end(), clusters[bb].begin(), clusters[bb].end());
    out.merges.push_back({ba, bb, best, merged.size()});
    clusters.erase(ba);
    clusters.erase(bb);
    height[next] = best;
    clusters[next++] = std::move(merged);
  }
  return out;
}

inline void flatten(const alloc::Dendrogram& den, std::size_t node, std::vector<std::size_t>& out) {
  if (node < den.leaves) {
    out.push_back(node);
    return;
  }
  flatten(den, den.merges[node - den.leaves].left, out);
  flatten(den, den.merges[node - den.leaves].right, out);
}

inline std::vector<std::size_t> naive_order(const alloc::Dendrogram& den) {
  std::vector<std::size_t> out;
  flatten(den, den.leaves + den.merges.size() - 1, out);
  return out;
}

inline double naive_cluster_variance(const Matrix& c, const std::vector<std::size_t>& m) {
  Vector w(static_cast<Eigen::Index>(m.size()));
  for (std::size_t i = 0; i < m.size(); ++i) {
    const auto k = static_cast<Eigen::Index>(m[i]);
    w(static_cast<Eigen::Index>(i)) = 1.0 / c(k, k);
  }
  w /= w.sum();
  double v = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    for (std::size_t j = 0; j < m.size(); ++j) {
      v += w(static_cast<Eigen::Index>(i)) * w(static_cast<Eigen::Index>(j)) *
           c(static_cast<Eigen::Index>(m[i]), static_cast<Eigen::Index>(m[j]));
    }
  }
  return v;
}

// Depth-first recursion; same splits as the breadth-first library version.
inline void naive_bisect(const Matrix& c, const std::vector<std::size_t>& items, double mass, Vector& w) {
  if (items.size() == 1) {
    w(static_cast<Eigen::Index>(items[0])) = mass;
    return;
  }
  const std::size_t half = (items.size() + 1) / 2;
  std::vector<std::size_t> l(items.begin(), items.begin() + static_cast<std::ptrdiff_t>(half));
  std::vector<std::size_t> r(items.begin() + static_cast<std::ptrdiff_t>(half), items.end());
  const double vl = naive_cluster_variance(c, l), vr = naive_cluster_variance(c, r);
  const double a = vl + vr > 0 ? 1.0 - vl / (vl + vr) : 0.5;
  naive_bisect(c, l, mass * a, w);
  naive_bisect(c, r, mass * (1.0 - a), w);
}

inline Vector naive_bisection(const Matrix& c, const std::vector<std::size_t>& order) {
  Vector w = Vector::Zero(c.rows());
  naive_bisect(c, order, 1.0, w);
  return w;
}

// min(cap, lambda * v) with lambda found by bisection.
inline Vector water_fill(const Vector& v, double cap) {
  double lo = 0.0, hi = 1.0;
  while ((v * hi).cwiseMin(cap).sum() < 1.0) hi *= 2.0;
  for (int i = 0; i < 300; ++i) {
    const double mid = 0.5 * (lo + hi);
    ((v * mid).cwiseMin(cap).sum() > 1.0 ? hi : lo) = mid;
  }
  return (v * (0.5 * (lo + hi))).cwiseMin(cap);
}

inline Matrix centered_gram(const Matrix& x) {
  const Matrix xc = x.rowwise() - x.colwise().mean();
  return xc * xc.transpose();
}

inline Vector naive_hsp(const Matrix& coords) {
  const auto den = naive_linkage(euclidean(coords), alloc::LinkageMethod::single);
  return naive_bisection(centered_gram(coords), naive_order(den));
}

inline Vector random_simplex(std::mt19937_64& rng, Eigen::Index n) {
  std::exponential_distribution<double> e(1.0);
  Vector v(n);
  for (auto& x : v) x = e(rng);
  return v / v.sum();
}

// Largest elementwise relative error between reverse-mode input gradients
// and central differences in raw input units. Near-zero entries are judged
// against 1e-3 of the largest gradient magnitude.
inline double gradient_relative_error(const nnet::Mlp& net, const Matrix& X) {
  const Matrix analytic = net.input_gradients(X);
  Matrix numeric(X.rows(), X.cols());
  for (Eigen::Index c = 0; c < X.cols(); ++c) {
    const double h = 1e-4 * net.input_scale()(c);
    Matrix up = X, down = X;
    up.col(c).array() += h;
    down.col(c).array() -= h;
    numeric.col(c) = (net.predict(up) - net.predict(down)) / (2.0 * h);
  }
  const double floor = 1e-3 * std::max(analytic.cwiseAbs().maxCoeff(), 1e-300);
  double worst = 0.0;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
      const double a = analytic(i, j), b = numeric(i, j);
      worst = std::max(worst, std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor}));
    }
  }
  return worst;
}

}  // namespace hsp::testing
