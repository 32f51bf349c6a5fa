#include "hsp/allocator.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

#include <fmt/format.h>

namespace hsp::alloc {

std::string_view to_string(LinkageMethod method) noexcept {
  switch (method) {
    case LinkageMethod::single: return "single";
    case LinkageMethod::complete: return "complete";
    case LinkageMethod::average: return "average";
  }
  return "single";
}

LinkageMethod parse_linkage_method(std::string_view text) {
  if (text == "single") return LinkageMethod::single;
  if (text == "complete") return LinkageMethod::complete;
  if (text == "average") return LinkageMethod::average;
  throw Error(ErrorCode::validation, fmt::format("unknown linkage method '{}'", text));
}

namespace {

void check_distance(const Matrix& d) {
  if (d.rows() != d.cols()) throw Error(ErrorCode::shape, "linkage: distance matrix is not square");
  if (d.rows() < 2) throw Error(ErrorCode::degenerate_input, "linkage: need at least two assets");
  if (!d.allFinite()) throw Error(ErrorCode::validation, "linkage: non-finite distance");
  const double scale = std::max(1.0, d.cwiseAbs().maxCoeff());
  for (Eigen::Index i = 0; i < d.rows(); ++i) {
    if (d(i, i) != 0.0) throw Error(ErrorCode::validation, "linkage: distance diagonal must be zero");
    for (Eigen::Index j = 0; j < i; ++j) {
      if (d(i, j) < 0.0) throw Error(ErrorCode::validation, "linkage: negative distance");
      if (std::abs(d(i, j) - d(j, i)) > 1e-12 * scale) {
        throw Error(ErrorCode::validation, "linkage: distance matrix is not symmetric");
      }
    }
  }
}

}  // namespace

Dendrogram linkage(const Matrix& distance, LinkageMethod method) {
  check_distance(distance);
  const auto n = static_cast<std::size_t>(distance.rows());

  struct Cluster {
    std::size_t node;
    std::size_t min_leaf;
    std::size_t size;
    double height;
    double centrality;  // smallest total squared distance from a member leaf to all leaves
  };
  // Children are oriented by geometry only, so the leaf order (and everything
  // built on it) follows the assets under relabeling: larger child first, then
  // the later merge, then the more central member, then the smaller index.
  const auto goes_left = [](const Cluster& a, const Cluster& b) {
    if (a.size != b.size) return a.size > b.size;
    if (a.height != b.height) return a.height > b.height;
    if (a.centrality != b.centrality) return a.centrality < b.centrality;
    return a.min_leaf < b.min_leaf;
  };
  std::vector<Cluster> active;
  active.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    // Sorted summation keeps the total independent of asset order.
    std::vector<double> row(distance.row(static_cast<Eigen::Index>(i)).begin(),
                            distance.row(static_cast<Eigen::Index>(i)).end());
    std::sort(row.begin(), row.end());
    double total = 0.0;
    for (double x : row) total += x * x;
    active.push_back({i, i, 1, 0.0, total});
  }
  // Lance-Williams working matrix over active slots.
  Matrix d = 0.5 * (distance + distance.transpose());

  Dendrogram out;
  out.leaves = n;
  out.merges.reserve(n - 1);
  while (active.size() > 1) {
    std::size_t best_a = 0;
    std::size_t best_b = 1;
    double best = std::numeric_limits<double>::infinity();
    std::pair<std::size_t, std::size_t> best_key{n, n};
    for (std::size_t a = 0; a < active.size(); ++a) {
      for (std::size_t b = a + 1; b < active.size(); ++b) {
        const double dab = d(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
        const auto lo = std::min(active[a].min_leaf, active[b].min_leaf);
        const auto hi = std::max(active[a].min_leaf, active[b].min_leaf);
        if (dab < best || (dab == best && std::pair{lo, hi} < best_key)) {
          best = dab;
          best_a = a;
          best_b = b;
          best_key = {lo, hi};
        }
      }
    }
    auto left = active[best_a];
    auto right = active[best_b];
    if (goes_left(right, left)) std::swap(left, right);
    out.merges.push_back({left.node, right.node, best, left.size + right.size});

    const auto ia = static_cast<Eigen::Index>(best_a);
    const auto ib = static_cast<Eigen::Index>(best_b);
    const double na = static_cast<double>(active[best_a].size);
    const double nb = static_cast<double>(active[best_b].size);
    for (Eigen::Index c = 0; c < static_cast<Eigen::Index>(active.size()); ++c) {
      if (c == ia || c == ib) continue;
      double merged = 0.0;
      switch (method) {
        case LinkageMethod::single: merged = std::min(d(ia, c), d(ib, c)); break;
        case LinkageMethod::complete: merged = std::max(d(ia, c), d(ib, c)); break;
        case LinkageMethod::average: merged = (na * d(ia, c) + nb * d(ib, c)) / (na + nb); break;
      }
      d(ia, c) = d(c, ia) = merged;
    }
    active[best_a] = {n + out.merges.size() - 1, std::min(left.min_leaf, right.min_leaf), left.size + right.size, best,
                      std::min(left.centrality, right.centrality)};
    active.erase(active.begin() + static_cast<std::ptrdiff_t>(best_b));
    // drop row/column b
    const auto m = static_cast<Eigen::Index>(active.size());
    Matrix shrunk(m, m);
    for (Eigen::Index r = 0, rr = 0; r <= m; ++r) {
      if (r == ib) continue;
      for (Eigen::Index c = 0, cc = 0; c <= m; ++c) {
        if (c == ib) continue;
        shrunk(rr, cc++) = d(r, c);
      }
      ++rr;
    }
    d = std::move(shrunk);
  }
  return out;
}

std::vector<std::size_t> quasi_diagonalize(const Dendrogram& dendrogram) {
  const std::size_t n = dendrogram.leaves;
  if (n == 0) return {};
  if (dendrogram.merges.size() + 1 != n) {
    throw Error(ErrorCode::validation, "quasi_diagonalize: dendrogram needs N - 1 merges");
  }
  if (n == 1) return {0};
  std::vector<std::size_t> order;
  order.reserve(n);
  std::vector<std::size_t> stack{n + dendrogram.merges.size() - 1};
  while (!stack.empty()) {
    const auto node = stack.back();
    stack.pop_back();
    if (node < n) {
      order.push_back(node);
      continue;
    }
    const auto& m = dendrogram.merges.at(node - n);
    stack.push_back(m.right);
    stack.push_back(m.left);
  }
  if (order.size() != n) throw Error(ErrorCode::validation, "quasi_diagonalize: malformed dendrogram");
  return order;
}

namespace {

double cluster_variance(const Matrix& cov, std::span<const std::size_t> members) {
  const auto k = static_cast<Eigen::Index>(members.size());
  Vector w(k);
  Matrix sub(k, k);
  for (Eigen::Index i = 0; i < k; ++i) {
    const auto mi = static_cast<Eigen::Index>(members[static_cast<std::size_t>(i)]);
    w(i) = 1.0 / cov(mi, mi);
    for (Eigen::Index j = 0; j < k; ++j) {
      sub(i, j) = cov(mi, static_cast<Eigen::Index>(members[static_cast<std::size_t>(j)]));
    }
  }
  w /= w.sum();
  return w.dot(sub * w);
}

}  // namespace

Vector recursive_bisection(const Matrix& covariance, std::span<const std::size_t> ordering,
                           std::span<const std::string> ids) {
  const auto n = static_cast<std::size_t>(covariance.rows());
  if (covariance.cols() != covariance.rows()) throw Error(ErrorCode::shape, "recursive_bisection: non-square matrix");
  if (ordering.size() != n) throw Error(ErrorCode::shape, "recursive_bisection: ordering size mismatch");
  {
    std::vector<bool> seen(n, false);
    for (auto i : ordering) {
      if (i >= n || seen[i]) throw Error(ErrorCode::validation, "recursive_bisection: ordering is not a permutation");
      seen[i] = true;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    const double v = covariance(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i));
    if (!(v > 0.0) || !std::isfinite(v)) {
      const std::string name = i < ids.size() ? ids[i] : fmt::format("#{}", i);
      throw Error(ErrorCode::degenerate_variance,
                  fmt::format("recursive_bisection: non-positive variance {} for asset {}", v, name));
    }
  }

  Vector w = Vector::Ones(static_cast<Eigen::Index>(n));
  std::deque<std::vector<std::size_t>> pending;
  pending.emplace_back(ordering.begin(), ordering.end());
  while (!pending.empty()) {
    auto cluster = std::move(pending.front());
    pending.pop_front();
    if (cluster.size() < 2) continue;
    const std::size_t split = (cluster.size() + 1) / 2;
    std::vector<std::size_t> left(cluster.begin(), cluster.begin() + static_cast<std::ptrdiff_t>(split));
    std::vector<std::size_t> right(cluster.begin() + static_cast<std::ptrdiff_t>(split), cluster.end());
    const double vl = cluster_variance(covariance, left);
    const double vr = cluster_variance(covariance, right);
    const double alpha = (vl + vr) > 0.0 ? 1.0 - vl / (vl + vr) : 0.5;
    for (auto i : left) w(static_cast<Eigen::Index>(i)) *= alpha;
    for (auto i : right) w(static_cast<Eigen::Index>(i)) *= 1.0 - alpha;
    pending.push_back(std::move(left));
    pending.push_back(std::move(right));
  }
  return w;
}

Vector apply_cap(const Vector& weights, double cap) {
  const auto n = weights.size();
  if (n == 0) throw Error(ErrorCode::empty_universe, "apply_cap: empty weight vector");
  if (!(cap * static_cast<double>(n) >= 1.0 - 1e-12)) {
    throw Error(ErrorCode::infeasible_cap, fmt::format("apply_cap: cap {} below 1/N = {}", cap, 1.0 / static_cast<double>(n)));
  }
  Vector w = weights;
  std::vector<bool> capped(static_cast<std::size_t>(n), false);
  std::size_t n_capped = 0;
  for (;;) {
    bool violated = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!capped[static_cast<std::size_t>(i)] && w(i) > cap) {
        capped[static_cast<std::size_t>(i)] = true;
        ++n_capped;
        violated = true;
      }
    }
    if (!violated) break;
    double free_mass = 1.0 - cap * static_cast<double>(n_capped);
    double free_sum = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (capped[static_cast<std::size_t>(i)]) {
        w(i) = cap;
      } else {
        free_sum += w(i);
      }
    }
    free_mass = std::max(0.0, free_mass);
    const auto n_free = static_cast<double>(n) - static_cast<double>(n_capped);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (capped[static_cast<std::size_t>(i)]) continue;
      w(i) = free_sum > 0.0 ? w(i) * free_mass / free_sum : free_mass / n_free;
    }
  }
  return w;
}

void WeightVector::validate(std::optional<double> cap) const {
  if (static_cast<std::size_t>(weights.size()) != ids.size()) {
    throw Error(ErrorCode::shape, "weights: ids and values differ in length");
  }
  if (!weights.allFinite() || (weights.array() < 0.0).any()) {
    throw Error(ErrorCode::validation, "weights: negative or non-finite entry");
  }
  if (std::abs(weights.sum() - 1.0) > 1e-9) {
    throw Error(ErrorCode::validation, fmt::format("weights sum to {}", weights.sum()));
  }
  if (cap && (weights.array() > *cap + 1e-12).any()) {
    throw Error(ErrorCode::validation, fmt::format("weights exceed cap {}", *cap));
  }
}

double WeightVector::operator[](std::string_view id) const {
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] == id) return weights(static_cast<Eigen::Index>(i));
  }
  throw Error(ErrorCode::validation, fmt::format("no weight for '{}'", id));
}

WeightVector apply_cap(const WeightVector& weights, double cap) { return {weights.ids, apply_cap(weights.weights, cap)}; }

WeightVector hsp_weights(const sensmat::SensitivityEmbedding& embedding, const HspOptions& options) {
  const Matrix distance = sensmat::distance_matrix(embedding);
  const auto tree = linkage(distance, options.linkage);
  const auto order = quasi_diagonalize(tree);
  const auto gram = sensmat::psd_gram(embedding);
  Vector w = recursive_bisection(gram.gram, order, embedding.asset_ids);
  if (options.cap) w = apply_cap(w, *options.cap);
  return {embedding.asset_ids, std::move(w)};
}

nlohmann::json to_json(const WeightVector& weights) {
  nlohmann::json out = nlohmann::json::object();
  for (std::size_t i = 0; i < weights.ids.size(); ++i) out[weights.ids[i]] = weights.weights(static_cast<Eigen::Index>(i));
  return out;
}

nlohmann::json to_json(const Dendrogram& dendrogram) {
  nlohmann::json merges = nlohmann::json::array();
  for (const auto& m : dendrogram.merges) {
    merges.push_back({{"left", m.left}, {"right", m.right}, {"distance", m.distance}, {"size", m.size}});
  }
  return {{"leaves", dendrogram.leaves}, {"merges", std::move(merges)}};
}

}  // namespace hsp::alloc
