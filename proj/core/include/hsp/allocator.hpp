#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "hsp/common.hpp"
#include "hsp/sensmat.hpp"

namespace hsp::alloc {

enum class LinkageMethod { single, complete, average };

std::string_view to_string(LinkageMethod method) noexcept;
LinkageMethod parse_linkage_method(std::string_view text);

/// One agglomeration step. Leaves are 0..N-1; the cluster created by merge k
/// has id N + k. `left` is the larger child; equal sizes put the later merge,
/// then the member with the smallest total squared distance to all leaves,
/// then the smaller leaf index on the left. Only the last rule looks at
/// labels, so leaf order follows the assets under relabeling.
struct Merge {
  std::size_t left = 0;
  std::size_t right = 0;
  double distance = 0.0;
  std::size_t size = 0;
};

struct Dendrogram {
  std::size_t leaves = 0;
  std::vector<Merge> merges;  // N - 1 entries
};

/// Agglomerative clustering. Among equally close cluster pairs, the pair
/// with the lexicographically smallest (min leaf, min leaf) wins.
Dendrogram linkage(const Matrix& distance, LinkageMethod method = LinkageMethod::single);

/// Depth-first leaf sequence from the root, left child first.
std::vector<std::size_t> quasi_diagonalize(const Dendrogram& dendrogram);

/// Top-down split allocation on `covariance` (a PSD matrix whose diagonal is
/// strictly positive) following `ordering`. Returns weights indexed by the
/// original asset positions. `ids` only decorates error messages.
Vector recursive_bisection(const Matrix& covariance, std::span<const std::size_t> ordering,
                           std::span<const std::string> ids = {});

/// Clip-and-redistribute until no weight exceeds `cap`.
Vector apply_cap(const Vector& weights, double cap);

/// Named weights; non-negative and summing to one.
struct WeightVector {
  std::vector<std::string> ids;
  Vector weights;

  void validate(std::optional<double> cap = std::nullopt) const;
  double operator[](std::string_view id) const;
};

WeightVector apply_cap(const WeightVector& weights, double cap);

struct HspOptions {
  LinkageMethod linkage = LinkageMethod::single;
  std::optional<double> cap;
};

/// distance_matrix -> linkage -> quasi_diagonalize -> psd_gram ->
/// recursive_bisection -> apply_cap.
WeightVector hsp_weights(const sensmat::SensitivityEmbedding& embedding, const HspOptions& options = {});

nlohmann::json to_json(const WeightVector& weights);
nlohmann::json to_json(const Dendrogram& dendrogram);

}  // namespace hsp::alloc
