#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "hsp/common.hpp"
#include "hsp/nnet.hpp"

namespace hsp::sensmat {

/// Assets as points in common-driver sensitivity coordinates.
struct SensitivityEmbedding {
  std::vector<std::string> asset_ids;
  std::vector<std::string> driver_ids;
  Matrix coordinates;  // N x D
};

struct SensitivityMatrix {
  Matrix distance;  // Euclidean, N x N
  Matrix gram;      // centered, eigenvalue-clipped, N x N
  double repair_shift = 0.0;
};

/// Row i is the mean sensitivity of fits[i], columns in `driver_order`.
SensitivityEmbedding embed(std::span<const nnet::FitResult> fits, std::span<const std::string> driver_order);

Matrix distance_matrix(const SensitivityEmbedding& embedding);
Matrix distance_matrix(const Matrix& coordinates);

struct PsdGram {
  Matrix gram;
  double repair_shift = 0.0;
};

/// Classical-scaling Gram of the row-centered coordinates with negative
/// eigenvalues clipped to zero. The diagonal serves as pseudo-variances.
PsdGram psd_gram(const SensitivityEmbedding& embedding);
PsdGram psd_gram(const Matrix& coordinates);

SensitivityMatrix build(const SensitivityEmbedding& embedding);

/// Labeled square matrix: header `id,<id>,...`, one row per id.
void write_labeled_csv(std::ostream& out, const Matrix& m, std::span<const std::string> ids);

}  // namespace hsp::sensmat
