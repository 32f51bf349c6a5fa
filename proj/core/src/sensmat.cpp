#include "hsp/sensmat.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <set>

#include <fmt/format.h>

namespace hsp::sensmat {

SensitivityEmbedding embed(std::span<const nnet::FitResult> fits, std::span<const std::string> driver_order) {
  if (fits.empty()) throw Error(ErrorCode::empty_universe, "embed: no fits");
  const std::set<std::string> wanted(driver_order.begin(), driver_order.end());
  if (wanted.size() != driver_order.size()) {
    throw Error(ErrorCode::validation, "embed: duplicate ids in driver order");
  }
  SensitivityEmbedding e;
  e.driver_ids.assign(driver_order.begin(), driver_order.end());
  e.coordinates.resize(static_cast<Eigen::Index>(fits.size()), static_cast<Eigen::Index>(driver_order.size()));
  for (std::size_t i = 0; i < fits.size(); ++i) {
    const auto& fit = fits[i];
    const std::set<std::string> have(fit.driver_ids.begin(), fit.driver_ids.end());
    if (have != wanted || fit.driver_ids.size() != driver_order.size() ||
        static_cast<std::size_t>(fit.mean_sensitivity.size()) != fit.driver_ids.size()) {
      throw Error(ErrorCode::inconsistent_universe,
                  fmt::format("embed: fit for '{}' does not cover exactly the requested drivers", fit.asset_id));
    }
    for (std::size_t c = 0; c < driver_order.size(); ++c) {
      const auto pos = std::find(fit.driver_ids.begin(), fit.driver_ids.end(), driver_order[c]) - fit.driver_ids.begin();
      e.coordinates(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = fit.mean_sensitivity(pos);
    }
    e.asset_ids.push_back(fit.asset_id);
  }
  if (!e.coordinates.allFinite()) throw Error(ErrorCode::validation, "embed: non-finite sensitivities");
  return e;
}

Matrix distance_matrix(const Matrix& coordinates) {
  const auto n = coordinates.rows();
  Matrix d = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      d(i, j) = d(j, i) = (coordinates.row(i) - coordinates.row(j)).norm();
    }
  }
  return d;
}

Matrix distance_matrix(const SensitivityEmbedding& embedding) { return distance_matrix(embedding.coordinates); }

PsdGram psd_gram(const Matrix& coordinates) {
  if (coordinates.rows() < 2) throw Error(ErrorCode::degenerate_input, "psd_gram: need at least two assets");
  const Matrix centered = coordinates.rowwise() - coordinates.colwise().mean();
  Matrix g = centered * centered.transpose();
  g = (0.5 * (g + g.transpose())).eval();
  if (g.cwiseAbs().maxCoeff() == 0.0) {
    throw Error(ErrorCode::degenerate_embedding, "psd_gram: all assets share the same sensitivity vector");
  }
  Eigen::SelfAdjointEigenSolver<Matrix> eig(g);
  const Vector& values = eig.eigenvalues();
  PsdGram out;
  out.repair_shift = std::max(0.0, -values.minCoeff());
  const Vector clipped = values.cwiseMax(0.0);
  out.gram = eig.eigenvectors() * clipped.asDiagonal() * eig.eigenvectors().transpose();
  out.gram = (0.5 * (out.gram + out.gram.transpose())).eval();
  return out;
}

PsdGram psd_gram(const SensitivityEmbedding& embedding) { return psd_gram(embedding.coordinates); }

SensitivityMatrix build(const SensitivityEmbedding& embedding) {
  auto pg = psd_gram(embedding);
  return {distance_matrix(embedding), std::move(pg.gram), pg.repair_shift};
}

void write_labeled_csv(std::ostream& out, const Matrix& m, std::span<const std::string> ids) {
  if (m.rows() != m.cols() || static_cast<std::size_t>(m.rows()) != ids.size()) {
    throw Error(ErrorCode::shape, "write_labeled_csv: matrix and labels disagree");
  }
  out << "id";
  for (const auto& id : ids) out << ',' << id;
  out << '\n';
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    out << ids[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < m.cols(); ++j) out << ',' << fmt::format("{}", m(i, j));
    out << '\n';
  }
}

}  // namespace hsp::sensmat
