#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <algorithm>
#include <stdexcept>
#include <vector>

#include "meshfit/mesh.hpp"

namespace meshfit {

// Low-rank PCA basis over flattened offset fields (3N rows). Hair and neck
// blocks are fit independently on their own rows and embedded side by side:
// columns [0, k_hair) are supported on hair rows only, columns
// [k_hair, k_hair+k_neck) on neck rows only, with exact zeros elsewhere.
// Singular values are non-increasing within each block.
struct LinearOffsetBasis {
  int vertex_count = 0;
  int k_hair = 0;
  int k_neck = 0;
  bool centered = true;           // false reproduces the plain eta = F^T dv form
  Eigen::VectorXd mean;           // 3N; zero when centered == false
  Eigen::MatrixXd components;     // 3N x (k_hair + k_neck), orthonormal columns
  Eigen::VectorXd singular_values;
  std::vector<int> hair_rows;     // flattened row indices per block
  std::vector<int> neck_rows;

  int k_total() const { return k_hair + k_neck; }
};

namespace detail {

inline std::vector<int> region_rows(const RegionPartition& regions, Region r) {
  std::vector<int> rows;
  for (int i = 0; i < regions.count(); ++i)
    if (regions.label[size_t(i)] == r)
      for (int c = 0; c < 3; ++c) rows.push_back(3 * i + c);
  return rows;
}

}  // namespace detail

// Fits the per-region PCA blocks of `fields` (3N x M, one fitted offset
// field per column). Requires 1 <= k <= M per block and k <= block rows.
inline LinearOffsetBasis fit_offset_basis(const Eigen::MatrixXd& fields,
                                          const RegionPartition& regions, int k_hair,
                                          int k_neck, bool centered = true) {
  const int m = int(fields.cols());
  if (fields.rows() % 3 != 0) throw std::invalid_argument("fields must have 3N rows");
  const int n = int(fields.rows() / 3);
  if (regions.count() != n) throw std::invalid_argument("region partition size mismatch");
  if (k_hair < 1 || k_neck < 1) throw std::invalid_argument("component counts must be >= 1");
  if (k_hair > m || k_neck > m)
    throw std::invalid_argument("component count exceeds sample count");

  LinearOffsetBasis basis;
  basis.vertex_count = n;
  basis.k_hair = k_hair;
  basis.k_neck = k_neck;
  basis.centered = centered;
  basis.mean = Eigen::VectorXd::Zero(3 * n);
  basis.components = Eigen::MatrixXd::Zero(3 * n, k_hair + k_neck);
  basis.singular_values = Eigen::VectorXd::Zero(k_hair + k_neck);
  basis.hair_rows = detail::region_rows(regions, Region::Hair);
  basis.neck_rows = detail::region_rows(regions, Region::Neck);

  auto fit_block = [&](const std::vector<int>& rows, int k, int col0) {
    if (int(rows.size()) < k)
      throw std::invalid_argument("component count exceeds block row count");
    Eigen::MatrixXd block(Eigen::Index(rows.size()), m);
    for (size_t r = 0; r < rows.size(); ++r) block.row(Eigen::Index(r)) = fields.row(rows[r]);
    if (centered) {
      const Eigen::VectorXd mu = block.rowwise().mean();
      block.colwise() -= mu;
      for (size_t r = 0; r < rows.size(); ++r) basis.mean(rows[r]) = mu(Eigen::Index(r));
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(block, Eigen::ComputeThinU);
    for (int c = 0; c < k; ++c) {
      basis.singular_values(col0 + c) = svd.singularValues()(c);
      for (size_t r = 0; r < rows.size(); ++r)
        basis.components(rows[r], col0 + c) = svd.matrixU()(Eigen::Index(r), c);
    }
  };
  fit_block(basis.hair_rows, k_hair, 0);
  fit_block(basis.neck_rows, k_neck, k_hair);
  return basis;
}

// Least-squares coefficients; with orthonormal columns the pseudo-inverse
// collapses to eta = F^T (dv - mean).
inline Eigen::VectorXd project(const LinearOffsetBasis& basis, const Eigen::VectorXd& field) {
  if (field.size() != 3 * basis.vertex_count)
    throw std::invalid_argument("project: field length mismatch");
  return basis.components.transpose() * (field - basis.mean);
}

inline Eigen::VectorXd reconstruct_linear(const LinearOffsetBasis& basis,
                                          const Eigen::VectorXd& eta) {
  if (eta.size() != basis.k_total())
    throw std::invalid_argument("reconstruct_linear: coefficient length mismatch");
  return basis.mean + basis.components * eta;
}

struct CoefficientEdit {
  Eigen::VectorXd eta;
  Eigen::VectorXd field;  // 3N reconstruction at the edited coefficients
};

inline CoefficientEdit edit_coefficient(const LinearOffsetBasis& basis,
                                        const Eigen::VectorXd& eta, int index,
                                        double value) {
  if (index < 0 || index >= basis.k_total())
    throw std::invalid_argument("edit_coefficient: index out of range");
  CoefficientEdit out;
  out.eta = eta;
  out.eta(index) = value;
  out.field = reconstruct_linear(basis, out.eta);
  return out;
}

// Nearest-rank order statistics at ranks floor(q*M) clamped to [1, M].
struct ComponentStats {
  double min, p10, p25, p75, p90, max;
};

inline std::vector<ComponentStats> coefficient_statistics(const Eigen::MatrixXd& etas) {
  // etas: M rows (one per fitted field) x K components
  const int m = int(etas.rows());
  if (m < 1) throw std::invalid_argument("empty coefficient dataset");
  auto rank_value = [&](std::vector<double>& sorted, double q) {
    const int rank = std::clamp(int(std::floor(q * m)), 1, m);
    return sorted[size_t(rank - 1)];
  };
  std::vector<ComponentStats> out;
  for (int k = 0; k < int(etas.cols()); ++k) {
    std::vector<double> values(static_cast<size_t>(m));
    for (int i = 0; i < m; ++i) values[size_t(i)] = etas(i, k);
    std::sort(values.begin(), values.end());
    out.push_back({values.front(), rank_value(values, 0.10), rank_value(values, 0.25),
                   rank_value(values, 0.75), rank_value(values, 0.90), values.back()});
  }
  return out;
}

}  // namespace meshfit
