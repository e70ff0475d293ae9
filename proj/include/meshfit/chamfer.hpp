#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "meshfit/mesh.hpp"

namespace meshfit {

// Symmetric Chamfer distance between point sets:
//   1/2 * mean_a min_b |a-b|  +  1/2 * mean_b min_a |b-a|.
// Exhaustive O(PQ) scan; the point counts in this project never justify a
// spatial index. Summation runs in index order so results are reproducible.
inline double chamfer3d(const MatX3& a, const MatX3& b) {
  if (a.rows() == 0 || b.rows() == 0) throw std::invalid_argument("empty point set");
  auto one_sided = [](const MatX3& from, const MatX3& to) {
    double sum = 0.0;
    for (Eigen::Index i = 0; i < from.rows(); ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (Eigen::Index j = 0; j < to.rows(); ++j)
        best = std::min(best, (from.row(i) - to.row(j)).squaredNorm());
      sum += std::sqrt(best);
    }
    return sum / double(from.rows());
  };
  return 0.5 * one_sided(a, b) + 0.5 * one_sided(b, a);
}

}  // namespace meshfit
