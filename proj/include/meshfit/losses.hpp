#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <json.hpp>
#include <stdexcept>
#include <string>
#include <vector>

#include "meshfit/image.hpp"
#include "meshfit/mesh.hpp"
#include "meshfit/offset_field.hpp"
#include "meshfit/raster.hpp"
#include "meshfit/rng.hpp"

namespace meshfit {

struct LossWeights {
  double lambda_hair = 10.0;
  double lambda_o = 1.0;
  double lambda_chm = 0.01;
  double lambda_lap = 10.0;
  double lambda_seg = 10.0;
};

inline void validate(const LossWeights& w) {
  if (w.lambda_hair < 0 || w.lambda_o < 0 || w.lambda_chm < 0 || w.lambda_lap < 0 ||
      w.lambda_seg < 0)
    throw std::invalid_argument("loss weights must be nonnegative");
}

// Unweighted per-term values; `total` carries the weights. Keys are sorted
// by std::map so serialized traces are stable.
struct LossReport {
  std::map<std::string, double> terms;
  double total = 0.0;

  nlohmann::json to_json() const {
    nlohmann::json j;
    for (const auto& [name, value] : terms) j[name] = value;
    j["total"] = total;
    return j;
  }
};

// ---- occupancy ------------------------------------------------------------

// mean((pred - target)^2); mean reduction keeps weights resolution-independent.
inline double occupancy_term(const SilhouetteImage& pred, const SilhouetteImage& target) {
  if (!same_size(pred, target)) throw std::invalid_argument("occupancy: size mismatch");
  return (pred.values - target.values).array().square().mean();
}

inline Eigen::MatrixXd occupancy_term_grad(const SilhouetteImage& pred,
                                           const SilhouetteImage& target) {
  if (!same_size(pred, target)) throw std::invalid_argument("occupancy: size mismatch");
  return 2.0 / double(pred.height * pred.width) * (pred.values - target.values);
}

inline double occupancy_loss(const SilhouetteImage& o_hair, const SilhouetteImage& o_full,
                             const SilhouetteImage& s_hair, const SilhouetteImage& s_full,
                             double lambda_hair, double lambda_o) {
  return lambda_hair * occupancy_term(o_hair, s_hair) +
         lambda_o * occupancy_term(o_full, s_full);
}

// ---- 2D Chamfer -----------------------------------------------------------

struct Chamfer2d {
  double value = 0.0;
  MatX2 grad;  // w.r.t. `projected` only; the samples are data
};

// 1/(2Nt) sum_i |p_i - nn(p_i, Q)| + 1/(2Nt) sum_j |q_j - nn(q_j, P)|.
// Arg-min ties break toward the lowest index; the gradient of |.| at zero
// distance is taken as 0.
inline Chamfer2d chamfer2d_loss_grad(const MatX2& projected, const MatX2& samples) {
  if (projected.rows() == 0 || samples.rows() == 0)
    throw std::invalid_argument("empty point set");
  if (projected.rows() != samples.rows())
    throw std::invalid_argument("chamfer2d: point counts must match");
  const Eigen::Index n = projected.rows();
  Chamfer2d out;
  out.grad = MatX2::Zero(n, 2);
  const double inv = 1.0 / (2.0 * double(n));
  double sum_forward = 0.0, sum_backward = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    Eigen::Index arg = 0;
    for (Eigen::Index j = 0; j < samples.rows(); ++j) {
      const double d2 = (projected.row(i) - samples.row(j)).squaredNorm();
      if (d2 < best) {
        best = d2;
        arg = j;
      }
    }
    const double dist = std::sqrt(best);
    sum_forward += dist;
    if (dist > 0)
      out.grad.row(i) += inv / dist * (projected.row(i) - samples.row(arg));
  }
  for (Eigen::Index j = 0; j < samples.rows(); ++j) {
    double best = std::numeric_limits<double>::infinity();
    Eigen::Index arg = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double d2 = (samples.row(j) - projected.row(i)).squaredNorm();
      if (d2 < best) {
        best = d2;
        arg = i;
      }
    }
    const double dist = std::sqrt(best);
    sum_backward += dist;
    if (dist > 0)
      out.grad.row(arg) += inv / dist * (projected.row(arg) - samples.row(j));
  }
  out.value = 0.5 * (sum_forward / double(n)) + 0.5 * (sum_backward / double(n));
  return out;
}

inline double chamfer2d_loss(const MatX2& projected, const MatX2& samples) {
  return chamfer2d_loss_grad(projected, samples).value;
}

// ---- mask sampling ---------------------------------------------------------

// Draws pixel centers i.i.d. with probability proportional to mask value,
// returned in NDC. Deterministic for a given seed.
inline MatX2 sample_mask_points(const SilhouetteImage& mask, int count, uint64_t seed) {
  if (count < 1) throw std::invalid_argument("sample count must be >= 1");
  bool any_lit = false;
  std::vector<double> cumulative;
  cumulative.reserve(size_t(mask.height * mask.width));
  double total = 0.0;
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      const double v = mask.values(y, x);
      any_lit = any_lit || v > 0.5;
      total += v;
      cumulative.push_back(total);
    }
  }
  if (!any_lit || total <= 0.0) throw std::invalid_argument("empty mask");
  Rng rng(seed);
  MatX2 out(count, 2);
  for (int s = 0; s < count; ++s) {
    const double u = rng.uniform() * total;
    const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    const int flat = std::min(int(it - cumulative.begin()), mask.height * mask.width - 1);
    const int y = flat / mask.width;
    const int x = flat % mask.width;
    out(s, 0) = pixel_to_ndc_x(x, mask.width);
    out(s, 1) = pixel_to_ndc_y(y, mask.height);
  }
  return out;
}

// ---- Laplacian ------------------------------------------------------------

struct Laplacian {
  double value = 0.0;
  MatX3 grad;
};

// (1/V) sum_i || dv_i - mean_{j in N(i)} dv_j ||_1. Isolated vertices
// contribute ||dv_i||_1. Subgradient of |.| at 0 is taken as 0.
inline Laplacian laplacian_loss_grad(const MatX3& offsets, const VertexAdjacency& adj) {
  if (int(offsets.rows()) != adj.count())
    throw std::invalid_argument("laplacian: adjacency does not cover offsets");
  const Eigen::Index n = offsets.rows();
  Laplacian out;
  out.grad = MatX3::Zero(n, 3);
  if (n == 0) return out;
  const double inv_n = 1.0 / double(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& nb = adj.neighbors[size_t(i)];
    Eigen::RowVector3d mean = Eigen::RowVector3d::Zero();
    for (int j : nb) mean += offsets.row(j);
    if (!nb.empty()) mean /= double(nb.size());
    const Eigen::RowVector3d r = offsets.row(i) - mean;
    for (int c = 0; c < 3; ++c) {
      out.value += inv_n * std::abs(r[c]);
      const double s = r[c] > 0 ? 1.0 : (r[c] < 0 ? -1.0 : 0.0);
      if (s == 0.0) continue;
      out.grad(i, c) += inv_n * s;
      if (!nb.empty()) {
        const double share = inv_n * s / double(nb.size());
        for (int j : nb) out.grad(j, c) -= share;
      }
    }
  }
  return out;
}

inline double laplacian_loss(const MatX3& offsets, const VertexAdjacency& adj) {
  return laplacian_loss_grad(offsets, adj).value;
}

// ---- Dice -----------------------------------------------------------------

struct Dice {
  double value = 0.0;
  Eigen::MatrixXd grad;  // w.r.t. pred
};

// 1 - 2 <pred, target> / (|pred|^2 + |target|^2).
inline Dice dice_loss_grad(const SilhouetteImage& pred, const SilhouetteImage& target) {
  if (!same_size(pred, target)) throw std::invalid_argument("dice: size mismatch");
  const double dot = (pred.values.array() * target.values.array()).sum();
  const double denom = pred.values.squaredNorm() + target.values.squaredNorm();
  if (denom <= 0.0) throw std::invalid_argument("undefined Dice: both images all-zero");
  Dice out;
  out.value = 1.0 - 2.0 * dot / denom;
  out.grad = (4.0 * dot / (denom * denom)) * pred.values - (2.0 / denom) * target.values;
  return out;
}

inline double dice_loss(const SilhouetteImage& pred, const SilhouetteImage& target) {
  return dice_loss_grad(pred, target).value;
}

// ---- weighted total with gradient routing ----------------------------------

struct GeometricScene {
  const TriMesh& mesh;
  const MatX3& base_vertices;  // v_t, before offsets
  const OffsetField& field;
  Camera camera;
  RasterConfig raster;
  int height = 0;
  int width = 0;
  const SilhouetteImage& s_full;
  const SilhouetteImage& s_hair;
  uint64_t chamfer_seed = 0;
};

struct TotalGeometricLoss {
  LossReport report;
  // Weighted per-source gradients w.r.t. the offset coefficients m. Region
  // routing is enforced by exact zeroing:
  //   hair-silhouette term  -> hair rows only
  //   full-silhouette terms -> neck rows only (hair detached)
  //   chamfer / laplacian   -> hair + neck rows
  // Face/ear rows are zero in every component.
  MatX3 grad_hair_silhouette;
  MatX3 grad_full_silhouette;
  MatX3 grad_chamfer;
  MatX3 grad_laplacian;
  MatX3 grad;  // sum of the four components

  // Weighted gradients w.r.t. the deformed vertex positions, for optional
  // shape refinement. Same vertex-level routing for the silhouette terms,
  // but no face/ear masking (those vertices move with the shape). The
  // Laplacian depends only on the offsets, not on positions.
  MatX3 grad_positions;

  SilhouetteImage o_full;
  SilhouetteImage o_hair;
  int visible_count = 0;
};

namespace detail {

inline void zero_rows_except(MatX3& m, const TriMesh& mesh, Region keep) {
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    if (!mesh.regions.is(int(i), keep)) m.row(i).setZero();
}

inline void zero_face_ear_rows(MatX3& m, const TriMesh& mesh) {
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    if (mesh.regions.is(int(i), Region::Face) || mesh.regions.is(int(i), Region::Ears))
      m.row(i).setZero();
}

inline void zero_region_rows(MatX3& m, const TriMesh& mesh, Region drop) {
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    if (mesh.regions.is(int(i), drop)) m.row(i).setZero();
}

}  // namespace detail

// Evaluates every term of the geometric objective at the scene's current
// offsets and assembles routed gradients. All terms are reported even when
// their weight is zero; gradient passes run only for positive weights.
inline TotalGeometricLoss total_geometric_loss(const GeometricScene& scene,
                                               const LossWeights& weights,
                                               const VertexAdjacency& adj) {
  validate(weights);
  if (!same_size(scene.s_full, scene.s_hair) || scene.s_full.height != scene.height ||
      scene.s_full.width != scene.width)
    throw std::invalid_argument("target image sizes disagree with scene");

  const TriMesh& mesh = scene.mesh;
  const Eigen::Index n = scene.base_vertices.rows();
  const MatX3 deformed = apply_offsets(scene.base_vertices, scene.field);
  const std::vector<Triangle> hair_tris =
      triangles_in_regions(mesh, {Region::Hair, Region::Face, Region::Ears});

  TotalGeometricLoss out;
  out.o_full = rasterize_soft(mesh.triangles, deformed, scene.camera, scene.raster,
                              scene.height, scene.width);
  out.o_hair = rasterize_soft(hair_tris, deformed, scene.camera, scene.raster, scene.height,
                              scene.width);
  out.grad_hair_silhouette = MatX3::Zero(n, 3);
  out.grad_full_silhouette = MatX3::Zero(n, 3);
  out.grad_chamfer = MatX3::Zero(n, 3);
  out.grad_laplacian = MatX3::Zero(n, 3);
  out.grad_positions = MatX3::Zero(n, 3);

  // occupancy + dice values
  const double occ_hair = occupancy_term(out.o_hair, scene.s_hair);
  const double occ_full = occupancy_term(out.o_full, scene.s_full);
  double dice = 0.0;
  const bool dice_defined =
      out.o_full.values.squaredNorm() + scene.s_full.values.squaredNorm() > 0.0;
  if (dice_defined)
    dice = dice_loss(out.o_full, scene.s_full);
  else if (weights.lambda_seg > 0)
    throw std::invalid_argument("undefined Dice: both images all-zero");

  // chamfer on projected visible vertices vs points sampled from the mask
  const std::vector<bool> visible =
      visible_vertices(mesh, deformed, scene.camera, scene.height, scene.width);
  std::vector<int> vis_idx;
  for (Eigen::Index i = 0; i < n; ++i)
    if (visible[size_t(i)]) vis_idx.push_back(int(i));
  out.visible_count = int(vis_idx.size());

  double chamfer = 0.0;
  MatX2 chamfer_grad_2d;
  if (!vis_idx.empty()) {
    const MatX2 ndc = project(scene.camera, deformed).ndc;
    MatX2 projected(Eigen::Index(vis_idx.size()), 2);
    for (size_t k = 0; k < vis_idx.size(); ++k) projected.row(Eigen::Index(k)) = ndc.row(vis_idx[k]);
    const MatX2 samples =
        sample_mask_points(scene.s_full, int(vis_idx.size()), scene.chamfer_seed);
    const Chamfer2d ch = chamfer2d_loss_grad(projected, samples);
    chamfer = ch.value;
    chamfer_grad_2d = ch.grad;
  }

  const Laplacian lap = laplacian_loss_grad(scene.field.displacements(), adj);

  out.report.terms = {{"occupancy_hair", occ_hair},
                      {"occupancy_full", occ_full},
                      {"chamfer2d", chamfer},
                      {"laplacian", lap.value},
                      {"dice", dice}};
  out.report.total = weights.lambda_hair * occ_hair + weights.lambda_o * occ_full +
                     weights.lambda_chm * chamfer + weights.lambda_lap * lap.value +
                     weights.lambda_seg * dice;

  // gradient passes
  const Eigen::Matrix<double, 2, 3> proj_jac =
      scene.camera.scale * scene.camera.rotation.topRows<2>();

  if (weights.lambda_hair > 0) {
    const Eigen::MatrixXd up =
        weights.lambda_hair * occupancy_term_grad(out.o_hair, scene.s_hair);
    MatX3 g = rasterize_soft_grad(hair_tris, deformed, scene.camera, scene.raster,
                                  scene.height, scene.width, up);
    {
      MatX3 gp = g;
      detail::zero_region_rows(gp, mesh, Region::Neck);  // structurally zero already
      out.grad_positions += gp;
    }
    MatX3 gm = g.cwiseProduct(scene.field.normals);
    detail::zero_rows_except(gm, mesh, Region::Hair);
    out.grad_hair_silhouette = gm;
  }

  if (weights.lambda_o > 0 || (weights.lambda_seg > 0 && dice_defined)) {
    Eigen::MatrixXd up = Eigen::MatrixXd::Zero(scene.height, scene.width);
    if (weights.lambda_o > 0)
      up += weights.lambda_o * occupancy_term_grad(out.o_full, scene.s_full);
    if (weights.lambda_seg > 0 && dice_defined)
      up += weights.lambda_seg * dice_loss_grad(out.o_full, scene.s_full).grad;
    MatX3 g = rasterize_soft_grad(mesh.triangles, deformed, scene.camera, scene.raster,
                                  scene.height, scene.width, up);
    {
      MatX3 gp = g;
      detail::zero_region_rows(gp, mesh, Region::Hair);  // hair detached
      out.grad_positions += gp;
    }
    MatX3 gm = g.cwiseProduct(scene.field.normals);
    detail::zero_rows_except(gm, mesh, Region::Neck);
    out.grad_full_silhouette = gm;
  }

  if (weights.lambda_chm > 0 && !vis_idx.empty()) {
    MatX3 g = MatX3::Zero(n, 3);
    for (size_t k = 0; k < vis_idx.size(); ++k) {
      const Eigen::RowVector2d g2 = weights.lambda_chm * chamfer_grad_2d.row(Eigen::Index(k));
      g.row(vis_idx[k]) = g2 * proj_jac;
    }
    out.grad_positions += g;
    MatX3 gm = g.cwiseProduct(scene.field.normals);
    detail::zero_face_ear_rows(gm, mesh);
    out.grad_chamfer = gm;
  }

  if (weights.lambda_lap > 0) {
    MatX3 gm = (weights.lambda_lap * lap.grad).cwiseProduct(scene.field.normals);
    detail::zero_face_ear_rows(gm, mesh);
    out.grad_laplacian = gm;
    // no position gradient: the penalty reads offsets, not positions
  }

  out.grad = out.grad_hair_silhouette + out.grad_full_silhouette + out.grad_chamfer +
             out.grad_laplacian;
  return out;
}

}  // namespace meshfit
