#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "meshfit/adam.hpp"
#include "meshfit/blendshape.hpp"
#include "meshfit/losses.hpp"
#include "meshfit/mesh.hpp"
#include "meshfit/offset_field.hpp"
#include "meshfit/raster.hpp"
#include "meshfit/rng.hpp"

namespace meshfit {

struct FitConfig {
  LossWeights weights;
  int iterations = 500;
  int image_size = 0;  // 0 = take the target images' size; else must match
  RasterConfig raster;
  uint64_t seed = 0;
  bool optimize_shape = false;
  double lr = 1e-2;        // offset-coefficient rate; direct coordinate
                           // optimization, not a network-training rate
  double shape_lr = 1e-3;
  double beta1 = 0.0;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
};

inline void validate(const FitConfig& cfg) {
  validate(cfg.weights);
  validate(cfg.raster);
  if (cfg.iterations < 1) throw std::invalid_argument("iterations must be >= 1");
  if (!(cfg.lr > 0)) throw std::invalid_argument("lr must be > 0");
  if (!(cfg.shape_lr > 0)) throw std::invalid_argument("shape_lr must be > 0");
  if (cfg.image_size < 0) throw std::invalid_argument("image_size must be >= 0");
  if (!(cfg.beta1 >= 0 && cfg.beta1 < 1)) throw std::invalid_argument("beta1 must be in [0,1)");
  if (!(cfg.beta2 >= 0 && cfg.beta2 < 1)) throw std::invalid_argument("beta2 must be in [0,1)");
}

struct FitResult {
  OffsetField field;
  PoseParams params;  // shape refined when optimize_shape is set
  // trace[k] = loss at the coefficients before update k; the extra final
  // entry is evaluated after the last update.
  std::vector<LossReport> trace;
  SilhouetteImage o_full;  // rendered at the final coefficients
  SilhouetteImage o_hair;

  // Routing diagnostics accumulated over every step: L1 mass of gradient
  // delivered where the routing contract says none may flow.
  double cum_grad_face_ears = 0.0;
  double cum_hair_term_to_neck = 0.0;
  double cum_full_term_to_hair = 0.0;
};

namespace detail {

inline double routed_mass(const MatX3& g, const TriMesh& mesh, Region a,
                          Region b = Region::Face) {
  double sum = 0.0;
  for (Eigen::Index i = 0; i < g.rows(); ++i)
    if (mesh.regions.is(int(i), a) || mesh.regions.is(int(i), b))
      sum += g.row(i).cwiseAbs().sum();
  return sum;
}

}  // namespace detail

// Gradient-descent reconstruction of the offset field against a silhouette
// pair. Normals are computed once from the undeformed reconstruction and
// held fixed; mask points are resampled every step from a seed derived from
// (seed, step), so a fit is a pure function of (inputs, config).
inline FitResult fit(const SkinnedBlendshapeModel& model, const TriMesh& mesh,
                     const PoseParams& params, const SilhouetteImage& s_full,
                     const SilhouetteImage& s_hair, const Camera& camera,
                     const FitConfig& cfg) {
  validate(cfg);
  validate(camera);
  if (!same_size(s_full, s_hair))
    throw std::invalid_argument("target masks must share a size");
  if (cfg.image_size != 0 &&
      (s_full.height != cfg.image_size || s_full.width != cfg.image_size))
    throw std::invalid_argument("image_size disagrees with target masks");
  const int height = s_full.height;
  const int width = s_full.width;

  // warn-level contract: the hair mask should sit inside the full mask
  {
    const double excess = (s_hair.values - s_full.values).maxCoeff();
    if (excess > 1.0 / 255.0 + 1e-9)
      std::fputs("warning: hair mask exceeds full mask\n", stderr);
  }

  FitResult result;
  result.params = params;
  MatX3 base = reconstruct(model, params);
  result.field = make_offset_field(mesh, base);
  const VertexAdjacency adj = build_adjacency(mesh);

  auto offsets_adam = AdamState<MatX3>::like(result.field.coefficients, cfg.lr);
  offsets_adam.beta1 = cfg.beta1;
  offsets_adam.beta2 = cfg.beta2;
  offsets_adam.eps = cfg.adam_eps;
  auto shape_adam = AdamState<Eigen::VectorXd>::like(result.params.shape, cfg.shape_lr);
  shape_adam.beta1 = cfg.beta1;
  shape_adam.beta2 = cfg.beta2;
  shape_adam.eps = cfg.adam_eps;

  for (int step = 0; step <= cfg.iterations; ++step) {
    const GeometricScene scene{mesh,   base,   result.field, camera,
                               cfg.raster, height, width,        s_full,
                               s_hair, derive_seed(cfg.seed, uint64_t(step))};
    TotalGeometricLoss loss = total_geometric_loss(scene, cfg.weights, adj);
    if (!std::isfinite(loss.report.total))
      throw std::runtime_error("diverged: non-finite loss at step " + std::to_string(step));
    result.trace.push_back(loss.report);

    result.cum_grad_face_ears += detail::routed_mass(loss.grad, mesh, Region::Face, Region::Ears);
    result.cum_hair_term_to_neck +=
        detail::routed_mass(loss.grad_hair_silhouette, mesh, Region::Neck, Region::Neck);
    result.cum_full_term_to_hair +=
        detail::routed_mass(loss.grad_full_silhouette, mesh, Region::Hair, Region::Hair);

    if (step == cfg.iterations) {
      result.o_full = std::move(loss.o_full);
      result.o_hair = std::move(loss.o_hair);
      break;
    }

    adam_step(offsets_adam, result.field.coefficients, loss.grad);
    result.field.apply_mask();

    if (cfg.optimize_shape) {
      const Eigen::MatrixXd jac = reconstruct_jacobian(model, result.params);
      const Eigen::Map<const Eigen::VectorXd> gpos(loss.grad_positions.data(),
                                                   3 * loss.grad_positions.rows());
      const Eigen::VectorXd full = jac.transpose() * gpos;
      Eigen::VectorXd gshape = full.head(model.shape_dim());
      adam_step(shape_adam, result.params.shape, gshape);
      base = reconstruct(model, result.params);
    }
  }
  return result;
}

// Intersection-over-union of thresholded masks; an empty union counts as 1.
inline double compute_iou(const SilhouetteImage& pred, const SilhouetteImage& target,
                          double threshold = 0.5) {
  if (!same_size(pred, target)) throw std::invalid_argument("iou: size mismatch");
  int inter = 0, uni = 0;
  for (int y = 0; y < pred.height; ++y) {
    for (int x = 0; x < pred.width; ++x) {
      const bool a = pred.values(y, x) > threshold;
      const bool b = target.values(y, x) > threshold;
      inter += (a && b) ? 1 : 0;
      uni += (a || b) ? 1 : 0;
    }
  }
  return uni == 0 ? 1.0 : double(inter) / double(uni);
}

}  // namespace meshfit
