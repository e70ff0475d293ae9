#pragma once

#include <cmath>
#include <map>
#include <utility>
#include <vector>

#include "meshfit/blendshape.hpp"
#include "meshfit/camera.hpp"
#include "meshfit/image.hpp"
#include "meshfit/mesh.hpp"
#include "meshfit/model_io.hpp"
#include "meshfit/offset_field.hpp"
#include "meshfit/raster.hpp"
#include "meshfit/rng.hpp"

namespace meshfit {

// Unit icosphere; subdivisions=3 gives the 642-vertex / 1280-triangle head
// proxy used by the synthetic experiments. Faces wind CCW seen from outside.
inline TriMesh icosphere(int subdivisions) {
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Eigen::RowVector3d> verts = {
      {-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t},  {0, 1, t},
      {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1},  {-t, 0, -1}, {-t, 0, 1}};
  for (auto& v : verts) v.normalize();
  std::vector<Triangle> faces = {
      {0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
      {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
      {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
      {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};

  for (int s = 0; s < subdivisions; ++s) {
    std::map<std::pair<int, int>, int> midpoint;
    auto mid = [&](int a, int b) {
      const auto key = std::minmax(a, b);
      const auto it = midpoint.find(key);
      if (it != midpoint.end()) return it->second;
      Eigen::RowVector3d v = (verts[size_t(a)] + verts[size_t(b)]).normalized();
      verts.push_back(v);
      const int idx = int(verts.size()) - 1;
      midpoint.emplace(key, idx);
      return idx;
    };
    std::vector<Triangle> next;
    next.reserve(faces.size() * 4);
    for (const Triangle& f : faces) {
      const int m01 = mid(f[0], f[1]);
      const int m12 = mid(f[1], f[2]);
      const int m20 = mid(f[2], f[0]);
      next.push_back({f[0], m01, m20});
      next.push_back({f[1], m12, m01});
      next.push_back({f[2], m20, m12});
      next.push_back({m01, m12, m20});
    }
    faces = std::move(next);
  }

  TriMesh mesh;
  mesh.vertices.resize(Eigen::Index(verts.size()), 3);
  for (size_t i = 0; i < verts.size(); ++i) mesh.vertices.row(Eigen::Index(i)) = verts[i];
  // guarantee outward CCW winding on the convex body
  for (Triangle& f : faces) {
    const Eigen::Vector3d a = mesh.vertices.row(f[0]);
    const Eigen::Vector3d b = mesh.vertices.row(f[1]);
    const Eigen::Vector3d c = mesh.vertices.row(f[2]);
    if ((b - a).cross(c - a).dot(a + b + c) < 0) std::swap(f[1], f[2]);
  }
  mesh.triangles = std::move(faces);
  mesh.uv.resize(mesh.vertices.rows(), 2);
  for (Eigen::Index i = 0; i < mesh.vertices.rows(); ++i) {
    const double x = mesh.vertices(i, 0), y = mesh.vertices(i, 1), z = mesh.vertices(i, 2);
    mesh.uv(i, 0) = std::atan2(z, x) / (2.0 * M_PI) + 0.5;
    mesh.uv(i, 1) = std::asin(std::clamp(y, -1.0, 1.0)) / M_PI + 0.5;
  }
  return mesh;
}

// Procedural head partition on the unit sphere: top cap = hair, bottom cap =
// neck, side patches = ears, front of the middle band = face, back of the
// middle band split between hair (upper) and neck (lower). The camera looks
// at the +z hemisphere, so the face points at it.
inline RegionPartition head_regions(const MatX3& vertices) {
  RegionPartition regions;
  regions.label.resize(size_t(vertices.rows()));
  for (Eigen::Index i = 0; i < vertices.rows(); ++i) {
    const double x = vertices(i, 0), y = vertices(i, 1), z = vertices(i, 2);
    Region r;
    if (y < -0.45)
      r = Region::Neck;
    else if (y > 0.45)
      r = Region::Hair;
    else if (std::abs(x) >= 0.82)
      r = Region::Ears;
    else if (z >= 0.25)
      r = Region::Face;
    else
      r = y >= 0 ? Region::Hair : Region::Neck;
    regions.label[size_t(i)] = r;
  }
  return regions;
}

namespace detail {

inline double smoothstep01(double x) {
  x = std::clamp(x, 0.0, 1.0);
  return x * x * (3.0 - 2.0 * x);
}

// Sum of spherical Gaussian lobes, evaluated on unit directions.
struct Lobe {
  Eigen::RowVector3d center;
  double amp;
  double width;  // in (1 - dot) units
};

inline double eval_lobes(const std::vector<Lobe>& lobes, const Eigen::RowVector3d& dir) {
  double h = 0.0;
  for (const Lobe& l : lobes) h += l.amp * std::exp(-(1.0 - l.center.dot(dir)) / l.width);
  return h;
}

}  // namespace detail

// Smooth random ground-truth offset coefficients: a few wide spherical
// lobes per region, tapered to zero over `taper_hops` adjacency hops from
// the frozen face/ear boundary, rescaled so the RMS displacement magnitude
// over all vertices hits rms_fraction of the bounding-box diagonal.
inline MatX3 make_gt_coefficients(const TriMesh& mesh, uint64_t seed,
                                  double rms_fraction = 0.05, int taper_hops = 3) {
  const Eigen::Index n = mesh.vertices.rows();
  Rng rng(seed);

  // BFS hop distance from the face/ear set through the adjacency graph
  const VertexAdjacency adj = build_adjacency(mesh);
  std::vector<int> hops(size_t(n), -1);
  std::vector<int> queue;
  for (Eigen::Index i = 0; i < n; ++i)
    if (mesh.regions.is(int(i), Region::Face) || mesh.regions.is(int(i), Region::Ears)) {
      hops[size_t(i)] = 0;
      queue.push_back(int(i));
    }
  for (size_t head = 0; head < queue.size(); ++head) {
    const int v = queue[head];
    for (int w : adj.neighbors[size_t(v)])
      if (hops[size_t(w)] < 0) {
        hops[size_t(w)] = hops[size_t(v)] + 1;
        queue.push_back(w);
      }
  }

  auto region_lobes = [&](Region r) {
    const std::vector<int> idx = mesh.regions.indices(r);
    std::vector<detail::Lobe> lobes;
    for (int k = 0; k < 3; ++k) {
      detail::Lobe l;
      const int pick = idx.empty() ? 0 : idx[size_t(rng.index(idx.size()))];
      l.center = mesh.vertices.row(pick).normalized();
      const double mag = rng.uniform(0.5, 1.0);
      l.amp = rng.uniform() < 0.5 ? -mag : mag;
      l.width = rng.uniform(0.25, 0.45);
      lobes.push_back(l);
    }
    return lobes;
  };
  const std::vector<detail::Lobe> hair_lobes = region_lobes(Region::Hair);
  const std::vector<detail::Lobe> neck_lobes = region_lobes(Region::Neck);

  MatX3 coeff = MatX3::Zero(n, 3);
  for (Eigen::Index i = 0; i < n; ++i) {
    const bool hair = mesh.regions.is(int(i), Region::Hair);
    const bool neck = mesh.regions.is(int(i), Region::Neck);
    if (!hair && !neck) continue;
    const Eigen::RowVector3d dir = mesh.vertices.row(i).normalized();
    const double h = detail::eval_lobes(hair ? hair_lobes : neck_lobes, dir);
    const double taper =
        hops[size_t(i)] < 0 ? 1.0 : detail::smoothstep01(double(hops[size_t(i)]) / taper_hops);
    coeff.row(i).setConstant(h * taper);
  }

  // rescale: displacement magnitude per vertex is |h| for m = (h,h,h) on
  // unit normals, but measure it properly through the normals
  const MatX3 normals = compute_vertex_normals(mesh, mesh.vertices);
  const MatX3 disp = coeff.cwiseProduct(normals);
  const double rms = std::sqrt(disp.array().square().rowwise().sum().mean());
  const Eigen::RowVector3d lo = mesh.vertices.colwise().minCoeff();
  const Eigen::RowVector3d hi = mesh.vertices.colwise().maxCoeff();
  const double target = rms_fraction * (hi - lo).norm();
  if (rms > 0) coeff *= target / rms;
  return coeff;
}

inline SilhouetteImage quantize_to_8bit(const SilhouetteImage& img) {
  SilhouetteImage out = img;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      out.values(y, x) = double(std::lround(255.0 * img.values(y, x))) / 255.0;
  return out;
}

// Small synthetic blendshape model over the proxy mesh: smooth random
// shape/expression columns, a two-joint chain split around the equator.
inline ModelBundle make_synthetic_model(const TriMesh& mesh, uint64_t seed) {
  const Eigen::Index n = mesh.vertices.rows();
  Rng rng(seed);
  ModelBundle bundle;
  bundle.mesh = mesh;
  SkinnedBlendshapeModel& m = bundle.model;
  m.v_base = mesh.vertices;

  auto smooth_columns = [&](int count, double scale) {
    Eigen::MatrixXd basis(3 * n, count);
    for (int c = 0; c < count; ++c) {
      std::vector<detail::Lobe> lobes;
      for (int k = 0; k < 3; ++k) {
        Eigen::RowVector3d center(rng.normal(), rng.normal(), rng.normal());
        lobes.push_back({center.normalized(), rng.uniform(-1.0, 1.0), rng.uniform(0.3, 0.6)});
      }
      for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::RowVector3d dir = mesh.vertices.row(i).normalized();
        const double h = scale * detail::eval_lobes(lobes, dir);
        for (int a = 0; a < 3; ++a) basis(3 * i + a, c) = h * dir[a];
      }
    }
    return basis;
  };
  m.shape_basis = smooth_columns(4, 0.10);
  m.expr_basis = smooth_columns(3, 0.05);

  m.joint_parents = {-1, 0};
  m.joint_regressor.resize(2, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    m.joint_regressor(0, i) = std::exp(-2.0 * mesh.vertices(i, 1));
    m.joint_regressor(1, i) = std::exp(2.0 * mesh.vertices(i, 1));
  }
  for (int r = 0; r < 2; ++r) m.joint_regressor.row(r) /= m.joint_regressor.row(r).sum();
  m.skin_weights.resize(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double w1 = detail::smoothstep01((mesh.vertices(i, 1) + 0.6) / 1.2);
    m.skin_weights(i, 0) = 1.0 - w1;
    m.skin_weights(i, 1) = w1;
  }
  validate(m);
  return bundle;
}

// A complete synthetic fitting problem: proxy model, camera, ground-truth
// offsets, and the target masks rendered from the deformed ground truth
// (quantized exactly as the PGM round-trip would).
struct SynthScene {
  ModelBundle bundle;
  Camera camera;
  PoseParams params;
  MatX3 gt_coefficients;
  SilhouetteImage s_full;
  SilhouetteImage s_hair;
  RasterConfig raster;
};

inline SynthScene make_scene(uint64_t seed, int image_size = 128, int subdivisions = 3,
                             double rms_fraction = 0.05) {
  SynthScene scene;
  TriMesh mesh = icosphere(subdivisions);
  mesh.regions = head_regions(mesh.vertices);
  validate(mesh);
  scene.bundle = make_synthetic_model(mesh, derive_seed(seed, 1001));
  scene.params = PoseParams::zeros(scene.bundle.model);
  scene.camera.scale = 0.65;
  scene.camera.translation.setZero();
  scene.camera.rotation.setIdentity();
  scene.gt_coefficients = make_gt_coefficients(mesh, derive_seed(seed, 1002), rms_fraction);

  OffsetField gt_field = make_offset_field(mesh, mesh.vertices);
  gt_field.coefficients = scene.gt_coefficients;
  gt_field.apply_mask();
  scene.gt_coefficients = gt_field.coefficients;
  const MatX3 deformed = apply_offsets(mesh.vertices, gt_field);

  const std::vector<Triangle> hair_tris =
      triangles_in_regions(mesh, {Region::Hair, Region::Face, Region::Ears});
  scene.s_full = quantize_to_8bit(rasterize_soft(mesh.triangles, deformed, scene.camera,
                                                 scene.raster, image_size, image_size));
  scene.s_hair = quantize_to_8bit(rasterize_soft(hair_tris, deformed, scene.camera,
                                                 scene.raster, image_size, image_size));
  return scene;
}

}  // namespace meshfit
