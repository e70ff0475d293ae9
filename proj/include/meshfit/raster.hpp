#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "meshfit/camera.hpp"
#include "meshfit/image.hpp"
#include "meshfit/mesh.hpp"

namespace meshfit {

struct RasterConfig {
  double sigma = 1e-4;    // influence falloff, NDC^2 units
  double epsilon = 1e-7;  // per-triangle influence clamp D <= 1-epsilon
};

inline void validate(const RasterConfig& cfg) {
  if (!(cfg.sigma > 0)) throw std::invalid_argument("sigma must be > 0");
  if (!(cfg.epsilon > 0 && cfg.epsilon < 0.5))
    throw std::invalid_argument("epsilon must be in (0, 0.5)");
}

namespace detail {

// Beyond this distance a triangle's influence is below epsilon, so dropping
// it changes the aggregate by less than the clamp tolerance. Never tighter
// than 3*sqrt(sigma).
inline double influence_radius(const RasterConfig& cfg) {
  return std::max(3.0 * std::sqrt(cfg.sigma),
                  std::sqrt(cfg.sigma * std::log((1.0 - cfg.epsilon) / cfg.epsilon)));
}

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double edge_fn(const Eigen::Vector2d& a, const Eigen::Vector2d& b,
                      const Eigen::Vector2d& p) {
  return (b.x() - a.x()) * (p.y() - a.y()) - (b.y() - a.y()) * (p.x() - a.x());
}

inline bool point_in_triangle(const Eigen::Vector2d& a, const Eigen::Vector2d& b,
                              const Eigen::Vector2d& c, const Eigen::Vector2d& p) {
  const double e0 = edge_fn(a, b, p);
  const double e1 = edge_fn(b, c, p);
  const double e2 = edge_fn(c, a, p);
  return (e0 >= 0 && e1 >= 0 && e2 >= 0) || (e0 <= 0 && e1 <= 0 && e2 <= 0);
}

// Squared distance from p to segment [a,b] with the clamped parameter t of
// the closest point q = a + t*(b-a).
struct SegHit {
  double d2;
  double t;
  Eigen::Vector2d q;
};

inline SegHit point_segment_sqdist(const Eigen::Vector2d& p, const Eigen::Vector2d& a,
                                   const Eigen::Vector2d& b) {
  const Eigen::Vector2d seg = b - a;
  const double len2 = seg.squaredNorm();
  double t = len2 > 0 ? (p - a).dot(seg) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  SegHit hit;
  hit.t = t;
  hit.q = a + t * seg;
  hit.d2 = (p - hit.q).squaredNorm();
  return hit;
}

// Closest point on the triangle boundary; ties resolved toward the
// lowest-index edge (strict < while scanning edges 0,1,2) so gradients are
// deterministic.
struct BoundaryHit {
  double d2;
  int edge;  // 0:(v0,v1) 1:(v1,v2) 2:(v2,v0)
  double t;
  Eigen::Vector2d q;
};

inline BoundaryHit point_boundary_sqdist(const Eigen::Vector2d& p, const Eigen::Vector2d& a,
                                         const Eigen::Vector2d& b, const Eigen::Vector2d& c) {
  const Eigen::Vector2d v[3] = {a, b, c};
  BoundaryHit best{std::numeric_limits<double>::infinity(), -1, 0.0, {}};
  for (int k = 0; k < 3; ++k) {
    const SegHit hit = point_segment_sqdist(p, v[k], v[(k + 1) % 3]);
    if (hit.d2 < best.d2) best = {hit.d2, k, hit.t, hit.q};
  }
  return best;
}

struct PixelRange {
  int x0, x1, y0, y1;  // inclusive; empty if x0 > x1 or y0 > y1
};

inline PixelRange pixels_in_ndc_box(double xmin, double xmax, double ymin, double ymax,
                                    int width, int height) {
  PixelRange r;
  r.x0 = std::max(0, int(std::ceil(ndc_to_pixel_x(xmin, width))));
  r.x1 = std::min(width - 1, int(std::floor(ndc_to_pixel_x(xmax, width))));
  r.y0 = std::max(0, int(std::ceil(ndc_to_pixel_y(ymin, height))));
  r.y1 = std::min(height - 1, int(std::floor(ndc_to_pixel_y(ymax, height))));
  return r;
}

// Shared traversal of forward and adjoint: visits every (triangle, pixel)
// pair inside the influence-inflated bounding box, in triangle-major order,
// so both passes see identical pairs and accumulate in identical order.
template <typename Visit>
inline void for_each_influence(const std::vector<Triangle>& triangles, const MatX2& ndc,
                               const RasterConfig& cfg, int height, int width, Visit&& visit) {
  const double radius = influence_radius(cfg);
  const double r2 = radius * radius;
  for (size_t f = 0; f < triangles.size(); ++f) {
    const Triangle& t = triangles[f];
    const Eigen::Vector2d a = ndc.row(t[0]);
    const Eigen::Vector2d b = ndc.row(t[1]);
    const Eigen::Vector2d c = ndc.row(t[2]);
    const PixelRange range = pixels_in_ndc_box(
        std::min({a.x(), b.x(), c.x()}) - radius, std::max({a.x(), b.x(), c.x()}) + radius,
        std::min({a.y(), b.y(), c.y()}) - radius, std::max({a.y(), b.y(), c.y()}) + radius,
        width, height);
    for (int iy = range.y0; iy <= range.y1; ++iy) {
      const double py = pixel_to_ndc_y(iy, height);
      for (int ix = range.x0; ix <= range.x1; ++ix) {
        const Eigen::Vector2d p(pixel_to_ndc_x(ix, width), py);
        const BoundaryHit hit = point_boundary_sqdist(p, a, b, c);
        const bool inside = point_in_triangle(a, b, c, p);
        if (!inside && hit.d2 > r2) continue;
        visit(t, p, ix, iy, hit, inside);
      }
    }
  }
}

inline void check_finite(const MatX3& positions) {
  if (!positions.allFinite()) throw std::invalid_argument("non-finite positions");
}

}  // namespace detail

// Soft silhouette: each triangle contributes D_f(p) = sigmoid(sign * d^2 / sigma)
// where d is the pixel-center distance to the projected triangle boundary and
// sign is +1 inside / -1 outside. Aggregated as O(p) = 1 - prod_f (1 - D_f),
// accumulated in log space with D_f clamped to 1-epsilon. Back-facing
// triangles participate; this is a silhouette, not a shaded render.
inline SilhouetteImage rasterize_soft(const std::vector<Triangle>& triangles,
                                      const MatX3& positions, const Camera& camera,
                                      const RasterConfig& cfg, int height, int width) {
  validate(cfg);
  detail::check_finite(positions);
  if (height < 1 || width < 1) throw std::invalid_argument("image size must be >= 1");
  const MatX2 ndc = project(camera, positions).ndc;
  Eigen::MatrixXd log_miss = Eigen::MatrixXd::Zero(height, width);
  detail::for_each_influence(
      triangles, ndc, cfg, height, width,
      [&](const Triangle&, const Eigen::Vector2d&, int ix, int iy,
          const detail::BoundaryHit& hit, bool inside) {
        const double d = detail::sigmoid((inside ? 1.0 : -1.0) * hit.d2 / cfg.sigma);
        log_miss(iy, ix) += std::log1p(-std::min(d, 1.0 - cfg.epsilon));
      });
  SilhouetteImage img = SilhouetteImage::zeros(height, width);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) img.values(y, x) = -std::expm1(log_miss(y, x));
  return img;
}

inline SilhouetteImage rasterize_soft(const TriMesh& mesh, const MatX3& positions,
                                      const Camera& camera, const RasterConfig& cfg,
                                      int height, int width) {
  return rasterize_soft(mesh.triangles, positions, camera, cfg, height, width);
}

// Adjoint of rasterize_soft: gradient of sum_p upstream(p) * O(p) w.r.t. the
// 3D vertex positions. The inside/outside sign is treated as locally
// constant, the clamp at 1-epsilon kills the local derivative, and the
// closest-point parameter t needs no differentiation (envelope: at an
// interior optimum d(d^2)/dt = 0, at a clamp t is constant), leaving
//   d(d^2)/da = -2(1-t)(p-q),  d(d^2)/db = -2t(p-q)
// for the arg-min edge [a,b]. NDC gradients chain through the projection as
// scale * R.topRows(2).
inline MatX3 rasterize_soft_grad(const std::vector<Triangle>& triangles,
                                 const MatX3& positions, const Camera& camera,
                                 const RasterConfig& cfg, int height, int width,
                                 const Eigen::MatrixXd& upstream) {
  validate(cfg);
  detail::check_finite(positions);
  if (upstream.rows() != height || upstream.cols() != width)
    throw std::invalid_argument("upstream size mismatch");
  const MatX2 ndc = project(camera, positions).ndc;

  Eigen::MatrixXd log_miss = Eigen::MatrixXd::Zero(height, width);
  detail::for_each_influence(
      triangles, ndc, cfg, height, width,
      [&](const Triangle&, const Eigen::Vector2d&, int ix, int iy,
          const detail::BoundaryHit& hit, bool inside) {
        const double d = detail::sigmoid((inside ? 1.0 : -1.0) * hit.d2 / cfg.sigma);
        log_miss(iy, ix) += std::log1p(-std::min(d, 1.0 - cfg.epsilon));
      });

  MatX2 grad_ndc = MatX2::Zero(positions.rows(), 2);
  detail::for_each_influence(
      triangles, ndc, cfg, height, width,
      [&](const Triangle& t, const Eigen::Vector2d& p, int ix, int iy,
          const detail::BoundaryHit& hit, bool inside) {
        const double sign = inside ? 1.0 : -1.0;
        const double d = detail::sigmoid(sign * hit.d2 / cfg.sigma);
        if (d >= 1.0 - cfg.epsilon) return;  // clamped: zero local derivative
        const double u = upstream(iy, ix);
        if (u == 0.0) return;
        const double do_dd = std::exp(log_miss(iy, ix)) / (1.0 - d);
        const double g_d2 = u * do_dd * sign * d * (1.0 - d) / cfg.sigma;
        const int i0 = t[size_t(hit.edge)];
        const int i1 = t[size_t((hit.edge + 1) % 3)];
        const Eigen::Vector2d pq = p - hit.q;
        grad_ndc.row(i0) += (g_d2 * -2.0 * (1.0 - hit.t)) * pq.transpose();
        grad_ndc.row(i1) += (g_d2 * -2.0 * hit.t) * pq.transpose();
      });

  const Eigen::Matrix<double, 2, 3> proj_jac = camera.scale * camera.rotation.topRows<2>();
  MatX3 grad = MatX3::Zero(positions.rows(), 3);
  for (Eigen::Index i = 0; i < positions.rows(); ++i)
    grad.row(i) = grad_ndc.row(i) * proj_jac;
  return grad;
}

inline MatX3 rasterize_soft_grad(const TriMesh& mesh, const MatX3& positions,
                                 const Camera& camera, const RasterConfig& cfg, int height,
                                 int width, const Eigen::MatrixXd& upstream) {
  return rasterize_soft_grad(mesh.triangles, positions, camera, cfg, height, width, upstream);
}

// Hard z-buffer visibility at the given resolution. A vertex is visible iff
// its nearest pixel center lies in the image and at least one incident
// front-facing (CCW, screen space) triangle reaches that pixel's z-buffer
// value to within 1e-4. The incident triangle's depth at the pixel center is
// evaluated by extending its 2D barycentric interpolation beyond the
// triangle (the pixel center nearest a vertex usually falls slightly outside
// the triangle itself; clamping to covered pixels only would reject
// unoccluded silhouette vertices).
inline std::vector<bool> visible_vertices(const TriMesh& mesh, const MatX3& positions,
                                          const Camera& camera, int height, int width) {
  detail::check_finite(positions);
  const Projection proj = project(camera, positions);
  const double neg_inf = -std::numeric_limits<double>::infinity();
  Eigen::MatrixXd zbuf = Eigen::MatrixXd::Constant(height, width, neg_inf);

  std::vector<std::vector<int>> incident(size_t(positions.rows()));
  std::vector<char> front(mesh.triangles.size(), 0);
  for (size_t f = 0; f < mesh.triangles.size(); ++f) {
    const Triangle& t = mesh.triangles[f];
    const Eigen::Vector2d a = proj.ndc.row(t[0]);
    const Eigen::Vector2d b = proj.ndc.row(t[1]);
    const Eigen::Vector2d c = proj.ndc.row(t[2]);
    const double area2 = detail::edge_fn(a, b, c);
    if (area2 <= 0) continue;  // back-facing or degenerate
    front[f] = 1;
    for (int k = 0; k < 3; ++k) incident[size_t(t[size_t(k)])].push_back(int(f));

    const detail::PixelRange range = detail::pixels_in_ndc_box(
        std::min({a.x(), b.x(), c.x()}), std::max({a.x(), b.x(), c.x()}),
        std::min({a.y(), b.y(), c.y()}), std::max({a.y(), b.y(), c.y()}), width, height);
    for (int iy = range.y0; iy <= range.y1; ++iy) {
      for (int ix = range.x0; ix <= range.x1; ++ix) {
        const Eigen::Vector2d p(pixel_to_ndc_x(ix, width), pixel_to_ndc_y(iy, height));
        const double w0 = detail::edge_fn(b, c, p);
        const double w1 = detail::edge_fn(c, a, p);
        const double w2 = detail::edge_fn(a, b, p);
        if (w0 < 0 || w1 < 0 || w2 < 0) continue;
        const double depth =
            (w0 * proj.depth(t[0]) + w1 * proj.depth(t[1]) + w2 * proj.depth(t[2])) / area2;
        zbuf(iy, ix) = std::max(zbuf(iy, ix), depth);
      }
    }
  }

  std::vector<bool> visible(size_t(positions.rows()), false);
  for (Eigen::Index i = 0; i < positions.rows(); ++i) {
    const int ix = int(std::lround(ndc_to_pixel_x(proj.ndc(i, 0), width)));
    const int iy = int(std::lround(ndc_to_pixel_y(proj.ndc(i, 1), height)));
    if (ix < 0 || ix >= width || iy < 0 || iy >= height) continue;
    const Eigen::Vector2d p(pixel_to_ndc_x(ix, width), pixel_to_ndc_y(iy, height));
    for (int f : incident[size_t(i)]) {
      const Triangle& t = mesh.triangles[size_t(f)];
      const Eigen::Vector2d a = proj.ndc.row(t[0]);
      const Eigen::Vector2d b = proj.ndc.row(t[1]);
      const Eigen::Vector2d c = proj.ndc.row(t[2]);
      const double area2 = detail::edge_fn(a, b, c);
      const double w0 = detail::edge_fn(b, c, p);
      const double w1 = detail::edge_fn(c, a, p);
      const double w2 = detail::edge_fn(a, b, p);
      const double depth =
          (w0 * proj.depth(t[0]) + w1 * proj.depth(t[1]) + w2 * proj.depth(t[2])) / area2;
      if (depth >= zbuf(iy, ix) - 1e-4) {
        visible[size_t(i)] = true;
        break;
      }
    }
  }
  return visible;
}

}  // namespace meshfit
