#include <gtest/gtest.h>

#include "fd_check.hpp"
#include "grad_suite.hpp"
#include "meshfit/losses.hpp"
#include "meshfit/rng.hpp"
#include "meshfit/synth.hpp"

namespace meshfit {
namespace {

TEST(Occupancy, ConstantFieldExample) {
  SilhouetteImage pred = SilhouetteImage::zeros(4, 4);
  pred.values.setConstant(0.5);
  const SilhouetteImage target = SilhouetteImage::zeros(4, 4);
  EXPECT_DOUBLE_EQ(occupancy_term(pred, target), 0.25);
  const Eigen::MatrixXd g = occupancy_term_grad(pred, target);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) EXPECT_DOUBLE_EQ(g(y, x), 2.0 * 0.5 / 16.0);
}

TEST(Occupancy, ElementwiseOracleAndWeights) {
  Rng rng(1);
  SilhouetteImage pred = testing::random_image(rng, 5, 7, 0, 1);
  SilhouetteImage target = testing::random_image(rng, 5, 7, 0, 1);
  double expected = 0.0;
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 7; ++x) {
      const double d = pred.values(y, x) - target.values(y, x);
      expected += d * d;
    }
  expected /= 35.0;
  EXPECT_NEAR(occupancy_term(pred, target), expected, 1e-15);

  SilhouetteImage ph = testing::random_image(rng, 5, 7, 0, 1);
  SilhouetteImage th = testing::random_image(rng, 5, 7, 0, 1);
  EXPECT_NEAR(occupancy_loss(ph, pred, th, target, 10.0, 1.0),
              10.0 * occupancy_term(ph, th) + occupancy_term(pred, target), 1e-15);
}

TEST(Occupancy, GradMatchesFiniteDifferences) {
  const testing::GradCheckStats stats = testing::occupancy_grad_suite(5);
  EXPECT_LE(stats.max_rel_err, 1e-6);
}

TEST(Chamfer2d, KnownValues) {
  MatX2 a(1, 2), b(1, 2);
  a << 0, 0;
  b << 3, 4;
  EXPECT_DOUBLE_EQ(chamfer2d_loss(a, b), 5.0);
  EXPECT_DOUBLE_EQ(chamfer2d_loss(a, a), 0.0);
}

TEST(Chamfer2d, ExhaustiveOracleExact) {
  for (uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(400 + seed);
    const int n = 8 + int(rng.index(40));
    MatX2 p(n, 2), q(n, 2);
    for (int i = 0; i < n; ++i)
      for (int c = 0; c < 2; ++c) {
        p(i, c) = rng.uniform(-1, 1);
        q(i, c) = rng.uniform(-1, 1);
      }
    double forward = 0.0, backward = 0.0;
    for (int i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (int j = 0; j < n; ++j)
        best = std::min(best, (p.row(i) - q.row(j)).squaredNorm());
      forward += std::sqrt(best);
    }
    for (int j = 0; j < n; ++j) {
      double best = std::numeric_limits<double>::infinity();
      for (int i = 0; i < n; ++i)
        best = std::min(best, (q.row(j) - p.row(i)).squaredNorm());
      backward += std::sqrt(best);
    }
    const double expected = 0.5 * forward / n + 0.5 * backward / n;
    EXPECT_EQ(chamfer2d_loss(p, q), expected);
  }
}

TEST(Chamfer2d, GradMatchesFiniteDifferences) {
  const testing::GradCheckStats stats = testing::chamfer_grad_suite(8);
  EXPECT_GT(stats.checks, 50);
  EXPECT_LE(stats.max_rel_err, 1e-5) << stats.max_rel_err;
}

TEST(Chamfer2d, CountMismatchAndEmptyThrow) {
  MatX2 a(2, 2), b(3, 2), empty(0, 2);
  a.setZero();
  b.setZero();
  EXPECT_THROW(chamfer2d_loss(a, b), std::invalid_argument);
  EXPECT_THROW(chamfer2d_loss(empty, empty), std::invalid_argument);
}

TEST(SampleMask, SinglePixelAlwaysHit) {
  SilhouetteImage mask = SilhouetteImage::zeros(8, 8);
  mask.values(3, 5) = 1.0;
  const MatX2 pts = sample_mask_points(mask, 50, 9);
  for (int s = 0; s < 50; ++s) {
    EXPECT_DOUBLE_EQ(pts(s, 0), pixel_to_ndc_x(5, 8));
    EXPECT_DOUBLE_EQ(pts(s, 1), pixel_to_ndc_y(3, 8));
  }
}

TEST(SampleMask, UniformMaskCenteredMean) {
  SilhouetteImage mask = SilhouetteImage::zeros(16, 16);
  mask.values.setOnes();
  const MatX2 pts = sample_mask_points(mask, 2000, 4);
  EXPECT_NEAR(pts.col(0).mean(), 0.0, 0.04);  // 3 standard errors
  EXPECT_NEAR(pts.col(1).mean(), 0.0, 0.04);
}

TEST(SampleMask, ProportionalToValue) {
  SilhouetteImage mask = SilhouetteImage::zeros(4, 4);
  mask.values(0, 0) = 0.25;
  mask.values(2, 3) = 0.75;
  const MatX2 pts = sample_mask_points(mask, 4000, 11);
  int hits = 0;
  for (int s = 0; s < 4000; ++s)
    if (pts(s, 1) == pixel_to_ndc_y(2, 4)) ++hits;
  EXPECT_NEAR(hits, 3000, 110);  // 4 sigma of Binomial(4000, 0.75)
}

TEST(SampleMask, DeterministicInSeed) {
  SilhouetteImage mask = SilhouetteImage::zeros(8, 8);
  mask.values.setOnes();
  const MatX2 a = sample_mask_points(mask, 64, 7);
  const MatX2 b = sample_mask_points(mask, 64, 7);
  const MatX2 c = sample_mask_points(mask, 64, 8);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
}

TEST(SampleMask, EmptyMaskThrows) {
  SilhouetteImage zeros = SilhouetteImage::zeros(4, 4);
  EXPECT_THROW(sample_mask_points(zeros, 4, 0), std::invalid_argument);
  SilhouetteImage dim = SilhouetteImage::zeros(4, 4);
  dim.values.setConstant(0.4);  // nothing above the lit threshold
  EXPECT_THROW(sample_mask_points(dim, 4, 0), std::invalid_argument);
}

TEST(Laplacian, TriangleHandExample) {
  TriMesh mesh;
  mesh.vertices = MatX3::Zero(3, 3);
  mesh.triangles = {{0, 1, 2}};
  mesh.regions.label.assign(3, Region::Hair);
  const VertexAdjacency adj = build_adjacency(mesh);
  MatX3 offsets = MatX3::Zero(3, 3);
  offsets(0, 0) = 1.0;
  // residuals: |1-0| + |0-0.5| + |0-0.5| over 3 vertices
  EXPECT_DOUBLE_EQ(laplacian_loss(offsets, adj), 2.0 / 3.0);
}

TEST(Laplacian, ConstantOffsetsVanish) {
  TriMesh mesh = icosphere(1);
  mesh.regions = head_regions(mesh.vertices);
  const VertexAdjacency adj = build_adjacency(mesh);
  MatX3 offsets(mesh.vertex_count(), 3);
  // dyadic constants keep the neighbor means exact, so the residual is an
  // exact zero and this pins the sgn(0) = 0 convention
  offsets.rowwise() = Eigen::RowVector3d(0.5, -0.25, 0.125);
  const Laplacian lap = laplacian_loss_grad(offsets, adj);
  EXPECT_DOUBLE_EQ(lap.value, 0.0);
  EXPECT_EQ(lap.grad.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Laplacian, DirectOracle) {
  TriMesh mesh = icosphere(1);
  mesh.regions = head_regions(mesh.vertices);
  const VertexAdjacency adj = build_adjacency(mesh);
  Rng rng(2);
  MatX3 offsets(mesh.vertex_count(), 3);
  for (Eigen::Index i = 0; i < offsets.rows(); ++i)
    for (int c = 0; c < 3; ++c) offsets(i, c) = rng.uniform(-1, 1);
  double expected = 0.0;
  for (int i = 0; i < mesh.vertex_count(); ++i) {
    Eigen::RowVector3d mean = Eigen::RowVector3d::Zero();
    for (int j : adj.neighbors[size_t(i)]) mean += offsets.row(j);
    mean /= double(adj.neighbors[size_t(i)].size());
    expected += (offsets.row(i) - mean).cwiseAbs().sum();
  }
  expected /= double(mesh.vertex_count());
  EXPECT_NEAR(laplacian_loss(offsets, adj), expected, 1e-12);
}

TEST(Laplacian, IsolatedVertexUsesOwnOffset) {
  TriMesh mesh;
  mesh.vertices = MatX3::Zero(4, 3);
  mesh.triangles = {{0, 1, 2}};  // vertex 3 isolated
  mesh.regions.label.assign(4, Region::Hair);
  const VertexAdjacency adj = build_adjacency(mesh);
  MatX3 offsets = MatX3::Zero(4, 3);
  offsets.row(3) = Eigen::RowVector3d(0.5, -1.0, 2.0);
  EXPECT_DOUBLE_EQ(laplacian_loss(offsets, adj), 3.5 / 4.0);
  const Laplacian lap = laplacian_loss_grad(offsets, adj);
  EXPECT_DOUBLE_EQ(lap.grad(3, 0), 0.25);
  EXPECT_DOUBLE_EQ(lap.grad(3, 1), -0.25);
  EXPECT_DOUBLE_EQ(lap.grad(3, 2), 0.25);
}

TEST(Laplacian, GradMatchesFiniteDifferences) {
  const testing::GradCheckStats stats = testing::laplacian_grad_suite(5);
  EXPECT_LE(stats.max_rel_err, 1e-6) << stats.max_rel_err;
}

TEST(Dice, ClosedForms) {
  Rng rng(6);
  SilhouetteImage a = testing::random_image(rng, 6, 6, 0.1, 1.0);
  EXPECT_NEAR(dice_loss(a, a), 0.0, 1e-12);

  SilhouetteImage left = SilhouetteImage::zeros(4, 4), right = SilhouetteImage::zeros(4, 4);
  left.values.leftCols(2).setOnes();
  right.values.rightCols(2).setOnes();
  EXPECT_DOUBLE_EQ(dice_loss(left, right), 1.0);  // disjoint supports

  // pred everywhere 1, target 1 on half the pixels: 1 - 2*(M/2)/(M + M/2) = 1/3
  SilhouetteImage ones = SilhouetteImage::zeros(4, 4);
  ones.values.setOnes();
  SilhouetteImage half = SilhouetteImage::zeros(4, 4);
  half.values.topRows(2).setOnes();
  EXPECT_NEAR(dice_loss(ones, half), 1.0 / 3.0, 1e-12);
}

TEST(Dice, SymmetricInValue) {
  Rng rng(8);
  const SilhouetteImage a = testing::random_image(rng, 5, 5, 0, 1);
  const SilhouetteImage b = testing::random_image(rng, 5, 5, 0, 1);
  EXPECT_DOUBLE_EQ(dice_loss(a, b), dice_loss(b, a));
}

TEST(Dice, GradMatchesFiniteDifferences) {
  const testing::GradCheckStats stats = testing::dice_grad_suite(5);
  EXPECT_LE(stats.max_rel_err, 1e-6) << stats.max_rel_err;
}

TEST(Dice, UndefinedOnBothZeroThrows) {
  const SilhouetteImage z = SilhouetteImage::zeros(3, 3);
  EXPECT_THROW(dice_loss(z, z), std::invalid_argument);
}

// ---- total loss & routing ----------------------------------------------------

struct TotalLossFixture {
  SynthScene sc = make_scene(5, 32, 1);
  OffsetField field;
  VertexAdjacency adj;
  MatX3 base;
  RasterConfig raster;

  TotalLossFixture() {
    base = reconstruct(sc.bundle.model, sc.params);
    field = make_offset_field(sc.bundle.mesh, base);
    Rng rng(55);
    for (Eigen::Index i = 0; i < field.coefficients.rows(); ++i)
      for (int c = 0; c < 3; ++c) field.coefficients(i, c) = rng.uniform(-0.05, 0.05);
    field.apply_mask();
    adj = build_adjacency(sc.bundle.mesh);
    raster.sigma = 1e-3;
    raster.epsilon = 1e-12;
  }

  GeometricScene scene() const {
    return GeometricScene{sc.bundle.mesh, base,      field,      sc.camera, raster,
                          32,             32,        sc.s_full,  sc.s_hair, 123};
  }
};

TEST(TotalLoss, ZeroWeightsReportTermsButNoGradient) {
  TotalLossFixture fx;
  LossWeights w{0, 0, 0, 0, 0};
  const TotalGeometricLoss out = total_geometric_loss(fx.scene(), w, fx.adj);
  EXPECT_DOUBLE_EQ(out.report.total, 0.0);
  EXPECT_GT(out.report.terms.at("occupancy_full"), 0.0);
  EXPECT_EQ(out.grad.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(out.grad_positions.cwiseAbs().maxCoeff(), 0.0);
}

TEST(TotalLoss, TotalIsWeightedSumOfTerms) {
  TotalLossFixture fx;
  LossWeights w;  // defaults 10, 1, 0.01, 10, 10
  const TotalGeometricLoss out = total_geometric_loss(fx.scene(), w, fx.adj);
  const auto& t = out.report.terms;
  EXPECT_NEAR(out.report.total,
              10 * t.at("occupancy_hair") + t.at("occupancy_full") + 0.01 * t.at("chamfer2d") +
                  10 * t.at("laplacian") + 10 * t.at("dice"),
              1e-12);
}

TEST(TotalLoss, RoutingZerosAreExact) {
  TotalLossFixture fx;
  const TriMesh& mesh = fx.sc.bundle.mesh;
  const TotalGeometricLoss out = total_geometric_loss(fx.scene(), LossWeights{}, fx.adj);

  double hair_mass = 0.0, full_mass = 0.0;
  for (int i = 0; i < mesh.vertex_count(); ++i) {
    const bool face_ear =
        mesh.regions.is(i, Region::Face) || mesh.regions.is(i, Region::Ears);
    const bool hair = mesh.regions.is(i, Region::Hair);
    const bool neck = mesh.regions.is(i, Region::Neck);
    if (face_ear || neck) EXPECT_EQ(out.grad_hair_silhouette.row(i).cwiseAbs().sum(), 0.0);
    if (face_ear || hair) EXPECT_EQ(out.grad_full_silhouette.row(i).cwiseAbs().sum(), 0.0);
    if (face_ear) {
      EXPECT_EQ(out.grad_chamfer.row(i).cwiseAbs().sum(), 0.0);
      EXPECT_EQ(out.grad_laplacian.row(i).cwiseAbs().sum(), 0.0);
      EXPECT_EQ(out.grad.row(i).cwiseAbs().sum(), 0.0);
    }
    if (hair) hair_mass += out.grad_hair_silhouette.row(i).cwiseAbs().sum();
    if (neck) full_mass += out.grad_full_silhouette.row(i).cwiseAbs().sum();
  }
  EXPECT_GT(hair_mass, 0.0);  // the contract is routing, not silencing
  EXPECT_GT(full_mass, 0.0);
  EXPECT_EQ(out.grad, MatX3(out.grad_hair_silhouette + out.grad_full_silhouette +
                            out.grad_chamfer + out.grad_laplacian));
}

TEST(TotalLoss, HairOnlyWeightsRouteEverythingToHair) {
  TotalLossFixture fx;
  LossWeights w{10, 0, 0, 0, 0};
  const TotalGeometricLoss out = total_geometric_loss(fx.scene(), w, fx.adj);
  EXPECT_EQ(out.grad, out.grad_hair_silhouette);
  for (int i = 0; i < fx.sc.bundle.mesh.vertex_count(); ++i)
    if (!fx.sc.bundle.mesh.regions.is(i, Region::Hair))
      EXPECT_EQ(out.grad.row(i).cwiseAbs().sum(), 0.0);
}

// Freeze-and-difference oracle: each routed component must match central
// differences of its own frozen term through the offset coefficients.
TEST(TotalLoss, RoutedComponentsMatchFrozenFiniteDifferences) {
  TotalLossFixture fx;
  const TriMesh& mesh = fx.sc.bundle.mesh;
  const LossWeights w;
  const GeometricScene scene = fx.scene();
  const TotalGeometricLoss out = total_geometric_loss(scene, w, fx.adj);

  const std::vector<Triangle> hair_tris =
      triangles_in_regions(mesh, {Region::Hair, Region::Face, Region::Ears});

  // freeze visibility and chamfer samples at the base coefficients
  const MatX3 deformed0 = apply_offsets(fx.base, fx.field);
  const std::vector<bool> vis = visible_vertices(mesh, deformed0, fx.sc.camera, 32, 32);
  std::vector<int> vis_idx;
  for (int i = 0; i < mesh.vertex_count(); ++i)
    if (vis[size_t(i)]) vis_idx.push_back(i);
  ASSERT_GT(vis_idx.size(), 0u);
  const MatX2 samples = sample_mask_points(fx.sc.s_full, int(vis_idx.size()), 123);

  OffsetField probe = fx.field;
  auto deformed = [&]() { return apply_offsets(fx.base, probe); };
  auto hair_term = [&]() {
    return w.lambda_hair *
           occupancy_term(rasterize_soft(hair_tris, deformed(), fx.sc.camera, fx.raster, 32, 32),
                          fx.sc.s_hair);
  };
  auto full_term = [&]() {
    const SilhouetteImage o =
        rasterize_soft(mesh.triangles, deformed(), fx.sc.camera, fx.raster, 32, 32);
    return w.lambda_o * occupancy_term(o, fx.sc.s_full) +
           w.lambda_seg * dice_loss(o, fx.sc.s_full);
  };
  auto chamfer_term = [&]() {
    const MatX2 ndc = project(fx.sc.camera, deformed()).ndc;
    MatX2 projected(Eigen::Index(vis_idx.size()), 2);
    for (size_t k = 0; k < vis_idx.size(); ++k)
      projected.row(Eigen::Index(k)) = ndc.row(vis_idx[k]);
    return w.lambda_chm * chamfer2d_loss(projected, samples);
  };
  auto laplacian_term = [&]() {
    return w.lambda_lap * laplacian_loss(probe.displacements(), fx.adj);
  };

  Rng rng(91);
  const double step = 1e-5;
  auto check = [&](const MatX3& analytic, const std::function<double()>& term, Region region,
                   double tol) {
    const std::vector<int> idx = mesh.regions.indices(region);
    for (int k = 0; k < 6; ++k) {
      const int i = idx[size_t(rng.index(idx.size()))];
      const int c = int(rng.index(3));
      const double fd = testing::central_diff(term, probe.coefficients(i, c), step);
      EXPECT_TRUE(testing::grad_close(analytic(i, c), fd, tol))
          << region_name(region) << " vertex " << i << " axis " << c << ": "
          << testing::grad_mismatch(analytic(i, c), fd);
    }
  };

  check(out.grad_hair_silhouette, hair_term, Region::Hair, 5e-4);
  check(out.grad_full_silhouette, full_term, Region::Neck, 5e-4);
  check(out.grad_chamfer, chamfer_term, Region::Hair, 1e-5);
  check(out.grad_chamfer, chamfer_term, Region::Neck, 1e-5);
  check(out.grad_laplacian, laplacian_term, Region::Hair, 1e-5);
  check(out.grad_laplacian, laplacian_term, Region::Neck, 1e-5);

  // detached directions: the full-silhouette term varies with hair
  // coefficients, but the routed gradient must stay exactly zero there
  const std::vector<int> hair_idx = mesh.regions.indices(Region::Hair);
  double detached_fd_mass = 0.0;
  for (int k = 0; k < 4; ++k) {
    const int i = hair_idx[size_t(rng.index(hair_idx.size()))];
    const int c = int(rng.index(3));
    detached_fd_mass += std::abs(testing::central_diff(full_term, probe.coefficients(i, c), step));
    EXPECT_EQ(out.grad_full_silhouette(i, c), 0.0);
  }
  EXPECT_GT(detached_fd_mass, 1e-8);  // the detach is load-bearing, not vacuous
}

TEST(TotalLoss, OffscreenSceneWithZeroTargets) {
  TotalLossFixture fx;
  GeometricScene scene = fx.scene();
  scene.camera.translation = Eigen::Vector2d(10, 10);  // mesh fully offscreen
  SilhouetteImage zero_full = SilhouetteImage::zeros(32, 32);
  SilhouetteImage zero_hair = SilhouetteImage::zeros(32, 32);
  GeometricScene offscreen{scene.mesh,  scene.base_vertices, scene.field, scene.camera,
                           scene.raster, 32,                 32,          zero_full,
                           zero_hair,   scene.chamfer_seed};
  EXPECT_THROW(total_geometric_loss(offscreen, LossWeights{}, fx.adj), std::invalid_argument);
  LossWeights no_dice;
  no_dice.lambda_seg = 0.0;
  const TotalGeometricLoss out = total_geometric_loss(offscreen, no_dice, fx.adj);
  EXPECT_EQ(out.visible_count, 0);
  EXPECT_DOUBLE_EQ(out.report.terms.at("chamfer2d"), 0.0);
  EXPECT_DOUBLE_EQ(out.report.terms.at("dice"), 0.0);
}

}  // namespace
}  // namespace meshfit
