#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "meshfit/fit.hpp"
#include "meshfit/synth.hpp"

namespace meshfit {
namespace {

TEST(Adam, ZeroGradientLeavesVariableUnchanged) {
  Eigen::VectorXd x(3);
  x << 1.0, -2.0, 0.5;
  const Eigen::VectorXd before = x;
  auto state = AdamState<Eigen::VectorXd>::like(x, 1e-2);
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(3);
  adam_step(state, x, zero);
  EXPECT_EQ(x, before);
}

TEST(Adam, FirstStepIsSignedLearningRate) {
  Eigen::VectorXd x(2);
  x << 0.0, 0.0;
  auto state = AdamState<Eigen::VectorXd>::like(x, 1e-2);
  Eigen::VectorXd g(2);
  g << 5.0, -3.0;  // |g| >> eps, so the normalized step saturates
  adam_step(state, x, g);
  EXPECT_NEAR(x(0), -1e-2, 1e-10);
  EXPECT_NEAR(x(1), 1e-2, 1e-10);
}

TEST(Adam, MatchesScalarRecurrenceOnQuadratic) {
  const double lr = 0.05, beta1 = 0.5, beta2 = 0.999, eps = 1e-8;
  Eigen::VectorXd x(1);
  x << 1.3;
  auto state = AdamState<Eigen::VectorXd>::like(x, lr);
  state.beta1 = beta1;
  state.beta2 = beta2;
  state.eps = eps;

  double xs = 1.3, m1 = 0.0, m2 = 0.0;
  for (int step = 1; step <= 100; ++step) {
    Eigen::VectorXd g(1);
    g << 2.0 * x(0);
    adam_step(state, x, g);

    const double gs = 2.0 * xs;
    m1 = beta1 * m1 + (1.0 - beta1) * gs;
    m2 = beta2 * m2 + (1.0 - beta2) * gs * gs;
    const double c1 = 1.0 - std::pow(beta1, step);
    const double c2 = 1.0 - std::pow(beta2, step);
    xs -= lr * (m1 / c1) / (std::sqrt(m2 / c2) + eps);

    EXPECT_DOUBLE_EQ(x(0), xs) << "step " << step;
  }
  EXPECT_LT(std::abs(x(0)), 0.1);  // descended from 1.3 toward the minimum
}

TEST(Adam, NonFiniteGradientThrows) {
  Eigen::VectorXd x = Eigen::VectorXd::Zero(2);
  auto state = AdamState<Eigen::VectorXd>::like(x, 1e-2);
  Eigen::VectorXd g(2);
  g << 1.0, std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(adam_step(state, x, g), std::runtime_error);
}

TEST(Adam, ShapeMismatchThrows) {
  Eigen::VectorXd x = Eigen::VectorXd::Zero(2);
  auto state = AdamState<Eigen::VectorXd>::like(x, 1e-2);
  const Eigen::VectorXd wrong_shape = Eigen::VectorXd::Zero(3);
  EXPECT_THROW(adam_step(state, x, wrong_shape), std::invalid_argument);
}

// ---- offset field -----------------------------------------------------------

TEST(OffsetFieldOps, UnitCoefficientsDisplaceAlongNormals) {
  TriMesh mesh = icosphere(1);
  mesh.regions = head_regions(mesh.vertices);
  OffsetField field = make_offset_field(mesh, mesh.vertices);
  field.coefficients.setOnes();
  const MatX3 deformed = apply_offsets(mesh.vertices, field);
  for (int i = 0; i < mesh.vertex_count(); ++i) {
    if (field.active[size_t(i)]) {
      const Eigen::RowVector3d expected = mesh.vertices.row(i) + field.normals.row(i);
      EXPECT_EQ(deformed.row(i), expected) << "active vertex " << i;
    } else {
      EXPECT_EQ(deformed.row(i), mesh.vertices.row(i)) << "masked vertex " << i;
    }
  }
}

TEST(OffsetFieldOps, DisplacementsApplyMaskBitExactly) {
  TriMesh mesh = icosphere(1);
  mesh.regions = head_regions(mesh.vertices);
  OffsetField field = make_offset_field(mesh, mesh.vertices);
  Rng rng(17);
  for (Eigen::Index i = 0; i < field.coefficients.rows(); ++i)
    for (int c = 0; c < 3; ++c) field.coefficients(i, c) = rng.uniform(-1, 1);
  const MatX3 disp = field.displacements();
  int masked = 0, active = 0;
  for (int i = 0; i < mesh.vertex_count(); ++i) {
    if (!field.active[size_t(i)]) {
      EXPECT_EQ(disp.row(i).cwiseAbs().sum(), 0.0);
      ++masked;
    } else {
      const Eigen::RowVector3d expected =
          field.coefficients.row(i).cwiseProduct(field.normals.row(i));
      EXPECT_EQ(disp.row(i), expected);
      ++active;
    }
  }
  EXPECT_GT(masked, 0);
  EXPECT_GT(active, 0);

  // apply_mask zeroes the same rows in the coefficients themselves
  field.apply_mask();
  for (int i = 0; i < mesh.vertex_count(); ++i)
    if (!field.active[size_t(i)])
      EXPECT_EQ(field.coefficients.row(i).cwiseAbs().sum(), 0.0);
}

TEST(FieldIo, RoundTripIsF32Exact) {
  Rng rng(23);
  MatX3 coeffs(37, 3);
  for (Eigen::Index i = 0; i < coeffs.rows(); ++i)
    for (int c = 0; c < 3; ++c) coeffs(i, c) = rng.uniform(-2, 2);
  const std::string path = ::testing::TempDir() + "field_roundtrip.bin";
  save_field(path, coeffs);
  const MatX3 loaded = load_field(path);
  ASSERT_EQ(loaded.rows(), 37);
  for (Eigen::Index i = 0; i < coeffs.rows(); ++i)
    for (int c = 0; c < 3; ++c) EXPECT_EQ(loaded(i, c), double(float(coeffs(i, c))));
}

TEST(FieldIo, RejectsCorruptFiles) {
  const std::string dir = ::testing::TempDir();
  {
    std::ofstream out(dir + "bad_magic.bin", std::ios::binary);
    out.write("XXXX\x01\x00\x00\x00", 8);
    const char zeros[12] = {};
    out.write(zeros, 12);
  }
  EXPECT_THROW(load_field(dir + "bad_magic.bin"), std::runtime_error);
  {
    std::ofstream out(dir + "truncated.bin", std::ios::binary);
    out.write("OFLD\x01", 5);
  }
  EXPECT_THROW(load_field(dir + "truncated.bin"), std::runtime_error);
  {
    std::ofstream out(dir + "bad_version.bin", std::ios::binary);
    out.write("OFLD\x07\x00\x00\x00", 8);
    const char zeros[12] = {};
    out.write(zeros, 12);
  }
  EXPECT_THROW(load_field(dir + "bad_version.bin"), std::runtime_error);
}

// ---- IoU ---------------------------------------------------------------------

TEST(ComputeIou, ClosedForms) {
  SilhouetteImage a = SilhouetteImage::zeros(1, 3), b = SilhouetteImage::zeros(1, 3);
  a.values << 1, 1, 0;
  b.values << 0, 1, 1;
  EXPECT_DOUBLE_EQ(compute_iou(a, b), 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(compute_iou(a, a), 1.0);
  SilhouetteImage left = SilhouetteImage::zeros(1, 3), right = SilhouetteImage::zeros(1, 3);
  left.values << 1, 0, 0;
  right.values << 0, 0, 1;
  EXPECT_DOUBLE_EQ(compute_iou(left, right), 0.0);
  const SilhouetteImage empty = SilhouetteImage::zeros(1, 3);
  EXPECT_DOUBLE_EQ(compute_iou(empty, empty), 1.0);  // empty union
  // threshold is strict: exactly-0.5 pixels count as background
  SilhouetteImage half = SilhouetteImage::zeros(1, 3);
  half.values << 0.5, 0.5, 0.5;
  EXPECT_DOUBLE_EQ(compute_iou(half, empty), 1.0);
}

// ---- fit loop ----------------------------------------------------------------

struct FitOutcome {
  SynthScene sc;
  FitConfig cfg;
  FitResult result;
};

const FitOutcome& shared_fit() {
  static const FitOutcome* out = [] {
    auto* o = new FitOutcome;
    o->sc = make_scene(3, 48, 2);
    o->cfg.iterations = 40;
    o->cfg.seed = 7;
    o->cfg.raster = o->sc.raster;
    o->result = fit(o->sc.bundle.model, o->sc.bundle.mesh, o->sc.params, o->sc.s_full,
                    o->sc.s_hair, o->sc.camera, o->cfg);
    return o;
  }();
  return *out;
}

TEST(Fit, LossDecreasesAndIouImproves) {
  const FitOutcome& fx = shared_fit();
  ASSERT_EQ(fx.result.trace.size(), 41u);
  EXPECT_LT(fx.result.trace.back().total, 0.6 * fx.result.trace.front().total);

  const MatX3 base = reconstruct(fx.sc.bundle.model, fx.sc.params);
  const SilhouetteImage initial = rasterize_soft(fx.sc.bundle.mesh.triangles, base,
                                                 fx.sc.camera, fx.cfg.raster, 48, 48);
  const double iou_before = compute_iou(initial, fx.sc.s_full);
  const double iou_after = compute_iou(fx.result.o_full, fx.sc.s_full);
  EXPECT_GT(iou_after, iou_before);
}

TEST(Fit, FinalTraceEntryIsReEvaluable) {
  const FitOutcome& fx = shared_fit();
  const MatX3 base = reconstruct(fx.sc.bundle.model, fx.sc.params);
  const VertexAdjacency adj = build_adjacency(fx.sc.bundle.mesh);
  const GeometricScene scene{fx.sc.bundle.mesh,
                             base,
                             fx.result.field,
                             fx.sc.camera,
                             fx.cfg.raster,
                             48,
                             48,
                             fx.sc.s_full,
                             fx.sc.s_hair,
                             derive_seed(fx.cfg.seed, uint64_t(fx.cfg.iterations))};
  const TotalGeometricLoss loss = total_geometric_loss(scene, fx.cfg.weights, adj);
  EXPECT_EQ(loss.report.total, fx.result.trace.back().total);
  EXPECT_EQ(loss.report.terms, fx.result.trace.back().terms);
  EXPECT_EQ(loss.o_full.values, fx.result.o_full.values);
  EXPECT_EQ(loss.o_hair.values, fx.result.o_hair.values);
}

TEST(Fit, RoutingDiagnosticsStayZero) {
  const FitOutcome& fx = shared_fit();
  EXPECT_EQ(fx.result.cum_grad_face_ears, 0.0);
  EXPECT_EQ(fx.result.cum_hair_term_to_neck, 0.0);
  EXPECT_EQ(fx.result.cum_full_term_to_hair, 0.0);
  const TriMesh& mesh = fx.sc.bundle.mesh;
  double moved = 0.0;
  for (int i = 0; i < mesh.vertex_count(); ++i) {
    const bool frozen =
        mesh.regions.is(i, Region::Face) || mesh.regions.is(i, Region::Ears);
    if (frozen)
      EXPECT_EQ(fx.result.field.coefficients.row(i).cwiseAbs().sum(), 0.0);
    else
      moved += fx.result.field.coefficients.row(i).cwiseAbs().sum();
  }
  EXPECT_GT(moved, 0.0);
}

TEST(Fit, DeterministicAcrossRuns) {
  const SynthScene sc = make_scene(2, 32, 1);
  FitConfig cfg;
  cfg.iterations = 10;
  cfg.seed = 4;
  cfg.raster = sc.raster;
  const FitResult a =
      fit(sc.bundle.model, sc.bundle.mesh, sc.params, sc.s_full, sc.s_hair, sc.camera, cfg);
  const FitResult b =
      fit(sc.bundle.model, sc.bundle.mesh, sc.params, sc.s_full, sc.s_hair, sc.camera, cfg);
  EXPECT_EQ(a.field.coefficients, b.field.coefficients);
  EXPECT_EQ(a.o_full.values, b.o_full.values);
  ASSERT_EQ(a.trace.size(), b.trace.size());
  for (size_t k = 0; k < a.trace.size(); ++k) {
    EXPECT_EQ(a.trace[k].total, b.trace[k].total);
    EXPECT_EQ(a.trace[k].terms, b.trace[k].terms);
  }
}

TEST(Fit, ZeroWeightsLeaveFieldUntouched) {
  const SynthScene sc = make_scene(2, 32, 1);
  FitConfig cfg;
  cfg.iterations = 3;
  cfg.weights = LossWeights{0, 0, 0, 0, 0};
  cfg.raster = sc.raster;
  const FitResult r =
      fit(sc.bundle.model, sc.bundle.mesh, sc.params, sc.s_full, sc.s_hair, sc.camera, cfg);
  EXPECT_EQ(r.field.coefficients.cwiseAbs().maxCoeff(), 0.0);
  for (const LossReport& rep : r.trace) EXPECT_EQ(rep.total, 0.0);
}

TEST(Fit, OptimizeShapeRefinesShapeOnly) {
  const SynthScene sc = make_scene(11, 32, 1);
  FitConfig cfg;
  cfg.iterations = 10;
  cfg.optimize_shape = true;
  cfg.raster = sc.raster;
  const FitResult r =
      fit(sc.bundle.model, sc.bundle.mesh, sc.params, sc.s_full, sc.s_hair, sc.camera, cfg);
  EXPECT_GT(r.params.shape.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(r.params.expression.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(r.params.joint_rotations.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_LT(r.trace.back().total, r.trace.front().total);
}

TEST(Fit, InvalidConfigThrows) {
  const SynthScene sc = make_scene(2, 32, 1);
  auto run = [&](const FitConfig& cfg) {
    return fit(sc.bundle.model, sc.bundle.mesh, sc.params, sc.s_full, sc.s_hair, sc.camera,
               cfg);
  };
  FitConfig bad;
  bad.iterations = 0;
  EXPECT_THROW(run(bad), std::invalid_argument);
  bad = FitConfig{};
  bad.lr = 0.0;
  EXPECT_THROW(run(bad), std::invalid_argument);
  bad = FitConfig{};
  bad.beta1 = 1.0;
  EXPECT_THROW(run(bad), std::invalid_argument);
  bad = FitConfig{};
  bad.image_size = 64;  // targets are 32 x 32
  EXPECT_THROW(run(bad), std::invalid_argument);
}

}  // namespace
}  // namespace meshfit
