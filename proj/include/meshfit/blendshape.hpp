#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <vector>

#include "meshfit/mesh.hpp"

namespace meshfit {

// Blendshape + linear-blend-skinning model:
//   v(shape, expr, theta) = skin(v_base + B*shape + D*expr, theta).
// Basis matrices act on the flattened 3N vector, packed row-major per vertex.
struct SkinnedBlendshapeModel {
  MatX3 v_base;                  // N x 3
  Eigen::MatrixXd shape_basis;   // 3N x K
  Eigen::MatrixXd expr_basis;    // 3N x L
  Eigen::MatrixXd joint_regressor;  // J x N, rows sum to 1
  Eigen::MatrixXd skin_weights;     // N x J, rows nonneg, sum to 1
  std::vector<int> joint_parents;   // -1 for roots; forest order: parent < child

  int vertex_count() const { return int(v_base.rows()); }
  int shape_dim() const { return int(shape_basis.cols()); }
  int expr_dim() const { return int(expr_basis.cols()); }
  int joint_count() const { return int(joint_parents.size()); }
};

struct PoseParams {
  Eigen::VectorXd shape;       // K
  Eigen::VectorXd expression;  // L
  MatX3 joint_rotations;       // J x 3 axis-angle, radians

  static PoseParams zeros(const SkinnedBlendshapeModel& model) {
    PoseParams p;
    p.shape = Eigen::VectorXd::Zero(model.shape_dim());
    p.expression = Eigen::VectorXd::Zero(model.expr_dim());
    p.joint_rotations = MatX3::Zero(model.joint_count(), 3);
    return p;
  }
};

inline void validate(const SkinnedBlendshapeModel& m) {
  const int n = m.vertex_count();
  const int j = m.joint_count();
  if (m.shape_basis.rows() != 3 * n) throw std::invalid_argument("shape_basis row count != 3N");
  if (m.expr_basis.rows() != 3 * n) throw std::invalid_argument("expr_basis row count != 3N");
  if (m.joint_regressor.rows() != j || m.joint_regressor.cols() != n)
    throw std::invalid_argument("joint_regressor shape mismatch");
  if (m.skin_weights.rows() != n || m.skin_weights.cols() != j)
    throw std::invalid_argument("skin_weights shape mismatch");
  for (int k = 0; k < j; ++k) {
    if (std::abs(m.joint_regressor.row(k).sum() - 1.0) > 1e-6)
      throw std::invalid_argument("joint_regressor row does not sum to 1");
    const int p = m.joint_parents[size_t(k)];
    if (p < -1 || p >= j) throw std::invalid_argument("joint parent out of range");
    if (p >= k) throw std::invalid_argument("joint parents must precede children");
  }
  for (int i = 0; i < n; ++i) {
    if (m.skin_weights.row(i).minCoeff() < -1e-12)
      throw std::invalid_argument("negative skin weight");
    if (std::abs(m.skin_weights.row(i).sum() - 1.0) > 1e-6)
      throw std::invalid_argument("skin_weights row does not sum to 1");
  }
}

inline void check_dims(const SkinnedBlendshapeModel& m, const PoseParams& p) {
  if (p.shape.size() != m.shape_dim()) throw std::invalid_argument("shape dim mismatch");
  if (p.expression.size() != m.expr_dim()) throw std::invalid_argument("expression dim mismatch");
  if (p.joint_rotations.rows() != m.joint_count())
    throw std::invalid_argument("joint rotation count mismatch");
}

inline MatX3 blend(const SkinnedBlendshapeModel& m, const Eigen::VectorXd& shape,
                   const Eigen::VectorXd& expr) {
  if (shape.size() != m.shape_dim() || expr.size() != m.expr_dim())
    throw std::invalid_argument("blend coefficient dim mismatch");
  Eigen::VectorXd flat = m.shape_basis * shape + m.expr_basis * expr;
  MatX3 out = m.v_base;
  out += Eigen::Map<const MatX3>(flat.data(), out.rows(), 3);
  return out;
}

// Axis-angle exponential map. Below 1e-8 the closed form loses digits to
// cancellation, so a second-order Taylor expansion takes over.
inline Eigen::Matrix3d rodrigues(const Eigen::Vector3d& axis_angle) {
  const double angle = axis_angle.norm();
  Eigen::Matrix3d k;
  k << 0, -axis_angle.z(), axis_angle.y(),
       axis_angle.z(), 0, -axis_angle.x(),
       -axis_angle.y(), axis_angle.x(), 0;
  if (angle < 1e-8)
    return Eigen::Matrix3d::Identity() + k + 0.5 * k * k;
  return Eigen::Matrix3d::Identity() + (std::sin(angle) / angle) * k +
         ((1.0 - std::cos(angle)) / (angle * angle)) * k * k;
}

// World transform per joint. Each joint rotates about its joint location
// (regressed from the blended, pre-skinning vertices), composed with its
// parent's transform: T_k(x) = M_k x + c_k.
struct JointTransforms {
  std::vector<Eigen::Matrix3d> rot;      // M_k
  std::vector<Eigen::Vector3d> trans;    // c_k
  MatX3 joints;                          // blended-space joint locations
};

inline JointTransforms compose_joint_transforms(const SkinnedBlendshapeModel& m,
                                                const MatX3& blended,
                                                const MatX3& theta) {
  const int j = m.joint_count();
  JointTransforms t;
  t.rot.resize(size_t(j));
  t.trans.resize(size_t(j));
  t.joints = m.joint_regressor * blended;
  for (int k = 0; k < j; ++k) {
    const Eigen::Matrix3d r = rodrigues(theta.row(k));
    const Eigen::Vector3d jk = t.joints.row(k);
    const int p = m.joint_parents[size_t(k)];
    if (p < 0) {
      t.rot[size_t(k)] = r;
      t.trans[size_t(k)] = jk - r * jk;
    } else {
      t.rot[size_t(k)] = t.rot[size_t(p)] * r;
      t.trans[size_t(k)] = t.rot[size_t(p)] * (jk - r * jk) + t.trans[size_t(p)];
    }
  }
  return t;
}

inline MatX3 skin(const SkinnedBlendshapeModel& m, const MatX3& blended,
                  const MatX3& theta) {
  if (blended.rows() != m.vertex_count()) throw std::invalid_argument("skin: N mismatch");
  if (theta.rows() != m.joint_count()) throw std::invalid_argument("skin: joint count mismatch");
  const JointTransforms t = compose_joint_transforms(m, blended, theta);
  MatX3 out(blended.rows(), 3);
  for (Eigen::Index i = 0; i < blended.rows(); ++i) {
    const Eigen::Vector3d v = blended.row(i);
    Eigen::Vector3d acc = Eigen::Vector3d::Zero();
    for (int k = 0; k < m.joint_count(); ++k) {
      const double w = m.skin_weights(i, k);
      if (w == 0.0) continue;
      acc += w * (t.rot[size_t(k)] * v + t.trans[size_t(k)]);
    }
    out.row(i) = acc.transpose();
  }
  return out;
}

inline MatX3 reconstruct(const SkinnedBlendshapeModel& m, const PoseParams& p) {
  check_dims(m, p);
  return skin(m, blend(m, p.shape, p.expression), p.joint_rotations);
}

// Directional derivative of skin() w.r.t. the blended vertices, with theta
// fixed. Rotations are constant, so only the joint locations (hence the c_k
// translations) and the per-vertex rest position move:
//   dj = J_reg * db,  dc_k = M_par (I - R_k) dj_k + dc_par,
//   dv'_i = sum_k W[i,k] (M_k db_i + dc_k).
inline MatX3 skin_directional(const SkinnedBlendshapeModel& m, const MatX3& blended,
                              const MatX3& theta, const MatX3& dblended) {
  const int j = m.joint_count();
  const JointTransforms t = compose_joint_transforms(m, blended, theta);
  const MatX3 djoints = m.joint_regressor * dblended;
  std::vector<Eigen::Vector3d> dtrans(static_cast<size_t>(j));
  for (int k = 0; k < j; ++k) {
    const Eigen::Matrix3d local = rodrigues(theta.row(k));
    const Eigen::Vector3d dj = djoints.row(k);
    const int p = m.joint_parents[size_t(k)];
    const Eigen::Matrix3d m_par =
        p < 0 ? Eigen::Matrix3d::Identity() : t.rot[size_t(p)];
    dtrans[size_t(k)] = m_par * (dj - local * dj);
    if (p >= 0) dtrans[size_t(k)] += dtrans[size_t(p)];
  }
  MatX3 out(blended.rows(), 3);
  for (Eigen::Index i = 0; i < blended.rows(); ++i) {
    const Eigen::Vector3d dv = dblended.row(i);
    Eigen::Vector3d acc = Eigen::Vector3d::Zero();
    for (int k = 0; k < j; ++k) {
      const double w = m.skin_weights(i, k);
      if (w == 0.0) continue;
      acc += w * (t.rot[size_t(k)] * dv + dtrans[size_t(k)]);
    }
    out.row(i) = acc.transpose();
  }
  return out;
}

// Jacobian of flatten(reconstruct) w.r.t. [shape; expression], shape 3N x (K+L).
// Column q is the directional derivative along basis direction q.
inline Eigen::MatrixXd reconstruct_jacobian(const SkinnedBlendshapeModel& m,
                                            const PoseParams& p) {
  check_dims(m, p);
  const MatX3 blended = blend(m, p.shape, p.expression);
  const int k = m.shape_dim();
  const int l = m.expr_dim();
  const Eigen::Index n3 = 3 * m.vertex_count();
  Eigen::MatrixXd jac(n3, k + l);
  for (int q = 0; q < k + l; ++q) {
    const Eigen::VectorXd col =
        q < k ? m.shape_basis.col(q) : m.expr_basis.col(q - k);
    const Eigen::Map<const MatX3> db(col.data(), m.vertex_count(), 3);
    const MatX3 dv = skin_directional(m, blended, p.joint_rotations, db);
    jac.col(q) = Eigen::Map<const Eigen::VectorXd>(dv.data(), n3);
  }
  return jac;
}

}  // namespace meshfit
