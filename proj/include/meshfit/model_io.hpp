#pragma once

#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <string>

#include "meshfit/binio.hpp"
#include "meshfit/blendshape.hpp"
#include "meshfit/mesh.hpp"
#include "meshfit/obj_io.hpp"

namespace meshfit {

// Model container directory:
//   manifest.json                 dimensions and joint parents
//   v_base.bin, shape_basis.bin, expr_basis.bin,
//   joint_regressor.bin, skin_weights.bin   f32 little-endian, row-major
//   mesh.obj + regions.json       topology, uv, region partition
namespace detail {

inline std::vector<float> to_f32(const Eigen::MatrixXd& m) {
  std::vector<float> out(size_t(m.rows() * m.cols()));
  size_t idx = 0;
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) out[idx++] = float(m(r, c));
  return out;
}

inline Eigen::MatrixXd from_f32(const std::vector<float>& v, Eigen::Index rows,
                                Eigen::Index cols, const std::string& what) {
  if (Eigen::Index(v.size()) != rows * cols)
    throw std::runtime_error(what + ": unexpected element count");
  Eigen::MatrixXd out(rows, cols);
  size_t idx = 0;
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) out(r, c) = double(v[idx++]);
  return out;
}

}  // namespace detail

struct ModelBundle {
  SkinnedBlendshapeModel model;
  TriMesh mesh;  // vertices mirror model.v_base
};

inline void save_model(const std::string& dir, const ModelBundle& bundle) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const SkinnedBlendshapeModel& m = bundle.model;
  nlohmann::json manifest;
  manifest["vertex_count"] = m.vertex_count();
  manifest["shape_dim"] = m.shape_dim();
  manifest["expr_dim"] = m.expr_dim();
  manifest["joint_count"] = m.joint_count();
  manifest["joint_parents"] = m.joint_parents;
  {
    std::ofstream out(dir + "/manifest.json");
    if (!out) throw std::runtime_error("cannot open for write: " + dir + "/manifest.json");
    out << manifest.dump(2) << "\n";
  }
  write_f32_array(dir + "/v_base.bin", detail::to_f32(m.v_base));
  write_f32_array(dir + "/shape_basis.bin", detail::to_f32(m.shape_basis));
  write_f32_array(dir + "/expr_basis.bin", detail::to_f32(m.expr_basis));
  write_f32_array(dir + "/joint_regressor.bin", detail::to_f32(m.joint_regressor));
  write_f32_array(dir + "/skin_weights.bin", detail::to_f32(m.skin_weights));
  save_obj(dir + "/mesh.obj", bundle.mesh);
  save_regions(dir + "/regions.json", bundle.mesh.regions);
}

inline ModelBundle load_model(const std::string& dir) {
  std::ifstream in(dir + "/manifest.json");
  if (!in) throw std::runtime_error("cannot open for read: " + dir + "/manifest.json");
  nlohmann::json manifest;
  in >> manifest;
  const int n = manifest.at("vertex_count").get<int>();
  const int k = manifest.at("shape_dim").get<int>();
  const int l = manifest.at("expr_dim").get<int>();
  const int j = manifest.at("joint_count").get<int>();

  ModelBundle bundle;
  SkinnedBlendshapeModel& m = bundle.model;
  m.joint_parents = manifest.at("joint_parents").get<std::vector<int>>();
  if (int(m.joint_parents.size()) != j)
    throw std::runtime_error("manifest joint_parents length mismatch");
  m.v_base = detail::from_f32(read_f32_array(dir + "/v_base.bin"), n, 3, "v_base");
  m.shape_basis =
      detail::from_f32(read_f32_array(dir + "/shape_basis.bin"), 3 * n, k, "shape_basis");
  m.expr_basis =
      detail::from_f32(read_f32_array(dir + "/expr_basis.bin"), 3 * n, l, "expr_basis");
  m.joint_regressor = detail::from_f32(read_f32_array(dir + "/joint_regressor.bin"), j, n,
                                       "joint_regressor");
  m.skin_weights =
      detail::from_f32(read_f32_array(dir + "/skin_weights.bin"), n, j, "skin_weights");
  validate(m);

  bundle.mesh = load_obj(dir + "/mesh.obj");
  bundle.mesh.regions = load_regions(dir + "/regions.json", bundle.mesh.vertex_count());
  validate(bundle.mesh);
  if (bundle.mesh.vertex_count() != n)
    throw std::runtime_error("mesh.obj vertex count disagrees with manifest");
  return bundle;
}

inline void save_params(const std::string& path, const PoseParams& p) {
  nlohmann::json j;
  j["shape"] = std::vector<double>(p.shape.data(), p.shape.data() + p.shape.size());
  j["expression"] =
      std::vector<double>(p.expression.data(), p.expression.data() + p.expression.size());
  std::vector<std::vector<double>> rots;
  for (Eigen::Index r = 0; r < p.joint_rotations.rows(); ++r)
    rots.push_back({p.joint_rotations(r, 0), p.joint_rotations(r, 1), p.joint_rotations(r, 2)});
  j["joint_rotations"] = rots;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for write: " + path);
  out << j.dump(2) << "\n";
}

inline PoseParams load_params(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open for read: " + path);
  nlohmann::json j;
  in >> j;
  PoseParams p;
  const auto shape = j.at("shape").get<std::vector<double>>();
  const auto expr = j.at("expression").get<std::vector<double>>();
  const auto rots = j.at("joint_rotations").get<std::vector<std::vector<double>>>();
  p.shape = Eigen::Map<const Eigen::VectorXd>(shape.data(), Eigen::Index(shape.size()));
  p.expression = Eigen::Map<const Eigen::VectorXd>(expr.data(), Eigen::Index(expr.size()));
  p.joint_rotations.resize(Eigen::Index(rots.size()), 3);
  for (size_t r = 0; r < rots.size(); ++r) {
    if (rots[r].size() != 3) throw std::runtime_error("joint_rotations rows must have 3 entries");
    for (int c = 0; c < 3; ++c) p.joint_rotations(Eigen::Index(r), c) = rots[r][size_t(c)];
  }
  return p;
}

}  // namespace meshfit
