#pragma once

#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <string>

#include "meshfit/binio.hpp"
#include "meshfit/pca.hpp"

namespace meshfit {

// Basis container directory: manifest.json + mean.bin, components.bin,
// singular_values.bin (f32 little-endian, row-major).
inline void save_basis(const std::string& dir, const LinearOffsetBasis& basis) {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest;
  manifest["vertex_count"] = basis.vertex_count;
  manifest["k_hair"] = basis.k_hair;
  manifest["k_neck"] = basis.k_neck;
  manifest["centered"] = basis.centered;
  manifest["hair_rows"] = basis.hair_rows;
  manifest["neck_rows"] = basis.neck_rows;
  {
    std::ofstream out(dir + "/manifest.json");
    if (!out) throw std::runtime_error("cannot open for write: " + dir + "/manifest.json");
    out << manifest.dump(2) << "\n";
  }
  auto to_f32 = [](const Eigen::MatrixXd& m) {
    std::vector<float> v(size_t(m.rows() * m.cols()));
    size_t idx = 0;
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) v[idx++] = float(m(r, c));
    return v;
  };
  write_f32_array(dir + "/mean.bin", to_f32(basis.mean));
  write_f32_array(dir + "/components.bin", to_f32(basis.components));
  write_f32_array(dir + "/singular_values.bin", to_f32(basis.singular_values));
}

inline LinearOffsetBasis load_basis(const std::string& dir) {
  std::ifstream in(dir + "/manifest.json");
  if (!in) throw std::runtime_error("cannot open for read: " + dir + "/manifest.json");
  nlohmann::json manifest;
  in >> manifest;
  LinearOffsetBasis basis;
  basis.vertex_count = manifest.at("vertex_count").get<int>();
  basis.k_hair = manifest.at("k_hair").get<int>();
  basis.k_neck = manifest.at("k_neck").get<int>();
  basis.centered = manifest.at("centered").get<bool>();
  basis.hair_rows = manifest.at("hair_rows").get<std::vector<int>>();
  basis.neck_rows = manifest.at("neck_rows").get<std::vector<int>>();

  const Eigen::Index n3 = 3 * basis.vertex_count;
  const Eigen::Index k = basis.k_total();
  const auto mean = read_f32_array(dir + "/mean.bin");
  const auto comps = read_f32_array(dir + "/components.bin");
  const auto sv = read_f32_array(dir + "/singular_values.bin");
  if (Eigen::Index(mean.size()) != n3 || Eigen::Index(comps.size()) != n3 * k ||
      Eigen::Index(sv.size()) != k)
    throw std::runtime_error("basis array sizes disagree with manifest: " + dir);
  basis.mean.resize(n3);
  for (Eigen::Index i = 0; i < n3; ++i) basis.mean(i) = double(mean[size_t(i)]);
  basis.components.resize(n3, k);
  size_t idx = 0;
  for (Eigen::Index r = 0; r < n3; ++r)
    for (Eigen::Index c = 0; c < k; ++c) basis.components(r, c) = double(comps[idx++]);
  basis.singular_values.resize(k);
  for (Eigen::Index i = 0; i < k; ++i) basis.singular_values(i) = double(sv[size_t(i)]);
  return basis;
}

}  // namespace meshfit
