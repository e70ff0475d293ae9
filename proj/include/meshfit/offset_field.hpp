#pragma once

#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "meshfit/binio.hpp"
#include "meshfit/mesh.hpp"

namespace meshfit {

// Per-vertex offset coefficients m with cached normals n; the displacement
// is m (.) n componentwise. Face/ear rows are structurally zero: the mask is
// baked in at construction and re-applied after every coefficient update.
struct OffsetField {
  MatX3 coefficients;        // m
  MatX3 normals;             // n, frozen from the undeformed reconstruction
  std::vector<char> active;  // 1 on hair/neck vertices, 0 on face/ears

  int vertex_count() const { return int(coefficients.rows()); }

  void apply_mask() {
    for (Eigen::Index i = 0; i < coefficients.rows(); ++i)
      if (!active[size_t(i)]) coefficients.row(i).setZero();
  }

  MatX3 displacements() const {
    MatX3 out = coefficients.cwiseProduct(normals);
    for (Eigen::Index i = 0; i < out.rows(); ++i)
      if (!active[size_t(i)]) out.row(i).setZero();
    return out;
  }
};

// Zero field over `mesh`, normals taken from `undeformed` once.
inline OffsetField make_offset_field(const TriMesh& mesh, const MatX3& undeformed) {
  OffsetField field;
  field.coefficients = MatX3::Zero(mesh.vertex_count(), 3);
  field.normals = compute_vertex_normals(mesh, undeformed);
  field.active.resize(size_t(mesh.vertex_count()));
  for (int i = 0; i < mesh.vertex_count(); ++i)
    field.active[size_t(i)] =
        mesh.regions.is(i, Region::Hair) || mesh.regions.is(i, Region::Neck);
  return field;
}

inline MatX3 apply_offsets(const MatX3& base, const OffsetField& field) {
  if (base.rows() != field.coefficients.rows())
    throw std::invalid_argument("apply_offsets: row count mismatch");
  return base + field.displacements();
}

// Offset-field file: "OFLD" magic, u32 version, then N x 3 f32 row-major.
inline void save_field(const std::string& path, const MatX3& coefficients) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for write: " + path);
  const char magic[4] = {'O', 'F', 'L', 'D'};
  const uint32_t version = 1;
  out.write(magic, 4);
  out.write(reinterpret_cast<const char*>(&version), 4);
  std::vector<float> data(size_t(coefficients.rows()) * 3);
  for (Eigen::Index i = 0; i < coefficients.rows(); ++i)
    for (int c = 0; c < 3; ++c) data[size_t(i) * 3 + size_t(c)] = float(coefficients(i, c));
  out.write(reinterpret_cast<const char*>(data.data()), std::streamsize(data.size() * 4));
  if (!out) throw std::runtime_error("write failed: " + path);
}

inline MatX3 load_field(const std::string& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw std::runtime_error("cannot open for read: " + path);
  const std::streamsize bytes = in.tellg();
  if (bytes < 8 || (bytes - 8) % 12 != 0)
    throw std::runtime_error("bad offset-field file size: " + path);
  in.seekg(0);
  char magic[4];
  uint32_t version = 0;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&version), 4);
  if (std::memcmp(magic, "OFLD", 4) != 0)
    throw std::runtime_error("bad offset-field magic: " + path);
  if (version != 1) throw std::runtime_error("unsupported offset-field version: " + path);
  const Eigen::Index n = (bytes - 8) / 12;
  std::vector<float> data(size_t(n) * 3);
  in.read(reinterpret_cast<char*>(data.data()), bytes - 8);
  if (!in) throw std::runtime_error("read failed: " + path);
  MatX3 out(n, 3);
  for (Eigen::Index i = 0; i < n; ++i)
    for (int c = 0; c < 3; ++c) out(i, c) = double(data[size_t(i) * 3 + size_t(c)]);
  return out;
}

}  // namespace meshfit
