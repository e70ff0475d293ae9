#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <stdexcept>
#include <string>
#include <vector>

namespace meshfit {

// Row-major so a row maps directly onto the packed (x,y,z) layout used by
// the flattened 3N-vector views and the binary files.
using MatX3 = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;
using MatX2 = Eigen::Matrix<double, Eigen::Dynamic, 2, Eigen::RowMajor>;
using Triangle = std::array<int, 3>;

enum class Region : uint8_t { Face = 0, Ears = 1, Hair = 2, Neck = 3 };

inline const char* region_name(Region r) {
  switch (r) {
    case Region::Face: return "face";
    case Region::Ears: return "ears";
    case Region::Hair: return "hair";
    case Region::Neck: return "neck";
  }
  throw std::invalid_argument("unknown region");
}

inline Region region_from_name(const std::string& s) {
  if (s == "face") return Region::Face;
  if (s == "ears") return Region::Ears;
  if (s == "hair") return Region::Hair;
  if (s == "neck") return Region::Neck;
  throw std::invalid_argument("unknown region name: " + s);
}

// Total partition: every vertex carries exactly one label.
struct RegionPartition {
  std::vector<Region> label;

  int count() const { return int(label.size()); }
  bool is(int v, Region r) const { return label[size_t(v)] == r; }

  std::vector<int> indices(Region r) const {
    std::vector<int> out;
    for (int i = 0; i < count(); ++i)
      if (label[size_t(i)] == r) out.push_back(i);
    return out;
  }
};

struct TriMesh {
  MatX3 vertices;                   // N x 3
  std::vector<Triangle> triangles;  // CCW = front-facing
  MatX2 uv;                         // N x 2 in [0,1], may be empty
  RegionPartition regions;          // one label per vertex

  int vertex_count() const { return int(vertices.rows()); }
  int triangle_count() const { return int(triangles.size()); }
};

inline void validate(const TriMesh& mesh) {
  const int n = mesh.vertex_count();
  for (const Triangle& t : mesh.triangles) {
    for (int k = 0; k < 3; ++k)
      if (t[size_t(k)] < 0 || t[size_t(k)] >= n)
        throw std::invalid_argument("triangle index out of range");
    if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2])
      throw std::invalid_argument("triangle has repeated vertex indices");
  }
  if (mesh.regions.count() != n)
    throw std::invalid_argument("region partition size does not match vertex count");
  if (mesh.uv.rows() != 0 && mesh.uv.rows() != n)
    throw std::invalid_argument("uv row count does not match vertex count");
}

struct VertexAdjacency {
  std::vector<std::vector<int>> neighbors;  // per vertex, sorted ascending

  int count() const { return int(neighbors.size()); }
};

inline VertexAdjacency build_adjacency(const TriMesh& mesh) {
  VertexAdjacency adj;
  adj.neighbors.assign(size_t(mesh.vertex_count()), {});
  for (const Triangle& t : mesh.triangles) {
    for (int k = 0; k < 3; ++k) {
      const int a = t[size_t(k)];
      const int b = t[size_t((k + 1) % 3)];
      adj.neighbors[size_t(a)].push_back(b);
      adj.neighbors[size_t(b)].push_back(a);
    }
  }
  for (auto& nb : adj.neighbors) {
    std::sort(nb.begin(), nb.end());
    nb.erase(std::unique(nb.begin(), nb.end()), nb.end());
  }
  return adj;
}

// Area-weighted vertex normals of `positions` under the mesh topology.
// Degenerate faces (area < 1e-12) add nothing; a vertex whose accumulated
// normal stays below 1e-12 falls back to (0,0,1).
inline MatX3 compute_vertex_normals(const TriMesh& mesh, const MatX3& positions) {
  if (positions.rows() != mesh.vertex_count())
    throw std::invalid_argument("positions row count does not match mesh");
  MatX3 acc = MatX3::Zero(positions.rows(), 3);
  for (const Triangle& t : mesh.triangles) {
    const Eigen::Vector3d a = positions.row(t[0]);
    const Eigen::Vector3d b = positions.row(t[1]);
    const Eigen::Vector3d c = positions.row(t[2]);
    const Eigen::Vector3d cross = (b - a).cross(c - a);  // |cross| = 2 * area
    if (0.5 * cross.norm() < 1e-12) continue;
    for (int k = 0; k < 3; ++k) acc.row(t[size_t(k)]) += cross.transpose();
  }
  MatX3 normals(positions.rows(), 3);
  for (Eigen::Index i = 0; i < acc.rows(); ++i) {
    const double norm = acc.row(i).norm();
    if (norm < 1e-12)
      normals.row(i) = Eigen::RowVector3d(0, 0, 1);
    else
      normals.row(i) = acc.row(i) / norm;
  }
  return normals;
}

// Triangles whose three vertices all carry a label from `allowed`.
inline std::vector<Triangle> triangles_in_regions(
    const TriMesh& mesh, std::initializer_list<Region> allowed) {
  auto ok = [&](int v) {
    for (Region r : allowed)
      if (mesh.regions.is(v, r)) return true;
    return false;
  };
  std::vector<Triangle> out;
  for (const Triangle& t : mesh.triangles)
    if (ok(t[0]) && ok(t[1]) && ok(t[2])) out.push_back(t);
  return out;
}

}  // namespace meshfit
