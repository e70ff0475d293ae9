#pragma once

#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <stdexcept>
#include <string>

#include "meshfit/mesh.hpp"

namespace meshfit {

// OBJ subset: v / vt / f with triangular faces, indices 1-based, vertex
// references of the form i, i/t, i//n, or i/t/n (normals ignored).
// Coordinates are printed with %.9g, enough digits to round-trip f32 data.
inline void save_obj(const std::string& path, const TriMesh& mesh) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for write: " + path);
  char buf[128];
  for (Eigen::Index i = 0; i < mesh.vertices.rows(); ++i) {
    std::snprintf(buf, sizeof(buf), "v %.9g %.9g %.9g\n", mesh.vertices(i, 0),
                  mesh.vertices(i, 1), mesh.vertices(i, 2));
    out << buf;
  }
  const bool has_uv = mesh.uv.rows() > 0;
  for (Eigen::Index i = 0; i < mesh.uv.rows(); ++i) {
    std::snprintf(buf, sizeof(buf), "vt %.9g %.9g\n", mesh.uv(i, 0), mesh.uv(i, 1));
    out << buf;
  }
  for (const Triangle& t : mesh.triangles) {
    if (has_uv)
      out << "f " << t[0] + 1 << "/" << t[0] + 1 << " " << t[1] + 1 << "/"
          << t[1] + 1 << " " << t[2] + 1 << "/" << t[2] + 1 << "\n";
    else
      out << "f " << t[0] + 1 << " " << t[1] + 1 << " " << t[2] + 1 << "\n";
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

inline TriMesh load_obj(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open for read: " + path);
  std::vector<Eigen::RowVector3d> verts;
  std::vector<Eigen::RowVector2d> uvs;
  std::vector<Triangle> tris;
  std::string line;
  auto parse_ref = [&](const std::string& tok) {
    // "i", "i/t", "i//n", "i/t/n"; only the vertex index matters here.
    const size_t slash = tok.find('/');
    const int idx = std::stoi(slash == std::string::npos ? tok : tok.substr(0, slash));
    if (idx < 1 || size_t(idx) > verts.size())
      throw std::runtime_error("OBJ face index out of range in " + path);
    return idx - 1;
  };
  while (std::getline(in, line)) {
    std::istringstream ss(line);
    std::string tag;
    if (!(ss >> tag)) continue;
    if (tag == "v") {
      Eigen::RowVector3d v;
      if (!(ss >> v[0] >> v[1] >> v[2])) throw std::runtime_error("bad v line in " + path);
      verts.push_back(v);
    } else if (tag == "vt") {
      Eigen::RowVector2d v;
      if (!(ss >> v[0] >> v[1])) throw std::runtime_error("bad vt line in " + path);
      uvs.push_back(v);
    } else if (tag == "f") {
      std::vector<int> refs;
      std::string tok;
      while (ss >> tok) refs.push_back(parse_ref(tok));
      if (refs.size() != 3) throw std::runtime_error("non-triangular face in " + path);
      tris.push_back({refs[0], refs[1], refs[2]});
    }
    // comments, normals, groups, materials: ignored
  }
  TriMesh mesh;
  mesh.vertices.resize(Eigen::Index(verts.size()), 3);
  for (size_t i = 0; i < verts.size(); ++i) mesh.vertices.row(Eigen::Index(i)) = verts[i];
  if (!uvs.empty()) {
    if (uvs.size() != verts.size())
      throw std::runtime_error("uv count does not match vertex count in " + path);
    mesh.uv.resize(Eigen::Index(uvs.size()), 2);
    for (size_t i = 0; i < uvs.size(); ++i) mesh.uv.row(Eigen::Index(i)) = uvs[i];
  }
  mesh.triangles = std::move(tris);
  // caller attaches regions (sidecar file) before validate()
  return mesh;
}

// Sidecar format: { "face": [indices...], "ears": [...], "hair": [...], "neck": [...] }
inline void save_regions(const std::string& path, const RegionPartition& regions) {
  nlohmann::json j;
  for (Region r : {Region::Face, Region::Ears, Region::Hair, Region::Neck})
    j[region_name(r)] = regions.indices(r);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for write: " + path);
  out << j.dump(2) << "\n";
}

inline RegionPartition load_regions(const std::string& path, int vertex_count) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open for read: " + path);
  nlohmann::json j;
  in >> j;
  RegionPartition regions;
  regions.label.assign(size_t(vertex_count), Region::Face);
  std::vector<bool> seen(size_t(vertex_count), false);
  for (auto& [key, value] : j.items()) {
    const Region r = region_from_name(key);
    for (int idx : value.get<std::vector<int>>()) {
      if (idx < 0 || idx >= vertex_count)
        throw std::runtime_error("region index out of range in " + path);
      if (seen[size_t(idx)])
        throw std::runtime_error("vertex assigned to two regions in " + path);
      seen[size_t(idx)] = true;
      regions.label[size_t(idx)] = r;
    }
  }
  for (int i = 0; i < vertex_count; ++i)
    if (!seen[size_t(i)])
      throw std::runtime_error("vertex missing from region partition in " + path);
  return regions;
}

}  // namespace meshfit
