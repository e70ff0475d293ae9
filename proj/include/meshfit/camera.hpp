#pragma once

#include <Eigen/Dense>
#include <fstream>
#include <json.hpp>
#include <stdexcept>
#include <string>

#include "meshfit/mesh.hpp"

namespace meshfit {

// Weak-perspective camera: p = scale * (R v)_xy + translation, in NDC
// [-1,1]^2 with +x right, +y up. Depth is (R v)_z; LARGER depth is NEARER
// (the camera looks along -z), so front-facing triangles wind CCW in NDC.
struct Camera {
  double scale = 1.0;
  Eigen::Vector2d translation = Eigen::Vector2d::Zero();
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
};

inline void validate(const Camera& cam) {
  if (!(cam.scale > 0)) throw std::invalid_argument("camera scale must be > 0");
  if ((cam.rotation.transpose() * cam.rotation - Eigen::Matrix3d::Identity()).norm() > 1e-6)
    throw std::invalid_argument("camera rotation is not orthonormal");
}

struct Projection {
  MatX2 ndc;              // N x 2
  Eigen::VectorXd depth;  // N
};

inline Projection project(const Camera& cam, const MatX3& vertices) {
  Projection out;
  const Eigen::Matrix<double, Eigen::Dynamic, 3> rotated =
      vertices * cam.rotation.transpose();
  out.ndc.resize(vertices.rows(), 2);
  out.ndc.col(0) = cam.scale * rotated.col(0).array() + cam.translation.x();
  out.ndc.col(1) = cam.scale * rotated.col(1).array() + cam.translation.y();
  out.depth = rotated.col(2);
  return out;
}

// Pixel (ix, iy) covers an NDC cell of width 2/W; its center sits at
// x_pix = (x_ndc+1)/2*W - 0.5. Row iy=0 is the BOTTOM of the image
// (y_ndc near -1); the PGM writer flips rows into top-down file order.
inline double pixel_to_ndc_x(int ix, int width) { return (ix + 0.5) * 2.0 / width - 1.0; }
inline double pixel_to_ndc_y(int iy, int height) { return (iy + 0.5) * 2.0 / height - 1.0; }
inline double ndc_to_pixel_x(double x, int width) { return (x + 1.0) * 0.5 * width - 0.5; }
inline double ndc_to_pixel_y(double y, int height) { return (y + 1.0) * 0.5 * height - 0.5; }

inline void save_camera(const std::string& path, const Camera& cam) {
  nlohmann::json j;
  j["scale"] = cam.scale;
  j["translation"] = {cam.translation.x(), cam.translation.y()};
  std::vector<std::vector<double>> rows;
  for (int r = 0; r < 3; ++r)
    rows.push_back({cam.rotation(r, 0), cam.rotation(r, 1), cam.rotation(r, 2)});
  j["rotation"] = rows;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for write: " + path);
  out << j.dump(2) << "\n";
}

inline Camera load_camera(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open for read: " + path);
  nlohmann::json j;
  in >> j;
  Camera cam;
  cam.scale = j.at("scale").get<double>();
  const auto t = j.at("translation").get<std::vector<double>>();
  if (t.size() != 2) throw std::runtime_error("camera translation must have 2 entries");
  cam.translation = Eigen::Vector2d(t[0], t[1]);
  const auto rows = j.at("rotation").get<std::vector<std::vector<double>>>();
  if (rows.size() != 3) throw std::runtime_error("camera rotation must be 3x3");
  for (int r = 0; r < 3; ++r) {
    if (rows[size_t(r)].size() != 3) throw std::runtime_error("camera rotation must be 3x3");
    for (int c = 0; c < 3; ++c) cam.rotation(r, c) = rows[size_t(r)][size_t(c)];
  }
  validate(cam);
  return cam;
}

}  // namespace meshfit
