#pragma once

#include <Eigen/Dense>
#include <cctype>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>

namespace meshfit {

// H x W occupancy grid with values in [0,1]. values(y, x); row y=0 is the
// bottom of the image in NDC terms (see camera.hpp).
struct SilhouetteImage {
  int height = 0;
  int width = 0;
  Eigen::MatrixXd values;  // height rows, width cols

  static SilhouetteImage zeros(int h, int w) {
    if (h < 1 || w < 1) throw std::invalid_argument("image size must be >= 1");
    return {h, w, Eigen::MatrixXd::Zero(h, w)};
  }
};

inline void validate(const SilhouetteImage& img) {
  if (img.values.rows() != img.height || img.values.cols() != img.width)
    throw std::invalid_argument("image buffer does not match declared size");
  if (img.height < 1 || img.width < 1) throw std::invalid_argument("image size must be >= 1");
  if (img.values.minCoeff() < 0.0 || img.values.maxCoeff() > 1.0)
    throw std::invalid_argument("image values outside [0,1]");
}

inline bool same_size(const SilhouetteImage& a, const SilhouetteImage& b) {
  return a.height == b.height && a.width == b.width;
}

// 8-bit binary PGM (P5); pixel byte = round(255 * value). File rows run
// top-down, so rows are written in reverse of the bottom-up memory order.
inline void save_pgm(const std::string& path, const SilhouetteImage& img) {
  validate(img);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for write: " + path);
  out << "P5\n" << img.width << " " << img.height << "\n255\n";
  std::vector<unsigned char> row(size_t(img.width));
  for (int y = img.height - 1; y >= 0; --y) {
    for (int x = 0; x < img.width; ++x)
      row[size_t(x)] = static_cast<unsigned char>(std::lround(255.0 * img.values(y, x)));
    out.write(reinterpret_cast<const char*>(row.data()), img.width);
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

inline SilhouetteImage load_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for read: " + path);
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  in >> magic;
  if (magic != "P5") throw std::runtime_error("not a binary PGM (P5): " + path);
  auto next_int = [&](int& value) {
    // skip whitespace and '#' comment lines between header tokens
    for (;;) {
      const int c = in.peek();
      if (c == '#') {
        std::string line;
        std::getline(in, line);
      } else if (std::isspace(c)) {
        in.get();
      } else {
        break;
      }
    }
    if (!(in >> value)) throw std::runtime_error("bad PGM header: " + path);
  };
  next_int(w);
  next_int(h);
  next_int(maxval);
  if (maxval != 255) throw std::runtime_error("PGM maxval must be 255: " + path);
  in.get();  // single whitespace byte after header
  SilhouetteImage img = SilhouetteImage::zeros(h, w);
  std::vector<unsigned char> row(static_cast<size_t>(w));
  for (int y = h - 1; y >= 0; --y) {
    in.read(reinterpret_cast<char*>(row.data()), w);
    if (!in) throw std::runtime_error("truncated PGM: " + path);
    for (int x = 0; x < w; ++x) img.values(y, x) = double(row[size_t(x)]) / 255.0;
  }
  return img;
}

}  // namespace meshfit
