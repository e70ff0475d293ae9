#pragma once

#include <bit>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace meshfit {

static_assert(std::endian::native == std::endian::little,
              "raw float I/O assumes a little-endian host");

inline void write_f32_array(const std::string& path,
                            const std::vector<float>& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for write: " + path);
  out.write(reinterpret_cast<const char*>(data.data()),
            std::streamsize(data.size() * sizeof(float)));
  if (!out) throw std::runtime_error("write failed: " + path);
}

inline std::vector<float> read_f32_array(const std::string& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw std::runtime_error("cannot open for read: " + path);
  const std::streamsize bytes = in.tellg();
  if (bytes % std::streamsize(sizeof(float)) != 0)
    throw std::runtime_error("file size not a multiple of 4: " + path);
  std::vector<float> data(size_t(bytes) / sizeof(float));
  in.seekg(0);
  in.read(reinterpret_cast<char*>(data.data()), bytes);
  if (!in) throw std::runtime_error("read failed: " + path);
  return data;
}

}  // namespace meshfit
