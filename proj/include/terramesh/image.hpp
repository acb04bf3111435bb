#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace terramesh {

// Per-pixel depth in meters (camera-frame z). Valid entries are strictly
// positive; invalid entries are exactly zero.
struct DepthImage {
  int width = 0;
  int height = 0;
  std::vector<double> depth;

  DepthImage() = default;
  DepthImage(int w, int h) : width(w), height(h), depth(static_cast<std::size_t>(w) * h, 0.0) {}

  double at(int row, int col) const { return depth[static_cast<std::size_t>(row) * width + col]; }
  double& at(int row, int col) { return depth[static_cast<std::size_t>(row) * width + col]; }
  bool valid(int row, int col) const { return at(row, col) > 0.0; }

  std::size_t valid_count() const {
    std::size_t n = 0;
    for (double d : depth) n += d > 0.0;
    return n;
  }
};

// Planar RGB image, channel-major (3 x height x width), values in [0, 1].
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<double> data;

  RgbImage() = default;
  RgbImage(int w, int h) : width(w), height(h), data(3ull * w * h, 0.0) {}

  double at(int channel, int row, int col) const {
    return data[(static_cast<std::size_t>(channel) * height + row) * width + col];
  }
  double& at(int channel, int row, int col) {
    return data[(static_cast<std::size_t>(channel) * height + row) * width + col];
  }
};

// ---------------------------------------------------------------------------
// PFM (grayscale "Pf", little-endian, scale -1.0). Raster is bottom-to-top
// per the format convention. Invalid depth is encoded as 0.0.

inline void write_pfm(const std::string& path, const DepthImage& img) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("write_pfm: cannot open " + path);
  f << "Pf\n" << img.width << " " << img.height << "\n-1.0\n";
  for (int row = img.height - 1; row >= 0; --row) {
    for (int col = 0; col < img.width; ++col) {
      float v = static_cast<float>(img.at(row, col));
      f.write(reinterpret_cast<const char*>(&v), sizeof(float));
    }
  }
  if (!f) throw std::runtime_error("write_pfm: write failed for " + path);
}

inline DepthImage read_pfm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("read_pfm: cannot open " + path);
  std::string magic;
  f >> magic;
  if (magic != "Pf") throw std::runtime_error("read_pfm: " + path + " is not a grayscale PFM");
  int w = 0, h = 0;
  double scale = 0.0;
  f >> w >> h >> scale;
  f.get();  // single whitespace after the header
  if (w <= 0 || h <= 0) throw std::runtime_error("read_pfm: bad dimensions in " + path);
  if (scale >= 0.0) throw std::runtime_error("read_pfm: big-endian PFM unsupported: " + path);
  DepthImage img(w, h);
  std::vector<float> rowbuf(w);
  for (int row = h - 1; row >= 0; --row) {
    f.read(reinterpret_cast<char*>(rowbuf.data()), w * sizeof(float));
    if (!f) throw std::runtime_error("read_pfm: truncated file " + path);
    for (int col = 0; col < w; ++col) img.at(row, col) = rowbuf[col];
  }
  return img;
}

// ---------------------------------------------------------------------------
// PPM (binary P6, 8-bit). Quantizes to bytes; generation code round-trips
// through this representation so in-memory and on-disk pixels agree.

inline void write_ppm(const std::string& path, const RgbImage& img) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("write_ppm: cannot open " + path);
  f << "P6\n" << img.width << " " << img.height << "\n255\n";
  for (int row = 0; row < img.height; ++row) {
    for (int col = 0; col < img.width; ++col) {
      for (int c = 0; c < 3; ++c) {
        double v = img.at(c, row, col);
        v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
        unsigned char byte = static_cast<unsigned char>(v * 255.0 + 0.5);
        f.put(static_cast<char>(byte));
      }
    }
  }
  if (!f) throw std::runtime_error("write_ppm: write failed for " + path);
}

inline RgbImage read_ppm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("read_ppm: cannot open " + path);
  std::string magic;
  f >> magic;
  if (magic != "P6") throw std::runtime_error("read_ppm: " + path + " is not binary PPM");
  int w = 0, h = 0, maxval = 0;
  f >> w >> h >> maxval;
  f.get();
  if (w <= 0 || h <= 0 || maxval != 255)
    throw std::runtime_error("read_ppm: unsupported header in " + path);
  RgbImage img(w, h);
  std::vector<unsigned char> buf(3ull * w * h);
  f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!f) throw std::runtime_error("read_ppm: truncated file " + path);
  std::size_t k = 0;
  for (int row = 0; row < h; ++row)
    for (int col = 0; col < w; ++col)
      for (int c = 0; c < 3; ++c) img.at(c, row, col) = buf[k++] / 255.0;
  return img;
}

// Quantize in place to the 8-bit grid used by write_ppm.
inline void quantize_to_ppm_grid(RgbImage& img) {
  for (double& v : img.data) {
    double x = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
    v = static_cast<double>(static_cast<unsigned char>(x * 255.0 + 0.5)) / 255.0;
  }
}

}  // namespace terramesh
