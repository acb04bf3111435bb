#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "terramesh/image.hpp"
#include "terramesh/tensor.hpp"

namespace terramesh {

namespace detail {

// 1-D squared distance transform of a sampled function (Felzenszwalb &
// Huttenlocher lower-envelope scan).
inline void dt_1d(const std::vector<double>& f, std::vector<double>& d, std::vector<int>& v,
                  std::vector<double>& z) {
  const int n = static_cast<int>(f.size());
  int k = 0;
  v[0] = 0;
  z[0] = -std::numeric_limits<double>::infinity();
  z[1] = std::numeric_limits<double>::infinity();
  for (int q = 1; q < n; ++q) {
    double s;
    while (true) {
      const int p = v[k];
      s = ((f[q] + q * q) - (f[p] + p * p)) / (2.0 * q - 2.0 * p);
      if (s <= z[k]) {
        --k;
      } else {
        break;
      }
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = std::numeric_limits<double>::infinity();
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[k + 1] < q) ++k;
    const int p = v[k];
    d[q] = (q - p) * static_cast<double>(q - p) + f[p];
  }
}

}  // namespace detail

// Exact Euclidean distance transform: per-pixel distance (in pixels) to the
// closest valid depth measurement. Two 1-D passes over squared distances.
inline Tensor edt(const DepthImage& sparse) {
  if (sparse.valid_count() == 0) throw std::invalid_argument("edt: no valid measurements");
  const int h = sparse.height, w = sparse.width;
  const double kInf = 1e18;

  Tensor sq({static_cast<std::size_t>(h), static_cast<std::size_t>(w)});
  // Column pass.
  {
    std::vector<double> f(h), d(h), z(h + 1);
    std::vector<int> v(h);
    for (int col = 0; col < w; ++col) {
      for (int row = 0; row < h; ++row) f[row] = sparse.valid(row, col) ? 0.0 : kInf;
      detail::dt_1d(f, d, v, z);
      for (int row = 0; row < h; ++row) sq.at(row, col) = d[row];
    }
  }
  // Row pass.
  {
    std::vector<double> f(w), d(w), z(w + 1);
    std::vector<int> v(w);
    for (int row = 0; row < h; ++row) {
      for (int col = 0; col < w; ++col) f[col] = sq.at(row, col);
      detail::dt_1d(f, d, v, z);
      for (int col = 0; col < w; ++col) sq.at(row, col) = d[col];
    }
  }
  for (std::size_t i = 0; i < sq.numel(); ++i) sq[i] = std::sqrt(sq[i]);
  return sq;
}

}  // namespace terramesh
