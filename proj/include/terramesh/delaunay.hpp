#pragma once

#include <array>
#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "terramesh/geometry.hpp"

namespace terramesh {

struct Point2 {
  double x = 0.0, y = 0.0;
};

namespace detail {

inline double orient2d(const Point2& a, const Point2& b, const Point2& c) {
  return (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
}

// In-circle determinant for a CCW triangle (a,b,c) and query point d,
// positive when d is strictly inside the circumcircle. Inputs are expected
// to be normalized to a unit box so the tolerance is meaningful.
inline double incircle(const Point2& a, const Point2& b, const Point2& c, const Point2& d) {
  const double adx = a.x - d.x, ady = a.y - d.y;
  const double bdx = b.x - d.x, bdy = b.y - d.y;
  const double cdx = c.x - d.x, cdy = c.y - d.y;
  const double ad2 = adx * adx + ady * ady;
  const double bd2 = bdx * bdx + bdy * bdy;
  const double cd2 = cdx * cdx + cdy * cdy;
  return adx * (bdy * cd2 - cdy * bd2) - ady * (bdx * cd2 - cdx * bd2) +
         ad2 * (bdx * cdy - cdx * bdy);
}

}  // namespace detail

// Delaunay triangulation of 2-D points by incremental insertion with a
// super-triangle. Exactness is by tolerance (1e-12 in-circle determinant on
// coordinates normalized to the unit box), not exact arithmetic; cocircular
// ties resolve by insertion (index) order. Returns faces as index triples,
// counter-clockwise in the input plane.
inline std::vector<std::array<int, 3>> delaunay_triangulate(const std::vector<Point2>& points) {
  const std::size_t n = points.size();
  if (n < 3) {
    throw std::invalid_argument("delaunay_triangulate: need >= 3 points, got " +
                                std::to_string(n));
  }

  // Normalize into the unit box.
  double min_x = points[0].x, max_x = points[0].x;
  double min_y = points[0].y, max_y = points[0].y;
  for (const Point2& p : points) {
    min_x = std::min(min_x, p.x);
    max_x = std::max(max_x, p.x);
    min_y = std::min(min_y, p.y);
    max_y = std::max(max_y, p.y);
  }
  const double span = std::max({max_x - min_x, max_y - min_y, 1e-300});
  std::vector<Point2> pts(n + 3);
  for (std::size_t i = 0; i < n; ++i) {
    pts[i] = {(points[i].x - min_x) / span, (points[i].y - min_y) / span};
  }

  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (pts[i].x == pts[j].x && pts[i].y == pts[j].y) {
        throw std::invalid_argument("delaunay_triangulate: duplicate points " +
                                    std::to_string(i) + " and " + std::to_string(j));
      }
    }
  }

  bool all_collinear = true;
  for (std::size_t i = 2; i < n && all_collinear; ++i) {
    if (std::fabs(detail::orient2d(pts[0], pts[1], pts[i])) > 1e-12) all_collinear = false;
  }
  if (all_collinear) {
    throw std::invalid_argument("delaunay_triangulate: all points are collinear");
  }

  // Super-triangle around the unit box.
  const int s0 = static_cast<int>(n), s1 = s0 + 1, s2 = s0 + 2;
  pts[s0] = {-20.0, -10.0};
  pts[s1] = {20.0, -10.0};
  pts[s2] = {0.5, 30.0};

  struct Tri {
    int a, b, c;
    bool alive;
  };
  std::vector<Tri> tris;
  tris.push_back({s0, s1, s2, true});

  constexpr double kInCircleTol = 1e-12;

  std::vector<std::size_t> bad;
  std::map<std::pair<int, int>, int> edge_count;  // undirected boundary bookkeeping
  for (int pi = 0; pi < static_cast<int>(n); ++pi) {
    const Point2& p = pts[pi];
    bad.clear();
    for (std::size_t t = 0; t < tris.size(); ++t) {
      if (!tris[t].alive) continue;
      if (detail::incircle(pts[tris[t].a], pts[tris[t].b], pts[tris[t].c], p) > kInCircleTol) {
        bad.push_back(t);
      }
    }
    // The cavity boundary is every edge used by exactly one bad triangle.
    edge_count.clear();
    std::map<std::pair<int, int>, std::pair<int, int>> directed;  // keep orientation
    for (std::size_t t : bad) {
      const Tri& tr = tris[t];
      const int e[3][2] = {{tr.a, tr.b}, {tr.b, tr.c}, {tr.c, tr.a}};
      for (const auto& ed : e) {
        auto key = std::minmax(ed[0], ed[1]);
        edge_count[{key.first, key.second}]++;
        directed[{key.first, key.second}] = {ed[0], ed[1]};
      }
      tris[t].alive = false;
    }
    for (const auto& [key, count] : edge_count) {
      if (count != 1) continue;
      const auto [ea, eb] = directed[key];
      tris.push_back({ea, eb, pi, true});
    }
  }

  std::vector<std::array<int, 3>> faces;
  for (const Tri& t : tris) {
    if (!t.alive) continue;
    if (t.a >= static_cast<int>(n) || t.b >= static_cast<int>(n) || t.c >= static_cast<int>(n))
      continue;
    // Emit CCW in the input plane.
    if (detail::orient2d(pts[t.a], pts[t.b], pts[t.c]) >= 0.0) {
      faces.push_back({t.a, t.b, t.c});
    } else {
      faces.push_back({t.a, t.c, t.b});
    }
  }
  if (faces.empty()) {
    throw std::invalid_argument("delaunay_triangulate: degenerate input, no triangles");
  }
  return faces;
}

// SD-tri baseline: Delaunay-triangulate the valid sparse-depth pixels on the
// image plane and lift the flat mesh to 3-D with the measured depths.
inline TriangleMesh sd_tri_baseline(const DepthImage& sparse, const Camera& camera) {
  camera.validate();
  std::vector<Point2> pixels;
  std::vector<double> depths;
  for (int r = 0; r < sparse.height; ++r) {
    for (int c = 0; c < sparse.width; ++c) {
      if (!sparse.valid(r, c)) continue;
      pixels.push_back({c + 0.5, r + 0.5});
      depths.push_back(sparse.at(r, c));
    }
  }
  if (pixels.size() < 3) {
    throw std::invalid_argument("sd_tri_baseline: need >= 3 valid measurements, got " +
                                std::to_string(pixels.size()));
  }
  auto faces = delaunay_triangulate(pixels);
  std::vector<Vec3> vertices(pixels.size());
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    vertices[i] = camera.backproject_pixel(pixels[i].x, pixels[i].y, depths[i]);
  }
  return make_mesh(std::move(vertices), std::move(faces));
}

}  // namespace terramesh
