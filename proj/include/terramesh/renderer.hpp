#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <vector>

#include "terramesh/autodiff.hpp"
#include "terramesh/geometry.hpp"

namespace terramesh {

// Depth image rendered from a mesh, with the per-pixel rasterization record
// (winning face and barycentric weights) needed for gradients and debugging.
struct RenderedDepth {
  int width = 0;
  int height = 0;
  std::vector<double> depth;                     // 0 where invalid
  std::vector<int> face_index;                   // -1 where invalid
  std::vector<std::array<double, 3>> barycentric;

  RenderedDepth() = default;
  RenderedDepth(int w, int h)
      : width(w),
        height(h),
        depth(static_cast<std::size_t>(w) * h, 0.0),
        face_index(static_cast<std::size_t>(w) * h, -1),
        barycentric(static_cast<std::size_t>(w) * h, {0.0, 0.0, 0.0}) {}

  bool valid(int row, int col) const { return face_index[static_cast<std::size_t>(row) * width + col] >= 0; }
  double at(int row, int col) const { return depth[static_cast<std::size_t>(row) * width + col]; }

  DepthImage to_depth_image() const {
    DepthImage img(width, height);
    img.depth = depth;
    return img;
  }
};

namespace detail {

// Faces with any vertex closer than this are skipped outright (no clipping);
// initialization keeps meshes far from the camera.
constexpr double kMinVertexDepth = 1e-6;
constexpr double kMinPixelArea = 1e-12;

struct ProjectedPixel {
  double u = 0.0, v = 0.0;  // pixel units
  double z = 0.0;
  bool usable = false;
};

inline std::vector<ProjectedPixel> project_to_pixels(const Tensor& vertices,
                                                     const Camera& cam) {
  const std::size_t n = vertices.dim(0);
  std::vector<ProjectedPixel> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = vertices.at(i, 0), y = vertices.at(i, 1), z = vertices.at(i, 2);
    if (z <= kMinVertexDepth) continue;
    out[i] = {cam.fx * x / z + cam.cx, cam.fy * y / z + cam.cy, z, true};
  }
  return out;
}

}  // namespace detail

// Hard depth rasterization: pixel centers at (col+0.5, row+0.5), z-buffer on
// the barycentric-interpolated depth, coverage inclusive of edges with ties
// resolved by (depth, face order). Deterministic for identical inputs.
inline RenderedDepth render_depth(const Tensor& vertices, const MeshTopology& topo,
                                  const Camera& camera) {
  camera.validate();
  RenderedDepth out(camera.width, camera.height);
  const auto proj = detail::project_to_pixels(vertices, camera);

  for (std::size_t f = 0; f < topo.faces.size(); ++f) {
    const auto& face = topo.faces[f];
    const auto& p0 = proj[face[0]];
    const auto& p1 = proj[face[1]];
    const auto& p2 = proj[face[2]];
    if (!p0.usable || !p1.usable || !p2.usable) continue;

    const double area =
        (p1.u - p0.u) * (p2.v - p0.v) - (p1.v - p0.v) * (p2.u - p0.u);
    if (std::fabs(area) < detail::kMinPixelArea) continue;
    const double inv_area = 1.0 / area;

    const double min_u = std::min({p0.u, p1.u, p2.u});
    const double max_u = std::max({p0.u, p1.u, p2.u});
    const double min_v = std::min({p0.v, p1.v, p2.v});
    const double max_v = std::max({p0.v, p1.v, p2.v});
    const int col_lo = std::max(0, static_cast<int>(std::floor(min_u - 0.5)));
    const int col_hi = std::min(camera.width - 1, static_cast<int>(std::ceil(max_u - 0.5)));
    const int row_lo = std::max(0, static_cast<int>(std::floor(min_v - 0.5)));
    const int row_hi = std::min(camera.height - 1, static_cast<int>(std::ceil(max_v - 0.5)));

    for (int row = row_lo; row <= row_hi; ++row) {
      const double py = row + 0.5;
      for (int col = col_lo; col <= col_hi; ++col) {
        const double px = col + 0.5;
        const double a0 = (p1.u - px) * (p2.v - py) - (p1.v - py) * (p2.u - px);
        const double a1 = (p2.u - px) * (p0.v - py) - (p2.v - py) * (p0.u - px);
        const double a2 = (p0.u - px) * (p1.v - py) - (p0.v - py) * (p1.u - px);
        double w0 = a0 * inv_area, w1 = a1 * inv_area, w2 = a2 * inv_area;
        if (w0 < 0.0 || w1 < 0.0 || w2 < 0.0) continue;
        const double norm = w0 + w1 + w2;
        if (norm <= 0.0) continue;
        w0 /= norm;
        w1 /= norm;
        w2 /= norm;
        const double z = w0 * p0.z + w1 * p1.z + w2 * p2.z;
        const std::size_t idx = static_cast<std::size_t>(row) * camera.width + col;
        if (out.face_index[idx] >= 0 && out.depth[idx] <= z) continue;
        out.depth[idx] = z;
        out.face_index[idx] = static_cast<int>(f);
        out.barycentric[idx] = {w0, w1, w2};
      }
    }
  }
  return out;
}

inline RenderedDepth render_depth(const TriangleMesh& mesh, const Camera& camera) {
  return render_depth(mesh.vertices, *mesh.topology, camera);
}

// Differentiable rendering: records the rasterized depth image on the tape.
// Pixel coverage, face assignment and z-buffer visibility are constants of
// the backward pass (no silhouette gradient). Within a winning face the
// full analytic chain is differentiated: pixel depth depends on the three
// vertex depths directly (barycentric weights) and on all nine vertex
// coordinates through the projected positions that define those weights.
// For a locally flat face the weight terms cancel and d(depth)/d(z_k) is
// exactly the barycentric weight w_k.
inline Var render_depth_diff(Tape& tape, const Var& vertices, const MeshTopology& topo,
                             const Camera& camera, RenderedDepth* record_out = nullptr) {
  RenderedDepth rec = render_depth(vertices.value(), topo, camera);
  if (record_out) *record_out = rec;

  const std::size_t h = camera.height, w = camera.width;
  Tensor value({h, w});
  for (std::size_t i = 0; i < h * w; ++i) value[i] = rec.depth[i];

  const std::size_t vid = vertices.id();
  const std::size_t oid = tape.size();
  // Snapshot the vertex values: backward must use the rasterization-time
  // positions even if a later pass mutates leaf values.
  Tensor vsnap = vertices.value();
  auto faces = topo.faces;

  return tape.record(
      std::move(value), {vid},
      [vid, oid, cam = camera, rec = std::move(rec), vsnap = std::move(vsnap),
       faces = std::move(faces)](Tape& tp) {
        const Tensor& g = tp.grad(oid);
        Tensor& gv = tp.grad(vid);
        for (int row = 0; row < rec.height; ++row) {
          for (int col = 0; col < rec.width; ++col) {
            const std::size_t idx = static_cast<std::size_t>(row) * rec.width + col;
            const int f = rec.face_index[idx];
            if (f < 0) continue;
            const double gp = g[idx];
            if (gp == 0.0) continue;
            const auto& face = faces[f];
            const auto& wgt = rec.barycentric[idx];

            double u[3], v[3], zc[3], xc[3], yc[3];
            for (int k = 0; k < 3; ++k) {
              xc[k] = vsnap.at(face[k], 0);
              yc[k] = vsnap.at(face[k], 1);
              zc[k] = vsnap.at(face[k], 2);
              u[k] = cam.fx * xc[k] / zc[k] + cam.cx;
              v[k] = cam.fy * yc[k] / zc[k] + cam.cy;
            }
            // Direct term: d(depth)/d(z_k) = w_k.
            for (int k = 0; k < 3; ++k) gv.at(face[k], 2) += gp * wgt[k];

            // Weight term: d(depth)/d(w_k) = z_k, chained through the
            // projected positions. dw_k/dt = (dA_k/dt - w_k dA/dt) / A.
            const double px = col + 0.5, py = row + 0.5;
            const double area =
                (u[1] - u[0]) * (v[2] - v[0]) - (v[1] - v[0]) * (u[2] - u[0]);
            if (std::fabs(area) < detail::kMinPixelArea) continue;
            const double inv_area = 1.0 / area;

            // dA/d(u_k, v_k) for the full triangle.
            const double dA[3][2] = {{v[1] - v[2], u[2] - u[1]},
                                     {v[2] - v[0], u[0] - u[2]},
                                     {v[0] - v[1], u[1] - u[0]}};
            // dA_j/d(u_k, v_k): sub-area j does not depend on vertex j.
            double dAsub[3][3][2] = {};
            dAsub[0][1][0] = v[2] - py;  // dA0/du1
            dAsub[0][1][1] = px - u[2];
            dAsub[0][2][0] = py - v[1];
            dAsub[0][2][1] = u[1] - px;
            dAsub[1][0][0] = py - v[2];
            dAsub[1][0][1] = u[2] - px;
            dAsub[1][2][0] = v[0] - py;
            dAsub[1][2][1] = px - u[0];
            dAsub[2][0][0] = v[1] - py;
            dAsub[2][0][1] = px - u[1];
            dAsub[2][1][0] = py - v[0];
            dAsub[2][1][1] = u[0] - px;

            for (int k = 0; k < 3; ++k) {
              double dL_du = 0.0, dL_dv = 0.0;
              for (int j = 0; j < 3; ++j) {
                const double coeff = gp * zc[j] * inv_area;
                dL_du += coeff * (dAsub[j][k][0] - wgt[j] * dA[k][0]);
                dL_dv += coeff * (dAsub[j][k][1] - wgt[j] * dA[k][1]);
              }
              const double zk = zc[k];
              gv.at(face[k], 0) += dL_du * cam.fx / zk;
              gv.at(face[k], 1) += dL_dv * cam.fy / zk;
              gv.at(face[k], 2) += -dL_du * cam.fx * xc[k] / (zk * zk) -
                                   dL_dv * cam.fy * yc[k] / (zk * zk);
            }
          }
        }
      });
}

inline void write_rendered_pfm(const std::string& path, const RenderedDepth& rendered) {
  write_pfm(path, rendered.to_depth_image());
}

}  // namespace terramesh
