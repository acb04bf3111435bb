#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "terramesh/autodiff.hpp"
#include "terramesh/geometry.hpp"
#include "terramesh/renderer.hpp"
#include "terramesh/rng.hpp"

namespace terramesh {

// Weights (w2, w3, wV, wE) of the composite objective. A zero weight turns
// its term off entirely.
struct LossWeights {
  double w2 = 0.0;
  double w3 = 0.0;
  double wV = 0.0;
  double wE = 0.0;

  void validate() const {
    if (w2 < 0.0 || w3 < 0.0 || wV < 0.0 || wE < 0.0)
      throw std::invalid_argument("LossWeights: weights must be nonnegative");
    if (w2 == 0.0 && w3 == 0.0 && wV == 0.0 && wE == 0.0)
      throw std::invalid_argument("LossWeights: all weights are zero");
  }
};

struct SurfaceSampler {
  std::size_t sample_count = 10000;
  std::uint64_t seed = 0;

  void validate() const {
    if (sample_count < 1) throw std::invalid_argument("SurfaceSampler: sample_count must be >= 1");
  }
};

// ---------------------------------------------------------------------------
// Uniform surface sampling

struct SurfaceSamples {
  PointCloud points;
  std::vector<int> face;
  std::vector<std::array<double, 3>> bary;
};

// Area-weighted face selection, square-root reparameterization inside each
// face. Identical seed gives identical samples.
inline SurfaceSamples sample_mesh_surface(const Tensor& vertices, const MeshTopology& topo,
                                          const SurfaceSampler& sampler) {
  sampler.validate();
  const auto& faces = topo.faces;
  if (faces.empty()) throw std::invalid_argument("sample_mesh_surface: mesh has no faces");

  std::vector<double> cumulative(faces.size());
  double total = 0.0;
  for (std::size_t f = 0; f < faces.size(); ++f) {
    const auto& fc = faces[f];
    const Vec3 a{vertices.at(fc[0], 0), vertices.at(fc[0], 1), vertices.at(fc[0], 2)};
    const Vec3 b{vertices.at(fc[1], 0), vertices.at(fc[1], 1), vertices.at(fc[1], 2)};
    const Vec3 c{vertices.at(fc[2], 0), vertices.at(fc[2], 1), vertices.at(fc[2], 2)};
    total += 0.5 * (b - a).cross(c - a).norm();
    cumulative[f] = total;
  }
  if (total <= 0.0) throw std::invalid_argument("sample_mesh_surface: all faces are degenerate");

  SurfaceSamples out;
  out.points.points.resize(sampler.sample_count);
  out.face.resize(sampler.sample_count);
  out.bary.resize(sampler.sample_count);
  Rng rng(sampler.seed);
  for (std::size_t s = 0; s < sampler.sample_count; ++s) {
    const double pick = rng.uniform() * total;
    const std::size_t f =
        std::lower_bound(cumulative.begin(), cumulative.end(), pick) - cumulative.begin();
    const std::size_t fi = std::min(f, faces.size() - 1);
    const double r1 = std::sqrt(rng.uniform());
    const double r2 = rng.uniform();
    const double b0 = 1.0 - r1;
    const double b1 = r1 * (1.0 - r2);
    const double b2 = r1 * r2;
    const auto& fc = faces[fi];
    out.face[s] = static_cast<int>(fi);
    out.bary[s] = {b0, b1, b2};
    Vec3 p;
    for (int k = 0; k < 3; ++k) {
      const double w = out.bary[s][k];
      p.x += w * vertices.at(fc[k], 0);
      p.y += w * vertices.at(fc[k], 1);
      p.z += w * vertices.at(fc[k], 2);
    }
    out.points.points[s] = p;
  }
  return out;
}

inline PointCloud sample_mesh_surface(const TriangleMesh& mesh, const SurfaceSampler& sampler) {
  return sample_mesh_surface(mesh.vertices, *mesh.topology, sampler).points;
}

// Differentiable variant: every sample is a frozen barycentric combination
// of its face's vertices, so gradients flow to the vertices with those
// weights. Face selection and the barycentric draw are not differentiated.
inline Var sample_mesh_surface_diff(Tape& tape, const Var& vertices, const MeshTopology& topo,
                                    const SurfaceSampler& sampler,
                                    SurfaceSamples* record_out = nullptr) {
  SurfaceSamples rec = sample_mesh_surface(vertices.value(), topo, sampler);
  if (record_out) *record_out = rec;
  const std::size_t m = rec.points.size();
  Tensor value({m, 3});
  for (std::size_t s = 0; s < m; ++s) {
    value.at(s, 0) = rec.points.points[s].x;
    value.at(s, 1) = rec.points.points[s].y;
    value.at(s, 2) = rec.points.points[s].z;
  }
  const std::size_t vid = vertices.id();
  const std::size_t oid = tape.size();
  auto faces = topo.faces;
  return tape.record(std::move(value), {vid},
                     [vid, oid, m, faces = std::move(faces), face = std::move(rec.face),
                      bary = std::move(rec.bary)](Tape& tp) {
                       const Tensor& g = tp.grad(oid);
                       Tensor& gv = tp.grad(vid);
                       for (std::size_t s = 0; s < m; ++s) {
                         const auto& fc = faces[face[s]];
                         for (int k = 0; k < 3; ++k) {
                           const double w = bary[s][k];
                           gv.at(fc[k], 0) += w * g.at(s, 0);
                           gv.at(fc[k], 1) += w * g.at(s, 1);
                           gv.at(fc[k], 2) += w * g.at(s, 2);
                         }
                       }
                     });
}

// ---------------------------------------------------------------------------
// Nearest neighbors and Chamfer distance

// Uniform spatial grid over 3-D points with an expanding-ring exact search.
// Cell size comes from a median nearest-neighbor estimate over a probe
// subset; buckets live in a dense CSR layout over the cloud's bounding box.
// Queries return exactly the brute-force nearest neighbor (smallest index on
// ties): candidate distances are computed with the same arithmetic as a
// linear scan, and a ring is only skipped once it provably cannot contain a
// closer point.
class SpatialHashNn {
 public:
  explicit SpatialHashNn(const std::vector<Vec3>& points) : points_(points) {
    if (points_.empty()) throw std::invalid_argument("SpatialHashNn: empty point cloud");
    build();
  }

  struct Result {
    int index = -1;
    double distance = std::numeric_limits<double>::infinity();
  };

  Result nearest(const Vec3& q) const {
    Result best;
    const long qx = coord(q.x - min_[0]);
    const long qy = coord(q.y - min_[1]);
    const long qz = coord(q.z - min_[2]);
    // Distance from q to the grid's occupied box floor, per ring index: ring
    // r cells start at least (r-1)*cell + (distance of q's cell to the box)
    // away once q lies outside.
    const long max_ring = dims_[0] + dims_[1] + dims_[2] + 2;
    for (long r = 0; r <= max_ring; ++r) {
      if (best.index >= 0 && ring_lower_bound(q, r) >= best.distance) break;
      scan_ring(q, qx, qy, qz, r, best);
    }
    if (best.index < 0) {
      for (std::size_t i = 0; i < points_.size(); ++i) consider(q, static_cast<int>(i), best);
    }
    return best;
  }

  double cell_size() const { return cell_; }

 private:
  void consider(const Vec3& q, int i, Result& best) const {
    const Vec3 d = q - points_[i];
    const double dist = d.norm();
    if (dist < best.distance) {
      best.distance = dist;
      best.index = i;
    }
  }

  double ring_lower_bound(const Vec3& q, long r) const {
    if (r == 0) return 0.0;
    // A cell at Chebyshev radius r is separated from q's cell by r-1 whole
    // cells along some axis.
    return (static_cast<double>(r) - 1.0) * cell_;
  }

  void scan_ring(const Vec3& q, long qx, long qy, long qz, long r, Result& best) const {
    const long zlo = std::max(qz - r, 0L), zhi = std::min(qz + r, dims_[2] - 1);
    const long ylo = std::max(qy - r, 0L), yhi = std::min(qy + r, dims_[1] - 1);
    const long xlo = std::max(qx - r, 0L), xhi = std::min(qx + r, dims_[0] - 1);
    for (long z = zlo; z <= zhi; ++z) {
      const bool z_edge = (z == qz - r) || (z == qz + r);
      for (long y = ylo; y <= yhi; ++y) {
        const bool y_edge = (y == qy - r) || (y == qy + r);
        if (z_edge || y_edge) {
          for (long x = xlo; x <= xhi; ++x) scan_cell(q, x, y, z, best);
        } else {
          if (qx - r >= 0 && qx - r <= dims_[0] - 1) scan_cell(q, qx - r, y, z, best);
          if (r > 0 && qx + r >= 0 && qx + r <= dims_[0] - 1) scan_cell(q, qx + r, y, z, best);
        }
      }
    }
  }

  void scan_cell(const Vec3& q, long x, long y, long z, Result& best) const {
    const std::size_t c = (static_cast<std::size_t>(z) * dims_[1] + y) * dims_[0] + x;
    for (std::size_t k = cell_start_[c]; k < cell_start_[c + 1]; ++k) {
      consider(q, cell_points_[k], best);
    }
  }

  long coord(double offset) const {
    long c = static_cast<long>(std::floor(offset / cell_));
    return c;  // may be outside [0, dims); ring clamping handles that
  }

  void build() {
    min_ = {points_[0].x, points_[0].y, points_[0].z};
    double max_c[3] = {points_[0].x, points_[0].y, points_[0].z};
    for (const Vec3& p : points_) {
      const double c[3] = {p.x, p.y, p.z};
      for (int k = 0; k < 3; ++k) {
        min_[k] = std::min(min_[k], c[k]);
        max_c[k] = std::max(max_c[k], c[k]);
      }
    }
    const double extent =
        std::max({max_c[0] - min_[0], max_c[1] - min_[1], max_c[2] - min_[2], 1e-12});

    // Approximate median nearest-neighbor distance over a probe subset.
    const std::size_t probes = std::min<std::size_t>(points_.size(), 32);
    const std::size_t scan = std::min<std::size_t>(points_.size(), 512);
    std::vector<double> nn(probes, 0.0);
    for (std::size_t k = 0; k < probes; ++k) {
      const std::size_t i = k * points_.size() / probes;
      double bestd = std::numeric_limits<double>::infinity();
      for (std::size_t s = 0; s < scan; ++s) {
        const std::size_t j = s * points_.size() / scan;
        if (j == i) continue;
        const Vec3 d = points_[i] - points_[j];
        bestd = std::min(bestd, d.norm());
      }
      nn[k] = std::isfinite(bestd) ? bestd : 0.0;
    }
    std::sort(nn.begin(), nn.end());
    cell_ = nn[probes / 2];
    if (cell_ <= 0.0) cell_ = extent / std::cbrt(static_cast<double>(points_.size()));
    if (cell_ <= 0.0) cell_ = 1.0;
    // Keep the dense bucket array bounded for pathological clouds.
    for (int k = 0; k < 3; ++k) {
      const double dim = (max_c[k] - min_[k]) / cell_;
      if (dim > 512.0) cell_ = (max_c[k] - min_[k]) / 512.0;
    }

    for (int k = 0; k < 3; ++k) {
      dims_[k] = std::max<long>(1, static_cast<long>(std::floor((max_c[k] - min_[k]) / cell_)) + 1);
    }
    const std::size_t ncells =
        static_cast<std::size_t>(dims_[0]) * dims_[1] * dims_[2];
    std::vector<std::size_t> counts(ncells + 1, 0);
    std::vector<std::size_t> cell_of(points_.size());
    for (std::size_t i = 0; i < points_.size(); ++i) {
      const long x = std::min<long>(dims_[0] - 1, coord(points_[i].x - min_[0]));
      const long y = std::min<long>(dims_[1] - 1, coord(points_[i].y - min_[1]));
      const long z = std::min<long>(dims_[2] - 1, coord(points_[i].z - min_[2]));
      cell_of[i] = (static_cast<std::size_t>(z) * dims_[1] + y) * dims_[0] + x;
      ++counts[cell_of[i] + 1];
    }
    for (std::size_t c = 0; c < ncells; ++c) counts[c + 1] += counts[c];
    cell_start_ = counts;
    cell_points_.resize(points_.size());
    std::vector<std::size_t> cursor(cell_start_.begin(), cell_start_.end() - 1);
    for (std::size_t i = 0; i < points_.size(); ++i) {
      cell_points_[cursor[cell_of[i]]++] = static_cast<int>(i);
    }
  }

  std::vector<Vec3> points_;
  std::array<double, 3> min_{};
  std::array<long, 3> dims_{};
  std::vector<std::size_t> cell_start_;
  std::vector<int> cell_points_;
  double cell_ = 1.0;
};

// Asymmetric Chamfer: mean over P of the distance to the nearest point of Q.
inline double chamfer_asymmetric(const PointCloud& p, const SpatialHashNn& q_index) {
  if (p.size() == 0) throw std::invalid_argument("chamfer: empty point cloud");
  double acc = 0.0;
  for (const Vec3& x : p.points) acc += q_index.nearest(x).distance;
  return acc / static_cast<double>(p.size());
}

inline double chamfer_asymmetric(const PointCloud& p, const PointCloud& q) {
  if (q.size() == 0) throw std::invalid_argument("chamfer: empty point cloud");
  return chamfer_asymmetric(p, SpatialHashNn(q.points));
}

// Symmetric Chamfer distance (the l3 geometry error).
inline double chamfer(const PointCloud& p, const PointCloud& q) {
  if (p.size() == 0 || q.size() == 0) throw std::invalid_argument("chamfer: empty point cloud");
  SpatialHashNn pi(p.points), qi(q.points);
  return 0.5 * chamfer_asymmetric(p, qi) + 0.5 * chamfer_asymmetric(q, pi);
}

// Differentiable symmetric Chamfer between a live cloud (tape Var of shape
// (m,3)) and a constant target cloud. Nearest-neighbor indices are constants
// of the backward pass; samples coincident with their match get zero
// gradient (subgradient at the nonsmooth point).
inline Var chamfer_diff(Tape& tape, const Var& live, const PointCloud& target,
                        const SpatialHashNn* target_index_cached = nullptr) {
  const Tensor& pv = live.value();
  if (pv.rank() != 2 || pv.dim(1) != 3)
    throw std::invalid_argument("chamfer_diff: live cloud must be (m,3), got " + pv.shape_string());
  const std::size_t m = pv.dim(0);
  if (m == 0 || target.size() == 0) throw std::invalid_argument("chamfer: empty point cloud");

  std::vector<Vec3> live_pts(m);
  for (std::size_t i = 0; i < m; ++i) live_pts[i] = {pv.at(i, 0), pv.at(i, 1), pv.at(i, 2)};
  std::unique_ptr<SpatialHashNn> owned_target;
  if (!target_index_cached) owned_target = std::make_unique<SpatialHashNn>(target.points);
  const SpatialHashNn& target_index = target_index_cached ? *target_index_cached : *owned_target;
  SpatialHashNn live_index(live_pts);

  // Forward and the frozen match lists.
  std::vector<int> match_pq(m);          // live sample -> target index
  std::vector<int> match_qp(target.size());  // target point -> live index
  double lpq = 0.0, lqp = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    auto r = target_index.nearest(live_pts[i]);
    match_pq[i] = r.index;
    lpq += r.distance;
  }
  for (std::size_t j = 0; j < target.size(); ++j) {
    auto r = live_index.nearest(target.points[j]);
    match_qp[j] = r.index;
    lqp += r.distance;
  }
  lpq /= static_cast<double>(m);
  lqp /= static_cast<double>(target.size());
  const double value = 0.5 * lpq + 0.5 * lqp;

  const std::size_t vid = live.id();
  const std::size_t oid = tape.size();
  return tape.record(
      Tensor::scalar(value), {vid},
      [vid, oid, m, target_pts = target.points, live_pts = std::move(live_pts),
       match_pq = std::move(match_pq), match_qp = std::move(match_qp)](Tape& tp) {
        const double g = tp.grad(oid)[0];
        if (g == 0.0) return;
        Tensor& gv = tp.grad(vid);
        const double cp = 0.5 * g / static_cast<double>(m);
        for (std::size_t i = 0; i < m; ++i) {
          const Vec3 d = live_pts[i] - target_pts[match_pq[i]];
          const double dist = d.norm();
          if (dist < 1e-12) continue;
          gv.at(i, 0) += cp * d.x / dist;
          gv.at(i, 1) += cp * d.y / dist;
          gv.at(i, 2) += cp * d.z / dist;
        }
        const double cq = 0.5 * g / static_cast<double>(match_qp.size());
        for (std::size_t j = 0; j < match_qp.size(); ++j) {
          const Vec3 d = live_pts[match_qp[j]] - target_pts[j];
          const double dist = d.norm();
          if (dist < 1e-12) continue;
          gv.at(match_qp[j], 0) += cq * d.x / dist;
          gv.at(match_qp[j], 1) += cq * d.y / dist;
          gv.at(match_qp[j], 2) += cq * d.z / dist;
        }
      });
}

// ---------------------------------------------------------------------------
// 2-D rendered depth loss

// Pixels where both images carry valid depth, in row-major order.
inline std::vector<std::size_t> valid_intersection(const RenderedDepth& rendered,
                                                   const DepthImage& target) {
  if (rendered.width != target.width || rendered.height != target.height) {
    throw std::invalid_argument("loss_2d: image sizes differ");
  }
  std::vector<std::size_t> idx;
  for (int row = 0; row < target.height; ++row) {
    for (int col = 0; col < target.width; ++col) {
      if (target.valid(row, col) && rendered.valid(row, col)) {
        idx.push_back(static_cast<std::size_t>(row) * target.width + col);
      }
    }
  }
  return idx;
}

// Mean absolute depth difference over the valid intersection. The metric
// variant below shares this accumulation so the two agree bit-exactly.
inline double l2_depth_error(const RenderedDepth& rendered, const DepthImage& target) {
  const auto idx = valid_intersection(rendered, target);
  if (idx.empty()) throw std::invalid_argument("loss_2d: no pixels are valid in both images");
  double acc = 0.0;
  for (std::size_t i : idx) acc += std::fabs(rendered.depth[i] - target.depth[i]);
  return acc / static_cast<double>(idx.size());
}

// Differentiable l2: gather the shared pixels from the rendered image Var,
// subtract the measured depths, and take the mean absolute value.
inline Var loss_2d(Tape& tape, const Var& rendered_image, const RenderedDepth& record,
                   const DepthImage& target) {
  const auto idx = valid_intersection(record, target);
  if (idx.empty()) throw std::invalid_argument("loss_2d: no pixels are valid in both images");
  const std::size_t npix = static_cast<std::size_t>(record.width) * record.height;
  Tensor target_vals({idx.size()});
  for (std::size_t k = 0; k < idx.size(); ++k) target_vals[k] = target.depth[idx[k]];
  Var flat = reshape(rendered_image, {npix});
  Var picked = gather(flat, idx);
  Var diff = subtract(picked, tape.leaf(std::move(target_vals)));
  return mean(absval(diff));
}

// ---------------------------------------------------------------------------
// Mesh regularizers

// (1/n) sum_i || v_i - mean(neighbors of v_i) ||_2, the l2,1 norm of the
// degree-normalized Laplacian rows. Rows with norm below 1e-12 contribute
// zero gradient.
inline Var loss_laplacian(Tape& tape, const Var& vertices, const MeshTopology& topo) {
  const auto deg = topo.vertex_degrees();
  const std::size_t n = topo.vertex_count;
  for (std::size_t i = 0; i < n; ++i) {
    if (deg[i] == 0) {
      throw std::invalid_argument("loss_laplacian: isolated vertex " + std::to_string(i) +
                                  " (degree matrix singular)");
    }
  }
  const Tensor& v = vertices.value();
  const auto adj = topo.adjacency();
  std::vector<std::array<double, 3>> rows(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double r[3] = {v.at(i, 0), v.at(i, 1), v.at(i, 2)};
    const double inv_deg = 1.0 / static_cast<double>(deg[i]);
    for (int j : adj[i]) {
      r[0] -= inv_deg * v.at(j, 0);
      r[1] -= inv_deg * v.at(j, 1);
      r[2] -= inv_deg * v.at(j, 2);
    }
    rows[i] = {r[0], r[1], r[2]};
    total += std::sqrt(r[0] * r[0] + r[1] * r[1] + r[2] * r[2]);
  }
  const double value = total / static_cast<double>(n);

  const std::size_t vid = vertices.id();
  const std::size_t oid = tape.size();
  return tape.record(
      Tensor::scalar(value), {vid},
      [vid, oid, n, deg, adj, rows = std::move(rows)](Tape& tp) {
        const double g = tp.grad(oid)[0];
        if (g == 0.0) return;
        Tensor& gv = tp.grad(vid);
        const double c = g / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
          const auto& r = rows[i];
          const double norm = std::sqrt(r[0] * r[0] + r[1] * r[1] + r[2] * r[2]);
          if (norm < 1e-12) continue;
          const double uhat[3] = {r[0] / norm, r[1] / norm, r[2] / norm};
          for (int k = 0; k < 3; ++k) gv.at(i, k) += c * uhat[k];
          const double spread = c / static_cast<double>(deg[i]);
          for (int j : adj[i])
            for (int k = 0; k < 3; ++k) gv.at(j, k) -= spread * uhat[k];
        }
      });
}

// Mean Euclidean edge length over the face-induced edge set.
inline Var loss_edge(Tape& tape, const Var& vertices, const MeshTopology& topo) {
  if (topo.edges.empty()) throw std::invalid_argument("loss_edge: mesh has no edges");
  const Tensor& v = vertices.value();
  const std::size_t ne = topo.edges.size();
  double total = 0.0;
  for (const auto& e : topo.edges) {
    const double d[3] = {v.at(e[0], 0) - v.at(e[1], 0), v.at(e[0], 1) - v.at(e[1], 1),
                         v.at(e[0], 2) - v.at(e[1], 2)};
    total += std::sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]);
  }
  const double value = total / static_cast<double>(ne);

  const std::size_t vid = vertices.id();
  const std::size_t oid = tape.size();
  auto edges = topo.edges;
  return tape.record(
      Tensor::scalar(value), {vid}, [vid, oid, ne, edges = std::move(edges)](Tape& tp) {
        const double g = tp.grad(oid)[0];
        if (g == 0.0) return;
        const Tensor& v2 = tp.value(vid);
        Tensor& gv = tp.grad(vid);
        const double c = g / static_cast<double>(ne);
        for (const auto& e : edges) {
          const double d[3] = {v2.at(e[0], 0) - v2.at(e[1], 0), v2.at(e[0], 1) - v2.at(e[1], 1),
                               v2.at(e[0], 2) - v2.at(e[1], 2)};
          const double norm = std::sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]);
          if (norm < 1e-12) continue;
          for (int k = 0; k < 3; ++k) {
            const double u = c * d[k] / norm;
            gv.at(e[0], k) += u;
            gv.at(e[1], k) -= u;
          }
        }
      });
}

// ---------------------------------------------------------------------------
// 3-D Chamfer loss against a pseudo-ground-truth sample cloud

inline Var loss_3d(Tape& tape, const Var& vertices, const MeshTopology& topo,
                   const PointCloud& target_samples, const SurfaceSampler& sampler,
                   const SpatialHashNn* target_index = nullptr) {
  Var live = sample_mesh_surface_diff(tape, vertices, topo, sampler);
  return chamfer_diff(tape, live, target_samples, target_index);
}

inline Var loss_3d(Tape& tape, const Var& vertices, const MeshTopology& topo,
                   const TriangleMesh& pseudo_gt, const SurfaceSampler& sampler) {
  SurfaceSampler gt_sampler = sampler;
  gt_sampler.seed = derive_seed(sampler.seed, 0x51d);
  PointCloud target = sample_mesh_surface(pseudo_gt, gt_sampler);
  return loss_3d(tape, vertices, topo, target, sampler);
}

// ---------------------------------------------------------------------------
// Composite

// w2*l2 + w3*l3 + wV*lV + wE*lE. Terms with zero weight are skipped
// entirely; their preconditions (and the render, for w2 = 0) are not
// required. The pseudo-GT cloud may be null when w3 is zero.
inline Var loss_composite(Tape& tape, const Var& vertices, const MeshTopology& topo,
                          const DepthImage& target, const PointCloud* pseudo_gt_samples,
                          const LossWeights& weights, const SurfaceSampler& sampler,
                          const Camera& camera, RenderedDepth* rendered_record = nullptr) {
  weights.validate();
  Var total;
  auto accumulate = [&](Var term, double w) {
    Var scaled = scale(term, w);
    total = total.valid() ? add(total, scaled) : scaled;
  };
  if (weights.w2 > 0.0) {
    RenderedDepth rec;
    Var img = render_depth_diff(tape, vertices, topo, camera, &rec);
    if (rendered_record) *rendered_record = rec;
    accumulate(loss_2d(tape, img, rec, target), weights.w2);
  }
  if (weights.w3 > 0.0) {
    if (!pseudo_gt_samples)
      throw std::invalid_argument("loss_composite: w3 > 0 requires pseudo-GT samples");
    accumulate(loss_3d(tape, vertices, topo, *pseudo_gt_samples, sampler), weights.w3);
  }
  if (weights.wV > 0.0) accumulate(loss_laplacian(tape, vertices, topo), weights.wV);
  if (weights.wE > 0.0) accumulate(loss_edge(tape, vertices, topo), weights.wE);
  return total;
}

inline Var loss_composite(Tape& tape, const Var& vertices, const MeshTopology& topo,
                          const DepthImage& target, const TriangleMesh* pseudo_gt,
                          const LossWeights& weights, const SurfaceSampler& sampler,
                          const Camera& camera, RenderedDepth* rendered_record = nullptr) {
  PointCloud cloud;
  const PointCloud* cloud_ptr = nullptr;
  if (weights.w3 > 0.0) {
    if (!pseudo_gt) throw std::invalid_argument("loss_composite: w3 > 0 requires a pseudo-GT mesh");
    SurfaceSampler gt_sampler = sampler;
    gt_sampler.seed = derive_seed(sampler.seed, 0x51d);
    cloud = sample_mesh_surface(*pseudo_gt, gt_sampler);
    cloud_ptr = &cloud;
  }
  return loss_composite(tape, vertices, topo, target, cloud_ptr, weights, sampler, camera,
                        rendered_record);
}

}  // namespace terramesh
