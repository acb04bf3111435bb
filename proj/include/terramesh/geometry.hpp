#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "terramesh/image.hpp"
#include "terramesh/tensor.hpp"

namespace terramesh {

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  Vec3 cross(const Vec3& o) const {
    return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
  }
  double norm() const { return std::sqrt(dot(*this)); }
};

struct Mat3 {
  // Row-major.
  std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

  static Mat3 identity() { return Mat3{}; }

  Vec3 apply(const Vec3& v) const {
    return {m[0] * v.x + m[1] * v.y + m[2] * v.z, m[3] * v.x + m[4] * v.y + m[5] * v.z,
            m[6] * v.x + m[7] * v.y + m[8] * v.z};
  }

  // R^T v (the inverse for orthonormal R).
  Vec3 apply_transposed(const Vec3& v) const {
    return {m[0] * v.x + m[3] * v.y + m[6] * v.z, m[1] * v.x + m[4] * v.y + m[7] * v.z,
            m[2] * v.x + m[5] * v.y + m[8] * v.z};
  }

  double orthonormality_error() const {
    double worst = 0.0;
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        double dot = 0.0;
        for (int k = 0; k < 3; ++k) dot += m[3 * k + i] * m[3 * k + j];
        worst = std::max(worst, std::fabs(dot - (i == j ? 1.0 : 0.0)));
      }
    }
    return worst;
  }
};

// Pinhole camera with a world pose. R maps camera-frame vectors into the
// world frame; p is the camera position in world coordinates, so
// world = R * v_cam + p (row form V R^T + 1 p^T).
struct Camera {
  double fx = 0.0, fy = 0.0, cx = 0.0, cy = 0.0;
  int width = 0, height = 0;
  Mat3 R;
  Vec3 p;

  void validate() const {
    if (fx <= 0.0 || fy <= 0.0) throw std::invalid_argument("Camera: focal lengths must be > 0");
    if (width <= 0 || height <= 0) throw std::invalid_argument("Camera: image size must be > 0");
    if (R.orthonormality_error() > 1e-9)
      throw std::invalid_argument("Camera: R is not orthonormal within 1e-9");
  }

  Vec3 world_to_camera(const Vec3& w) const { return R.apply_transposed(w - p); }
  Vec3 camera_to_world(const Vec3& c) const { return R.apply(c) + p; }

  // Pixel center (col + 0.5, row + 0.5) back-projected at depth z.
  Vec3 backproject_pixel(double u_pix, double v_pix, double z) const {
    return {(u_pix - cx) / fx * z, (v_pix - cy) / fy * z, z};
  }
};

// Fixed edge/face connectivity. Only vertex positions ever change after
// construction; edges are derived from the faces and are the exact
// face-induced undirected edge set.
struct MeshTopology {
  std::size_t vertex_count = 0;
  std::vector<std::array<int, 3>> faces;
  std::vector<std::array<int, 2>> edges;

  MeshTopology() = default;
  MeshTopology(std::size_t n, std::vector<std::array<int, 3>> f)
      : vertex_count(n), faces(std::move(f)) {
    edges.reserve(faces.size() * 3);
    for (const auto& face : faces) {
      for (int k = 0; k < 3; ++k) {
        int a = face[k], b = face[(k + 1) % 3];
        if (a < 0 || b < 0 || static_cast<std::size_t>(a) >= n ||
            static_cast<std::size_t>(b) >= n) {
          throw std::invalid_argument("MeshTopology: face index out of range");
        }
        edges.push_back({std::min(a, b), std::max(a, b)});
      }
    }
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  }

  std::vector<int> vertex_degrees() const {
    std::vector<int> deg(vertex_count, 0);
    for (const auto& e : edges) {
      ++deg[e[0]];
      ++deg[e[1]];
    }
    return deg;
  }

  std::vector<std::vector<int>> adjacency() const {
    std::vector<std::vector<int>> adj(vertex_count);
    for (const auto& e : edges) {
      adj[e[0]].push_back(e[1]);
      adj[e[1]].push_back(e[0]);
    }
    return adj;
  }
};

// Triangle mesh: an (n, 3) vertex tensor plus shared immutable topology.
// Vertices are meters in the camera frame unless stated otherwise.
struct TriangleMesh {
  Tensor vertices;  // shape (n, 3)
  std::shared_ptr<const MeshTopology> topology;

  std::size_t vertex_count() const { return topology ? topology->vertex_count : 0; }

  Vec3 vertex(std::size_t i) const {
    return {vertices.at(i, 0), vertices.at(i, 1), vertices.at(i, 2)};
  }
  void set_vertex(std::size_t i, const Vec3& v) {
    vertices.at(i, 0) = v.x;
    vertices.at(i, 1) = v.y;
    vertices.at(i, 2) = v.z;
  }
};

inline TriangleMesh make_mesh(std::vector<Vec3> vertices, std::vector<std::array<int, 3>> faces) {
  TriangleMesh mesh;
  mesh.topology = std::make_shared<MeshTopology>(vertices.size(), std::move(faces));
  mesh.vertices = Tensor({vertices.size(), 3});
  for (std::size_t i = 0; i < vertices.size(); ++i) mesh.set_vertex(i, vertices[i]);
  return mesh;
}

struct PointCloud {
  std::vector<Vec3> points;
  std::size_t size() const { return points.size(); }
};

// ---------------------------------------------------------------------------
// Grid mesh

// Regular rows x cols lattice spanning the full image plane (uv in [0,1]^2),
// back-projected to the camera frame at a constant nominal depth. Every cell
// splits along the same diagonal; winding keeps face normals toward +z.
inline TriangleMesh make_grid_mesh(int rows, int cols, const Camera& camera,
                                   double nominal_depth) {
  if (rows < 2 || cols < 2)
    throw std::invalid_argument("make_grid_mesh: rows and cols must be >= 2");
  if (nominal_depth <= 0.0)
    throw std::invalid_argument("make_grid_mesh: nominal depth must be > 0");
  camera.validate();

  std::vector<Vec3> vertices;
  vertices.reserve(static_cast<std::size_t>(rows) * cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const double u = static_cast<double>(c) / (cols - 1) * camera.width;
      const double v = static_cast<double>(r) / (rows - 1) * camera.height;
      vertices.push_back(camera.backproject_pixel(u, v, nominal_depth));
    }
  }
  std::vector<std::array<int, 3>> faces;
  faces.reserve(2ull * (rows - 1) * (cols - 1));
  for (int r = 0; r + 1 < rows; ++r) {
    for (int c = 0; c + 1 < cols; ++c) {
      const int a = r * cols + c;
      const int b = r * cols + c + 1;
      const int d = (r + 1) * cols + c + 1;
      const int e = (r + 1) * cols + c;
      faces.push_back({a, b, d});
      faces.push_back({a, d, e});
    }
  }
  return make_mesh(std::move(vertices), std::move(faces));
}

// Pseudo-ground-truth mesh: lift the depth image's pixel lattice (optionally
// strided) into 3-D and grid-triangulate. Every sampled pixel must be valid.
inline TriangleMesh pseudo_gt_mesh(const DepthImage& dense, const Camera& camera, int stride = 1) {
  if (stride < 1) throw std::invalid_argument("pseudo_gt_mesh: stride must be >= 1");
  camera.validate();
  const int rows = (dense.height - 1) / stride + 1;
  const int cols = (dense.width - 1) / stride + 1;
  if (rows < 2 || cols < 2) throw std::invalid_argument("pseudo_gt_mesh: image too small");

  std::vector<Vec3> vertices;
  vertices.reserve(static_cast<std::size_t>(rows) * cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const int pr = r * stride, pc = c * stride;
      const double z = dense.at(pr, pc);
      if (z <= 0.0) {
        throw std::invalid_argument("pseudo_gt_mesh: invalid depth at lattice pixel (" +
                                    std::to_string(pr) + "," + std::to_string(pc) + ")");
      }
      vertices.push_back(camera.backproject_pixel(pc + 0.5, pr + 0.5, z));
    }
  }
  std::vector<std::array<int, 3>> faces;
  faces.reserve(2ull * (rows - 1) * (cols - 1));
  for (int r = 0; r + 1 < rows; ++r) {
    for (int c = 0; c + 1 < cols; ++c) {
      const int a = r * cols + c;
      const int b = r * cols + c + 1;
      const int d = (r + 1) * cols + c + 1;
      const int e = (r + 1) * cols + c;
      faces.push_back({a, b, d});
      faces.push_back({a, d, e});
    }
  }
  return make_mesh(std::move(vertices), std::move(faces));
}

// ---------------------------------------------------------------------------
// Transforms and projection

// V R^T + 1 p^T: camera-frame vertices into the world frame. Topology is
// shared, not copied.
inline TriangleMesh to_world(const TriangleMesh& mesh, const Camera& camera) {
  camera.validate();
  TriangleMesh out;
  out.topology = mesh.topology;
  out.vertices = Tensor({mesh.vertex_count(), 3});
  for (std::size_t i = 0; i < mesh.vertex_count(); ++i) {
    Vec3 w = camera.camera_to_world(mesh.vertex(i));
    out.vertices.at(i, 0) = w.x;
    out.vertices.at(i, 1) = w.y;
    out.vertices.at(i, 2) = w.z;
  }
  return out;
}

struct ProjectedVertex {
  double u = 0.0, v = 0.0;    // normalized uv in [0,1]^2 (clamped if out of frame)
  bool in_frame = false;      // inside [0,1]^2 before clamping
  bool positive_depth = false;
};

// Pinhole projection to normalized uv. Vertices at depth <= 0 are flagged,
// never silently projected; out-of-frame ones are clamped to the border.
inline std::vector<ProjectedVertex> project_vertices(const TriangleMesh& mesh,
                                                     const Camera& camera) {
  camera.validate();
  std::vector<ProjectedVertex> out(mesh.vertex_count());
  for (std::size_t i = 0; i < mesh.vertex_count(); ++i) {
    const Vec3 v = mesh.vertex(i);
    ProjectedVertex& pv = out[i];
    if (v.z <= 0.0) continue;
    pv.positive_depth = true;
    const double u_pix = camera.fx * v.x / v.z + camera.cx;
    const double v_pix = camera.fy * v.y / v.z + camera.cy;
    pv.u = u_pix / camera.width;
    pv.v = v_pix / camera.height;
    pv.in_frame = pv.u >= 0.0 && pv.u <= 1.0 && pv.v >= 0.0 && pv.v <= 1.0;
    pv.u = std::clamp(pv.u, 0.0, 1.0);
    pv.v = std::clamp(pv.v, 0.0, 1.0);
  }
  return out;
}

// ---------------------------------------------------------------------------
// I/O

inline void write_obj(const std::string& path, const TriangleMesh& mesh) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("write_obj: cannot open " + path);
  char buf[128];
  for (std::size_t i = 0; i < mesh.vertex_count(); ++i) {
    std::snprintf(buf, sizeof(buf), "v %.9g %.9g %.9g\n", mesh.vertices.at(i, 0),
                  mesh.vertices.at(i, 1), mesh.vertices.at(i, 2));
    f << buf;
  }
  for (const auto& face : mesh.topology->faces) {
    f << "f " << face[0] + 1 << " " << face[1] + 1 << " " << face[2] + 1 << "\n";
  }
  if (!f) throw std::runtime_error("write_obj: write failed for " + path);
}

inline TriangleMesh read_obj(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("read_obj: cannot open " + path);
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> faces;
  std::string tag;
  while (f >> tag) {
    if (tag == "v") {
      Vec3 v;
      f >> v.x >> v.y >> v.z;
      vertices.push_back(v);
    } else if (tag == "f") {
      int a, b, c;
      f >> a >> b >> c;
      faces.push_back({a - 1, b - 1, c - 1});
    } else {
      std::string rest;
      std::getline(f, rest);
    }
  }
  return make_mesh(std::move(vertices), std::move(faces));
}

inline nlohmann::json camera_to_json(const Camera& cam) {
  nlohmann::json j;
  j["fx"] = cam.fx;
  j["fy"] = cam.fy;
  j["cx"] = cam.cx;
  j["cy"] = cam.cy;
  j["width"] = cam.width;
  j["height"] = cam.height;
  j["R"] = cam.R.m;
  j["p"] = std::array<double, 3>{cam.p.x, cam.p.y, cam.p.z};
  return j;
}

inline Camera camera_from_json(const nlohmann::json& j) {
  Camera cam;
  cam.fx = j.at("fx").get<double>();
  cam.fy = j.at("fy").get<double>();
  cam.cx = j.at("cx").get<double>();
  cam.cy = j.at("cy").get<double>();
  cam.width = j.at("width").get<int>();
  cam.height = j.at("height").get<int>();
  auto r = j.at("R").get<std::array<double, 9>>();
  cam.R.m = r;
  auto p = j.at("p").get<std::array<double, 3>>();
  cam.p = {p[0], p[1], p[2]};
  cam.validate();
  return cam;
}

inline void write_camera_json(const std::string& path, const Camera& cam) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("write_camera_json: cannot open " + path);
  f << camera_to_json(cam).dump(2) << "\n";
}

inline Camera read_camera_json(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("read_camera_json: cannot open " + path);
  nlohmann::json j;
  f >> j;
  return camera_from_json(j);
}

}  // namespace terramesh
