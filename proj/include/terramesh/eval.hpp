#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "terramesh/geometry.hpp"
#include "terramesh/losses.hpp"
#include "terramesh/renderer.hpp"
#include "terramesh/rng.hpp"

namespace terramesh {

// l2 metric: Eq.-2 style mean absolute rendered-depth error against the
// dense ground truth. Shares the accumulation code with loss_2d.
inline double eval_l2_metric(const TriangleMesh& mesh, const DepthImage& gt,
                             const Camera& camera) {
  return l2_depth_error(render_depth(mesh, camera), gt);
}

// l3 metric: symmetric Chamfer between surface samples of the mesh and of
// the pseudo-ground-truth mesh lifted from the dense depth image. Both
// clouds use the same sample count and the same seed, so evaluating the
// pseudo-GT mesh against itself gives exactly zero.
inline double eval_l3_metric(const TriangleMesh& mesh, const DepthImage& gt, const Camera& camera,
                             std::size_t samples = 10000, std::uint64_t seed = 0x37a1,
                             int pseudo_gt_stride = 1) {
  TriangleMesh pseudo = pseudo_gt_mesh(gt, camera, pseudo_gt_stride);
  SurfaceSampler sampler{samples, derive_seed(seed, 0xe7a1)};
  PointCloud a = sample_mesh_surface(mesh, sampler);
  PointCloud b = sample_mesh_surface(pseudo, sampler);
  return chamfer(a, b);
}

// Mesh storage cost relative to a dense depth image: (3 n) / (H W).
inline double param_efficiency(std::size_t vertex_count, int depth_width, int depth_height) {
  if (vertex_count == 0) throw std::invalid_argument("param_efficiency: mesh has no vertices");
  if (depth_width <= 0 || depth_height <= 0)
    throw std::invalid_argument("param_efficiency: bad depth resolution");
  return 3.0 * static_cast<double>(vertex_count) /
         (static_cast<double>(depth_width) * static_cast<double>(depth_height));
}

inline double param_efficiency(const TriangleMesh& mesh, int depth_width, int depth_height) {
  return param_efficiency(mesh.vertex_count(), depth_width, depth_height);
}

// Local camera-frame meshes transformed to the world frame and concatenated
// with re-based indices. No merging or stitching; every input triangle is
// preserved under a rigid transform.
inline TriangleMesh assemble_global(const std::vector<TriangleMesh>& meshes,
                                    const std::vector<Camera>& cameras) {
  if (meshes.empty()) throw std::invalid_argument("assemble_global: no meshes");
  if (meshes.size() != cameras.size())
    throw std::invalid_argument("assemble_global: mesh/camera count mismatch");
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> faces;
  int base = 0;
  for (std::size_t k = 0; k < meshes.size(); ++k) {
    TriangleMesh world = to_world(meshes[k], cameras[k]);
    for (std::size_t i = 0; i < world.vertex_count(); ++i) vertices.push_back(world.vertex(i));
    for (const auto& f : world.topology->faces) {
      faces.push_back({f[0] + base, f[1] + base, f[2] + base});
    }
    base += static_cast<int>(world.vertex_count());
  }
  return make_mesh(std::move(vertices), std::move(faces));
}

// ---------------------------------------------------------------------------
// Report

struct EvalCell {
  double l2 = 0.0;
  double l3 = 0.0;
  std::vector<std::string> scene_ids;
  std::vector<double> scene_l2;
  std::vector<double> scene_l3;
};

struct OrderingCheck {
  std::string name;
  bool pass = false;
  std::string detail;
};

// Per-method, per-(sparsity, noise) aggregate table plus the pass/fail
// ordering checks derived from it. Aggregates are means over scenes and
// every cell lists its per-scene values.
struct EvalReport {
  std::vector<std::string> methods;
  std::vector<std::size_t> sparsity_levels;
  // cells[method][cell_key(sparsity, noise)]
  std::map<std::string, std::map<std::string, EvalCell>> cells;
  std::vector<OrderingCheck> orderings;
  std::vector<std::string> notes;

  static std::string cell_key(std::size_t sparsity, bool noise) {
    return std::to_string(sparsity) + (noise ? "+noise" : "");
  }

  bool has_cell(const std::string& method, std::size_t sparsity, bool noise) const {
    auto it = cells.find(method);
    return it != cells.end() && it->second.count(cell_key(sparsity, noise)) > 0;
  }
  const EvalCell& cell(const std::string& method, std::size_t sparsity, bool noise) const {
    return cells.at(method).at(cell_key(sparsity, noise));
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["methods"] = methods;
    j["sparsity_levels"] = sparsity_levels;
    nlohmann::json jc = nlohmann::json::object();
    for (const auto& [method, bycell] : cells) {
      nlohmann::json jm = nlohmann::json::object();
      for (const auto& [key, cell] : bycell) {
        jm[key] = {{"l2", cell.l2},
                   {"l3", cell.l3},
                   {"scene_ids", cell.scene_ids},
                   {"scene_l2", cell.scene_l2},
                   {"scene_l3", cell.scene_l3}};
      }
      jc[method] = std::move(jm);
    }
    j["cells"] = std::move(jc);
    nlohmann::json jo = nlohmann::json::array();
    for (const auto& check : orderings) {
      jo.push_back({{"name", check.name}, {"pass", check.pass}, {"detail", check.detail}});
    }
    j["ordering_checks"] = std::move(jo);
    j["notes"] = notes;
    return j;
  }

  std::string to_table() const {
    std::string out;
    char line[512];
    for (const char* metric : {"l2", "l3"}) {
      std::snprintf(line, sizeof(line), "%-14s | ", metric);
      out += line;
      for (const auto& m : methods) {
        std::snprintf(line, sizeof(line), "%14s ", m.c_str());
        out += line;
      }
      out += "\n";
      for (bool noise : {false, true}) {
        for (std::size_t sp : sparsity_levels) {
          std::snprintf(line, sizeof(line), "%-14s | ", cell_key(sp, noise).c_str());
          out += line;
          for (const auto& m : methods) {
            if (!has_cell(m, sp, noise)) {
              std::snprintf(line, sizeof(line), "%14s ", "/");
            } else {
              const EvalCell& c = cell(m, sp, noise);
              std::snprintf(line, sizeof(line), "%14.3f ",
                            std::string(metric) == "l2" ? c.l2 : c.l3);
            }
            out += line;
          }
          out += "\n";
        }
      }
      out += "\n";
    }
    for (const auto& note : notes) out += "note: " + note + "\n";
    out += "ordering checks:\n";
    for (const auto& check : orderings) {
      std::snprintf(line, sizeof(line), "  [%s] %s  %s\n", check.pass ? "pass" : "FAIL",
                    check.name.c_str(), check.detail.c_str());
      out += line;
    }
    return out;
  }
};

}  // namespace terramesh
