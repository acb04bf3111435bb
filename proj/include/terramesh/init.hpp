#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "terramesh/autodiff.hpp"
#include "terramesh/geometry.hpp"
#include "terramesh/losses.hpp"

namespace terramesh {

// Mesh initialization configuration. The paper configuration keeps only the
// rendered-depth and Laplacian terms active (w3 = wE = 0); w3 cannot be used
// here at all since no pseudo-ground-truth exists at initialization time.
struct InitConfig {
  int grid_rows = 32;
  int grid_cols = 32;
  int iterations = 150;
  // Peak step size in meters (Adam normalizes per-parameter). Cosine-decayed
  // to lr_final_fraction of the peak: the early phase must traverse the
  // scene's depth range, the late phase sets the dither floor of the L1
  // objective.
  double learning_rate = 0.5;
  double lr_final_fraction = 0.02;
  LossWeights weights{1.0, 0.0, 0.5, 0.0};
  double nominal_depth = 0.0;  // <= 0 selects the median valid sparse depth

  void validate() const {
    if (grid_rows < 2 || grid_cols < 2)
      throw std::invalid_argument("InitConfig: grid must be at least 2x2");
    if (iterations < 1) throw std::invalid_argument("InitConfig: iterations must be >= 1");
    if (learning_rate <= 0.0) throw std::invalid_argument("InitConfig: learning rate must be > 0");
    if (lr_final_fraction <= 0.0 || lr_final_fraction > 1.0)
      throw std::invalid_argument("InitConfig: lr_final_fraction must be in (0, 1]");
    weights.validate();
    if (weights.w3 != 0.0)
      throw std::invalid_argument("InitConfig: w3 must be 0 (no pseudo-GT at initialization)");
  }

  double lr_at(int iter) const {
    if (iterations <= 1) return learning_rate;
    const double lr_end = learning_rate * lr_final_fraction;
    const double phase = 3.14159265358979323846 * iter / (iterations - 1);
    return lr_end + 0.5 * (learning_rate - lr_end) * (1.0 + std::cos(phase));
  }
};

struct InitResult {
  TriangleMesh mesh;
  // Objective value after each Adam update; trace[k] is the loss of the mesh
  // produced by iteration k, so the last entry matches the returned mesh.
  std::vector<double> loss_trace;
};

inline double median_valid_depth(const DepthImage& sparse) {
  std::vector<double> vals;
  for (double d : sparse.depth)
    if (d > 0.0) vals.push_back(d);
  if (vals.empty()) throw std::invalid_argument("median_valid_depth: no valid measurements");
  std::sort(vals.begin(), vals.end());
  return vals[vals.size() / 2];
}

// Elevates a flat regular-grid mesh to fit the sparse depth measurements by
// Adam on w2*l2 + wV*lV. The offsets are per-vertex depths along each
// vertex's camera ray, so grid uv projections never move.
inline InitResult initialize_mesh(const DepthImage& sparse, const Camera& camera,
                                  const InitConfig& config) {
  config.validate();
  camera.validate();
  if (sparse.valid_count() < 3) {
    throw std::invalid_argument("initialize_mesh: need >= 3 valid measurements, got " +
                                std::to_string(sparse.valid_count()));
  }

  const double d0 = config.nominal_depth > 0.0 ? config.nominal_depth : median_valid_depth(sparse);
  TriangleMesh grid = make_grid_mesh(config.grid_rows, config.grid_cols, camera, d0);
  const std::size_t n = grid.vertex_count();

  // Ray direction per vertex, scaled so depth d places the vertex at ray*d.
  Tensor ray_x({n, 1}), ray_y({n, 1}), ray_z({n, 1});
  for (std::size_t i = 0; i < n; ++i) {
    ray_x[i] = grid.vertices.at(i, 0) / d0;
    ray_y[i] = grid.vertices.at(i, 1) / d0;
    ray_z[i] = 1.0;
  }

  SurfaceSampler unused_sampler{1, 0};
  auto build_vertices = [&](Tape& tape, const Var& depth) {
    Var x = multiply(depth, tape.leaf(ray_x));
    Var y = multiply(depth, tape.leaf(ray_y));
    Var z = multiply(depth, tape.leaf(ray_z));
    return concat(concat(x, y), z);
  };

  Tensor offsets({n, 1});
  AdamState adam;
  InitResult result;
  result.loss_trace.reserve(config.iterations);

  for (int iter = 0; iter < config.iterations; ++iter) {
    Tape tape;
    Var dv = tape.leaf(offsets);
    Var depth = add(dv, tape.leaf(Tensor::scalar(d0)));
    Var vertices = build_vertices(tape, depth);
    Var loss = loss_composite(tape, vertices, *grid.topology, sparse,
                              static_cast<const PointCloud*>(nullptr), config.weights,
                              unused_sampler, camera);
    if (!std::isfinite(loss.value().item())) {
      throw std::runtime_error("initialize_mesh: non-finite loss at iteration " +
                               std::to_string(iter));
    }
    tape.backward(loss);
    std::vector<Var> params{dv};
    adam_step(params, adam, config.lr_at(iter));
    offsets = dv.value();

    // Post-update objective, recorded so the trace ends at the returned mesh.
    Tape eval_tape;
    Var dv2 = eval_tape.leaf(offsets);
    Var depth2 = add(dv2, eval_tape.leaf(Tensor::scalar(d0)));
    Var vertices2 = build_vertices(eval_tape, depth2);
    Var post = loss_composite(eval_tape, vertices2, *grid.topology, sparse,
                              static_cast<const PointCloud*>(nullptr), config.weights,
                              unused_sampler, camera);
    if (!std::isfinite(post.value().item())) {
      throw std::runtime_error("initialize_mesh: non-finite loss after iteration " +
                               std::to_string(iter));
    }
    result.loss_trace.push_back(post.value().item());
  }

  TriangleMesh out;
  out.topology = grid.topology;
  out.vertices = Tensor({n, 3});
  for (std::size_t i = 0; i < n; ++i) {
    const double d = d0 + offsets[i];
    out.vertices.at(i, 0) = ray_x[i] * d;
    out.vertices.at(i, 1) = ray_y[i] * d;
    out.vertices.at(i, 2) = ray_z[i] * d;
  }
  result.mesh = std::move(out);
  return result;
}

inline void write_loss_trace_csv(const std::string& path, const std::vector<double>& trace) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("write_loss_trace_csv: cannot open " + path);
  f << "iteration,loss\n";
  for (std::size_t i = 0; i < trace.size(); ++i) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%zu,%.17g\n", i, trace[i]);
    f << buf;
  }
}

}  // namespace terramesh
