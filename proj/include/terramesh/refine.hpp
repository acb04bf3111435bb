#pragma once

#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "terramesh/autodiff.hpp"
#include "terramesh/edt.hpp"
#include "terramesh/encoder.hpp"
#include "terramesh/gcn.hpp"
#include "terramesh/geometry.hpp"
#include "terramesh/losses.hpp"
#include "terramesh/renderer.hpp"
#include "terramesh/rng.hpp"

namespace terramesh {

// ---------------------------------------------------------------------------
// Vertex-image feature alignment

namespace detail {

struct BilinearSample {
  int x0, x1, y0, y1;
  double fx, fy;
  bool dx_ok, dy_ok;  // false where clamping kills the positional derivative
};

inline BilinearSample bilinear_setup(double coord_norm, double extent, bool clamped_uv,
                                     int& x0, int& x1, double& frac, bool& ok) {
  double t = coord_norm * extent - 0.5;
  ok = !clamped_uv;
  if (t <= 0.0) {
    t = 0.0;
    ok = false;
  }
  if (t >= extent - 1.0) {
    t = extent - 1.0;
    ok = false;
  }
  x0 = static_cast<int>(t);
  x1 = std::min(x0 + 1, static_cast<int>(extent) - 1);
  frac = t - x0;
  return {};
}

inline BilinearSample bilinear_at(double u_norm, double v_norm, std::size_t w, std::size_t h,
                                  bool u_clamped, bool v_clamped) {
  BilinearSample s;
  bilinear_setup(u_norm, static_cast<double>(w), u_clamped, s.x0, s.x1, s.fx, s.dx_ok);
  bilinear_setup(v_norm, static_cast<double>(h), v_clamped, s.y0, s.y1, s.fy, s.dy_ok);
  return s;
}

}  // namespace detail

// Bilinearly samples every pyramid level at the vertices' projected uv and
// concatenates across levels, then appends the raw vertex coordinates as the
// last 3 columns. Differentiable with respect to the pyramid maps and the
// vertex positions (through the bilinear sample location and the coordinate
// columns). Out-of-frame vertices use border-clamped uv with no positional
// gradient; a vertex at non-positive depth is an error.
inline Var align_features(Tape& tape, const Var& vertices, const Camera& camera,
                          const FeaturePyramid& pyramid) {
  const Tensor& v = vertices.value();
  const std::size_t n = v.dim(0);
  const std::size_t total_c = pyramid.total_channels();

  struct VertexProj {
    double u, v;          // normalized, clamped
    bool u_clamped, v_clamped;
  };
  std::vector<VertexProj> proj(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double z = v.at(i, 2);
    if (z <= 0.0) {
      throw std::domain_error("align_features: vertex " + std::to_string(i) +
                              " has non-positive depth");
    }
    double u = (camera.fx * v.at(i, 0) / z + camera.cx) / camera.width;
    double vv = (camera.fy * v.at(i, 1) / z + camera.cy) / camera.height;
    VertexProj& p = proj[i];
    p.u_clamped = u < 0.0 || u > 1.0;
    p.v_clamped = vv < 0.0 || vv > 1.0;
    p.u = std::clamp(u, 0.0, 1.0);
    p.v = std::clamp(vv, 0.0, 1.0);
  }

  std::array<std::size_t, 4> level_ids;
  for (int l = 0; l < 4; ++l) level_ids[l] = pyramid.levels[l].id();

  Tensor out({n, total_c});
  {
    std::size_t col0 = 0;
    for (int l = 0; l < 4; ++l) {
      const Tensor& fm = pyramid.levels[l].value();
      const std::size_t c = fm.dim(0), fh = fm.dim(1), fw = fm.dim(2);
      for (std::size_t i = 0; i < n; ++i) {
        const auto s =
            detail::bilinear_at(proj[i].u, proj[i].v, fw, fh, proj[i].u_clamped, proj[i].v_clamped);
        for (std::size_t ch = 0; ch < c; ++ch) {
          const double* plane = fm.data() + ch * fh * fw;
          const double v00 = plane[s.y0 * fw + s.x0];
          const double v01 = plane[s.y0 * fw + s.x1];
          const double v10 = plane[s.y1 * fw + s.x0];
          const double v11 = plane[s.y1 * fw + s.x1];
          out.at(i, col0 + ch) = (1.0 - s.fy) * ((1.0 - s.fx) * v00 + s.fx * v01) +
                                 s.fy * ((1.0 - s.fx) * v10 + s.fx * v11);
        }
      }
      col0 += c;
    }
  }

  const std::size_t vid = vertices.id();
  const std::size_t oid = tape.size();
  std::vector<std::size_t> parents{vid, level_ids[0], level_ids[1], level_ids[2], level_ids[3]};
  Var sampled = tape.record(
      std::move(out), parents,
      [vid, oid, n, level_ids, cam = camera, proj = std::move(proj), vsnap = v](Tape& tp) {
        const Tensor& g = tp.grad(oid);
        Tensor& gv = tp.grad(vid);
        std::size_t col0 = 0;
        for (int l = 0; l < 4; ++l) {
          const Tensor& fm = tp.value(level_ids[l]);
          Tensor& gf = tp.grad(level_ids[l]);
          const std::size_t c = fm.dim(0), fh = fm.dim(1), fw = fm.dim(2);
          for (std::size_t i = 0; i < n; ++i) {
            const auto s = detail::bilinear_at(proj[i].u, proj[i].v, fw, fh, proj[i].u_clamped,
                                               proj[i].v_clamped);
            double du_acc = 0.0, dv_acc = 0.0;
            for (std::size_t ch = 0; ch < c; ++ch) {
              const double go = g.at(i, col0 + ch);
              if (go == 0.0) continue;
              const double* plane = fm.data() + ch * fh * fw;
              double* gplane = gf.data() + ch * fh * fw;
              const double v00 = plane[s.y0 * fw + s.x0];
              const double v01 = plane[s.y0 * fw + s.x1];
              const double v10 = plane[s.y1 * fw + s.x0];
              const double v11 = plane[s.y1 * fw + s.x1];
              gplane[s.y0 * fw + s.x0] += go * (1.0 - s.fy) * (1.0 - s.fx);
              gplane[s.y0 * fw + s.x1] += go * (1.0 - s.fy) * s.fx;
              gplane[s.y1 * fw + s.x0] += go * s.fy * (1.0 - s.fx);
              gplane[s.y1 * fw + s.x1] += go * s.fy * s.fx;
              if (s.dx_ok) {
                du_acc += go * ((1.0 - s.fy) * (v01 - v00) + s.fy * (v11 - v10)) *
                          static_cast<double>(fw);
              }
              if (s.dy_ok) {
                dv_acc += go * ((1.0 - s.fx) * (v10 - v00) + s.fx * (v11 - v01)) *
                          static_cast<double>(fh);
              }
            }
            if (du_acc != 0.0 || dv_acc != 0.0) {
              // d(u_norm)/d(x,z) and d(v_norm)/d(y,z) through the projection.
              const double x = vsnap.at(i, 0), y = vsnap.at(i, 1), z = vsnap.at(i, 2);
              const double du_dx = cam.fx / z / cam.width;
              const double du_dz = -cam.fx * x / (z * z) / cam.width;
              const double dv_dy = cam.fy / z / cam.height;
              const double dv_dz = -cam.fy * y / (z * z) / cam.height;
              gv.at(i, 0) += du_acc * du_dx;
              gv.at(i, 1) += dv_acc * dv_dy;
              gv.at(i, 2) += du_acc * du_dz + dv_acc * dv_dz;
            }
          }
          col0 += c;
        }
      });
  return concat(sampled, vertices);
}

// ---------------------------------------------------------------------------
// Parameters

struct RefineConfig {
  int input_channels = 5;  // 3 = RGB, 4 = RGB+RD, 5 = RGB+RD+EDT
  std::array<std::size_t, 4> encoder_channels{16, 32, 64, 128};
  std::array<std::size_t, 3> gcn_hidden{128, 96, 64};  // last stays 64
  double depth_scale = 120.0;   // rendered-depth normalization (scene scale)
  double edt_scale = 181.0;     // EDT normalization (image diagonal, pixels)

  void validate() const {
    if (input_channels < 3 || input_channels > 5)
      throw std::invalid_argument("RefineConfig: input_channels must be 3, 4 or 5");
    if (gcn_hidden[2] != 64)
      throw std::invalid_argument("RefineConfig: final GCN feature dimension must be 64");
    if (depth_scale <= 0.0 || edt_scale <= 0.0)
      throw std::invalid_argument("RefineConfig: normalization scales must be > 0");
  }

  std::size_t vertex_feature_width() const {
    return encoder_channels[0] + encoder_channels[1] + encoder_channels[2] +
           encoder_channels[3] + 3;
  }
};

// All learned tensors of the refinement model: a shared 4-stage encoder and
// three per-stage GCN heads (stage parameters are independent).
struct RefineParams {
  RefineConfig config;
  std::array<Tensor, 4> enc_weight;
  std::array<Tensor, 4> enc_bias;
  struct Stage {
    Tensor g1, g2, g3, w;
  };
  std::array<Stage, 3> stages;

  template <typename F>
  void visit(F&& f) {
    for (int k = 0; k < 4; ++k) {
      f("encoder" + std::to_string(k) + ".weight", enc_weight[k]);
      f("encoder" + std::to_string(k) + ".bias", enc_bias[k]);
    }
    for (int s = 0; s < 3; ++s) {
      const std::string p = "stage" + std::to_string(s) + ".";
      f(p + "g1", stages[s].g1);
      f(p + "g2", stages[s].g2);
      f(p + "g3", stages[s].g3);
      f(p + "w", stages[s].w);
    }
  }
};

// Fan-in scaled uniform init; the final projection starts at zero so the
// untrained cascade is the identity on vertices.
inline RefineParams init_refine_params(const RefineConfig& config, std::uint64_t seed) {
  config.validate();
  RefineParams p;
  p.config = config;
  Rng rng(derive_seed(seed, 0xeec0de));
  auto kaiming = [&rng](std::vector<std::size_t> shape, std::size_t fan_in) {
    Tensor t(std::move(shape));
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-bound, bound);
    return t;
  };

  std::size_t cin = static_cast<std::size_t>(config.input_channels);
  for (int k = 0; k < 4; ++k) {
    const std::size_t cout = config.encoder_channels[k];
    p.enc_weight[k] = kaiming({cout, cin, 3, 3}, cin * 9);
    p.enc_bias[k] = Tensor({cout});
    cin = cout;
  }
  const std::size_t fwidth = config.vertex_feature_width();
  for (int s = 0; s < 3; ++s) {
    p.stages[s].g1 = kaiming({fwidth, config.gcn_hidden[0]}, fwidth);
    p.stages[s].g2 = kaiming({config.gcn_hidden[0], config.gcn_hidden[1]}, config.gcn_hidden[0]);
    p.stages[s].g3 = kaiming({config.gcn_hidden[1], config.gcn_hidden[2]}, config.gcn_hidden[1]);
    p.stages[s].w = Tensor({config.gcn_hidden[2], 3});
  }
  return p;
}

// ---------------------------------------------------------------------------
// Checkpoint I/O (versioned JSON container of named tensors)

inline void save_checkpoint(const std::string& path, RefineParams& params) {
  nlohmann::json j;
  j["version"] = 1;
  j["config"] = {{"input_channels", params.config.input_channels},
                 {"encoder_channels", params.config.encoder_channels},
                 {"gcn_hidden", params.config.gcn_hidden},
                 {"depth_scale", params.config.depth_scale},
                 {"edt_scale", params.config.edt_scale}};
  nlohmann::json tensors = nlohmann::json::object();
  params.visit([&tensors](const std::string& name, Tensor& t) {
    tensors[name] = {{"shape", t.shape()}, {"data", t.vec()}};
  });
  j["params"] = std::move(tensors);
  std::ofstream f(path);
  if (!f) throw std::runtime_error("save_checkpoint: cannot open " + path);
  f << j.dump() << "\n";
}

inline RefineParams load_checkpoint(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("load_checkpoint: cannot open " + path);
  nlohmann::json j;
  f >> j;
  if (j.at("version").get<int>() != 1)
    throw std::runtime_error("load_checkpoint: unsupported version in " + path);
  RefineConfig config;
  const auto& jc = j.at("config");
  config.input_channels = jc.at("input_channels").get<int>();
  config.encoder_channels = jc.at("encoder_channels").get<std::array<std::size_t, 4>>();
  config.gcn_hidden = jc.at("gcn_hidden").get<std::array<std::size_t, 3>>();
  config.depth_scale = jc.at("depth_scale").get<double>();
  config.edt_scale = jc.at("edt_scale").get<double>();
  RefineParams params = init_refine_params(config, 0);
  params.visit([&j, &path](const std::string& name, Tensor& t) {
    const auto& jt = j.at("params").at(name);
    Tensor loaded(jt.at("shape").get<std::vector<std::size_t>>(),
                  jt.at("data").get<std::vector<double>>());
    if (!loaded.same_shape(t))
      throw std::runtime_error("load_checkpoint: shape mismatch for " + name + " in " + path);
    t = std::move(loaded);
  });
  return params;
}

// ---------------------------------------------------------------------------
// Cascade

// Everything constant about one scene that the cascade needs.
struct SceneTensors {
  Tensor rgb_r, rgb_g, rgb_b;  // (H,W) each
  Tensor edt_map;              // (H,W), pixels
  Camera camera;

  static SceneTensors from(const RgbImage& rgb, const DepthImage& sparse, const Camera& cam) {
    SceneTensors s;
    const std::size_t h = rgb.height, w = rgb.width;
    s.rgb_r = Tensor({h, w});
    s.rgb_g = Tensor({h, w});
    s.rgb_b = Tensor({h, w});
    for (std::size_t i = 0; i < h * w; ++i) {
      s.rgb_r[i] = rgb.data[i];
      s.rgb_g[i] = rgb.data[h * w + i];
      s.rgb_b[i] = rgb.data[2 * h * w + i];
    }
    s.edt_map = edt(sparse);
    s.camera = cam;
    return s;
  }
};

// Model parameters lifted onto a tape for one pass, with the name->Var list
// kept for the optimizer.
struct LiftedParams {
  EncoderVars encoder;
  std::array<GcnVars, 3> gcn;
  std::vector<std::pair<std::string, Var>> named;
};

inline LiftedParams lift_params(Tape& tape, RefineParams& params) {
  LiftedParams out;
  std::map<std::string, Var> by_name;
  params.visit([&](const std::string& name, Tensor& t) {
    Var v = tape.leaf(t);
    by_name[name] = v;
    out.named.emplace_back(name, v);
  });
  for (int k = 0; k < 4; ++k) {
    out.encoder.weights[k] = by_name["encoder" + std::to_string(k) + ".weight"];
    out.encoder.biases[k] = by_name["encoder" + std::to_string(k) + ".bias"];
  }
  for (int s = 0; s < 3; ++s) {
    const std::string p = "stage" + std::to_string(s) + ".";
    out.gcn[s] = {by_name[p + "g1"], by_name[p + "g2"], by_name[p + "g3"], by_name[p + "w"]};
  }
  return out;
}

struct CascadeResult {
  std::array<Var, 3> vertices;               // refined vertices after each stage
  std::array<Var, 3> rendered;               // rendered depth of each refined mesh
  std::array<RenderedDepth, 3> render_records;
};

// Three chained rounds of render -> feature extraction -> vertex alignment ->
// graph convolution -> vertex offset. Stage i consumes stage i-1's refined
// mesh; topology is fixed throughout.
inline CascadeResult run_cascade(Tape& tape, const Var& init_vertices, const MeshTopology& topo,
                                 const SparseMatrix& a_hat, const SceneTensors& scene,
                                 const LiftedParams& lifted, const RefineConfig& config) {
  config.validate();
  CascadeResult result;
  Var rgb_r = tape.leaf(scene.rgb_r);
  Var rgb_g = tape.leaf(scene.rgb_g);
  Var rgb_b = tape.leaf(scene.rgb_b);
  Var edt_norm = tape.leaf(scene.edt_map);
  edt_norm = scale(edt_norm, 1.0 / config.edt_scale);

  Var current = init_vertices;
  RenderedDepth current_record;
  Var current_render = render_depth_diff(tape, current, topo, scene.camera, &current_record);

  for (int stage = 0; stage < 3; ++stage) {
    std::vector<Var> channels{rgb_r, rgb_g, rgb_b};
    if (config.input_channels >= 4) {
      channels.push_back(scale(current_render, 1.0 / config.depth_scale));
    }
    if (config.input_channels >= 5) channels.push_back(edt_norm);
    Var input = stack_channels(tape, channels);
    FeaturePyramid pyramid = extract_features(input, lifted.encoder);
    Var features = align_features(tape, current, scene.camera, pyramid);
    Var offsets = gcn_forward(tape, features, a_hat, lifted.gcn[stage]);
    current = add(current, offsets);
    current_render = render_depth_diff(tape, current, topo, scene.camera, &current_record);

    result.vertices[stage] = current;
    result.rendered[stage] = current_render;
    result.render_records[stage] = current_record;
  }
  return result;
}

// ---------------------------------------------------------------------------
// Training

struct TrainHyper {
  int epochs = 200;
  // Initial learning rate; cosine-decayed over total_steps to the final
  // fraction. total_steps = 0 disables the decay.
  double learning_rate = 5e-4;
  double lr_final_fraction = 0.1;
  long total_steps = 0;
  LossWeights weights{3.0, 1.0, 0.5, 0.01};
  std::size_t chamfer_samples = 10000;
  std::uint64_t seed = 0;

  double lr_at(long step) const {
    if (total_steps <= 1 || step >= total_steps) {
      return total_steps > 0 ? learning_rate * lr_final_fraction : learning_rate;
    }
    const double lr_end = learning_rate * lr_final_fraction;
    const double phase = 3.14159265358979323846 * step / (total_steps - 1);
    return lr_end + 0.5 * (learning_rate - lr_end) * (1.0 + std::cos(phase));
  }
};

// One keyframe's training bundle with everything per-scene precomputed: the
// initialized mesh, the EDT, the cached pseudo-GT sample cloud Q_D (constant,
// sampled once) and the normalized adjacency of the mesh graph.
struct TrainScene {
  std::string id;
  SceneTensors tensors;
  DepthImage gt;
  TriangleMesh init_mesh;
  PointCloud gt_cloud;
  std::shared_ptr<const SpatialHashNn> gt_index;  // prebuilt index over gt_cloud
  SparseMatrix a_hat;
};

struct StageMetrics {
  double l2 = 0.0;
  double l3 = 0.0;
};

struct TrainStepResult {
  double total_loss = 0.0;
  std::array<StageMetrics, 3> stages;
};

namespace detail {

struct AdamSlot {
  Tensor m, v;
};

}  // namespace detail

class RefineTrainer {
 public:
  RefineTrainer(RefineParams params, TrainHyper hyper)
      : params_(std::move(params)), hyper_(hyper) {
    hyper_.weights.validate();
  }

  RefineParams& params() { return params_; }
  const TrainHyper& hyper() const { return hyper_; }
  long step_count() const { return step_; }

  // One optimization step on one scene (batch size 1). Returns the summed
  // 3-stage composite loss and per-stage unweighted l2/l3 readings.
  TrainStepResult step(const TrainScene& scene) {
    Tape tape;
    LiftedParams lifted = lift_params(tape, params_);
    Var init_v = tape.leaf(scene.init_mesh.vertices);
    CascadeResult cascade = run_cascade(tape, init_v, *scene.init_mesh.topology, scene.a_hat,
                                        scene.tensors, lifted, params_.config);

    TrainStepResult result;
    Var total;
    for (int stage = 0; stage < 3; ++stage) {
      SurfaceSampler sampler{hyper_.chamfer_samples,
                             derive_seed(hyper_.seed, scene_tag(scene.id) * 1000003ull +
                                                          static_cast<std::uint64_t>(step_) * 3 +
                                                          stage)};
      Var stage_loss = stage_composite(tape, cascade, stage, scene, sampler, &result.stages[stage]);
      if (!std::isfinite(stage_loss.value().item())) {
        throw std::runtime_error("train: non-finite loss at scene " + scene.id + " stage " +
                                 std::to_string(stage + 1));
      }
      total = total.valid() ? add(total, stage_loss) : stage_loss;
    }
    result.total_loss = total.value().item();

    tape.backward(total);
    ++step_;
    for (auto& [name, var] : lifted.named) {
      detail::AdamSlot& slot = adam_[name];
      Tensor grad = var.grad();
      Tensor* target = nullptr;
      params_.visit([&](const std::string& n, Tensor& t) {
        if (n == name) target = &t;
      });
      adam_update(*target, grad, slot.m, slot.v, step_, hyper_.lr_at(step_ - 1));
    }
    return result;
  }

  // Loss of one scene without updating parameters (validation / logging).
  TrainStepResult evaluate(const TrainScene& scene, std::uint64_t eval_seed = 0x7a11) {
    Tape tape;
    LiftedParams lifted = lift_params(tape, params_);
    Var init_v = tape.leaf(scene.init_mesh.vertices);
    CascadeResult cascade = run_cascade(tape, init_v, *scene.init_mesh.topology, scene.a_hat,
                                        scene.tensors, lifted, params_.config);
    TrainStepResult result;
    Var total;
    for (int stage = 0; stage < 3; ++stage) {
      SurfaceSampler sampler{hyper_.chamfer_samples, derive_seed(eval_seed, stage)};
      Var stage_loss = stage_composite(tape, cascade, stage, scene, sampler, &result.stages[stage]);
      total = total.valid() ? add(total, stage_loss) : stage_loss;
    }
    result.total_loss = total.value().item();
    return result;
  }

 private:
  static std::uint64_t scene_tag(const std::string& id) {
    std::uint64_t h = 1469598103934665603ull;
    for (char c : id) {
      h ^= static_cast<unsigned char>(c);
      h *= 1099511628211ull;
    }
    return h;
  }

  // w2*l2 + w3*l3 + wV*lV + wE*lE for one cascade stage, sharing the
  // stage's existing render. Zero-weight terms are skipped; l2/l3 metric
  // readings are still reported when available.
  Var stage_composite(Tape& tape, const CascadeResult& cascade, int stage,
                      const TrainScene& scene, const SurfaceSampler& sampler,
                      StageMetrics* metrics) {
    const LossWeights& w = hyper_.weights;
    const MeshTopology& topo = *scene.init_mesh.topology;
    Var total;
    auto accumulate = [&](Var term, double weight) {
      Var scaled = scale(term, weight);
      total = total.valid() ? add(total, scaled) : scaled;
    };
    metrics->l2 = l2_depth_error(cascade.render_records[stage], scene.gt);
    if (w.w2 > 0.0) {
      accumulate(
          loss_2d(tape, cascade.rendered[stage], cascade.render_records[stage], scene.gt), w.w2);
    }
    if (w.w3 > 0.0) {
      Var l3 = loss_3d(tape, cascade.vertices[stage], topo, scene.gt_cloud, sampler,
                       scene.gt_index.get());
      metrics->l3 = l3.value().item();
      accumulate(l3, w.w3);
    }
    if (w.wV > 0.0) accumulate(loss_laplacian(tape, cascade.vertices[stage], topo), w.wV);
    if (w.wE > 0.0) accumulate(loss_edge(tape, cascade.vertices[stage], topo), w.wE);
    return total;
  }

  RefineParams params_;
  TrainHyper hyper_;
  long step_ = 0;
  std::map<std::string, detail::AdamSlot> adam_;
};

// Inference: run the cascade on a scene and return the three refined meshes.
inline std::array<TriangleMesh, 3> refine_cascade(const TriangleMesh& init_mesh,
                                                  const RgbImage& rgb, const DepthImage& sparse,
                                                  const Camera& camera, RefineParams& params) {
  Tape tape;
  LiftedParams lifted = lift_params(tape, params);
  SceneTensors tensors = SceneTensors::from(rgb, sparse, camera);
  SparseMatrix a_hat = normalized_adjacency(*init_mesh.topology);
  Var init_v = tape.leaf(init_mesh.vertices);
  CascadeResult cascade =
      run_cascade(tape, init_v, *init_mesh.topology, a_hat, tensors, lifted, params.config);
  std::array<TriangleMesh, 3> out;
  for (int s = 0; s < 3; ++s) {
    out[s].topology = init_mesh.topology;
    out[s].vertices = cascade.vertices[s].value();
  }
  return out;
}

}  // namespace terramesh
