// Acceptance suite: end-to-end verification of the full toolkit. Each
// criterion prints one pass/fail line; the process exits nonzero if any
// fails. Budgets that the criteria state (gradient suite < 5 min, Chamfer
// oracle < 1 min, initialization < 2 min/scene) are enforced here.
//
// Run time is dominated by the two training runs of criterion 5/6 (about
// 25 minutes each on one desktop core at the 128x128 / 256-vertex scale).

#include <chrono>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "terramesh/terramesh.hpp"

namespace fs = std::filesystem;
using namespace terramesh;
using Clock = std::chrono::steady_clock;

namespace {

struct CriterionResult {
  bool pass = true;
  std::string detail;
  double seconds = 0.0;
};

int g_failures = 0;

void report(int number, const std::string& name, const CriterionResult& r) {
  std::printf("[%s] criterion %d: %-34s %s(%.1fs)\n", r.pass ? "PASS" : "FAIL", number,
              name.c_str(), r.detail.empty() ? "" : (r.detail + " ").c_str(), r.seconds);
  std::fflush(stdout);
  if (!r.pass) ++g_failures;
}

CriterionResult timed(const std::function<void(CriterionResult&)>& body) {
  CriterionResult r;
  const auto t0 = Clock::now();
  try {
    body(r);
  } catch (const std::exception& e) {
    r.pass = false;
    r.detail = std::string("exception: ") + e.what();
  }
  r.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  return r;
}

void require(CriterionResult& r, bool cond, const std::string& what) {
  if (!cond) {
    r.pass = false;
    r.detail += (r.detail.empty() ? "" : "; ") + what;
  }
}

std::string read_file(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

Camera simple_camera(int res) {
  Camera cam;
  cam.fx = cam.fy = res;
  cam.cx = cam.cy = res / 2.0;
  cam.width = cam.height = res;
  return cam;
}

// --------------------------------------------------------------------------
// Criterion 1: finite-difference gradient suite over every differentiable
// operation. Analytic ops at 1e-4; anything with frozen argmin/visibility at
// 1e-3 (end-to-end network path at 1e-2 per the spec invariant).

double fd_worst(const std::function<double(const Tensor&)>& f, const Tensor& x,
                const Tensor& analytic, double h = 1e-5) {
  return oracles::fd_check(f, x, analytic, h).max_rel_error;
}

void criterion_gradients(CriterionResult& r) {
  Rng rng(2024);
  double worst_analytic = 0.0;
  double worst_frozen = 0.0;

  // Elementwise / reduction / structural tape ops.
  {
    Tensor x({4, 3});
    Tensor other({4, 3});
    for (std::size_t i = 0; i < x.numel(); ++i) {
      x[i] = rng.uniform(0.2, 2.0) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
      other[i] = rng.uniform(0.2, 2.0) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
    }
    Tensor pos = Tensor::full({4, 3}, 1.0);
    for (std::size_t i = 0; i < pos.numel(); ++i) pos[i] = rng.uniform(0.5, 3.0);
    Tensor w({3, 2});
    for (std::size_t i = 0; i < w.numel(); ++i) w[i] = rng.uniform(-1, 1);

    auto check = [&](const char* name, const Tensor& input,
                     const std::function<Var(Tape&, Var)>& build) {
      Tape tape;
      Var in = tape.leaf(input);
      Var out = build(tape, in);
      tape.backward(out);
      const double e = fd_worst(
          [&](const Tensor& t) {
            Tape t2;
            return build(t2, t2.leaf(t)).value().item();
          },
          input, in.grad());
      worst_analytic = std::max(worst_analytic, e);
      (void)name;
    };

    check("add", x, [&](Tape& t, Var v) { return sum(add(v, t.leaf(other))); });
    check("subtract", x, [&](Tape& t, Var v) { return sum(subtract(t.leaf(other), v)); });
    check("multiply", x, [&](Tape& t, Var v) { return sum(multiply(v, t.leaf(other))); });
    check("matmul", x, [&](Tape& t, Var v) { return sum(multiply(matmul(v, t.leaf(w)), matmul(v, t.leaf(w)))); });
    check("relu", x, [&](Tape&, Var v) { return sum(relu(v)); });
    check("abs", x, [&](Tape&, Var v) { return sum(absval(v)); });
    check("sqrt", pos, [&](Tape&, Var v) { return sum(sqrtval(v)); });
    check("sum", x, [&](Tape&, Var v) { return sum(multiply(v, v)); });
    check("mean", x, [&](Tape&, Var v) { return mean(v); });
    check("concat", x, [&](Tape& t, Var v) { return sum(multiply(concat(v, t.leaf(other)), concat(v, t.leaf(other)))); });
    check("gather", x, [&](Tape&, Var v) { return sum(gather(v, {2, 0, 2, 1})); });
    check("reshape", x, [&](Tape&, Var v) { return sum(reshape(v, {12})); });
    check("scale", x, [&](Tape&, Var v) { return sum(scale(v, -1.7)); });
    check("minimum", x, [&](Tape& t, Var v) { return sum(minimum(v, t.leaf(other))); });
  }

  // Renderer (visibility frozen; per-coordinate face-change masking).
  {
    Camera cam = simple_camera(24);
    TriangleMesh m = make_grid_mesh(5, 5, cam, 30.0);
    for (std::size_t i = 0; i < m.vertex_count(); ++i) {
      m.vertices.at(i, 0) += rng.uniform(-0.3, 0.3);
      m.vertices.at(i, 1) += rng.uniform(-0.3, 0.3);
      m.vertices.at(i, 2) += rng.uniform(-3.0, 3.0);
    }
    const double h = 1e-4;
    const std::size_t npix = 24 * 24;
    RenderedDepth base = render_depth(m.vertices, *m.topology, cam);
    for (std::size_t i = 0; i < m.vertices.numel(); ++i) {
      Tensor vp = m.vertices;
      vp[i] += h;
      RenderedDepth plus = render_depth(vp, *m.topology, cam);
      vp[i] -= 2 * h;
      RenderedDepth minus = render_depth(vp, *m.topology, cam);
      std::vector<std::size_t> stable;
      for (std::size_t p = 0; p < npix; ++p) {
        if (base.face_index[p] >= 0 && plus.face_index[p] == base.face_index[p] &&
            minus.face_index[p] == base.face_index[p]) {
          stable.push_back(p);
        }
      }
      double fd = 0.0;
      for (std::size_t p : stable) fd += plus.depth[p] - minus.depth[p];
      fd /= 2 * h;
      Tape tape;
      Var verts = tape.leaf(m.vertices);
      Var img = render_depth_diff(tape, verts, *m.topology, cam);
      tape.backward(sum(gather(reshape(img, {npix}), stable)));
      const double a = verts.grad()[i];
      const double denom = std::max({std::fabs(a), std::fabs(fd), 1e-3});
      worst_frozen = std::max(worst_frozen, std::fabs(a - fd) / denom);
    }
  }

  // Losses: l2 (through the renderer), l3 (frozen sampling), Laplacian, edge.
  {
    Camera cam = simple_camera(24);
    TriangleMesh m = make_grid_mesh(4, 4, cam, 25.0);
    for (std::size_t i = 0; i < m.vertices.numel(); ++i) m.vertices[i] += rng.uniform(-0.2, 0.2);
    const MeshTopology* topo = m.topology.get();

    {  // Laplacian and edge at the analytic tolerance.
      Tape tape;
      Var v = tape.leaf(m.vertices);
      Var loss = loss_laplacian(tape, v, *topo);
      tape.backward(loss);
      worst_analytic = std::max(worst_analytic, fd_worst(
          [&](const Tensor& t) {
            Tape t2;
            return loss_laplacian(t2, t2.leaf(t), *topo).value().item();
          },
          m.vertices, v.grad()));
    }
    {
      Tape tape;
      Var v = tape.leaf(m.vertices);
      Var loss = loss_edge(tape, v, *topo);
      tape.backward(loss);
      worst_analytic = std::max(worst_analytic, fd_worst(
          [&](const Tensor& t) {
            Tape t2;
            return loss_edge(t2, t2.leaf(t), *topo).value().item();
          },
          m.vertices, v.grad()));
    }
    {  // l2 through rendering: vertex depth kept away from coverage flips.
      DepthImage target(cam.width, cam.height);
      RenderedDepth rec0 = render_depth(m.vertices, *topo, cam);
      for (int k = 0; k < 40; ++k) {
        int row = static_cast<int>(rng.uniform_index(cam.height));
        int col = static_cast<int>(rng.uniform_index(cam.width));
        target.at(row, col) = rec0.at(row, col) + rng.uniform(0.3, 1.0);
      }
      Tape tape;
      Var v = tape.leaf(m.vertices);
      RenderedDepth rec;
      Var img = render_depth_diff(tape, v, *topo, cam, &rec);
      Var loss = loss_2d(tape, img, rec, target);
      tape.backward(loss);
      worst_frozen = std::max(worst_frozen, fd_worst(
          [&](const Tensor& t) {
            Tape t2;
            Var v2 = t2.leaf(t);
            RenderedDepth rec2;
            Var img2 = render_depth_diff(t2, v2, *topo, cam, &rec2);
            return loss_2d(t2, img2, rec2, target).value().item();
          },
          m.vertices, v.grad(), 1e-5));
    }
    {  // l3 with the sampling record frozen (the differentiated function).
      TriangleMesh gt_mesh = make_grid_mesh(6, 6, cam, 26.0);
      SurfaceSampler gt_sampler{400, 17};
      PointCloud target = sample_mesh_surface(gt_mesh, gt_sampler);
      SurfaceSampler sampler{300, 5};
      SurfaceSamples srec;
      Tape tape;
      Var v = tape.leaf(m.vertices);
      Var live = sample_mesh_surface_diff(tape, v, *topo, sampler, &srec);
      Var loss = chamfer_diff(tape, live, target);
      tape.backward(loss);
      auto faces = topo->faces;
      worst_frozen = std::max(worst_frozen, fd_worst(
          [&](const Tensor& t) {
            PointCloud pc;
            pc.points.resize(srec.face.size());
            for (std::size_t s = 0; s < srec.face.size(); ++s) {
              const auto& fc = faces[srec.face[s]];
              Vec3 p;
              for (int k = 0; k < 3; ++k) {
                p.x += srec.bary[s][k] * t.at(fc[k], 0);
                p.y += srec.bary[s][k] * t.at(fc[k], 1);
                p.z += srec.bary[s][k] * t.at(fc[k], 2);
              }
              pc.points[s] = p;
            }
            SpatialHashNn qi(target.points), pi(pc.points);
            return 0.5 * chamfer_asymmetric(pc, qi) + 0.5 * chamfer_asymmetric(target, pi);
          },
          m.vertices, v.grad()));
    }
  }

  // Encoder, alignment, GCN.
  {
    RefineConfig config;
    config.encoder_channels = {3, 4, 4, 4};
    config.input_channels = 5;
    RefineParams params = init_refine_params(config, 11);
    Tensor input({5, 16, 16});
    for (std::size_t i = 0; i < input.numel(); ++i) input[i] = rng.uniform(0.0, 1.0);
    Tape tape;
    LiftedParams lifted = lift_params(tape, params);
    FeaturePyramid pyr = extract_features(tape.leaf(input), lifted.encoder);
    tape.backward(mean(pyr.levels[3]));
    worst_frozen = std::max(worst_frozen, fd_worst(
        [&](const Tensor& k0) {
          RefineParams p2 = params;
          p2.enc_weight[0] = k0;
          Tape t2;
          LiftedParams l2v = lift_params(t2, p2);
          FeaturePyramid pyr2 = extract_features(t2.leaf(input), l2v.encoder);
          return mean(pyr2.levels[3]).value().item();
        },
        params.enc_weight[0], lifted.encoder.weights[0].grad()));
  }
  {
    Camera cam = simple_camera(16);
    std::array<Tensor, 4> maps{Tensor({2, 8, 8}), Tensor({2, 4, 4}), Tensor({1, 2, 2}),
                               Tensor({1, 1, 1})};
    for (auto& mp : maps)
      for (std::size_t i = 0; i < mp.numel(); ++i) mp[i] = rng.uniform(-1, 1);
    Tensor verts({4, 3});
    for (std::size_t i = 0; i < 4; ++i) {
      verts.at(i, 0) = rng.uniform(-2, 2);
      verts.at(i, 1) = rng.uniform(-2, 2);
      verts.at(i, 2) = rng.uniform(8, 12);
    }
    auto build = [&](Tape& t, const Tensor& vts) {
      FeaturePyramid pyr;
      for (int l = 0; l < 4; ++l) pyr.levels[l] = t.leaf(maps[l]);
      Var f = align_features(t, t.leaf(vts), cam, pyr);
      return sum(multiply(f, f));
    };
    Tape tape;
    FeaturePyramid pyr;
    for (int l = 0; l < 4; ++l) pyr.levels[l] = tape.leaf(maps[l]);
    Var v = tape.leaf(verts);
    Var f = align_features(tape, v, cam, pyr);
    tape.backward(sum(multiply(f, f)));
    worst_analytic = std::max(worst_analytic, fd_worst(
        [&](const Tensor& t) {
          Tape t2;
          return build(t2, t).value().item();
        },
        verts, v.grad()));
  }
  {
    Camera cam = simple_camera(16);
    TriangleMesh m = make_grid_mesh(3, 4, cam, 10.0);
    SparseMatrix a_hat = normalized_adjacency(*m.topology);
    Tensor feats({m.vertex_count(), 6});
    for (std::size_t i = 0; i < feats.numel(); ++i) feats[i] = rng.uniform(-1, 1);
    Tensor g1({6, 5}), g2({5, 4}), g3({4, 4}), w({4, 3});
    for (Tensor* t : {&g1, &g2, &g3, &w})
      for (std::size_t i = 0; i < t->numel(); ++i) (*t)[i] = rng.uniform(-1, 1);
    Tape tape;
    GcnVars vars{tape.leaf(g1), tape.leaf(g2), tape.leaf(g3), tape.leaf(w)};
    Var dv = gcn_forward(tape, tape.leaf(feats), a_hat, vars);
    tape.backward(sum(multiply(dv, dv)));
    worst_frozen = std::max(worst_frozen, fd_worst(
        [&](const Tensor& t) {
          Tape t2;
          GcnVars v2{t2.leaf(g1), t2.leaf(t), t2.leaf(g3), t2.leaf(w)};
          Var dv2 = gcn_forward(t2, t2.leaf(feats), a_hat, v2);
          return sum(multiply(dv2, dv2)).value().item();
        },
        g2, vars.g2.grad()));
  }

  char buf[160];
  std::snprintf(buf, sizeof(buf), "worst rel err: analytic %.2e (tol 1e-4), frozen %.2e (tol 1e-3)",
                worst_analytic, worst_frozen);
  r.detail = buf;
  require(r, worst_analytic < 1e-4, "analytic gradient out of tolerance");
  require(r, worst_frozen < 1e-3, "frozen-index gradient out of tolerance");
}

// --------------------------------------------------------------------------
// Criterion 2: spatial-hash Chamfer equals brute force.

void criterion_chamfer(CriterionResult& r) {
  Rng rng(99);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 2 + static_cast<int>(rng.uniform_index(499));
    const int m = 2 + static_cast<int>(rng.uniform_index(499));
    std::vector<Vec3> pv, qv;
    const double scale = rng.uniform(0.5, 50.0);
    for (int i = 0; i < n; ++i)
      pv.push_back({rng.uniform(-scale, scale), rng.uniform(-scale, scale),
                    rng.uniform(-scale / 5, scale / 5)});
    for (int i = 0; i < m; ++i)
      qv.push_back({rng.uniform(-scale, scale), rng.uniform(-scale, scale),
                    rng.uniform(-scale / 5, scale / 5)});
    PointCloud p, q;
    p.points = pv;
    q.points = qv;
    std::vector<double> pf, qf;
    for (const Vec3& v : pv) {
      pf.push_back(v.x);
      pf.push_back(v.y);
      pf.push_back(v.z);
    }
    for (const Vec3& v : qv) {
      qf.push_back(v.x);
      qf.push_back(v.y);
      qf.push_back(v.z);
    }
    worst = std::max(worst, std::fabs(chamfer(p, q) - oracles::brute_force_chamfer(pf, qf)));
  }
  char buf[96];
  std::snprintf(buf, sizeof(buf), "max |hash - brute| = %.2e over 100 pairs", worst);
  r.detail = buf;
  require(r, worst < 1e-12, "spatial hash disagrees with brute force");
}

// --------------------------------------------------------------------------
// Criterion 3: Delaunay empty-circumcircle property by brute force.

void criterion_delaunay(CriterionResult& r) {
  Rng rng(7);
  int checked = 0;
  for (int set = 0; set < 50; ++set) {
    std::vector<Point2> pts;
    for (int i = 0; i < 50; ++i)
      pts.push_back({rng.uniform(0.0, 512.0), rng.uniform(0.0, 512.0)});
    auto faces = delaunay_triangulate(pts);
    for (const auto& f : faces) {
      auto cc = oracles::circumcircle(pts[f[0]].x, pts[f[0]].y, pts[f[1]].x, pts[f[1]].y,
                                      pts[f[2]].x, pts[f[2]].y);
      require(r, !cc.degenerate, "degenerate face in set " + std::to_string(set));
      const double radius = std::sqrt(cc.r2);
      for (std::size_t i = 0; i < pts.size(); ++i) {
        if (static_cast<int>(i) == f[0] || static_cast<int>(i) == f[1] ||
            static_cast<int>(i) == f[2])
          continue;
        const double d = std::hypot(pts[i].x - cc.cx, pts[i].y - cc.cy);
        if (d <= radius - 1e-9) {
          require(r, false, "interior point in circumcircle, set " + std::to_string(set));
        }
      }
      ++checked;
    }
  }
  r.detail = std::to_string(checked) + " triangles verified";
}

// --------------------------------------------------------------------------
// Criterion 4: initialization convergence on a constant-depth scene.

void criterion_init_convergence(CriterionResult& r) {
  TerrainSpec tspec;
  tspec.bump_count = 0;
  tspec.building_count = 0;
  Terrain terrain = generate_terrain(tspec);
  TrajectorySpec traj;
  traj.resolution = 128;
  traj.rows = 1;
  traj.per_row = 1;
  auto cams = generate_trajectory(terrain, traj);
  auto [rgb, gt] = render_scene(terrain, cams[0], 128);
  DepthImage sparse = sample_sparse_depth(gt, rgb, 1000, false, 3);

  InitConfig config;
  config.grid_rows = 16;
  config.grid_cols = 16;
  config.iterations = 150;
  config.weights = LossWeights{1.0, 0.0, 0.5, 0.0};
  InitResult result = initialize_mesh(sparse, cams[0], config);
  const double l2 = eval_l2_metric(result.mesh, gt, cams[0]);
  char buf[96];
  std::snprintf(buf, sizeof(buf), "l2 vs dense GT = %.4f m (gate 0.01)", l2);
  r.detail = buf;
  require(r, l2 < 0.01, "did not converge below 0.01 m");
}

// --------------------------------------------------------------------------
// Criteria 5 and 6 share the dataset and the two trained models.

struct TrainedModels {
  fs::path data_dir;
  DatasetIndex index;
  RunConfig config;
  std::map<std::string, RefineParams> models;  // "RGB+RD" and "RGB+RD(3D)"
};

RunConfig acceptance_run_config(const fs::path& data_dir, int epochs) {
  RunConfig config;
  config.dataset_dir = data_dir.string();
  config.mesh_rows = config.mesh_cols = 16;
  config.apply_mesh_size();
  config.train.epochs = epochs;
  config.train.learning_rate = 1e-3;
  config.train.chamfer_samples = 10000;
  config.train.seed = 7;
  config.train_input_channels = 4;
  config.eval_samples = 10000;
  config.eval_pseudo_gt_stride = 1;
  config.dataset.trajectory.resolution = 128;
  config.dataset.trajectory.rows = 1;
  config.dataset.trajectory.per_row = 2;
  config.dataset.terrain.building_count = 8;
  config.dataset.terrain.building_height_max = 25.0;
  config.dataset.terrain.building_size_min = 25.0;
  config.dataset.terrain.building_size_max = 60.0;
  config.dataset.default_sparsity = 1000;
  config.dataset.default_noise = true;
  config.dataset.seed = 11;
  return config;
}

TrainedModels train_acceptance_models(const fs::path& work, int epochs, bool verbose) {
  TrainedModels out;
  out.data_dir = work / "data";
  out.config = acceptance_run_config(out.data_dir, epochs);
  fs::create_directories(work);
  if (!fs::exists(out.data_dir / "dataset.json")) {
    build_dataset(out.config.dataset, out.data_dir.string());
  }
  out.index = load_dataset(out.data_dir.string());

  std::vector<TrainScene> train_scenes, val_scenes;
  for (const auto& seq : out.index.sequences) {
    if (seq.split == "test") continue;
    for (const auto& ref : seq.scenes) {
      Scene scene = load_scene(out.index, ref);
      (seq.split == "train" ? train_scenes : val_scenes)
          .push_back(make_train_scene(scene, out.config));
    }
  }

  RefineConfig model;
  model.input_channels = 4;
  model.depth_scale = out.config.dataset.trajectory.altitude;
  model.edt_scale = std::hypot(128.0, 128.0);

  // Checkpoints are cached in the workspace: training is deterministic, so a
  // re-run of the suite in the same workspace reuses identical models.
  {
    const fs::path ckpt = work / "ckpt_3d2d.json";
    if (fs::exists(ckpt)) {
      out.models.emplace("RGB+RD", load_checkpoint(ckpt.string()));
    } else {
      TrainHyper hyper = out.config.train;
      hyper.weights = LossWeights{3.0, 1.0, 0.5, 0.01};
      TrainOutput t = train_model(train_scenes, val_scenes, model, hyper, ckpt.string(),
                                  (work / "metrics_3d2d.csv").string(), verbose);
      out.models.emplace("RGB+RD", std::move(t.params));
    }
  }
  {
    const fs::path ckpt = work / "ckpt_3d.json";
    if (fs::exists(ckpt)) {
      out.models.emplace("RGB+RD(3D)", load_checkpoint(ckpt.string()));
    } else {
      TrainHyper hyper = out.config.train;
      hyper.weights = LossWeights{0.0, 1.0, 0.5, 0.01};
      TrainOutput t = train_model(train_scenes, val_scenes, model, hyper, ckpt.string(),
                                  (work / "metrics_3d.csv").string(), verbose);
      out.models.emplace("RGB+RD(3D)", std::move(t.params));
    }
  }
  return out;
}

void criterion_orderings(CriterionResult& r, TrainedModels& tm, EvalReport& report_out) {
  std::map<std::string, RefineParams> primary;
  primary.emplace("RGB+RD", tm.models.at("RGB+RD"));
  primary.emplace("RGB+RD(3D)", tm.models.at("RGB+RD(3D)"));
  EvalReport report = run_benchmark(tm.index, tm.config, primary, "test", false);
  report_out = report;

  // (a) refined l2 < initialized l2 in every (sparsity, noise) cell.
  std::string worst_a;
  bool pass_a = true;
  for (std::size_t sp : tm.config.sparsity_levels) {
    for (bool noise : {false, true}) {
      const double ref = report.cell("RGB+RD", sp, noise).l2;
      const double ini = report.cell("Initialized", sp, noise).l2;
      if (!(ref < ini)) {
        pass_a = false;
        worst_a += EvalReport::cell_key(sp, noise) + " ";
      }
    }
  }
  require(r, pass_a, "(a) refined not below initialized in: " + worst_a);

  // (b) noise degrades every method on both metrics.
  bool pass_b = true;
  std::string worst_b;
  for (const auto& method : report.methods) {
    for (std::size_t sp : tm.config.sparsity_levels) {
      const auto& clean = report.cell(method, sp, false);
      const auto& noisy = report.cell(method, sp, true);
      if (!(noisy.l2 >= clean.l2 && noisy.l3 >= clean.l3)) {
        pass_b = false;
        worst_b += method + "@" + std::to_string(sp) + " ";
      }
    }
  }
  require(r, pass_b, "(b) noise did not degrade: " + worst_b);

  // (c) SD-tri l2 decreases with more measurements (noiseless cells, where
  // the mirrored Table-1 column lives).
  bool pass_c = true;
  for (std::size_t k = 1; k < tm.config.sparsity_levels.size(); ++k) {
    const double prev = report.cell("SD-tri", tm.config.sparsity_levels[k - 1], false).l2;
    const double cur = report.cell("SD-tri", tm.config.sparsity_levels[k], false).l2;
    if (!(cur < prev)) pass_c = false;
  }
  require(r, pass_c, "(c) SD-tri l2 not monotone in sparsity");

  // (d) with noise on, refined l3 beats SD-tri at 1000 points.
  const double rd = report.cell("RGB+RD", 1000, true).l3;
  const double sd = report.cell("SD-tri", 1000, true).l3;
  require(r, rd < sd, "(d) refined l3 " + std::to_string(rd) + " !< SD-tri " + std::to_string(sd));

  char buf[200];
  std::snprintf(buf, sizeof(buf),
                "test cells: init l2 %.3f -> refined %.3f (1000+noise); SD-tri l3 %.3f vs refined "
                "%.3f",
                report.cell("Initialized", 1000, true).l2, report.cell("RGB+RD", 1000, true).l2,
                sd, rd);
  r.detail = buf;
}

void criterion_ablation(CriterionResult& r, const EvalReport& report) {
  // 3D-only training: higher l2, and l3 no worse than 5% above the 3D+2D run,
  // aggregated over the test split's noise-free default comparison cells.
  double l2_3d = 0.0, l2_both = 0.0, l3_3d = 0.0, l3_both = 0.0;
  int cells = 0;
  for (std::size_t sp : report.sparsity_levels) {
    for (bool noise : {false, true}) {
      l2_3d += report.cell("RGB+RD(3D)", sp, noise).l2;
      l2_both += report.cell("RGB+RD", sp, noise).l2;
      l3_3d += report.cell("RGB+RD(3D)", sp, noise).l3;
      l3_both += report.cell("RGB+RD", sp, noise).l3;
      ++cells;
    }
  }
  l2_3d /= cells;
  l2_both /= cells;
  l3_3d /= cells;
  l3_both /= cells;
  char buf[160];
  std::snprintf(buf, sizeof(buf), "l2: 3D %.3f vs 3D+2D %.3f; l3: 3D %.3f vs 3D+2D %.3f", l2_3d,
                l2_both, l3_3d, l3_both);
  r.detail = buf;
  require(r, l2_3d > l2_both, "3D-only training did not raise l2");
  require(r, l3_3d <= 1.05 * l3_both, "3D-only l3 worse than 5% band");
}

// --------------------------------------------------------------------------
// Criterion 7: parameter-efficiency arithmetic (exact).

void criterion_param_efficiency(CriterionResult& r) {
  const double ratio = param_efficiency(1024, 512, 512);
  require(r, ratio == 3072.0 / 262144.0, "ratio not exact");
  require(r, std::fabs(ratio - 0.01171875) == 0.0, "expected 1.171875%");
  bool threw = false;
  try {
    param_efficiency(0, 512, 512);
  } catch (const std::invalid_argument&) {
    threw = true;
  }
  require(r, threw, "zero-vertex mesh not rejected");
  char buf[96];
  std::snprintf(buf, sizeof(buf), "3*1024 / 512^2 = %.6f (1.17%%)", ratio);
  r.detail = buf;
}

// --------------------------------------------------------------------------
// Criterion 8: single-scene overfit sanity.

void criterion_overfit(CriterionResult& r, TrainedModels& tm) {
  // A sparse noisy cell makes the initialization visibly imperfect, which is
  // exactly what the refinement is supposed to repair.
  const SequenceRef* seq = sequences_of_split(tm.index, "train")[0];
  Scene scene = load_scene(tm.index, seq->scenes[0], 500, 1);
  TrainScene ts = make_train_scene(scene, tm.config);

  RefineConfig model;
  model.input_channels = 4;
  model.depth_scale = tm.config.dataset.trajectory.altitude;
  model.edt_scale = std::hypot(128.0, 128.0);
  TrainHyper hyper = tm.config.train;
  hyper.weights = LossWeights{3.0, 1.0, 0.5, 0.01};
  hyper.total_steps = 200;
  RefineTrainer trainer(init_refine_params(model, 21), hyper);

  double first = 0.0;
  for (int i = 0; i < 200; ++i) {
    auto res = trainer.step(ts);
    if (i == 0) first = res.total_loss;
  }
  auto fin = trainer.evaluate(ts);
  const double reduction = 1.0 - fin.total_loss / first;
  char buf[160];
  std::snprintf(buf, sizeof(buf), "composite %.3f -> %.3f (-%.0f%%), stage l2 %.3f/%.3f/%.3f",
                first, fin.total_loss, 100 * reduction, fin.stages[0].l2, fin.stages[1].l2,
                fin.stages[2].l2);
  r.detail = buf;
  require(r, reduction >= 0.30, "composite loss reduction below 30%");
  require(r, fin.stages[2].l2 <= fin.stages[0].l2, "stage-3 l2 above stage-1 l2");
}

// --------------------------------------------------------------------------
// Criterion 9: bit-reproducibility of the pipeline.

void criterion_determinism(CriterionResult& r, TrainedModels& tm, const fs::path& work) {
  // Two full generate -> init -> refine -> eval passes from the same seeds.
  auto one_run = [&](const fs::path& dir) {
    RunConfig config = acceptance_run_config(dir / "data", 0);
    config.sparsity_levels = {500, 1000};
    build_dataset(config.dataset, (dir / "data").string());
    DatasetIndex index = load_dataset((dir / "data").string());
    std::map<std::string, RefineParams> models;
    models.emplace("RGB+RD", tm.models.at("RGB+RD"));
    EvalReport report = run_benchmark(index, config, models, "test", false);
    write_report(report, (dir / "out").string());
    return read_file(dir / "out" / "report.json");
  };
  const std::string run_a = one_run(work / "det_a");
  const std::string run_b = one_run(work / "det_b");
  require(r, !run_a.empty() && run_a == run_b, "two full runs differ in report.json");

  // Two short trainings from the same seed produce identical checkpoints.
  auto short_train = [&](const fs::path& out) {
    std::vector<TrainScene> scenes;
    const SequenceRef* seq = sequences_of_split(tm.index, "train")[0];
    for (const auto& ref : seq->scenes) {
      Scene scene = load_scene(tm.index, ref);
      scenes.push_back(make_train_scene(scene, tm.config));
    }
    RefineConfig model;
    model.input_channels = 4;
    model.depth_scale = tm.config.dataset.trajectory.altitude;
    model.edt_scale = std::hypot(128.0, 128.0);
    TrainHyper hyper = tm.config.train;
    hyper.epochs = 2;
    std::vector<TrainScene> no_val;
    train_model(scenes, no_val, model, hyper, out.string(), "");
    return read_file(out);
  };
  const std::string ckpt_a = short_train(work / "det_ckpt_a.json");
  const std::string ckpt_b = short_train(work / "det_ckpt_b.json");
  require(r, !ckpt_a.empty() && ckpt_a == ckpt_b, "two trainings differ");
  r.detail = "report.json and retrained checkpoints byte-identical";
}

}  // namespace

int main(int argc, char** argv) {
  fs::path work = fs::temp_directory_path() / "terramesh_acceptance";
  int epochs = 200;
  bool verbose = false;
  for (int i = 1; i < argc; ++i) {
    if (!std::strcmp(argv[i], "--out") && i + 1 < argc) work = argv[++i];
    if (!std::strcmp(argv[i], "--epochs") && i + 1 < argc) epochs = std::atoi(argv[++i]);
    if (!std::strcmp(argv[i], "--verbose")) verbose = true;
  }
  fs::create_directories(work);
  std::printf("acceptance workspace: %s (training epochs: %d)\n", work.string().c_str(), epochs);

  {
    CriterionResult r = timed(criterion_gradients);
    require(r, r.seconds < 300.0, "gradient suite exceeded 5 min");
    report(1, "gradient suite", r);
  }
  {
    CriterionResult r = timed(criterion_chamfer);
    require(r, r.seconds < 60.0, "chamfer oracle exceeded 1 min");
    report(2, "chamfer vs brute force", r);
  }
  report(3, "delaunay empty circumcircle", timed(criterion_delaunay));
  {
    CriterionResult r = timed(criterion_init_convergence);
    require(r, r.seconds < 120.0, "initialization exceeded 2 min");
    report(4, "initialization convergence", r);
  }

  TrainedModels tm;
  EvalReport report_cells;
  {
    CriterionResult r = timed([&](CriterionResult& rr) {
      tm = train_acceptance_models(work, epochs, verbose);
      criterion_orderings(rr, tm, report_cells);
      write_report(report_cells, (work / "benchmark").string());
    });
    report(5, "table-1 ordering reproduction", r);
  }
  report(6, "loss-ablation direction", timed([&](CriterionResult& rr) {
           criterion_ablation(rr, report_cells);
         }));
  {
    // Unasserted: the pipeline also runs at the paper's 512x512 / 1024-vertex
    // configuration (initialization plus one cascade pass on a fresh scene).
    const auto t0 = Clock::now();
    TerrainSpec tsp;
    tsp.seed = 5;
    Terrain terrain = generate_terrain(tsp);
    TrajectorySpec traj;
    traj.resolution = 512;
    traj.rows = 1;
    traj.per_row = 1;
    auto cams = generate_trajectory(terrain, traj);
    auto [rgb, gt] = render_scene(terrain, cams[0], 512);
    DepthImage sparse = sample_sparse_depth(gt, rgb, 1000, true, 9);
    InitConfig init;
    init.grid_rows = init.grid_cols = 32;
    InitResult ir = initialize_mesh(sparse, cams[0], init);
    RefineConfig model;
    model.input_channels = 4;
    model.depth_scale = traj.altitude;
    model.edt_scale = std::hypot(512.0, 512.0);
    RefineParams params = init_refine_params(model, 3);
    auto refined = refine_cascade(ir.mesh, rgb, sparse, cams[0], params);
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    std::printf("(info) paper-scale smoke: 512x512 image, 1024-vertex mesh, init l2 %.3f, "
                "cascade ok (%.1fs)\n",
                eval_l2_metric(refined[2], gt, cams[0]), secs);
  }
  report(7, "parameter efficiency", timed(criterion_param_efficiency));
  report(8, "single-scene overfit", timed([&](CriterionResult& rr) {
           criterion_overfit(rr, tm);
         }));
  report(9, "determinism", timed([&](CriterionResult& rr) {
           criterion_determinism(rr, tm, work);
         }));

  if (g_failures == 0) {
    std::printf("all acceptance criteria passed\n");
  } else {
    std::printf("%d criteria FAILED\n", g_failures);
  }
  return g_failures == 0 ? 0 : 1;
}
