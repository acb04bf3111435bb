#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "terramesh/delaunay.hpp"
#include "terramesh/eval.hpp"
#include "terramesh/init.hpp"
#include "terramesh/refine.hpp"
#include "terramesh/synth.hpp"

namespace terramesh {

// ---------------------------------------------------------------------------
// Run configuration (the CLI's JSON config)

struct RunConfig {
  std::string dataset_dir;
  std::string checkpoint;                          // model used by `refine`
  std::map<std::string, std::string> checkpoints;  // method name -> path, for `eval`
  std::string out_dir = "out";

  int mesh_rows = 16;
  int mesh_cols = 16;
  InitConfig init;

  TrainHyper train;
  int train_input_channels = 4;  // RGB+RD, the paper's qualitative pick
  int train_pseudo_gt_stride = 2;

  std::size_t eval_samples = 10000;
  int eval_pseudo_gt_stride = 1;
  std::uint64_t eval_seed = 0x37a1;
  std::vector<std::size_t> sparsity_levels{500, 1000, 2000};

  std::size_t sparsity = 0;  // 0 = dataset default; CLI --sparsity overrides
  int noise = -1;            // -1 = dataset default; CLI --noise overrides

  DatasetConfig dataset;  // used by `generate`

  void apply_mesh_size() {
    init.grid_rows = mesh_rows;
    init.grid_cols = mesh_cols;
  }
};

inline RunConfig run_config_from_json(const nlohmann::json& j) {
  RunConfig c;
  auto get = [&](const char* key, auto& out) {
    if (j.contains(key)) out = j.at(key).get<std::decay_t<decltype(out)>>();
  };
  get("dataset_dir", c.dataset_dir);
  get("checkpoint", c.checkpoint);
  if (j.contains("checkpoints"))
    c.checkpoints = j.at("checkpoints").get<std::map<std::string, std::string>>();
  get("out_dir", c.out_dir);
  get("mesh_rows", c.mesh_rows);
  get("mesh_cols", c.mesh_cols);
  if (j.contains("init")) {
    const auto& ji = j.at("init");
    if (ji.contains("iterations")) c.init.iterations = ji.at("iterations").get<int>();
    if (ji.contains("learning_rate")) c.init.learning_rate = ji.at("learning_rate").get<double>();
    if (ji.contains("lr_final_fraction"))
      c.init.lr_final_fraction = ji.at("lr_final_fraction").get<double>();
    if (ji.contains("weights")) {
      auto w = ji.at("weights").get<std::vector<double>>();
      if (w.size() != 4) throw std::invalid_argument("config: init.weights must have 4 entries");
      c.init.weights = {w[0], w[1], w[2], w[3]};
    }
  }
  if (j.contains("train")) {
    const auto& jt = j.at("train");
    if (jt.contains("epochs")) c.train.epochs = jt.at("epochs").get<int>();
    if (jt.contains("learning_rate"))
      c.train.learning_rate = jt.at("learning_rate").get<double>();
    if (jt.contains("lr_final_fraction"))
      c.train.lr_final_fraction = jt.at("lr_final_fraction").get<double>();
    if (jt.contains("chamfer_samples"))
      c.train.chamfer_samples = jt.at("chamfer_samples").get<std::size_t>();
    if (jt.contains("seed")) c.train.seed = jt.at("seed").get<std::uint64_t>();
    if (jt.contains("weights")) {
      auto w = jt.at("weights").get<std::vector<double>>();
      if (w.size() != 4) throw std::invalid_argument("config: train.weights must have 4 entries");
      c.train.weights = {w[0], w[1], w[2], w[3]};
    }
    if (jt.contains("input_channels"))
      c.train_input_channels = jt.at("input_channels").get<int>();
    if (jt.contains("pseudo_gt_stride"))
      c.train_pseudo_gt_stride = jt.at("pseudo_gt_stride").get<int>();
  }
  if (j.contains("eval")) {
    const auto& je = j.at("eval");
    if (je.contains("samples")) c.eval_samples = je.at("samples").get<std::size_t>();
    if (je.contains("pseudo_gt_stride"))
      c.eval_pseudo_gt_stride = je.at("pseudo_gt_stride").get<int>();
    if (je.contains("seed")) c.eval_seed = je.at("seed").get<std::uint64_t>();
    if (je.contains("sparsity_levels"))
      c.sparsity_levels = je.at("sparsity_levels").get<std::vector<std::size_t>>();
  }
  get("sparsity", c.sparsity);
  get("noise", c.noise);
  if (j.contains("dataset")) c.dataset = dataset_config_from_json(j.at("dataset"));
  c.apply_mesh_size();
  return c;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("load_run_config: cannot open " + path);
  nlohmann::json j;
  f >> j;
  return run_config_from_json(j);
}

// ---------------------------------------------------------------------------
// Scene preparation

// Initialized mesh plus all cached per-scene constants the trainer and the
// benchmark need. The pseudo-GT cloud Q_D is sampled once here and reused
// every step (it never changes).
inline TrainScene make_train_scene(const Scene& scene, const RunConfig& config) {
  TrainScene out;
  out.id = scene.id;
  out.tensors = SceneTensors::from(scene.rgb, scene.sparse, scene.camera);
  out.gt = scene.gt;
  InitConfig init = config.init;
  init.grid_rows = config.mesh_rows;
  init.grid_cols = config.mesh_cols;
  out.init_mesh = initialize_mesh(scene.sparse, scene.camera, init).mesh;
  TriangleMesh pseudo = pseudo_gt_mesh(scene.gt, scene.camera, config.train_pseudo_gt_stride);
  SurfaceSampler gt_sampler{config.train.chamfer_samples,
                            derive_seed(config.train.seed, 0x6d0000 + 1)};
  out.gt_cloud = sample_mesh_surface(pseudo, gt_sampler);
  out.gt_index = std::make_shared<SpatialHashNn>(out.gt_cloud.points);
  out.a_hat = normalized_adjacency(*out.init_mesh.topology);
  return out;
}

inline std::vector<const SequenceRef*> sequences_of_split(const DatasetIndex& index,
                                                          const std::string& split) {
  std::vector<const SequenceRef*> out;
  for (const auto& seq : index.sequences)
    if (seq.split == split) out.push_back(&seq);
  return out;
}

// ---------------------------------------------------------------------------
// Training driver

struct EpochLogRow {
  int epoch;
  std::string split;
  double l2;
  double l3;
};

struct TrainOutput {
  RefineParams params;
  std::vector<EpochLogRow> log;
};

inline void write_metrics_csv(const std::string& path, const std::vector<EpochLogRow>& rows) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("write_metrics_csv: cannot open " + path);
  f << "epoch,split,l2,l3\n";
  for (const auto& r : rows) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%d,%s,%.9g,%.9g\n", r.epoch, r.split.c_str(), r.l2, r.l3);
    f << buf;
  }
}

// Joint optimization of the encoder and the three GCN stages: Adam, one
// scene per step, scenes visited in a fixed order. Logs per-epoch
// train/val l2 and l3 of the final cascade stage.
inline TrainOutput train_model(std::vector<TrainScene>& train_scenes,
                               std::vector<TrainScene>& val_scenes, const RefineConfig& model,
                               const TrainHyper& hyper,
                               const std::string& checkpoint_path = "",
                               const std::string& log_path = "", bool verbose = false) {
  if (train_scenes.empty()) throw std::invalid_argument("train_model: no training scenes");
  RefineParams params = init_refine_params(model, hyper.seed);
  TrainHyper schedule = hyper;
  if (schedule.total_steps == 0) {
    schedule.total_steps = static_cast<long>(hyper.epochs) * train_scenes.size();
  }
  RefineTrainer trainer(std::move(params), schedule);
  std::vector<EpochLogRow> log;

  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    double tl2 = 0.0, tl3 = 0.0;
    for (TrainScene& scene : train_scenes) {
      TrainStepResult r = trainer.step(scene);
      tl2 += r.stages[2].l2;
      tl3 += r.stages[2].l3;
    }
    EpochLogRow train_row{epoch, "train", tl2 / train_scenes.size(), tl3 / train_scenes.size()};
    log.push_back(train_row);
    EpochLogRow val_row{};
    if (!val_scenes.empty()) {
      double vl2 = 0.0, vl3 = 0.0;
      for (TrainScene& scene : val_scenes) {
        TrainStepResult r = trainer.evaluate(scene);
        vl2 += r.stages[2].l2;
        vl3 += r.stages[2].l3;
      }
      val_row = {epoch, "val", vl2 / val_scenes.size(), vl3 / val_scenes.size()};
      log.push_back(val_row);
    }
    if (verbose && (epoch % 10 == 0 || epoch + 1 == hyper.epochs)) {
      std::fprintf(stderr, "epoch %3d  train l2 %.4f l3 %.4f   val l2 %.4f l3 %.4f\n", epoch,
                   train_row.l2, train_row.l3, val_row.l2, val_row.l3);
    }
  }

  TrainOutput out{trainer.params(), std::move(log)};
  if (!checkpoint_path.empty()) save_checkpoint(checkpoint_path, out.params);
  if (!log_path.empty()) write_metrics_csv(log_path, out.log);
  return out;
}

// ---------------------------------------------------------------------------
// Benchmark

// Evaluates SD-tri, the initialized mesh, and every provided checkpoint over
// all (sparsity, noise) cells of the test split, using each single trained
// checkpoint across every cell (the generalization protocol). Learned
// methods re-run initialization per cell and refine its output.
inline EvalReport run_benchmark(const DatasetIndex& index, const RunConfig& config,
                                std::map<std::string, RefineParams>& models,
                                const std::string& split = "test", bool verbose = false) {
  EvalReport report;
  report.sparsity_levels = config.sparsity_levels;
  report.methods = {"SD-tri", "Initialized"};
  for (const auto& [name, params] : models) report.methods.push_back(name);
  if (models.empty()) {
    report.notes.push_back("no checkpoints available: learned methods not evaluated");
  }

  auto seqs = sequences_of_split(index, split);
  if (seqs.empty()) throw std::invalid_argument("run_benchmark: no sequences in split " + split);

  for (const SequenceRef* seq : seqs) {
    for (const SceneRef& ref : seq->scenes) {
      for (std::size_t sparsity : config.sparsity_levels) {
        for (bool noise : {false, true}) {
          Scene scene = load_scene(index, ref, sparsity, noise ? 1 : 0);
          const std::string key = EvalReport::cell_key(sparsity, noise);
          auto add = [&](const std::string& method, const TriangleMesh& mesh) {
            EvalCell& cell = report.cells[method][key];
            cell.scene_ids.push_back(scene.id);
            cell.scene_l2.push_back(eval_l2_metric(mesh, scene.gt, scene.camera));
            cell.scene_l3.push_back(eval_l3_metric(mesh, scene.gt, scene.camera,
                                                   config.eval_samples, config.eval_seed,
                                                   config.eval_pseudo_gt_stride));
          };

          add("SD-tri", sd_tri_baseline(scene.sparse, scene.camera));

          InitConfig init = config.init;
          init.grid_rows = config.mesh_rows;
          init.grid_cols = config.mesh_cols;
          TriangleMesh init_mesh = initialize_mesh(scene.sparse, scene.camera, init).mesh;
          add("Initialized", init_mesh);

          for (auto& [name, params] : models) {
            auto refined =
                refine_cascade(init_mesh, scene.rgb, scene.sparse, scene.camera, params);
            add(name, refined[2]);
          }
          if (verbose) std::fprintf(stderr, "evaluated %s %s\n", scene.id.c_str(), key.c_str());
        }
      }
    }
  }

  // Aggregate.
  for (auto& [method, bycell] : report.cells) {
    for (auto& [key, cell] : bycell) {
      double s2 = 0.0, s3 = 0.0;
      for (double v : cell.scene_l2) s2 += v;
      for (double v : cell.scene_l3) s3 += v;
      cell.l2 = s2 / cell.scene_l2.size();
      cell.l3 = s3 / cell.scene_l3.size();
    }
  }

  // Ordering checks mirroring Table 1's qualitative structure.
  char detail[256];
  auto check = [&](const std::string& name, bool pass, const std::string& d) {
    report.orderings.push_back({name, pass, d});
  };
  const std::string refined = !models.empty() ? models.begin()->first : "";
  if (!refined.empty()) {
    bool pass = true;
    std::string d;
    for (std::size_t sp : config.sparsity_levels) {
      for (bool noise : {false, true}) {
        const double r = report.cell(refined, sp, noise).l2;
        const double i = report.cell("Initialized", sp, noise).l2;
        if (!(r < i)) pass = false;
        std::snprintf(detail, sizeof(detail), "%s: %.3f vs %.3f; ",
                      EvalReport::cell_key(sp, noise).c_str(), r, i);
        d += detail;
      }
    }
    check("refined_l2_below_initialized_every_cell", pass, d);
  }
  {
    bool pass = true;
    std::string d;
    for (const auto& method : report.methods) {
      for (std::size_t sp : config.sparsity_levels) {
        if (!report.has_cell(method, sp, false) || !report.has_cell(method, sp, true)) continue;
        const auto& clean = report.cell(method, sp, false);
        const auto& noisy = report.cell(method, sp, true);
        if (!(noisy.l2 >= clean.l2 && noisy.l3 >= clean.l3)) {
          pass = false;
          std::snprintf(detail, sizeof(detail), "%s@%zu: l2 %.3f->%.3f l3 %.3f->%.3f; ",
                        method.c_str(), sp, clean.l2, noisy.l2, clean.l3, noisy.l3);
          d += detail;
        }
      }
    }
    check("noise_degrades_every_method", pass, d.empty() ? "all cells ordered" : d);
  }
  {
    bool pass = true;
    std::string d;
    for (bool noise : {false, true}) {
      for (std::size_t k = 1; k < config.sparsity_levels.size(); ++k) {
        const double prev = report.cell("SD-tri", config.sparsity_levels[k - 1], noise).l2;
        const double cur = report.cell("SD-tri", config.sparsity_levels[k], noise).l2;
        if (!(cur < prev)) pass = false;
      }
      std::snprintf(detail, sizeof(detail), "%s: ", noise ? "noisy" : "noiseless");
      d += detail;
      for (std::size_t sp : config.sparsity_levels) {
        std::snprintf(detail, sizeof(detail), "%.3f ", report.cell("SD-tri", sp, noise).l2);
        d += detail;
      }
    }
    check("sdtri_l2_decreases_with_sparsity", pass, d);
  }
  if (!refined.empty()) {
    const double r = report.cell(refined, 1000, true).l3;
    const double s = report.cell("SD-tri", 1000, true).l3;
    std::snprintf(detail, sizeof(detail), "refined %.3f vs SD-tri %.3f", r, s);
    check("refined_l3_below_sdtri_noisy_1000", r < s, detail);
  }
  return report;
}

inline void write_report(const EvalReport& report, const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  {
    std::ofstream f((fs::path(out_dir) / "report.json").string());
    if (!f) throw std::runtime_error("write_report: cannot open report.json");
    f << report.to_json().dump(2) << "\n";
  }
  {
    std::ofstream f((fs::path(out_dir) / "table.txt").string());
    if (!f) throw std::runtime_error("write_report: cannot open table.txt");
    f << report.to_table();
  }
}

}  // namespace terramesh
