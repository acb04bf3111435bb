// terramesh command line: dataset generation, mesh initialization, refinement
// training, inference, benchmark evaluation, global assembly and exports.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "terramesh/terramesh.hpp"

namespace fs = std::filesystem;
using namespace terramesh;

namespace {

struct CommonArgs {
  std::string config_path;
  std::string scene;
  std::size_t sparsity = 0;  // 0 = dataset default
  std::string noise;         // "", "on", "off"
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool config_required = true) {
  auto* copt = cmd->add_option("--config", args.config_path, "JSON run configuration");
  if (config_required) copt->required();
  cmd->add_option("--scene", args.scene, "scene or sequence id filter");
  cmd->add_option("--sparsity", args.sparsity, "sparse measurement count (500|1000|2000)")
      ->check(CLI::IsMember({500, 1000, 2000}));
  cmd->add_option("--noise", args.noise, "noise on measurements (on|off)")
      ->check(CLI::IsMember({"on", "off"}));
  cmd->add_option("--seed", args.seed, "seed override");
  cmd->add_option("--out", args.out, "output directory override");
}

RunConfig load_config(const CommonArgs& args) {
  RunConfig config = load_run_config(args.config_path);
  if (!args.out.empty()) config.out_dir = args.out;
  if (args.sparsity != 0) config.sparsity = args.sparsity;
  if (!args.noise.empty()) config.noise = args.noise == "on" ? 1 : 0;
  config.apply_mesh_size();
  return config;
}

std::vector<std::pair<const SequenceRef*, const SceneRef*>> select_scenes(
    const DatasetIndex& index, const std::string& filter, const std::string& split = "") {
  std::vector<std::pair<const SequenceRef*, const SceneRef*>> out;
  for (const auto& seq : index.sequences) {
    if (!split.empty() && seq.split != split) continue;
    for (const auto& ref : seq.scenes) {
      if (!filter.empty() && ref.id != filter && seq.id != filter) continue;
      out.push_back({&seq, &ref});
    }
  }
  if (out.empty()) throw std::runtime_error("no scenes match filter '" + filter + "'");
  return out;
}

RefineConfig model_config(const RunConfig& config, const DatasetIndex& index) {
  RefineConfig model;
  model.input_channels = config.train_input_channels;
  model.depth_scale = index.config.trajectory.altitude;
  model.edt_scale = std::hypot(static_cast<double>(index.config.trajectory.resolution),
                               static_cast<double>(index.config.trajectory.resolution));
  return model;
}

std::vector<TrainScene> build_contexts(const DatasetIndex& index, const RunConfig& config,
                                       const std::string& split, bool verbose) {
  std::vector<TrainScene> out;
  for (const auto& seq : index.sequences) {
    if (seq.split != split) continue;
    for (const auto& ref : seq.scenes) {
      Scene scene = load_scene(index, ref, config.sparsity, config.noise);
      out.push_back(make_train_scene(scene, config));
      if (verbose) std::fprintf(stderr, "prepared %s (%s)\n", ref.id.c_str(), split.c_str());
    }
  }
  return out;
}

int cmd_generate(const CommonArgs& args) {
  RunConfig config = load_config(args);
  if (args.seed) config.dataset.seed = *args.seed;
  const std::string out = config.dataset_dir.empty() ? config.out_dir : config.dataset_dir;
  DatasetIndex index = build_dataset(config.dataset, out);
  std::size_t scenes = 0;
  for (const auto& seq : index.sequences) scenes += seq.scenes.size();
  std::printf("wrote %zu sequences (%zu scenes) to %s\n", index.sequences.size(), scenes,
              out.c_str());
  return 0;
}

int cmd_init(const CommonArgs& args) {
  RunConfig config = load_config(args);
  DatasetIndex index = load_dataset(config.dataset_dir);
  fs::create_directories(config.out_dir);
  for (auto [seq, ref] : select_scenes(index, args.scene)) {
    Scene scene = load_scene(index, *ref, config.sparsity, config.noise);
    InitConfig init = config.init;
    init.grid_rows = config.mesh_rows;
    init.grid_cols = config.mesh_cols;
    InitResult result = initialize_mesh(scene.sparse, scene.camera, init);
    const fs::path base = fs::path(config.out_dir) / (ref->id + "_init");
    write_obj(base.string() + ".obj", result.mesh);
    write_loss_trace_csv(base.string() + "_trace.csv", result.loss_trace);
    std::printf("%s: %d iterations, final loss %.6f -> %s.obj\n", ref->id.c_str(),
                init.iterations, result.loss_trace.back(), base.string().c_str());
  }
  return 0;
}

int cmd_train(const CommonArgs& args) {
  RunConfig config = load_config(args);
  if (args.seed) config.train.seed = *args.seed;
  DatasetIndex index = load_dataset(config.dataset_dir);
  fs::create_directories(config.out_dir);

  std::vector<TrainScene> train_scenes = build_contexts(index, config, "train", true);
  std::vector<TrainScene> val_scenes = build_contexts(index, config, "val", true);
  RefineConfig model = model_config(config, index);

  const std::string ckpt = (fs::path(config.out_dir) / "checkpoint.json").string();
  const std::string log = (fs::path(config.out_dir) / "metrics.csv").string();
  TrainOutput out = train_model(train_scenes, val_scenes, model, config.train, ckpt, log, true);
  std::printf("trained %d epochs on %zu scenes -> %s\n", config.train.epochs,
              train_scenes.size(), ckpt.c_str());
  return 0;
}

int cmd_refine(const CommonArgs& args) {
  RunConfig config = load_config(args);
  DatasetIndex index = load_dataset(config.dataset_dir);
  if (config.checkpoint.empty()) throw std::runtime_error("refine: config.checkpoint not set");
  RefineParams params = load_checkpoint(config.checkpoint);
  fs::create_directories(config.out_dir);

  for (auto [seq, ref] : select_scenes(index, args.scene)) {
    Scene scene = load_scene(index, *ref, config.sparsity, config.noise);
    InitConfig init = config.init;
    init.grid_rows = config.mesh_rows;
    init.grid_cols = config.mesh_cols;
    TriangleMesh init_mesh = initialize_mesh(scene.sparse, scene.camera, init).mesh;
    auto refined = refine_cascade(init_mesh, scene.rgb, scene.sparse, scene.camera, params);
    const fs::path base = fs::path(config.out_dir) / ref->id;
    write_obj(base.string() + "_init.obj", init_mesh);
    for (int s = 0; s < 3; ++s) {
      write_obj(base.string() + "_refined" + std::to_string(s + 1) + ".obj", refined[s]);
    }
    write_rendered_pfm(base.string() + "_refined3_depth.pfm",
                       render_depth(refined[2], scene.camera));
    std::printf("%s: refined -> %s_refined{1,2,3}.obj\n", ref->id.c_str(), base.string().c_str());
  }
  return 0;
}

int cmd_eval(const CommonArgs& args) {
  RunConfig config = load_config(args);
  if (args.seed) config.eval_seed = *args.seed;
  DatasetIndex index = load_dataset(config.dataset_dir);

  std::map<std::string, RefineParams> models;
  std::vector<std::string> notes;
  for (const auto& [name, path] : config.checkpoints) {
    if (!fs::exists(path)) {
      std::fprintf(stderr, "note: checkpoint '%s' (%s) missing, skipping method\n", name.c_str(),
                   path.c_str());
      notes.push_back("checkpoint missing for method " + name + ": " + path);
      continue;
    }
    models.emplace(name, load_checkpoint(path));
  }
  if (models.empty() && !config.checkpoint.empty() && fs::exists(config.checkpoint)) {
    models.emplace("RGB+RD", load_checkpoint(config.checkpoint));
  }
  if (models.empty())
    std::fprintf(stderr, "note: no checkpoints available, evaluating non-learned methods only\n");

  EvalReport report = run_benchmark(index, config, models, "test", true);
  report.notes.insert(report.notes.end(), notes.begin(), notes.end());
  write_report(report, config.out_dir);
  std::printf("%s", report.to_table().c_str());
  std::printf("report -> %s/report.json\n", config.out_dir.c_str());
  for (const auto& check : report.orderings) {
    if (!check.pass) return 2;
  }
  return 0;
}

int cmd_assemble(const CommonArgs& args) {
  RunConfig config = load_config(args);
  DatasetIndex index = load_dataset(config.dataset_dir);
  fs::create_directories(config.out_dir);

  std::optional<RefineParams> params;
  if (!config.checkpoint.empty() && fs::exists(config.checkpoint)) {
    params = load_checkpoint(config.checkpoint);
  }

  // Assemble every selected sequence into one world-frame mesh.
  std::map<std::string, std::pair<std::vector<TriangleMesh>, std::vector<Camera>>> groups;
  for (auto [seq, ref] : select_scenes(index, args.scene)) {
    Scene scene = load_scene(index, *ref, config.sparsity, config.noise);
    InitConfig init = config.init;
    init.grid_rows = config.mesh_rows;
    init.grid_cols = config.mesh_cols;
    TriangleMesh mesh = initialize_mesh(scene.sparse, scene.camera, init).mesh;
    if (params) {
      mesh = refine_cascade(mesh, scene.rgb, scene.sparse, scene.camera, *params)[2];
    }
    groups[seq->id].first.push_back(std::move(mesh));
    groups[seq->id].second.push_back(scene.camera);
  }
  for (auto& [seq_id, group] : groups) {
    TriangleMesh global = assemble_global(group.first, group.second);
    const std::string path = (fs::path(config.out_dir) / (seq_id + "_global.obj")).string();
    write_obj(path, global);
    std::printf("%s: %zu views, %zu vertices -> %s\n", seq_id.c_str(), group.first.size(),
                global.vertex_count(), path.c_str());
  }
  return 0;
}

int cmd_export(const CommonArgs& args) {
  RunConfig config = load_config(args);
  DatasetIndex index = load_dataset(config.dataset_dir);
  fs::create_directories(config.out_dir);

  for (auto [seq, ref] : select_scenes(index, args.scene)) {
    Scene scene = load_scene(index, *ref, config.sparsity, config.noise);
    const fs::path base = fs::path(config.out_dir) / ref->id;
    write_pfm(base.string() + "_gt_depth.pfm", scene.gt);
    TriangleMesh sdtri = sd_tri_baseline(scene.sparse, scene.camera);
    write_obj(base.string() + "_sdtri.obj", sdtri);
    write_rendered_pfm(base.string() + "_sdtri_depth.pfm", render_depth(sdtri, scene.camera));
    TriangleMesh pseudo = pseudo_gt_mesh(scene.gt, scene.camera, config.eval_pseudo_gt_stride);
    write_obj(base.string() + "_pseudo_gt.obj", pseudo);
    std::printf("%s: exported gt/sd-tri/pseudo-gt -> %s_*\n", ref->id.c_str(),
                base.string().c_str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"terramesh: terrain mesh reconstruction from RGB + sparse depth"};
  app.require_subcommand(1);

  CommonArgs args;
  auto* generate = app.add_subcommand("generate", "generate the synthetic dataset");
  auto* init = app.add_subcommand("init", "optimize initialized meshes from sparse depth");
  auto* train = app.add_subcommand("train", "train the refinement network");
  auto* refine = app.add_subcommand("refine", "run the refinement cascade with a checkpoint");
  auto* eval = app.add_subcommand("eval", "run the benchmark over the test split");
  auto* assemble = app.add_subcommand("assemble", "fuse per-view meshes into a global model");
  auto* exportc = app.add_subcommand("export", "dump OBJ/PFM artifacts for scenes");
  for (CLI::App* cmd : {generate, init, train, refine, eval, assemble, exportc}) {
    add_common(cmd, args);
  }

  CLI11_PARSE(app, argc, argv);

  try {
    if (generate->parsed()) return cmd_generate(args);
    if (init->parsed()) return cmd_init(args);
    if (train->parsed()) return cmd_train(args);
    if (refine->parsed()) return cmd_refine(args);
    if (eval->parsed()) return cmd_eval(args);
    if (assemble->parsed()) return cmd_assemble(args);
    if (exportc->parsed()) return cmd_export(args);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
