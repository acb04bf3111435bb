#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "terramesh/geometry.hpp"
#include "terramesh/image.hpp"
#include "terramesh/renderer.hpp"
#include "terramesh/rng.hpp"

namespace terramesh {

// ---------------------------------------------------------------------------
// Terrain

struct TerrainSpec {
  double extent = 400.0;  // square [0, extent]^2, meters
  int bump_count = 40;
  double bump_amplitude = 6.0;
  double bump_sigma_min = 15.0, bump_sigma_max = 60.0;
  int building_count = 10;
  double building_height_min = 8.0, building_height_max = 30.0;
  double building_size_min = 18.0, building_size_max = 55.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (extent <= 0.0) throw std::invalid_argument("TerrainSpec: extent must be > 0");
    if (bump_count < 0 || building_count < 0)
      throw std::invalid_argument("TerrainSpec: counts must be >= 0");
    if (bump_amplitude < 0.0) throw std::invalid_argument("TerrainSpec: amplitude must be >= 0");
    if (building_height_min <= 0.0 || building_height_max < building_height_min)
      throw std::invalid_argument("TerrainSpec: bad building height range");
    if (building_size_min <= 0.0 || building_size_max < building_size_min ||
        building_size_max > extent)
      throw std::invalid_argument("TerrainSpec: bad building footprint range");
  }
};

namespace detail {

inline double hash_noise(std::uint64_t seed, long ix, long iy) {
  Rng r(seed ^ (static_cast<std::uint64_t>(ix) * 0x8da6b343ULL) ^
        (static_cast<std::uint64_t>(iy) * 0xd8163841ULL));
  return r.uniform();
}

// Bilinear value noise on a lattice of the given cell size.
inline double value_noise(std::uint64_t seed, double x, double y, double cell) {
  const double gx = x / cell, gy = y / cell;
  const long ix = static_cast<long>(std::floor(gx)), iy = static_cast<long>(std::floor(gy));
  const double fx = gx - ix, fy = gy - iy;
  const double v00 = hash_noise(seed, ix, iy);
  const double v01 = hash_noise(seed, ix + 1, iy);
  const double v10 = hash_noise(seed, ix, iy + 1);
  const double v11 = hash_noise(seed, ix + 1, iy + 1);
  return (1 - fy) * ((1 - fx) * v00 + fx * v01) + fy * ((1 - fx) * v10 + fx * v11);
}

}  // namespace detail

// 2.5-D height field: smooth Gaussian bumps plus axis-aligned flat-roofed
// boxes with sharp vertical walls. Albedo carries structure cues: textured
// ground and distinct per-building roof colors.
class Terrain {
 public:
  struct Bump {
    double cx, cy, sigma, amplitude;
  };
  struct Building {
    double x0, y0, x1, y1;
    double roof_elevation;
    std::array<double, 3> color;
  };

  TerrainSpec spec;
  std::vector<Bump> bumps;
  std::vector<Building> buildings;

  double smooth_height(double x, double y) const {
    double h = 0.0;
    for (const Bump& b : bumps) {
      const double dx = x - b.cx, dy = y - b.cy;
      h += b.amplitude * std::exp(-(dx * dx + dy * dy) / (2.0 * b.sigma * b.sigma));
    }
    return h;
  }

  // Overlapping footprints resolve by max height.
  double height(double x, double y) const {
    double h = smooth_height(x, y);
    for (const Building& b : buildings) {
      if (x >= b.x0 && x <= b.x1 && y >= b.y0 && y <= b.y1) h = std::max(h, b.roof_elevation);
    }
    return h;
  }

  double max_height() const {
    double h = 0.0;
    for (const Bump& b : bumps) h += b.amplitude;  // conservative bound
    for (const Building& b : buildings) h = std::max(h, b.roof_elevation);
    return h;
  }

  std::array<double, 3> albedo(double x, double y) const {
    for (const Building& b : buildings) {
      if (x >= b.x0 && x <= b.x1 && y >= b.y0 && y <= b.y1) return b.color;
    }
    // Grass/soil mix driven by two octaves of value noise.
    const double n1 = detail::value_noise(spec.seed ^ 0xa1b2, x, y, 23.0);
    const double n2 = detail::value_noise(spec.seed ^ 0x33c4, x, y, 5.0);
    const double t = 0.65 * n1 + 0.35 * n2;
    return {0.20 + 0.25 * t, 0.34 + 0.30 * t, 0.16 + 0.12 * t};
  }
};

inline Terrain generate_terrain(const TerrainSpec& spec) {
  spec.validate();
  Terrain t;
  t.spec = spec;
  Rng rng(derive_seed(spec.seed, 0x7e44a1));
  for (int i = 0; i < spec.bump_count; ++i) {
    Terrain::Bump b;
    b.cx = rng.uniform(0.0, spec.extent);
    b.cy = rng.uniform(0.0, spec.extent);
    b.sigma = rng.uniform(spec.bump_sigma_min, spec.bump_sigma_max);
    b.amplitude = rng.uniform(0.2, 1.0) * spec.bump_amplitude;
    t.bumps.push_back(b);
  }
  const std::array<std::array<double, 3>, 6> palette{{{0.82, 0.29, 0.23},
                                                      {0.85, 0.83, 0.78},
                                                      {0.45, 0.47, 0.52},
                                                      {0.76, 0.62, 0.32},
                                                      {0.30, 0.42, 0.62},
                                                      {0.58, 0.30, 0.45}}};
  for (int i = 0; i < spec.building_count; ++i) {
    Terrain::Building b;
    const double w = rng.uniform(spec.building_size_min, spec.building_size_max);
    const double d = rng.uniform(spec.building_size_min, spec.building_size_max);
    b.x0 = rng.uniform(0.0, spec.extent - w);
    b.y0 = rng.uniform(0.0, spec.extent - d);
    b.x1 = b.x0 + w;
    b.y1 = b.y0 + d;
    const double ground = t.smooth_height(0.5 * (b.x0 + b.x1), 0.5 * (b.y0 + b.y1));
    b.roof_elevation =
        ground + rng.uniform(spec.building_height_min, spec.building_height_max);
    b.color = palette[rng.uniform_index(palette.size())];
    t.buildings.push_back(b);
  }
  return t;
}

// ---------------------------------------------------------------------------
// Trajectory

struct TrajectorySpec {
  int rows = 1;
  int per_row = 2;
  double altitude = 120.0;
  double row_overlap = 0.75;
  double col_overlap = 0.80;
  int resolution = 128;
  double fov_deg = 60.0;

  void validate() const {
    if (rows < 1 || per_row < 1) throw std::invalid_argument("TrajectorySpec: empty grid");
    if (altitude <= 0.0) throw std::invalid_argument("TrajectorySpec: altitude must be > 0");
    if (row_overlap <= 0.0 || row_overlap >= 1.0 || col_overlap <= 0.0 || col_overlap >= 1.0)
      throw std::invalid_argument("TrajectorySpec: overlaps must be in (0,1)");
    if (resolution < 8) throw std::invalid_argument("TrajectorySpec: resolution too small");
    if (fov_deg <= 10.0 || fov_deg >= 150.0)
      throw std::invalid_argument("TrajectorySpec: fov out of range");
  }

  double focal_px() const {
    return 0.5 * resolution / std::tan(0.5 * fov_deg * 3.14159265358979323846 / 180.0);
  }

  // Ground footprint side length at elevation 0, meters.
  double footprint() const { return resolution / focal_px() * altitude; }
};

// Nadir cameras on a sweeping grid pattern, centered over the terrain.
// Spacing comes from footprint x (1 - overlap); the whole pattern's ground
// coverage must fit inside the terrain extent.
inline std::vector<Camera> generate_trajectory(const Terrain& terrain,
                                               const TrajectorySpec& tspec) {
  tspec.validate();
  const double f = tspec.footprint();
  const double dx = (1.0 - tspec.col_overlap) * f;  // along a row
  const double dy = (1.0 - tspec.row_overlap) * f;  // between rows
  const double span_x = (tspec.per_row - 1) * dx + f;
  const double span_y = (tspec.rows - 1) * dy + f;
  if (span_x > terrain.spec.extent || span_y > terrain.spec.extent) {
    throw std::invalid_argument(
        "generate_trajectory: pattern does not fit terrain (footprint " + std::to_string(f) +
        " m, span " + std::to_string(span_x) + " x " + std::to_string(span_y) + " m, extent " +
        std::to_string(terrain.spec.extent) + " m)");
  }
  const double x0 = 0.5 * (terrain.spec.extent - (tspec.per_row - 1) * dx);
  const double y0 = 0.5 * (terrain.spec.extent - (tspec.rows - 1) * dy);

  std::vector<Camera> cams;
  for (int r = 0; r < tspec.rows; ++r) {
    for (int c = 0; c < tspec.per_row; ++c) {
      Camera cam;
      cam.fx = cam.fy = tspec.focal_px();
      cam.cx = cam.cy = tspec.resolution / 2.0;
      cam.width = cam.height = tspec.resolution;
      // Nadir: camera x -> +X, camera y -> -Y, camera z -> straight down.
      cam.R.m = {1, 0, 0, 0, -1, 0, 0, 0, -1};
      cam.p = {x0 + c * dx, y0 + r * dy, tspec.altitude};
      cam.validate();
      cams.push_back(cam);
    }
  }
  return cams;
}

// ---------------------------------------------------------------------------
// Scene rendering

// Dense ground-truth depth via the mesh renderer over a fine triangulation
// of the height field (two lattice points per pixel), plus Lambertian-shaded
// RGB from the albedo.
inline std::pair<RgbImage, DepthImage> render_scene(const Terrain& terrain, const Camera& camera,
                                                    int resolution) {
  if (camera.width != resolution || camera.height != resolution)
    throw std::invalid_argument("render_scene: camera resolution mismatch");
  camera.validate();

  // Ground region this camera can see (at elevation 0), with margin.
  const double half = 0.6 * camera.width / camera.fx * camera.p.z;
  const double cx = camera.p.x, cy = camera.p.y;
  const int lattice = 2 * resolution + 1;

  double max_h = 0.0;
  std::vector<Vec3> verts;
  verts.reserve(static_cast<std::size_t>(lattice) * lattice);
  for (int r = 0; r < lattice; ++r) {
    for (int c = 0; c < lattice; ++c) {
      const double wx = cx - half + 2.0 * half * c / (lattice - 1);
      const double wy = cy - half + 2.0 * half * r / (lattice - 1);
      const double h = terrain.height(wx, wy);
      max_h = std::max(max_h, h);
      verts.push_back(camera.world_to_camera({wx, wy, h}));
    }
  }
  if (camera.p.z <= max_h) {
    throw std::invalid_argument("render_scene: camera at altitude " + std::to_string(camera.p.z) +
                                " is not above the terrain (max height " + std::to_string(max_h) +
                                ")");
  }
  std::vector<std::array<int, 3>> faces;
  faces.reserve(2ull * (lattice - 1) * (lattice - 1));
  for (int r = 0; r + 1 < lattice; ++r) {
    for (int c = 0; c + 1 < lattice; ++c) {
      const int a = r * lattice + c, b = a + 1, d = a + lattice + 1, e = a + lattice;
      faces.push_back({a, b, d});
      faces.push_back({a, d, e});
    }
  }
  TriangleMesh fine = make_mesh(std::move(verts), std::move(faces));
  RenderedDepth rendered = render_depth(fine, camera);

  DepthImage depth(resolution, resolution);
  RgbImage rgb(resolution, resolution);
  const Vec3 light{0.33, 0.25, 0.91};
  const double light_norm = light.norm();
  for (int row = 0; row < resolution; ++row) {
    for (int col = 0; col < resolution; ++col) {
      if (!rendered.valid(row, col)) {
        throw std::runtime_error("render_scene: pixel not covered by terrain; footprint margin "
                                 "too small");
      }
      const double z = rendered.at(row, col);
      depth.at(row, col) = z;
      const Vec3 cam_pt = camera.backproject_pixel(col + 0.5, row + 0.5, z);
      const Vec3 world = camera.camera_to_world(cam_pt);
      const auto alb = terrain.albedo(world.x, world.y);
      // Normal from central differences of the height field.
      const double hstep = 0.5;
      const double hx = (terrain.height(world.x + hstep, world.y) -
                         terrain.height(world.x - hstep, world.y)) /
                        (2.0 * hstep);
      const double hy = (terrain.height(world.x, world.y + hstep) -
                         terrain.height(world.x, world.y - hstep)) /
                        (2.0 * hstep);
      Vec3 normal{-hx, -hy, 1.0};
      const double nn = normal.norm();
      const double lambert = std::max(0.0, normal.dot(light) / (nn * light_norm));
      const double shade = 0.35 + 0.65 * lambert;
      rgb.at(0, row, col) = alb[0] * shade;
      rgb.at(1, row, col) = alb[1] * shade;
      rgb.at(2, row, col) = alb[2] * shade;
    }
  }
  quantize_to_ppm_grid(rgb);
  return {std::move(rgb), std::move(depth)};
}

// ---------------------------------------------------------------------------
// Sparse depth sampling

// Pixel locations mimic SfM keypoints: 70% drawn from the top-gradient pool
// of the RGB image, 30% uniform, all distinct. Depths copy from the dense
// image; optional multiplicative Gaussian noise with sigma = 1% of depth.
// The pattern stream is independent of the noise stream, so noisy and
// noiseless variants of one seed share the exact sparsity pattern.
inline DepthImage sample_sparse_depth(const DepthImage& dense, const RgbImage& rgb,
                                      std::size_t count, bool noise_enabled,
                                      std::uint64_t seed, double noise_sigma = 0.01) {
  if (dense.width != rgb.width || dense.height != rgb.height)
    throw std::invalid_argument("sample_sparse_depth: image sizes differ");
  std::vector<std::size_t> valid;
  for (std::size_t i = 0; i < dense.depth.size(); ++i)
    if (dense.depth[i] > 0.0) valid.push_back(i);
  if (count > valid.size()) {
    throw std::invalid_argument("sample_sparse_depth: requested " + std::to_string(count) +
                                " measurements but only " + std::to_string(valid.size()) +
                                " valid pixels");
  }
  if (count == 0) throw std::invalid_argument("sample_sparse_depth: count must be > 0");

  const int w = dense.width, h = dense.height;
  auto gray = [&](int r, int c) {
    return 0.299 * rgb.at(0, r, c) + 0.587 * rgb.at(1, r, c) + 0.114 * rgb.at(2, r, c);
  };
  std::vector<double> grad(valid.size());
  for (std::size_t k = 0; k < valid.size(); ++k) {
    const int r = static_cast<int>(valid[k]) / w;
    const int c = static_cast<int>(valid[k]) % w;
    const int rm = std::max(0, r - 1), rp = std::min(h - 1, r + 1);
    const int cm = std::max(0, c - 1), cp = std::min(w - 1, c + 1);
    grad[k] = std::fabs(gray(r, cp) - gray(r, cm)) + std::fabs(gray(rp, c) - gray(rm, c));
  }

  // Rank by gradient (ties by pixel index, for determinism).
  std::vector<std::size_t> order(valid.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (grad[a] != grad[b]) return grad[a] > grad[b];
    return valid[a] < valid[b];
  });

  const std::size_t n_grad = static_cast<std::size_t>(0.7 * static_cast<double>(count));
  const std::size_t pool = std::max(n_grad, valid.size() / 5);

  Rng pattern_rng(derive_seed(seed, 0x9a77));
  std::vector<char> taken(valid.size(), 0);
  std::vector<std::size_t> picks;
  picks.reserve(count);
  // Partial Fisher-Yates over the top-gradient pool.
  {
    std::vector<std::size_t> pool_idx(order.begin(), order.begin() + pool);
    for (std::size_t i = 0; i < n_grad; ++i) {
      const std::size_t j = i + pattern_rng.uniform_index(pool_idx.size() - i);
      std::swap(pool_idx[i], pool_idx[j]);
      picks.push_back(pool_idx[i]);
      taken[pool_idx[i]] = 1;
    }
  }
  // Uniform remainder over everything not yet taken.
  {
    std::vector<std::size_t> rest;
    rest.reserve(valid.size());
    for (std::size_t k = 0; k < valid.size(); ++k)
      if (!taken[k]) rest.push_back(k);
    for (std::size_t i = picks.size(); i < count; ++i) {
      const std::size_t pos = (i - n_grad) + pattern_rng.uniform_index(rest.size() - (i - n_grad));
      std::swap(rest[i - n_grad], rest[pos]);
      picks.push_back(rest[i - n_grad]);
    }
  }

  Rng noise_rng(derive_seed(seed, 0x6e01));
  DepthImage sparse(w, h);
  // Apply in pixel order so the noise draw per measurement is independent of
  // pick ordering details.
  std::vector<std::size_t> chosen;
  for (std::size_t k : picks) chosen.push_back(valid[k]);
  std::sort(chosen.begin(), chosen.end());
  for (std::size_t pix : chosen) {
    double d = dense.depth[pix];
    if (noise_enabled) {
      d *= 1.0 + noise_sigma * noise_rng.normal();
      d = std::max(d, 0.05 * dense.depth[pix]);
    }
    sparse.depth[pix] = d;
  }
  return sparse;
}

// ---------------------------------------------------------------------------
// Dataset

struct DatasetConfig {
  int sequences = 20;
  int train_sequences = 14;
  int val_sequences = 2;
  int test_sequences = 4;
  TrajectorySpec trajectory;
  TerrainSpec terrain;  // template; per-sequence seeds derive from seed below
  std::size_t default_sparsity = 1000;
  bool default_noise = true;
  double noise_sigma = 0.01;
  std::uint64_t seed = 0;

  void validate() const {
    if (sequences < 1) throw std::invalid_argument("DatasetConfig: need >= 1 sequence");
    if (train_sequences + val_sequences + test_sequences != sequences)
      throw std::invalid_argument("DatasetConfig: split sizes must sum to sequence count");
    trajectory.validate();
    terrain.validate();
  }
};

struct Scene {
  std::string id;
  RgbImage rgb;
  DepthImage sparse;
  DepthImage gt;
  Camera camera;
};

struct SceneRef {
  std::string id;
  std::string dir;  // relative to dataset root
  std::uint64_t sparse_seed;
};

struct SequenceRef {
  std::string id;
  std::string split;  // train / val / test
  std::uint64_t terrain_seed;
  std::vector<SceneRef> scenes;
};

struct DatasetIndex {
  DatasetConfig config;
  std::vector<SequenceRef> sequences;
  std::string root;
};

inline nlohmann::json dataset_config_to_json(const DatasetConfig& c) {
  nlohmann::json j;
  j["sequences"] = c.sequences;
  j["train_sequences"] = c.train_sequences;
  j["val_sequences"] = c.val_sequences;
  j["test_sequences"] = c.test_sequences;
  j["trajectory"] = {{"rows", c.trajectory.rows},       {"per_row", c.trajectory.per_row},
                     {"altitude", c.trajectory.altitude}, {"row_overlap", c.trajectory.row_overlap},
                     {"col_overlap", c.trajectory.col_overlap},
                     {"resolution", c.trajectory.resolution},
                     {"fov_deg", c.trajectory.fov_deg}};
  j["terrain"] = {{"extent", c.terrain.extent},
                  {"bump_count", c.terrain.bump_count},
                  {"bump_amplitude", c.terrain.bump_amplitude},
                  {"bump_sigma_min", c.terrain.bump_sigma_min},
                  {"bump_sigma_max", c.terrain.bump_sigma_max},
                  {"building_count", c.terrain.building_count},
                  {"building_height_min", c.terrain.building_height_min},
                  {"building_height_max", c.terrain.building_height_max},
                  {"building_size_min", c.terrain.building_size_min},
                  {"building_size_max", c.terrain.building_size_max}};
  j["default_sparsity"] = c.default_sparsity;
  j["default_noise"] = c.default_noise;
  j["noise_sigma"] = c.noise_sigma;
  j["seed"] = c.seed;
  return j;
}

inline DatasetConfig dataset_config_from_json(const nlohmann::json& j) {
  DatasetConfig c;
  c.sequences = j.at("sequences").get<int>();
  c.train_sequences = j.at("train_sequences").get<int>();
  c.val_sequences = j.at("val_sequences").get<int>();
  c.test_sequences = j.at("test_sequences").get<int>();
  const auto& jt = j.at("trajectory");
  c.trajectory.rows = jt.at("rows").get<int>();
  c.trajectory.per_row = jt.at("per_row").get<int>();
  c.trajectory.altitude = jt.at("altitude").get<double>();
  c.trajectory.row_overlap = jt.at("row_overlap").get<double>();
  c.trajectory.col_overlap = jt.at("col_overlap").get<double>();
  c.trajectory.resolution = jt.at("resolution").get<int>();
  c.trajectory.fov_deg = jt.at("fov_deg").get<double>();
  const auto& jr = j.at("terrain");
  c.terrain.extent = jr.at("extent").get<double>();
  c.terrain.bump_count = jr.at("bump_count").get<int>();
  c.terrain.bump_amplitude = jr.at("bump_amplitude").get<double>();
  c.terrain.bump_sigma_min = jr.at("bump_sigma_min").get<double>();
  c.terrain.bump_sigma_max = jr.at("bump_sigma_max").get<double>();
  c.terrain.building_count = jr.at("building_count").get<int>();
  c.terrain.building_height_min = jr.at("building_height_min").get<double>();
  c.terrain.building_height_max = jr.at("building_height_max").get<double>();
  c.terrain.building_size_min = jr.at("building_size_min").get<double>();
  c.terrain.building_size_max = jr.at("building_size_max").get<double>();
  c.default_sparsity = j.at("default_sparsity").get<std::size_t>();
  c.default_noise = j.at("default_noise").get<bool>();
  c.noise_sigma = j.at("noise_sigma").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

// Generates the full dataset on disk: per-scene rgb.ppm, gt_depth.pfm,
// sparse_depth.json (the default sparsity/noise variant) and camera.json,
// plus a dataset.json manifest sufficient to regenerate bit-identically.
inline DatasetIndex build_dataset(const DatasetConfig& config, const std::string& out_dir) {
  config.validate();
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);

  DatasetIndex index;
  index.config = config;
  index.root = out_dir;

  for (int s = 0; s < config.sequences; ++s) {
    SequenceRef seq;
    char name[32];
    std::snprintf(name, sizeof(name), "seq_%02d", s);
    seq.id = name;
    seq.split = s < config.train_sequences                           ? "train"
                : s < config.train_sequences + config.val_sequences ? "val"
                                                                     : "test";
    seq.terrain_seed = derive_seed(config.seed, 0x5e90000 + s);

    TerrainSpec tspec = config.terrain;
    tspec.seed = seq.terrain_seed;
    Terrain terrain = generate_terrain(tspec);
    std::vector<Camera> cams = generate_trajectory(terrain, config.trajectory);

    for (std::size_t k = 0; k < cams.size(); ++k) {
      SceneRef ref;
      char sid[64];
      std::snprintf(sid, sizeof(sid), "%s_kf%03zu", seq.id.c_str(), k);
      ref.id = sid;
      ref.dir = seq.id + "/" + ("kf" + std::to_string(k));
      ref.sparse_seed = derive_seed(seq.terrain_seed, 0xface00 + k);

      auto [rgb, gt] = render_scene(terrain, cams[k], config.trajectory.resolution);
      DepthImage sparse = sample_sparse_depth(gt, rgb, config.default_sparsity,
                                              config.default_noise, ref.sparse_seed,
                                              config.noise_sigma);

      const fs::path dir = fs::path(out_dir) / ref.dir;
      fs::create_directories(dir);
      write_ppm((dir / "rgb.ppm").string(), rgb);
      write_pfm((dir / "gt_depth.pfm").string(), gt);
      write_camera_json((dir / "camera.json").string(), cams[k]);
      {
        nlohmann::json j = nlohmann::json::array();
        for (int row = 0; row < sparse.height; ++row) {
          for (int col = 0; col < sparse.width; ++col) {
            if (!sparse.valid(row, col)) continue;
            j.push_back({{"u", col}, {"v", row}, {"depth", sparse.at(row, col)}});
          }
        }
        std::ofstream f((dir / "sparse_depth.json").string());
        if (!f) throw std::runtime_error("build_dataset: cannot write sparse_depth.json in " +
                                         dir.string());
        f << j.dump() << "\n";
      }
      seq.scenes.push_back(std::move(ref));
    }
    index.sequences.push_back(std::move(seq));
  }

  nlohmann::json manifest;
  manifest["config"] = dataset_config_to_json(config);
  manifest["sequences"] = nlohmann::json::array();
  for (const SequenceRef& seq : index.sequences) {
    nlohmann::json js;
    js["id"] = seq.id;
    js["split"] = seq.split;
    js["terrain_seed"] = seq.terrain_seed;
    js["scenes"] = nlohmann::json::array();
    for (const SceneRef& ref : seq.scenes) {
      js["scenes"].push_back({{"id", ref.id}, {"dir", ref.dir}, {"sparse_seed", ref.sparse_seed}});
    }
    manifest["sequences"].push_back(std::move(js));
  }
  std::ofstream f((fs::path(out_dir) / "dataset.json").string());
  if (!f) throw std::runtime_error("build_dataset: cannot write manifest in " + out_dir);
  f << manifest.dump(2) << "\n";
  return index;
}

inline DatasetIndex load_dataset(const std::string& root) {
  std::ifstream f((std::filesystem::path(root) / "dataset.json").string());
  if (!f) throw std::runtime_error("load_dataset: cannot open manifest in " + root);
  nlohmann::json manifest;
  f >> manifest;
  DatasetIndex index;
  index.root = root;
  index.config = dataset_config_from_json(manifest.at("config"));
  for (const auto& js : manifest.at("sequences")) {
    SequenceRef seq;
    seq.id = js.at("id").get<std::string>();
    seq.split = js.at("split").get<std::string>();
    seq.terrain_seed = js.at("terrain_seed").get<std::uint64_t>();
    for (const auto& jref : js.at("scenes")) {
      seq.scenes.push_back({jref.at("id").get<std::string>(), jref.at("dir").get<std::string>(),
                            jref.at("sparse_seed").get<std::uint64_t>()});
    }
    index.sequences.push_back(std::move(seq));
  }
  return index;
}

inline DepthImage read_sparse_depth_json(const std::string& path, int width, int height) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("read_sparse_depth_json: cannot open " + path);
  nlohmann::json j;
  f >> j;
  DepthImage sparse(width, height);
  for (const auto& m : j) {
    sparse.at(m.at("v").get<int>(), m.at("u").get<int>()) = m.at("depth").get<double>();
  }
  return sparse;
}

// Loads a scene from disk. The default sparse variant comes from
// sparse_depth.json; other (sparsity, noise) cells are regenerated
// deterministically from the stored ground truth and the scene's seed.
inline Scene load_scene(const DatasetIndex& index, const SceneRef& ref,
                        std::size_t sparsity = 0, int noise = -1) {
  namespace fs = std::filesystem;
  const fs::path dir = fs::path(index.root) / ref.dir;
  Scene scene;
  scene.id = ref.id;
  scene.rgb = read_ppm((dir / "rgb.ppm").string());
  scene.gt = read_pfm((dir / "gt_depth.pfm").string());
  scene.camera = read_camera_json((dir / "camera.json").string());
  const std::size_t want_sparsity = sparsity == 0 ? index.config.default_sparsity : sparsity;
  const bool want_noise = noise < 0 ? index.config.default_noise : noise > 0;
  if (want_sparsity == index.config.default_sparsity && want_noise == index.config.default_noise) {
    scene.sparse =
        read_sparse_depth_json((dir / "sparse_depth.json").string(), scene.gt.width,
                               scene.gt.height);
  } else {
    scene.sparse = sample_sparse_depth(scene.gt, scene.rgb, want_sparsity, want_noise,
                                       ref.sparse_seed, index.config.noise_sigma);
  }
  return scene;
}

}  // namespace terramesh
