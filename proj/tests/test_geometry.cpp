#include "terramesh/geometry.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "terramesh/rng.hpp"

using namespace terramesh;

namespace {

Camera test_camera(int w = 64, int h = 64) {
  Camera cam;
  cam.fx = cam.fy = 60.0;
  cam.cx = w / 2.0;
  cam.cy = h / 2.0;
  cam.width = w;
  cam.height = h;
  return cam;
}

Mat3 rotation_z(double angle) {
  Mat3 r;
  r.m = {std::cos(angle), -std::sin(angle), 0.0,
         std::sin(angle), std::cos(angle),  0.0,
         0.0,             0.0,              1.0};
  return r;
}

TEST(GridMesh, PaperVertexCounts) {
  Camera cam = test_camera();
  TriangleMesh m32 = make_grid_mesh(32, 32, cam, 100.0);
  EXPECT_EQ(m32.vertex_count(), 1024u);
  EXPECT_EQ(m32.topology->faces.size(), 2u * 31 * 31);

  TriangleMesh m24 = make_grid_mesh(24, 24, cam, 100.0);
  EXPECT_EQ(m24.vertex_count(), 576u);
}

TEST(GridMesh, TinyGrid) {
  TriangleMesh m = make_grid_mesh(2, 2, test_camera(), 50.0);
  EXPECT_EQ(m.vertex_count(), 4u);
  EXPECT_EQ(m.topology->faces.size(), 2u);
  EXPECT_EQ(m.topology->edges.size(), 5u);
}

TEST(GridMesh, RejectsDegenerate) {
  EXPECT_THROW(make_grid_mesh(1, 5, test_camera(), 10.0), std::invalid_argument);
  EXPECT_THROW(make_grid_mesh(4, 4, test_camera(), 0.0), std::invalid_argument);
}

TEST(GridMesh, WindingFacesCamera) {
  TriangleMesh m = make_grid_mesh(5, 7, test_camera(), 80.0);
  for (const auto& f : m.topology->faces) {
    Vec3 a = m.vertex(f[0]), b = m.vertex(f[1]), c = m.vertex(f[2]);
    Vec3 n = (b - a).cross(c - a);
    EXPECT_GT(n.z, 0.0);
  }
}

TEST(GridMesh, EdgeSetMatchesFaceInducedSet) {
  TriangleMesh m = make_grid_mesh(6, 5, test_camera(), 80.0);
  const int rows = 6, cols = 5;
  const std::size_t expected =
      static_cast<std::size_t>(rows * (cols - 1) + cols * (rows - 1) + (rows - 1) * (cols - 1));
  EXPECT_EQ(m.topology->edges.size(), expected);
  for (const auto& f : m.topology->faces) {
    for (int k = 0; k < 3; ++k) {
      std::array<int, 2> e{std::min(f[k], f[(k + 1) % 3]), std::max(f[k], f[(k + 1) % 3])};
      EXPECT_TRUE(std::binary_search(m.topology->edges.begin(), m.topology->edges.end(), e));
    }
  }
}

TEST(ToWorld, IdentityAndTranslation) {
  Camera cam = test_camera();
  TriangleMesh m = make_grid_mesh(3, 3, cam, 10.0);
  TriangleMesh w = to_world(m, cam);
  for (std::size_t i = 0; i < m.vertex_count(); ++i) {
    EXPECT_NEAR((w.vertex(i) - m.vertex(i)).norm(), 0.0, 1e-12);
  }
  cam.p = {10.0, 0.0, 0.0};
  TriangleMesh w2 = to_world(m, cam);
  for (std::size_t i = 0; i < m.vertex_count(); ++i) {
    EXPECT_NEAR(w2.vertex(i).x - m.vertex(i).x, 10.0, 1e-12);
    EXPECT_NEAR(w2.vertex(i).y - m.vertex(i).y, 0.0, 1e-12);
  }
}

TEST(ToWorld, RoundTripAndRigidity) {
  Camera cam = test_camera();
  cam.R = rotation_z(0.7);
  cam.p = {4.0, -2.0, 11.0};
  TriangleMesh m = make_grid_mesh(4, 4, cam, 25.0);
  TriangleMesh w = to_world(m, cam);

  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    std::size_t i = rng.uniform_index(m.vertex_count());
    std::size_t j = rng.uniform_index(m.vertex_count());
    double before = (m.vertex(i) - m.vertex(j)).norm();
    double after = (w.vertex(i) - w.vertex(j)).norm();
    EXPECT_NEAR(before, after, 1e-9);
  }
  for (std::size_t i = 0; i < m.vertex_count(); ++i) {
    Vec3 back = cam.world_to_camera(w.vertex(i));
    EXPECT_NEAR((back - m.vertex(i)).norm(), 0.0, 1e-9);
  }
}

TEST(Projection, OpticalAxisAndLinearity) {
  Camera cam = test_camera();
  TriangleMesh m = make_mesh({{0.0, 0.0, 37.0}, {2.0, 0.0, 10.0}, {4.0, 0.0, 10.0}},
                             {{0, 1, 2}});
  auto proj = project_vertices(m, cam);
  EXPECT_NEAR(proj[0].u, cam.cx / cam.width, 1e-12);
  EXPECT_NEAR(proj[0].v, cam.cy / cam.height, 1e-12);
  const double off1 = proj[1].u * cam.width - cam.cx;
  const double off2 = proj[2].u * cam.width - cam.cx;
  EXPECT_NEAR(off2, 2.0 * off1, 1e-9);
}

TEST(Projection, BackprojectionRoundTrip) {
  Camera cam = test_camera();
  Rng rng(17);
  std::vector<Vec3> verts;
  for (int i = 0; i < 50; ++i) {
    double z = rng.uniform(5.0, 200.0);
    verts.push_back({rng.uniform(-0.4, 0.4) * z, rng.uniform(-0.4, 0.4) * z, z});
  }
  TriangleMesh m = make_mesh(verts, {{0, 1, 2}});
  auto proj = project_vertices(m, cam);
  for (std::size_t i = 0; i < verts.size(); ++i) {
    ASSERT_TRUE(proj[i].positive_depth);
    Vec3 back = cam.backproject_pixel(proj[i].u * cam.width, proj[i].v * cam.height, verts[i].z);
    EXPECT_NEAR((back - verts[i]).norm(), 0.0, 1e-9);
  }
}

TEST(Projection, NonPositiveDepthFlagged) {
  TriangleMesh m = make_mesh({{0.0, 0.0, -5.0}, {0.0, 0.0, 0.0}, {1.0, 1.0, 3.0}}, {{0, 1, 2}});
  auto proj = project_vertices(m, test_camera());
  EXPECT_FALSE(proj[0].positive_depth);
  EXPECT_FALSE(proj[1].positive_depth);
  EXPECT_TRUE(proj[2].positive_depth);
}

TEST(Projection, OutOfFrameClampedAndFlagged) {
  Camera cam = test_camera();
  // x chosen so u_pix = 2 * width.
  TriangleMesh m = make_mesh({{2.0 * cam.width * 10.0 / cam.fx, 0.0, 10.0},
                              {0.0, 0.0, 10.0},
                              {1.0, 1.0, 10.0}},
                             {{0, 1, 2}});
  auto proj = project_vertices(m, cam);
  EXPECT_TRUE(proj[0].positive_depth);
  EXPECT_FALSE(proj[0].in_frame);
  EXPECT_DOUBLE_EQ(proj[0].u, 1.0);  // clamped to the border
  EXPECT_TRUE(proj[1].in_frame);
}

TEST(PseudoGt, ConstantDepthIsPlanar) {
  Camera cam = test_camera(16, 16);
  DepthImage dense(16, 16);
  for (double& d : dense.depth) d = 42.0;
  TriangleMesh m = pseudo_gt_mesh(dense, cam, 1);
  EXPECT_EQ(m.vertex_count(), 256u);
  for (std::size_t i = 0; i < m.vertex_count(); ++i) EXPECT_DOUBLE_EQ(m.vertex(i).z, 42.0);
}

TEST(PseudoGt, StrideOneVertexCount) {
  Camera cam = test_camera(512, 512);
  DepthImage dense(512, 512);
  for (double& d : dense.depth) d = 5.0;
  TriangleMesh m = pseudo_gt_mesh(dense, cam, 1);
  EXPECT_EQ(m.vertex_count(), 512u * 512u);
}

TEST(PseudoGt, InvalidLatticePixelRejected) {
  Camera cam = test_camera(8, 8);
  DepthImage dense(8, 8);
  for (double& d : dense.depth) d = 10.0;
  dense.at(4, 4) = 0.0;
  EXPECT_THROW(pseudo_gt_mesh(dense, cam, 1), std::invalid_argument);
}

TEST(CameraJson, RoundTrip) {
  Camera cam = test_camera(512, 384);
  cam.R = rotation_z(-0.3);
  cam.p = {1.5, 2.5, -3.5};
  auto j = camera_to_json(cam);
  Camera back = camera_from_json(j);
  EXPECT_DOUBLE_EQ(back.fx, cam.fx);
  EXPECT_EQ(back.width, 512);
  for (int i = 0; i < 9; ++i) EXPECT_DOUBLE_EQ(back.R.m[i], cam.R.m[i]);
  EXPECT_DOUBLE_EQ(back.p.y, 2.5);
}

TEST(CameraJson, RejectsNonOrthonormal) {
  Camera cam = test_camera();
  cam.R.m[0] = 1.5;
  EXPECT_THROW(cam.validate(), std::invalid_argument);
}

TEST(ObjIo, RoundTrip) {
  TriangleMesh m = make_grid_mesh(3, 4, test_camera(), 77.7);
  auto path = std::filesystem::temp_directory_path() / "terramesh_test_mesh.obj";
  write_obj(path.string(), m);
  TriangleMesh back = read_obj(path.string());
  ASSERT_EQ(back.vertex_count(), m.vertex_count());
  ASSERT_EQ(back.topology->faces.size(), m.topology->faces.size());
  for (std::size_t i = 0; i < m.vertex_count(); ++i) {
    EXPECT_NEAR((back.vertex(i) - m.vertex(i)).norm(), 0.0, 1e-6 * (1.0 + m.vertex(i).norm()));
  }
  std::filesystem::remove(path);
}

TEST(DepthImage, ValidityConvention) {
  DepthImage d(4, 4);
  EXPECT_EQ(d.valid_count(), 0u);
  d.at(1, 2) = 3.5;
  EXPECT_TRUE(d.valid(1, 2));
  EXPECT_FALSE(d.valid(0, 0));
  EXPECT_EQ(d.valid_count(), 1u);
}

TEST(PfmIo, RoundTripWithInvalidPixels) {
  DepthImage d(5, 3);
  d.at(0, 0) = 1.25;
  d.at(2, 4) = 1000.5;
  auto path = std::filesystem::temp_directory_path() / "terramesh_test_depth.pfm";
  write_pfm(path.string(), d);
  DepthImage back = read_pfm(path.string());
  ASSERT_EQ(back.width, 5);
  ASSERT_EQ(back.height, 3);
  EXPECT_FLOAT_EQ(static_cast<float>(back.at(0, 0)), 1.25f);
  EXPECT_FLOAT_EQ(static_cast<float>(back.at(2, 4)), 1000.5f);
  EXPECT_FALSE(back.valid(1, 1));
  std::filesystem::remove(path);
}

TEST(PpmIo, RoundTripAfterQuantization) {
  RgbImage img(6, 4);
  Rng rng(5);
  for (double& v : img.data) v = rng.uniform();
  quantize_to_ppm_grid(img);
  auto path = std::filesystem::temp_directory_path() / "terramesh_test_rgb.ppm";
  write_ppm(path.string(), img);
  RgbImage back = read_ppm(path.string());
  ASSERT_EQ(back.width, 6);
  for (std::size_t i = 0; i < img.data.size(); ++i) EXPECT_DOUBLE_EQ(back.data[i], img.data[i]);
  std::filesystem::remove(path);
}

}  // namespace
