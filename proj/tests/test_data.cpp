#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>

#include <json.hpp>

#include "mfos/data.hpp"
#include "mfos/io.hpp"

using namespace mfos;
using geom::Pose;
using geom::Rotation;
using geom::Vec3;

namespace {

namespace fs = std::filesystem;

fs::path temp_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("mfos_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

ImageU8 gradient_image(int w, int h) {
  ImageU8 img(w, h, 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      img.at(x, y, 0) = uint8_t((x * 255) / std::max(1, w - 1));
      img.at(x, y, 1) = uint8_t((y * 255) / std::max(1, h - 1));
      img.at(x, y, 2) = uint8_t(((x + y) * 255) / std::max(1, w + h - 2));
    }
  return img;
}

data::Manifest tiny_manifest(const fs::path& dir) {
  io::write_png(dir / "v0.png", gradient_image(48, 48));
  io::write_png(dir / "v1.png", gradient_image(48, 48));
  data::Manifest m;
  m.root = dir;
  data::ObjectRecord obj;
  obj.id = "thing";
  obj.shape.kind = proxy::ShapeKind::Cuboid;
  obj.shape.frame.half_extents = Vec3(0.05, 0.07, 0.06);
  obj.model_pts = {Vec3(0.05, 0.07, 0.06), Vec3(-0.05, -0.07, -0.06)};
  obj.diameter = 2 * Vec3(0.05, 0.07, 0.06).norm();
  Rng rng(1);
  for (int i = 0; i < 2; ++i) {
    data::ViewRecord v;
    v.image_ref = "v" + std::to_string(i) + ".png";
    v.pose.r = Rotation::random_uniform(rng);
    v.pose.t = Vec3(0.01 * i, -0.02, 0.5);
    v.intrinsics = {60, 60, 24, 24, 48, 48};
    if (i == 1) v.bbox2d = {{8, 10, 40, 44}};
    obj.views.push_back(v);
  }
  m.objects.push_back(obj);
  return m;
}

bool files_equal(const fs::path& a, const fs::path& b) {
  std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
  std::string sa((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
  std::string sb((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
  return !sa.empty() && sa == sb;
}

}  // namespace

TEST_CASE("manifest: round trip preserves every field") {
  fs::path dir = temp_dir("manifest_rt");
  data::Manifest m = tiny_manifest(dir);
  // add a mesh proxy to cover the mesh branch
  m.objects[0].shape.kind = proxy::ShapeKind::Mesh;
  proxy::TriMesh mesh;
  mesh.vertices = {Vec3(0, 0, 0), Vec3(0.1, 0, 0), Vec3(0, 0.1, 0), Vec3(0, 0, 0.1)};
  mesh.triangles = {{0, 1, 2}, {0, 1, 3}, {0, 2, 3}, {1, 2, 3}};
  m.objects[0].shape.mesh = mesh;

  data::write_manifest(m, dir / "manifest.json");
  data::Manifest l = data::load_manifest(dir / "manifest.json");

  REQUIRE(l.objects.size() == 1);
  const auto& a = m.objects[0];
  const auto& b = l.objects[0];
  CHECK(a.id == b.id);
  CHECK(a.shape.kind == b.shape.kind);
  CHECK(a.shape.frame.center == b.shape.frame.center);
  CHECK(a.shape.frame.half_extents == b.shape.frame.half_extents);
  CHECK(a.shape.frame.r.matrix() == b.shape.frame.r.matrix());
  REQUIRE(b.shape.mesh.has_value());
  CHECK(a.shape.mesh->vertices.size() == b.shape.mesh->vertices.size());
  CHECK(a.shape.mesh->triangles == b.shape.mesh->triangles);
  CHECK(a.model_pts.size() == b.model_pts.size());
  CHECK(a.diameter == b.diameter);
  REQUIRE(a.views.size() == b.views.size());
  for (size_t i = 0; i < a.views.size(); ++i) {
    CHECK(a.views[i].image_ref == b.views[i].image_ref);
    CHECK(a.views[i].pose.r.matrix() == b.views[i].pose.r.matrix());
    CHECK(a.views[i].pose.t == b.views[i].pose.t);
    CHECK(a.views[i].intrinsics.fx == b.views[i].intrinsics.fx);
    CHECK(a.views[i].intrinsics.width == b.views[i].intrinsics.width);
    CHECK(a.views[i].bbox2d.has_value() == b.views[i].bbox2d.has_value());
    if (a.views[i].bbox2d) CHECK(*a.views[i].bbox2d == *b.views[i].bbox2d);
  }
}

TEST_CASE("manifest: missing image file is reported with its path") {
  fs::path dir = temp_dir("manifest_missing");
  data::Manifest m = tiny_manifest(dir);
  data::write_manifest(m, dir / "manifest.json");
  fs::remove(dir / "v1.png");
  try {
    data::load_manifest(dir / "manifest.json");
    FAIL("expected MissingFile");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::MissingFile);
    CHECK(std::string(e.what()).find("v1.png") != std::string::npos);
  }
}

TEST_CASE("manifest: parse errors") {
  fs::path dir = temp_dir("manifest_bad");
  io::write_text_file(dir / "broken.json", "{not json");
  CHECK_THROWS_AS(data::load_manifest(dir / "broken.json"), Error);
  io::write_text_file(dir / "other.json", "{\"format\": \"something-else\"}");
  CHECK_THROWS_AS(data::load_manifest(dir / "other.json"), Error);
}

TEST_CASE("crop_resize: projection consistency within half a pixel") {
  ImageF32 img = to_f32(gradient_image(96, 80));
  geom::Intrinsics k{100, 100, 48, 40, 96, 80};
  std::array<double, 4> bbox{30, 22, 70, 58};
  Rng rng(2);
  data::CropResult crop = data::crop_resize(img, k, bbox, 32, std::nullopt, rng);

  // a point projecting to the bbox center must land at the crop center
  double bx = 0.5 * (bbox[0] + bbox[2]), by = 0.5 * (bbox[1] + bbox[3]);
  Vec3 x((bx - k.cx) / k.fx, (by - k.cy) / k.fy, 1.0);
  geom::Vec2 uv = geom::project(crop.k, x);
  CHECK(std::abs(uv.x() - 16.0) < 0.5);
  CHECK(std::abs(uv.y() - 16.0) < 0.5);

  // arbitrary in-crop points stay consistent as well
  for (int i = 0; i < 20; ++i) {
    double u = rng.uniform(bbox[0], bbox[2]);
    double v = rng.uniform(bbox[1], bbox[3]);
    Vec3 p((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0);
    geom::Vec2 t = geom::project(crop.k, p);
    // independent mapping: tgt = s (src - x0)
    double side = 1.2 * std::max(bbox[2] - bbox[0], bbox[3] - bbox[1]);
    double s = 32.0 / side;
    CHECK(std::abs(t.x() - s * (u - (bx - side / 2))) < 0.5);
    CHECK(std::abs(t.y() - s * (v - (by - side / 2))) < 0.5);
  }
}

TEST_CASE("crop_resize: full-image bbox at matching size is a pass-through") {
  ImageF32 img = to_f32(gradient_image(48, 48));
  geom::Intrinsics k{60, 60, 24, 24, 48, 48};
  Rng rng(3);
  std::array<double, 4> bbox{0, 0, 48, 48};
  data::CropResult a = data::crop_resize(img, k, bbox, 48, std::nullopt, rng);
  CHECK(std::memcmp(a.image.px.data(), img.px.data(), img.px.size() * 4) == 0);
  CHECK(a.k.fx == k.fx);
  CHECK(a.k.cx == k.cx);
  CHECK(a.cam_roll.is_identity());

  // zero-width augmentation ranges behave exactly like no augmentation
  data::CropAugment zero;
  data::CropResult b = data::crop_resize(img, k, bbox, 48, zero, rng);
  CHECK(std::memcmp(b.image.px.data(), img.px.data(), img.px.size() * 4) == 0);
}

TEST_CASE("crop_resize: empty bbox, rotation consistency") {
  ImageF32 img = to_f32(gradient_image(96, 96));
  geom::Intrinsics k{100, 100, 48, 48, 96, 96};
  Rng rng(4);
  CHECK_THROWS_AS(data::crop_resize(img, k, {{10, 10, 10, 40}}, 32, std::nullopt, rng), Error);

  // with in-plane rotation, adjusted intrinsics + returned camera roll keep
  // projections consistent (fx == fy, so the roll is exact)
  data::CropAugment aug;
  aug.rot_deg = 25;
  for (int trial = 0; trial < 8; ++trial) {
    data::CropResult crop = data::crop_resize(img, k, {{20, 24, 72, 70}}, 32, aug, rng);
    for (int i = 0; i < 10; ++i) {
      double u = rng.uniform(30, 60), v = rng.uniform(30, 60);
      Vec3 p((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0);
      // prediction through the returned camera model
      geom::Vec2 got = geom::project(crop.k, crop.cam_roll * p);
      // independent mapping: rotate the source pixel into the crop frame
      // src = w + R(roll)(x0,y0 + tgt/s - w)  =>  tgt = s (R(-roll)(src - w) + w - x0)
      // recover roll from the camera rotation
      double roll = -std::atan2(crop.cam_roll.matrix()(1, 0), crop.cam_roll.matrix()(0, 0));
      // reconstruct window from the adjusted intrinsics
      double s = crop.k.fx / k.fx;
      double cr = std::cos(-roll), sr = std::sin(-roll);
      // b such that (cx',cy') = s R(-roll) ((cx,cy) - b)
      double px = crop.k.cx / s, py = crop.k.cy / s;
      double bx0 = k.cx - (std::cos(roll) * px - std::sin(roll) * py);
      double by0 = k.cy - (std::sin(roll) * px + std::cos(roll) * py);
      double du = u - bx0, dv = v - by0;
      geom::Vec2 expected(s * (cr * du - sr * dv), s * (sr * du + cr * dv));
      CHECK(std::abs(got.x() - expected.x()) < 0.5);
      CHECK(std::abs(got.y() - expected.y()) < 0.5);
    }
  }
}

TEST_CASE("synth_generate: determinism, center projection, face color grouping") {
  fs::path d1 = temp_dir("synth_a");
  fs::path d2 = temp_dir("synth_b");
  fs::path m1 = data::synth_generate(2, 6, 48, 99, d1);
  fs::path m2 = data::synth_generate(2, 6, 48, 99, d2);
  CHECK(files_equal(m1, m2));
  CHECK(files_equal(d1 / "images" / "obj00_v000.png", d2 / "images" / "obj00_v000.png"));
  CHECK(files_equal(d1 / "images" / "obj01_v005.png", d2 / "images" / "obj01_v005.png"));

  data::Manifest m = data::load_manifest(m1);
  REQUIRE(m.objects.size() == 2);
  for (const auto& obj : m.objects) {
    CHECK(obj.views.size() == 6);
    CHECK(obj.model_pts.size() == 8);
    CHECK(obj.diameter > 0);
    for (const auto& v : obj.views) {
      geom::Vec2 uv = geom::project(v.intrinsics, v.pose.apply(Vec3::Zero()));
      CHECK(uv.x() >= 0);
      CHECK(uv.x() < v.intrinsics.width);
      CHECK(uv.y() >= 0);
      CHECK(uv.y() < v.intrinsics.height);
    }
  }

  // pixels tracing to the same cuboid face carry one flat (shaded) color
  const auto& obj = m.objects[0];
  for (int vi = 0; vi < 3; ++vi) {
    const auto& view = obj.views[size_t(vi)];
    ImageU8 img = data::load_view_image(m, view);
    std::array<std::vector<std::array<uint8_t, 3>>, 6> by_face;
    for (int y = 1; y < 48; y += 3) {
      for (int x = 1; x < 48; x += 3) {
        auto sp = proxy::trace_pixel(obj.shape, view.pose, view.intrinsics, x + 0.5, y + 0.5);
        if (!sp || sp->face < 0) continue;
        by_face[size_t(sp->face)].push_back({img.at(x, y, 0), img.at(x, y, 1), img.at(x, y, 2)});
      }
    }
    std::vector<std::array<double, 3>> means;
    for (const auto& pixels : by_face) {
      if (pixels.size() < 4) continue;
      std::array<double, 3> mean{0, 0, 0};
      for (const auto& p : pixels)
        for (int c = 0; c < 3; ++c) mean[size_t(c)] += p[size_t(c)];
      for (int c = 0; c < 3; ++c) mean[size_t(c)] /= double(pixels.size());
      int off = 0;
      for (const auto& p : pixels)
        for (int c = 0; c < 3; ++c)
          if (std::abs(double(p[size_t(c)]) - mean[size_t(c)]) > 2.0) ++off;
      // flat shading: a face has one color up to quantization
      CHECK(double(off) <= 0.001 * double(pixels.size() * 3) + 1.0);
      means.push_back(mean);
    }
    CHECK(means.size() >= 2);  // at least two faces visible
    for (size_t i = 0; i < means.size(); ++i)
      for (size_t j = i + 1; j < means.size(); ++j) {
        double d = std::max({std::abs(means[i][0] - means[j][0]),
                             std::abs(means[i][1] - means[j][1]),
                             std::abs(means[i][2] - means[j][2])});
        CHECK(d > 8.0);  // distinct face colors
      }
  }
}

TEST_CASE("make_batch: shapes, disjoint views, shared frame, render consistency") {
  fs::path dir = temp_dir("batch");
  data::Manifest m = data::load_manifest(data::synth_generate(3, 10, 32, 5, dir));
  data::ImageCache cache(&m);
  data::BatchSpec spec{2, 2, 4, 1};
  data::BatchOptions opts;
  Rng rng(6);
  data::TrainBatch b = data::make_batch(m, cache, 32, spec, opts, rng);

  CHECK(b.query_images.size() == 4);
  CHECK(b.query_targets.size() == 4);
  CHECK(b.ref_images.size() == 8);
  CHECK(b.ref_maps.size() == 8);
  CHECK(b.frames.size() == 2);

  for (int o = 0; o < 2; ++o) {
    std::set<int> refs(b.ref_views[size_t(o)].begin(), b.ref_views[size_t(o)].end());
    CHECK(refs.size() == 4);
    for (int q : b.query_views[size_t(o)]) CHECK(!refs.count(q));

    // every map of the object was rendered with the object's single frame
    const auto& obj = m.objects[size_t(b.object_indices[size_t(o)])];
    proxy::ProxyShape shape = obj.shape;
    shape.frame = b.frames[size_t(o)];
    for (int i = 0; i < 4; ++i) {
      const auto& view = obj.views[size_t(b.ref_views[size_t(o)][size_t(i)])];
      proxy::PointMap expect =
          proxy::render_pointmap(shape, view.pose, view.intrinsics, 32, 32);
      const proxy::PointMap& got = b.ref_maps[size_t(o * 4 + i)];
      CHECK(std::memcmp(expect.coords.data(), got.coords.data(), expect.coords.size() * 4) == 0);
      CHECK(expect.mask == got.mask);
    }
    for (int i = 0; i < 2; ++i) {
      const auto& view = obj.views[size_t(b.query_views[size_t(o)][size_t(i)])];
      proxy::PointMap expect = proxy::render_target(shape, view.pose, view.intrinsics, 32, 32);
      const proxy::PointMap& got = b.query_targets[size_t(o * 2 + i)];
      CHECK(std::memcmp(expect.coords.data(), got.coords.data(), expect.coords.size() * 4) == 0);
    }
  }

  // with perturbation disabled the maps coincide with the canonical frame
  data::BatchOptions plain;
  plain.perturb_frames = false;
  Rng rng2(7);
  data::TrainBatch b2 = data::make_batch(m, cache, 32, spec, plain, rng2);
  for (int o = 0; o < 2; ++o) {
    const auto& obj = m.objects[size_t(b2.object_indices[size_t(o)])];
    const auto& view = obj.views[size_t(b2.ref_views[size_t(o)][0])];
    proxy::PointMap expect = proxy::render_pointmap(obj.shape, view.pose, view.intrinsics, 32, 32);
    CHECK(std::memcmp(expect.coords.data(), b2.ref_maps[size_t(o * 4)].coords.data(),
                      expect.coords.size() * 4) == 0);
  }

  // not enough usable views
  data::BatchSpec greedy{3, 4, 8, 1};
  Rng rng3(8);
  CHECK_THROWS_AS(data::make_batch(m, cache, 32, greedy, opts, rng3), Error);
}

TEST_CASE("bop_convert: minimal scene becomes a manifest") {
  fs::path dir = temp_dir("bop");
  fs::create_directories(dir / "rgb");
  io::write_png(dir / "rgb" / "000001.png", gradient_image(64, 48));
  io::write_text_file(dir / "scene_gt.json",
                      R"({"1": [{"cam_R_m2c": [1,0,0,0,1,0,0,0,1],
                                  "cam_t_m2c": [10.0, 20.0, 300.0], "obj_id": 5}]})");
  io::write_text_file(dir / "scene_camera.json",
                      R"({"1": {"cam_K": [400,0,32, 0,410,24, 0,0,1], "depth_scale": 1.0}})");
  io::write_text_file(dir / "models_info.json",
                      R"({"5": {"diameter": 120.0, "min_x": -30.0, "min_y": -20.0,
                                 "min_z": -10.0, "size_x": 60.0, "size_y": 40.0,
                                 "size_z": 20.0}})");

  data::Manifest m = data::bop_convert(dir);
  REQUIRE(m.objects.size() == 1);
  const auto& obj = m.objects[0];
  CHECK(obj.id == "bop_obj5");
  CHECK((obj.shape.frame.half_extents - Vec3(0.03, 0.02, 0.01)).norm() < 1e-12);
  CHECK(obj.shape.frame.center.norm() < 1e-12);
  CHECK(obj.diameter == doctest::Approx(0.12));
  REQUIRE(obj.views.size() == 1);
  const auto& v = obj.views[0];
  CHECK((v.pose.t - Vec3(0.01, 0.02, 0.3)).norm() < 1e-12);
  CHECK(v.intrinsics.fx == 400);
  CHECK(v.intrinsics.fy == 410);
  CHECK(v.intrinsics.width == 64);
  CHECK(v.intrinsics.height == 48);

  // converted manifests round-trip through the normal writer/loader
  data::write_manifest(m, dir / "manifest.json");
  data::Manifest rt = data::load_manifest(dir / "manifest.json");
  CHECK(rt.objects.size() == 1);
  CHECK(rt.objects[0].views[0].intrinsics.fy == 410);
}
