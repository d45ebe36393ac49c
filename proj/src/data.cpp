#include "mfos/data.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <map>

#include "mfos/io.hpp"
#include "mfos/select.hpp"

namespace mfos::data {

using nlohmann::json;

const ObjectRecord& Manifest::object(const std::string& id) const {
  for (const auto& o : objects)
    if (o.id == id) return o;
  fail(ErrorKind::InvalidArgument, "no such object in manifest: " + id);
}

int Manifest::object_index(const std::string& id) const {
  for (size_t i = 0; i < objects.size(); ++i)
    if (objects[i].id == id) return int(i);
  return -1;
}

namespace {

json vec3_to_json(const geom::Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

geom::Vec3 vec3_from_json(const json& j) {
  if (!j.is_array() || j.size() != 3) fail(ErrorKind::ParseError, "expected a 3-vector");
  return geom::Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

json mat3_to_json(const geom::Mat3& m) {
  json a = json::array();
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) a.push_back(m(r, c));
  return a;
}

geom::Mat3 mat3_from_json(const json& j) {
  if (!j.is_array() || j.size() != 9) fail(ErrorKind::ParseError, "expected 9 matrix entries");
  geom::Mat3 m;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) m(r, c) = j[size_t(3 * r + c)].get<double>();
  return m;
}

const char* kind_name(proxy::ShapeKind k) {
  switch (k) {
    case proxy::ShapeKind::Cuboid: return "cuboid";
    case proxy::ShapeKind::Ellipsoid: return "ellipsoid";
    case proxy::ShapeKind::Mesh: return "mesh";
  }
  return "cuboid";
}

proxy::ShapeKind kind_from_name(const std::string& s) {
  if (s == "cuboid") return proxy::ShapeKind::Cuboid;
  if (s == "ellipsoid") return proxy::ShapeKind::Ellipsoid;
  if (s == "mesh") return proxy::ShapeKind::Mesh;
  fail(ErrorKind::ParseError, "unknown proxy kind: " + s);
}

}  // namespace

Manifest load_manifest(const std::filesystem::path& path) {
  json doc = json::parse(io::read_text_file(path), nullptr, false);
  if (doc.is_discarded()) fail(ErrorKind::ParseError, "manifest is not valid JSON: " + path.string());
  if (doc.value("format", "") != "mfos-manifest")
    fail(ErrorKind::ParseError, "not an mfos manifest: " + path.string());

  Manifest m;
  m.root = path.parent_path();
  try {
    for (const auto& jo : doc.at("objects")) {
      ObjectRecord obj;
      obj.id = jo.at("id").get<std::string>();
      const json& jp = jo.at("proxy");
      obj.shape.kind = kind_from_name(jp.at("kind").get<std::string>());
      obj.shape.frame.center = vec3_from_json(jp.at("center"));
      obj.shape.frame.half_extents = vec3_from_json(jp.at("half_extents"));
      if (jp.contains("r")) obj.shape.frame.r = geom::Rotation::from_matrix(mat3_from_json(jp["r"]));
      if (jp.contains("mesh")) {
        proxy::TriMesh mesh;
        for (const auto& v : jp["mesh"].at("vertices")) mesh.vertices.push_back(vec3_from_json(v));
        for (const auto& t : jp["mesh"].at("triangles"))
          mesh.triangles.push_back({t[0].get<int>(), t[1].get<int>(), t[2].get<int>()});
        obj.shape.mesh = std::move(mesh);
      }
      obj.shape.validate();
      if (jo.contains("model_pts")) {
        for (const auto& v : jo["model_pts"]) obj.model_pts.push_back(vec3_from_json(v));
        obj.diameter = jo.at("diameter").get<double>();
      }
      for (const auto& jv : jo.at("views")) {
        ViewRecord view;
        view.image_ref = jv.at("image").get<std::string>();
        view.pose.r = geom::Rotation::from_matrix(mat3_from_json(jv.at("R")));
        view.pose.t = vec3_from_json(jv.at("t"));
        view.intrinsics.fx = jv.at("fx").get<double>();
        view.intrinsics.fy = jv.at("fy").get<double>();
        view.intrinsics.cx = jv.at("cx").get<double>();
        view.intrinsics.cy = jv.at("cy").get<double>();
        view.intrinsics.width = jv.at("width").get<int>();
        view.intrinsics.height = jv.at("height").get<int>();
        view.intrinsics.validate();
        if (jv.contains("bbox")) {
          const auto& b = jv["bbox"];
          view.bbox2d = {{b[0].get<double>(), b[1].get<double>(), b[2].get<double>(),
                          b[3].get<double>()}};
        }
        if (!std::filesystem::exists(m.root / view.image_ref))
          fail(ErrorKind::MissingFile, (m.root / view.image_ref).string());
        obj.views.push_back(std::move(view));
      }
      if (obj.views.empty()) fail(ErrorKind::ParseError, "object without views: " + obj.id);
      m.objects.push_back(std::move(obj));
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::ParseError, std::string("manifest: ") + e.what());
  }
  return m;
}

void write_manifest(const Manifest& manifest, const std::filesystem::path& path) {
  json doc;
  doc["format"] = "mfos-manifest";
  doc["version"] = 1;
  doc["objects"] = json::array();
  for (const auto& obj : manifest.objects) {
    json jo;
    jo["id"] = obj.id;
    json jp;
    jp["kind"] = kind_name(obj.shape.kind);
    jp["center"] = vec3_to_json(obj.shape.frame.center);
    jp["half_extents"] = vec3_to_json(obj.shape.frame.half_extents);
    jp["r"] = mat3_to_json(obj.shape.frame.r.matrix());
    if (obj.shape.mesh) {
      json jm;
      jm["vertices"] = json::array();
      for (const auto& v : obj.shape.mesh->vertices) jm["vertices"].push_back(vec3_to_json(v));
      jm["triangles"] = json::array();
      for (const auto& t : obj.shape.mesh->triangles)
        jm["triangles"].push_back(json::array({t[0], t[1], t[2]}));
      jp["mesh"] = std::move(jm);
    }
    jo["proxy"] = std::move(jp);
    if (!obj.model_pts.empty()) {
      jo["model_pts"] = json::array();
      for (const auto& v : obj.model_pts) jo["model_pts"].push_back(vec3_to_json(v));
      jo["diameter"] = obj.diameter;
    }
    jo["views"] = json::array();
    for (const auto& view : obj.views) {
      json jv;
      jv["image"] = view.image_ref;
      jv["R"] = mat3_to_json(view.pose.r.matrix());
      jv["t"] = vec3_to_json(view.pose.t);
      jv["fx"] = view.intrinsics.fx;
      jv["fy"] = view.intrinsics.fy;
      jv["cx"] = view.intrinsics.cx;
      jv["cy"] = view.intrinsics.cy;
      jv["width"] = view.intrinsics.width;
      jv["height"] = view.intrinsics.height;
      if (view.bbox2d)
        jv["bbox"] = json::array(
            {(*view.bbox2d)[0], (*view.bbox2d)[1], (*view.bbox2d)[2], (*view.bbox2d)[3]});
      jo["views"].push_back(std::move(jv));
    }
    doc["objects"].push_back(std::move(jo));
  }
  io::write_text_file(path, doc.dump(1));
}

ImageU8 load_view_image(const Manifest& manifest, const ViewRecord& view) {
  return io::read_png(manifest.root / view.image_ref);
}

const ImageF32& ImageCache::get(const ViewRecord& view) {
  auto it = cache_.find(view.image_ref);
  if (it != cache_.end()) return it->second;
  ImageU8 raw = load_view_image(*manifest_, view);
  if (raw.channels == 1) {
    ImageU8 rgb(raw.width, raw.height, 3);
    for (int y = 0; y < raw.height; ++y)
      for (int x = 0; x < raw.width; ++x)
        for (int c = 0; c < 3; ++c) rgb.at(x, y, c) = raw.at(x, y, 0);
    raw = std::move(rgb);
  }
  auto [ins, ok] = cache_.emplace(view.image_ref, to_f32(raw));
  (void)ok;
  return ins->second;
}

// Continuous pixel coordinates u with projection u = fx X/Z + cx; pixel index
// ix has center ix + 0.5. The target->source map is
//   src = w + R(roll) (x0,y0 + tgt/s - w)
// about the (jittered) window center w. An in-plane image rotation about any
// point equals a camera roll about the optical axis plus a window shift
// (exact when fx == fy), so the roll comes back as a camera rotation and
// everything else folds into the adjusted intrinsics:
//   tgt = s R(-roll) (src - b),  b = w + R(roll) ((x0,y0) - w)
//   fx' = s fx,  (cx',cy') = s R(-roll) ((cx,cy) - b)
CropResult crop_resize(const ImageF32& img, const geom::Intrinsics& src_k,
                       const std::array<double, 4>& bbox, int out_res,
                       const std::optional<CropAugment>& aug, Rng& rng) {
  double bw = bbox[2] - bbox[0], bh = bbox[3] - bbox[1];
  if (!(bw > 0) || !(bh > 0)) fail(ErrorKind::EmptyBBox, "bbox has nonpositive extent");

  // A bbox covering the whole (already square, already sized) image is a
  // pass-through; there is no context left for the margin to add.
  const bool no_aug = !aug || aug->is_identity();
  if (no_aug && bbox[0] == 0 && bbox[1] == 0 && bbox[2] == double(img.width) &&
      bbox[3] == double(img.height) && out_res == img.width && out_res == img.height) {
    CropResult out;
    out.image = img;
    out.k = src_k;
    return out;
  }

  double wx = 0.5 * (bbox[0] + bbox[2]);
  double wy = 0.5 * (bbox[1] + bbox[3]);
  double side = 1.2 * std::max(bw, bh);
  double roll = 0.0;

  if (aug && !aug->is_identity()) {
    side *= rng.uniform(aug->scale_lo, aug->scale_hi);
    wx += rng.uniform(-aug->shift_frac, aug->shift_frac) * side;
    wy += rng.uniform(-aug->shift_frac, aug->shift_frac) * side;
    roll = rng.uniform(-aug->rot_deg, aug->rot_deg) * M_PI / 180.0;
  }

  const double s = double(out_res) / side;
  const double x0 = wx - side / 2.0, y0 = wy - side / 2.0;
  const double cr = std::cos(roll), sr = std::sin(roll);

  CropResult out;
  out.image = ImageF32(out_res, out_res, img.channels);
  for (int ty = 0; ty < out_res; ++ty) {
    for (int tx = 0; tx < out_res; ++tx) {
      double u = x0 + (tx + 0.5) / s;
      double v = y0 + (ty + 0.5) / s;
      double dx = u - wx, dy = v - wy;
      double su = wx + cr * dx - sr * dy;
      double sv = wy + sr * dx + cr * dy;
      sample_bilinear(img, su - 0.5, sv - 0.5,
                      &out.image.px[(size_t(ty) * out_res + tx) * size_t(img.channels)]);
    }
  }

  const double bx = wx + cr * (x0 - wx) - sr * (y0 - wy);
  const double by = wy + sr * (x0 - wx) + cr * (y0 - wy);
  const double icr = std::cos(-roll), isr = std::sin(-roll);
  const double px = src_k.cx - bx, py = src_k.cy - by;
  out.k.width = out_res;
  out.k.height = out_res;
  out.k.fx = s * src_k.fx;
  out.k.fy = s * src_k.fy;
  out.k.cx = s * (icr * px - isr * py);
  out.k.cy = s * (isr * px + icr * py);
  out.cam_roll = roll == 0.0 ? geom::Rotation()
                             : geom::Rotation::axis_angle(geom::Vec3(0, 0, 1), -roll);
  return out;
}

TrainBatch make_batch(const Manifest& manifest, ImageCache& cache, int res,
                      const BatchSpec& spec, const BatchOptions& opts, Rng& rng) {
  if (spec.objects < 1 || spec.queries < 1 || spec.refs < 1)
    fail(ErrorKind::InvalidArgument, "batch spec counts must be >= 1");

  std::vector<int> eligible;
  for (size_t i = 0; i < manifest.objects.size(); ++i) {
    int usable = int(manifest.objects[i].views.size()) - opts.holdout;
    if (usable >= spec.queries + spec.refs) eligible.push_back(int(i));
  }
  if (int(eligible.size()) < spec.objects)
    fail(ErrorKind::InsufficientViews,
         "need " + std::to_string(spec.objects) + " objects with at least " +
             std::to_string(spec.queries + spec.refs) + " usable views");

  std::vector<int> chosen;
  for (int j : rng.sample_without_replacement(int(eligible.size()), spec.objects))
    chosen.push_back(eligible[size_t(j)]);
  std::sort(chosen.begin(), chosen.end());

  TrainBatch batch;
  batch.b = spec.objects;
  batch.nq = spec.queries;
  batch.nr = spec.refs;
  batch.res = res;

  for (int oi : chosen) {
    const ObjectRecord& obj = manifest.objects[size_t(oi)];
    const int usable = int(obj.views.size()) - opts.holdout;
    std::vector<geom::Pose> poses;
    poses.reserve(size_t(usable));
    for (int v = 0; v < usable; ++v) poses.push_back(obj.views[size_t(v)].pose);

    int n_rand = std::min(spec.n_random, spec.refs);
    std::vector<int> refs = select::train_select(poses, n_rand, spec.refs, rng);
    std::sort(refs.begin(), refs.end());

    std::vector<uint8_t> is_ref(size_t(usable), 0);
    for (int r : refs) is_ref[size_t(r)] = 1;
    std::vector<int> remaining;
    for (int v = 0; v < usable; ++v)
      if (!is_ref[size_t(v)]) remaining.push_back(v);
    std::vector<int> queries;
    for (int j : rng.sample_without_replacement(int(remaining.size()), spec.queries))
      queries.push_back(remaining[size_t(j)]);
    std::sort(queries.begin(), queries.end());

    // one frame perturbation per object, shared by every view in the item
    geom::FramePerturbation pert = opts.perturb_frames ? geom::FramePerturbation::sample(rng)
                                                       : geom::FramePerturbation::identity();
    proxy::ProxyShape shape = obj.shape;
    shape.frame = geom::perturb_frame(obj.shape.frame, pert);

    batch.object_indices.push_back(oi);
    batch.frames.push_back(shape.frame);
    batch.ref_views.push_back(refs);
    batch.query_views.push_back(queries);

    auto prepare = [&](int vidx, bool is_query) {
      const ViewRecord& view = obj.views[size_t(vidx)];
      const ImageF32& src = cache.get(view);
      ImageF32 img;
      geom::Intrinsics k = view.intrinsics;
      geom::Pose pose = view.pose;
      if (!view.bbox2d && src.width == res && src.height == res) {
        img = src;
      } else {
        std::array<double, 4> bbox = view.bbox2d
                                         ? *view.bbox2d
                                         : std::array<double, 4>{0, 0, double(src.width),
                                                                 double(src.height)};
        CropResult crop = crop_resize(src, view.intrinsics, bbox, res, opts.crop_aug, rng);
        img = std::move(crop.image);
        k = crop.k;
        pose = geom::compose(geom::Pose{crop.cam_roll, geom::Vec3::Zero()}, pose);
      }
      proxy::PointMap pm = is_query ? proxy::render_target(shape, pose, k, res, res)
                                    : proxy::render_pointmap(shape, pose, k, res, res);
      if (is_query) {
        batch.query_images.push_back(std::move(img));
        batch.query_targets.push_back(std::move(pm));
      } else {
        batch.ref_images.push_back(std::move(img));
        batch.ref_maps.push_back(std::move(pm));
      }
    };
    for (int v : refs) prepare(v, false);
    for (int v : queries) prepare(v, true);
  }
  return batch;
}

namespace {

std::array<float, 3> hsv_to_rgb(double h_deg, double s, double v) {
  double h = std::fmod(std::fmod(h_deg, 360.0) + 360.0, 360.0) / 60.0;
  int i = int(h) % 6;
  double f = h - std::floor(h);
  double p = v * (1 - s), q = v * (1 - f * s), t = v * (1 - (1 - f) * s);
  double r, g, b;
  switch (i) {
    case 0: r = v, g = t, b = p; break;
    case 1: r = q, g = v, b = p; break;
    case 2: r = p, g = v, b = t; break;
    case 3: r = p, g = q, b = v; break;
    case 4: r = t, g = p, b = v; break;
    default: r = v, g = p, b = q; break;
  }
  return {float(r), float(g), float(b)};
}

geom::Vec3 random_unit(Rng& rng) {
  for (;;) {
    geom::Vec3 v(rng.normal(), rng.normal(), rng.normal());
    double n = v.norm();
    if (n > 1e-6) return v / n;
  }
}

}  // namespace

std::filesystem::path synth_generate(int n_objects, int views_per_object, int res, uint64_t seed,
                                     const std::filesystem::path& out_dir) {
  if (n_objects < 1 || views_per_object < 1 || res < 16)
    fail(ErrorKind::InvalidArgument, "synth_generate: bad sizes");
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "images", ec);
  if (ec || !std::filesystem::is_directory(out_dir / "images"))
    fail(ErrorKind::IoError, "cannot create output directory: " + out_dir.string());

  Rng rng(seed);
  const geom::Vec3 light = geom::Vec3(0.35, 0.80, 0.49).normalized();  // object frame
  const double ambient = 0.45;

  Manifest manifest;
  manifest.root = out_dir;

  for (int o = 0; o < n_objects; ++o) {
    ObjectRecord obj;
    char idbuf[16];
    std::snprintf(idbuf, sizeof(idbuf), "obj%02d", o);
    obj.id = idbuf;

    geom::Vec3 he(rng.uniform(0.04, 0.12), rng.uniform(0.04, 0.12), rng.uniform(0.04, 0.12));
    obj.shape.kind = proxy::ShapeKind::Cuboid;
    obj.shape.frame.center = geom::Vec3::Zero();
    obj.shape.frame.half_extents = he;

    // 8 bbox corners as model vertices for the evaluation metrics
    for (int cix = 0; cix < 8; ++cix) {
      obj.model_pts.emplace_back((cix & 1 ? he.x() : -he.x()), (cix & 2 ? he.y() : -he.y()),
                                 (cix & 4 ? he.z() : -he.z()));
    }
    obj.diameter = 2.0 * he.norm();

    // distinct flat face colors: spread hues, jittered
    std::array<std::array<float, 3>, 6> face_colors;
    {
      std::vector<int> hue_order = rng.sample_without_replacement(6, 6);
      for (int f = 0; f < 6; ++f) {
        double h = 60.0 * hue_order[size_t(f)] + rng.uniform(-18.0, 18.0);
        face_colors[size_t(f)] = hsv_to_rgb(h, rng.uniform(0.7, 1.0), rng.uniform(0.75, 1.0));
      }
    }

    const double rho = he.norm();
    for (int vi = 0; vi < views_per_object; ++vi) {
      geom::Vec3 dir = random_unit(rng);
      double radius = rho * rng.uniform(3.2, 4.2);
      geom::Vec3 cam_center = radius * dir;
      geom::Vec3 target = 0.08 * rho * random_unit(rng);

      geom::Vec3 zc = (target - cam_center).normalized();
      geom::Vec3 up0 = std::abs(zc.y()) < 0.95 ? geom::Vec3(0, 1, 0) : geom::Vec3(1, 0, 0);
      geom::Vec3 xc = up0.cross(zc).normalized();
      geom::Vec3 yc = zc.cross(xc);
      geom::Mat3 rm;
      rm.row(0) = xc.transpose();
      rm.row(1) = yc.transpose();
      rm.row(2) = zc.transpose();
      double roll = rng.uniform(-20.0, 20.0) * M_PI / 180.0;
      geom::Rotation rot = geom::Rotation::axis_angle(geom::Vec3(0, 0, 1), roll) *
                           geom::Rotation::from_matrix(rm);
      geom::Pose pose{rot, -(rot * cam_center)};

      ViewRecord view;
      view.pose = pose;
      view.intrinsics.width = res;
      view.intrinsics.height = res;
      // fill is relative to the bounding sphere; the box silhouette is
      // smaller, so values near 1 keep the object large without heavy
      // corner clipping
      double fill = rng.uniform(0.88, 1.06);
      view.intrinsics.fx = view.intrinsics.fy = fill * res * radius / (2.0 * rho);
      view.intrinsics.cx = res / 2.0 + rng.uniform(-0.02, 0.02) * res;
      view.intrinsics.cy = res / 2.0 + rng.uniform(-0.02, 0.02) * res;
      view.intrinsics.validate();

      auto bg = hsv_to_rgb(rng.uniform(0.0, 360.0), rng.uniform(0.0, 0.25), rng.uniform(0.05, 0.22));
      ImageU8 img(res, res, 3);
      for (int y = 0; y < res; ++y) {
        for (int x = 0; x < res; ++x) {
          auto sp = proxy::trace_pixel(obj.shape, pose, view.intrinsics, x + 0.5, y + 0.5);
          std::array<float, 3> rgb = bg;
          if (sp) {
            // wrap-around Lambertian keeps back faces distinguishable
            double diffuse = 0.5 * (1.0 + sp->normal_obj.dot(light));
            double shade = ambient + (1.0 - ambient) * diffuse;
            const auto& fc = face_colors[size_t(std::max(sp->face, 0))];
            rgb = {float(fc[0] * shade), float(fc[1] * shade), float(fc[2] * shade)};
          }
          for (int ch = 0; ch < 3; ++ch)
            img.at(x, y, ch) = uint8_t(std::lround(std::clamp(rgb[size_t(ch)], 0.f, 1.f) * 255.f));
        }
      }
      char name[64];
      std::snprintf(name, sizeof(name), "images/%s_v%03d.png", obj.id.c_str(), vi);
      io::write_png(out_dir / name, img);
      view.image_ref = name;
      obj.views.push_back(std::move(view));
    }
    manifest.objects.push_back(std::move(obj));
  }

  std::filesystem::path mpath = out_dir / "manifest.json";
  write_manifest(manifest, mpath);
  return mpath;
}

Manifest bop_convert(const std::filesystem::path& scene_dir,
                     const std::filesystem::path& models_info_json) {
  auto parse_file = [](const std::filesystem::path& p) {
    json j = json::parse(io::read_text_file(p), nullptr, false);
    if (j.is_discarded()) fail(ErrorKind::ParseError, "not valid JSON: " + p.string());
    return j;
  };
  json gt = parse_file(scene_dir / "scene_gt.json");
  json cam = parse_file(scene_dir / "scene_camera.json");

  std::filesystem::path minfo_path = models_info_json;
  if (minfo_path.empty()) minfo_path = scene_dir / "models_info.json";
  if (!std::filesystem::exists(minfo_path))
    fail(ErrorKind::MissingFile, "models_info.json required for proxy dimensions: " +
                                     minfo_path.string());
  json minfo = parse_file(minfo_path);

  std::vector<int64_t> frames;
  for (auto& [key, val] : gt.items()) frames.push_back(std::stoll(key));
  std::sort(frames.begin(), frames.end());

  Manifest manifest;
  manifest.root = scene_dir;
  std::map<int64_t, size_t> object_slot;

  for (int64_t frame : frames) {
    std::string key = std::to_string(frame);
    if (!cam.contains(key)) fail(ErrorKind::ParseError, "scene_camera missing frame " + key);
    const json& ck = cam[key]["cam_K"];
    char img_name[32];
    std::snprintf(img_name, sizeof(img_name), "rgb/%06lld.png", static_cast<long long>(frame));
    std::filesystem::path img_path = scene_dir / img_name;
    if (!std::filesystem::exists(img_path)) fail(ErrorKind::MissingFile, img_path.string());
    ImageU8 img = io::read_png(img_path);

    for (const json& entry : gt[key]) {
      int64_t obj_id = entry.at("obj_id").get<int64_t>();
      auto it = object_slot.find(obj_id);
      if (it == object_slot.end()) {
        std::string ms = std::to_string(obj_id);
        if (!minfo.contains(ms))
          fail(ErrorKind::ParseError, "models_info has no entry for object " + ms);
        const json& mi = minfo[ms];
        ObjectRecord obj;
        obj.id = "bop_obj" + ms;
        obj.shape.kind = proxy::ShapeKind::Cuboid;
        geom::Vec3 size(mi.at("size_x").get<double>(), mi.at("size_y").get<double>(),
                        mi.at("size_z").get<double>());
        geom::Vec3 mn(mi.at("min_x").get<double>(), mi.at("min_y").get<double>(),
                      mi.at("min_z").get<double>());
        obj.shape.frame.half_extents = size / 2000.0;          // mm -> m
        obj.shape.frame.center = (mn + size / 2.0) / 1000.0;   // bbox center, object frame
        obj.diameter = mi.value("diameter", 0.0) / 1000.0;
        object_slot[obj_id] = manifest.objects.size();
        manifest.objects.push_back(std::move(obj));
        it = object_slot.find(obj_id);
      }
      ViewRecord view;
      view.image_ref = img_name;
      geom::Mat3 r;
      const json& jr = entry.at("cam_R_m2c");
      for (int i = 0; i < 9; ++i) r(i / 3, i % 3) = jr[size_t(i)].get<double>();
      view.pose.r = geom::Rotation::from_matrix(r);
      const json& jt = entry.at("cam_t_m2c");
      view.pose.t = geom::Vec3(jt[0].get<double>(), jt[1].get<double>(), jt[2].get<double>()) /
                    1000.0;  // mm -> m
      view.intrinsics.fx = ck[0].get<double>();
      view.intrinsics.fy = ck[4].get<double>();
      view.intrinsics.cx = ck[2].get<double>();
      view.intrinsics.cy = ck[5].get<double>();
      view.intrinsics.width = img.width;
      view.intrinsics.height = img.height;
      view.intrinsics.validate();
      manifest.objects[it->second].views.push_back(std::move(view));
    }
  }
  return manifest;
}

}  // namespace mfos::data

