#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "mfos/geom.hpp"
#include "mfos/image.hpp"
#include "mfos/proxy.hpp"
#include "mfos/rng.hpp"

namespace mfos::data {

struct ViewRecord {
  std::string image_ref;  // path relative to the manifest directory
  geom::Pose pose;
  geom::Intrinsics intrinsics;
  std::optional<std::array<double, 4>> bbox2d;  // x0,y0,x1,y1 pixels
};

struct ObjectRecord {
  std::string id;
  proxy::ProxyShape shape;
  std::vector<ViewRecord> views;
  std::vector<geom::Vec3> model_pts;  // optional; metrics only
  double diameter = 0;

  std::vector<geom::Pose> poses() const {
    std::vector<geom::Pose> p;
    p.reserve(views.size());
    for (const auto& v : views) p.push_back(v.pose);
    return p;
  }
};

struct Manifest {
  std::filesystem::path root;
  std::vector<ObjectRecord> objects;

  const ObjectRecord& object(const std::string& id) const;
  int object_index(const std::string& id) const;  // -1 when absent
};

// JSON manifest, schema in docs/formats.md. Loading validates poses and
// intrinsics and checks that every referenced image file exists.
Manifest load_manifest(const std::filesystem::path& path);
void write_manifest(const Manifest& manifest, const std::filesystem::path& path);

ImageU8 load_view_image(const Manifest& manifest, const ViewRecord& view);

// Decoded-image cache keyed by image_ref.
class ImageCache {
 public:
  explicit ImageCache(const Manifest* manifest) : manifest_(manifest) {}
  const ImageF32& get(const ViewRecord& view);

 private:
  const Manifest* manifest_;
  std::unordered_map<std::string, ImageF32> cache_;
};

struct CropAugment {
  double shift_frac = 0.0;  // +- fraction of the crop side
  double scale_lo = 1.0;
  double scale_hi = 1.0;
  double rot_deg = 0.0;  // +- in-plane rotation

  bool is_identity() const {
    return shift_frac == 0.0 && scale_lo == 1.0 && scale_hi == 1.0 && rot_deg == 0.0;
  }
};

struct CropResult {
  ImageF32 image;
  geom::Intrinsics k;      // adjusted so projection stays consistent
  geom::Rotation cam_roll;  // in-plane camera rotation; apply pose' = (cam_roll, 0) o pose
};

// Square crop around the bbox (side = 1.2 * max dimension), optional jitter,
// bilinear resample to out_res. The in-plane rotation part of the
// augmentation is returned as a camera roll since intrinsics cannot express
// it.
CropResult crop_resize(const ImageF32& img, const geom::Intrinsics& src_k,
                       const std::array<double, 4>& bbox, int out_res,
                       const std::optional<CropAugment>& aug, Rng& rng);

struct BatchSpec {
  int objects = 16;
  int queries = 16;  // N_Q
  int refs = 32;     // N_R
  int n_random = 8;  // random picks inside the reference selection

  static BatchSpec paper() { return {}; }
  static BatchSpec toy() { return {2, 2, 4, 1}; }
};

struct BatchOptions {
  bool perturb_frames = true;
  std::optional<CropAugment> crop_aug;
  int holdout = 0;  // trailing views per object excluded from sampling
};

struct TrainBatch {
  int b = 0, nq = 0, nr = 0, res = 0;
  std::vector<ImageF32> query_images;         // B*NQ
  std::vector<proxy::PointMap> query_targets;  // B*NQ
  std::vector<ImageF32> ref_images;           // B*NR
  std::vector<proxy::PointMap> ref_maps;       // B*NR
  std::vector<int> object_indices;            // B
  std::vector<geom::RefFrame> frames;         // B, the per-object perturbed frame
  std::vector<std::vector<int>> query_views;  // B x NQ
  std::vector<std::vector<int>> ref_views;    // B x NR
};

// Assembles one training batch: per object, references via the random+greedy
// mix, queries from the remaining views, and one frame perturbation applied
// to every pointmap and target of that object.
TrainBatch make_batch(const Manifest& manifest, ImageCache& cache, int res,
                      const BatchSpec& spec, const BatchOptions& opts, Rng& rng);

// Procedural cuboid dataset: per-face flat colors with Lambertian shading,
// cameras jittered on a sphere, poses exact by construction. Returns the
// manifest path.
std::filesystem::path synth_generate(int n_objects, int views_per_object, int res, uint64_t seed,
                                     const std::filesystem::path& out_dir);

// Minimal BOP scene reader: scene_gt.json + scene_camera.json (+ optional
// models_info.json for proxy dimensions) -> manifest. Conversion only.
Manifest bop_convert(const std::filesystem::path& scene_dir,
                     const std::filesystem::path& models_info_json = {});

}  // namespace mfos::data
