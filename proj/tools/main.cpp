#include <CLI11.hpp>
#include <json.hpp>

#include <iostream>

#include "mfos/checkpoint.hpp"
#include "mfos/io.hpp"
#include "mfos/pipeline.hpp"

using namespace mfos;

namespace {

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::NoConsensus:
    case ErrorKind::DegenerateConfiguration:
    case ErrorKind::BehindCamera:
    case ErrorKind::TooFewPoints:
    case ErrorKind::NonPositiveDepth:
    case ErrorKind::NoGradPath:
    case ErrorKind::ShapeMismatch:
      return 3;  // numerical failure
    case ErrorKind::BadK:
      return 1;  // usage
    default:
      return 2;  // data error
  }
}

nlohmann::json pose_to_json(const geom::Pose& p) {
  nlohmann::json r = nlohmann::json::array();
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) r.push_back(p.r.matrix()(i, j));
  return {{"R", r}, {"t", {p.t.x(), p.t.y(), p.t.z()}}};
}

void emit(const nlohmann::json& doc, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << doc.dump(1) << "\n";
  } else {
    io::write_text_file(out_path, doc.dump(1) + "\n");
  }
}

select::ViewMetric parse_metric(const std::string& s) {
  if (s == "direction") return select::ViewMetric::Direction;
  if (s == "so3") return select::ViewMetric::Geodesic;
  fail(ErrorKind::InvalidArgument, "unknown view metric: " + s);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"One-shot object pose estimation from pose-annotated reference images"};
  app.require_subcommand(1);

  // ---- synth ----
  auto* synth = app.add_subcommand("synth", "Generate a synthetic cuboid dataset");
  int sy_objects = 8, sy_views = 64, sy_res = 64;
  uint64_t sy_seed = 0;
  std::string sy_out;
  synth->add_option("--n-objects", sy_objects, "Number of objects")->capture_default_str();
  synth->add_option("--views", sy_views, "Views per object")->capture_default_str();
  synth->add_option("--res", sy_res, "Image resolution")->capture_default_str();
  synth->add_option("--seed", sy_seed, "RNG seed")->capture_default_str();
  synth->add_option("--out", sy_out, "Output directory")->required();

  // ---- train ----
  auto* train = app.add_subcommand("train", "Train a model on a manifest dataset");
  std::string tr_manifest, tr_preset = "toy", tr_ckpt = "model.ckpt", tr_log, tr_resume;
  int64_t tr_steps = -1;
  uint64_t tr_seed = 0;
  int tr_b = -1, tr_nq = -1, tr_nr = -1, tr_holdout = 0;
  double tr_base_lr = -1, tr_min_lr = -1, tr_warmup = -1;
  train->add_option("--manifest", tr_manifest, "Dataset manifest")->required();
  train->add_option("--preset", tr_preset, "Config preset: toy or paper")->capture_default_str();
  train->add_option("--steps", tr_steps, "Training steps (preset default when unset)");
  train->add_option("--seed", tr_seed, "RNG seed")->capture_default_str();
  train->add_option("--ckpt-out", tr_ckpt, "Checkpoint output path")->capture_default_str();
  train->add_option("--loss-log", tr_log, "JSONL loss curve path");
  train->add_option("--resume", tr_resume, "Resume from checkpoint");
  train->add_option("-B,--batch-objects", tr_b, "Objects per batch");
  train->add_option("--nq", tr_nq, "Queries per object");
  train->add_option("--nr", tr_nr, "References per object");
  train->add_option("--base-lr", tr_base_lr, "Base learning rate");
  train->add_option("--min-lr", tr_min_lr, "Final learning rate");
  train->add_option("--warmup-frac", tr_warmup, "Warmup fraction of total steps");
  train->add_option("--holdout", tr_holdout, "Trailing views per object kept out of training")
      ->capture_default_str();

  // ---- infer ----
  auto* infer = app.add_subcommand("infer", "Estimate the pose in one query view");
  std::string in_manifest, in_ckpt, in_object, in_dump, in_out;
  int in_query = 0, in_k = 4, in_seed_view = 0;
  uint64_t in_seed = 0;
  double in_conf = 2.5;
  std::vector<int> in_refs;
  bool in_oracle = false;
  infer->add_option("--manifest", in_manifest, "Dataset manifest")->required();
  infer->add_option("--ckpt", in_ckpt, "Model checkpoint");
  infer->add_option("--object-id", in_object, "Object id")->required();
  infer->add_option("--query-index", in_query, "Query view index")->required();
  infer->add_option("-K,--refs", in_k, "Number of reference views")->capture_default_str();
  infer->add_option("--conf-threshold", in_conf, "Confidence filter tau")->capture_default_str();
  infer->add_option("--seed", in_seed, "RNG seed")->capture_default_str();
  infer->add_option("--seed-view", in_seed_view, "Farthest-sampling start view")
      ->capture_default_str();
  infer->add_option("--ref-indices", in_refs, "Explicit reference view indices");
  infer->add_option("--dump-maps", in_dump, "Prefix for coordinate/confidence dumps");
  infer->add_option("--out", in_out, "Write the result JSON here instead of stdout");
  infer->add_flag("--oracle", in_oracle, "Use ground-truth renders as predictions (testing)")
      ->group("");

  // ---- eval ----
  auto* eval = app.add_subcommand("eval", "Evaluate pose accuracy over a split");
  std::string ev_manifest, ev_ckpt, ev_split = "holdout:8", ev_out;
  int ev_k = 4;
  uint64_t ev_seed = 0;
  double ev_conf = 2.5;
  bool ev_oracle = false, ev_per_query = false;
  eval->add_option("--manifest", ev_manifest, "Dataset manifest")->required();
  eval->add_option("--ckpt", ev_ckpt, "Model checkpoint");
  eval->add_option("-K,--refs", ev_k, "Number of reference views")->capture_default_str();
  eval->add_option("--split", ev_split, "Query split: all or holdout:N")->capture_default_str();
  eval->add_option("--seed", ev_seed, "RNG seed")->capture_default_str();
  eval->add_option("--conf-threshold", ev_conf, "Confidence filter tau")->capture_default_str();
  eval->add_option("--out-report", ev_out, "Report JSON path (stdout when unset)");
  eval->add_flag("--per-query", ev_per_query, "Include raw per-query errors in the report");
  eval->add_flag("--oracle", ev_oracle, "Use ground-truth renders as predictions (testing)")
      ->group("");

  // ---- render-proxy ----
  auto* rproxy = app.add_subcommand("render-proxy", "Render a proxy-shape pose encoding");
  std::string rp_manifest, rp_object, rp_kind, rp_out;
  int rp_view = 0;
  rproxy->add_option("--manifest", rp_manifest, "Dataset manifest")->required();
  rproxy->add_option("--object-id", rp_object, "Object id")->required();
  rproxy->add_option("--view-index", rp_view, "View index")->required();
  rproxy->add_option("--shape-kind", rp_kind, "cuboid, ellipsoid or mesh (manifest's by default)");
  rproxy->add_option("--out", rp_out, "Output path prefix")->required();

  // ---- select-views ----
  auto* sel = app.add_subcommand("select-views", "Greedy farthest view selection");
  std::string sv_manifest, sv_object, sv_metric = "direction", sv_out;
  int sv_k = 4, sv_seed_idx = 0;
  sel->add_option("--manifest", sv_manifest, "Dataset manifest")->required();
  sel->add_option("--object-id", sv_object, "Object id")->required();
  sel->add_option("-k", sv_k, "Number of views to select")->capture_default_str();
  sel->add_option("--seed-idx", sv_seed_idx, "Seed view index")->capture_default_str();
  sel->add_option("--metric", sv_metric, "direction or so3")->capture_default_str();
  sel->add_option("--out", sv_out, "Write the JSON here instead of stdout");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) {
      auto path = data::synth_generate(sy_objects, sy_views, sy_res, sy_seed, sy_out);
      std::cout << path.string() << "\n";
      return 0;
    }

    if (train->parsed()) {
      data::Manifest manifest = data::load_manifest(tr_manifest);
      pipeline::TrainConfig cfg;
      if (tr_preset == "toy") {
        cfg = pipeline::TrainConfig::toy();
      } else if (tr_preset == "paper") {
        cfg = pipeline::TrainConfig::paper();
      } else {
        fail(ErrorKind::InvalidArgument, "unknown preset: " + tr_preset);
      }
      if (tr_steps >= 0) cfg.steps = tr_steps;
      if (tr_b > 0) cfg.batch.objects = tr_b;
      if (tr_nq > 0) cfg.batch.queries = tr_nq;
      if (tr_nr > 0) cfg.batch.refs = tr_nr;
      if (tr_base_lr > 0) cfg.schedule.base_lr = tr_base_lr;
      if (tr_min_lr > 0) cfg.schedule.min_lr = tr_min_lr;
      if (tr_warmup >= 0) cfg.schedule.warmup_frac = tr_warmup;
      cfg.holdout = tr_holdout;
      cfg.seed = tr_seed;
      pipeline::TrainResult res = pipeline::train_loop(manifest, cfg, tr_ckpt, tr_log, tr_resume);
      nlohmann::json out{{"steps", res.steps_done},
                         {"final_ckpt", res.final_ckpt.string()},
                         {"best_ckpt", res.best_ckpt.string()}};
      if (!res.losses.empty()) {
        out["first_loss"] = res.losses.front();
        out["last_loss"] = res.losses.back();
      }
      std::cout << out.dump(1) << "\n";
      return 0;
    }

    if (infer->parsed()) {
      data::Manifest manifest = data::load_manifest(in_manifest);
      data::ImageCache cache(&manifest);
      engine::ParamStore<float> store;
      std::optional<model::Network<float>> net;
      if (!in_oracle) {
        if (in_ckpt.empty()) fail(ErrorKind::InvalidArgument, "--ckpt is required");
        model::ModelConfig mc = pipeline::load_network(in_ckpt, store);
        net.emplace(mc, &store, 0);
      }
      pipeline::InferOptions opts;
      opts.k_refs = in_k;
      opts.seed = in_seed;
      opts.seed_view = in_seed_view;
      opts.ref_indices = in_refs;
      opts.oracle = in_oracle;
      opts.dump_prefix = in_dump;
      opts.pnp.conf_threshold = in_conf;
      pipeline::InferResult res =
          pipeline::infer_one(manifest, cache, net ? &*net : nullptr, in_object, in_query, opts);
      nlohmann::json out{{"object", in_object},
                         {"query", in_query},
                         {"refs", res.ref_indices},
                         {"pose", pose_to_json(res.pose)},
                         {"correspondences", res.n_correspondences},
                         {"inliers", res.n_inliers},
                         {"mean_inlier_reproj_px", res.mean_inlier_reproj_px},
                         {"trials", res.trials}};
      emit(out, in_out);
      return 0;
    }

    if (eval->parsed()) {
      data::Manifest manifest = data::load_manifest(ev_manifest);
      engine::ParamStore<float> store;
      std::optional<model::Network<float>> net;
      if (!ev_oracle) {
        if (ev_ckpt.empty()) fail(ErrorKind::InvalidArgument, "--ckpt is required");
        model::ModelConfig mc = pipeline::load_network(ev_ckpt, store);
        net.emplace(mc, &store, 0);
      }
      pipeline::EvalOptions opts;
      opts.k_refs = ev_k;
      opts.split = ev_split;
      opts.seed = ev_seed;
      opts.oracle = ev_oracle;
      opts.per_query = ev_per_query;
      opts.pnp.conf_threshold = ev_conf;
      nlohmann::json report = pipeline::eval_run(manifest, net ? &*net : nullptr, opts);
      emit(report, ev_out);
      return 0;
    }

    if (rproxy->parsed()) {
      data::Manifest manifest = data::load_manifest(rp_manifest);
      const data::ObjectRecord& obj = manifest.object(rp_object);
      if (rp_view < 0 || rp_view >= int(obj.views.size()))
        fail(ErrorKind::InvalidArgument, "view index out of range");
      proxy::ProxyShape shape = obj.shape;
      if (!rp_kind.empty()) {
        if (rp_kind == "cuboid") shape.kind = proxy::ShapeKind::Cuboid;
        else if (rp_kind == "ellipsoid") shape.kind = proxy::ShapeKind::Ellipsoid;
        else if (rp_kind == "mesh") shape.kind = proxy::ShapeKind::Mesh;
        else fail(ErrorKind::InvalidArgument, "unknown shape kind: " + rp_kind);
      }
      const data::ViewRecord& view = obj.views[size_t(rp_view)];
      const int h = view.intrinsics.height, w = view.intrinsics.width;
      proxy::PointMap pm = proxy::render_pointmap(shape, view.pose, view.intrinsics, h, w);

      ImageU8 coord_img(w, h, 3);
      ImageU8 mask_img(w, h, 1);
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          const float* c = pm.at(x, y);
          for (int ch = 0; ch < 3; ++ch) {
            float v = std::clamp((c[ch] + 1.f) / 2.f, 0.f, 1.f);
            coord_img.at(x, y, ch) = uint8_t(std::lround(v * 255.f));
          }
          mask_img.at(x, y, 0) = pm.hit(x, y) ? 255 : 0;
        }
      }
      io::write_png(rp_out + "_coords.png", coord_img);
      io::write_png(rp_out + "_mask.png", mask_img);
      io::write_raw_f32(rp_out + "_coords.mft", {uint32_t(h), uint32_t(w), 3}, pm.coords);
      io::write_raw_u8(rp_out + "_mask.mft", {uint32_t(h), uint32_t(w)}, pm.mask);
      return 0;
    }

    if (sel->parsed()) {
      data::Manifest manifest = data::load_manifest(sv_manifest);
      const data::ObjectRecord& obj = manifest.object(sv_object);
      std::vector<geom::Pose> poses = obj.poses();
      auto indices = select::farthest_sample(poses, sv_k, sv_seed_idx, parse_metric(sv_metric));
      nlohmann::json out{{"object", sv_object},
                         {"k", sv_k},
                         {"seed_idx", sv_seed_idx},
                         {"metric", sv_metric},
                         {"indices", indices}};
      emit(out, sv_out);
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
