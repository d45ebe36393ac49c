#include "mfos/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "mfos/checkpoint.hpp"
#include "mfos/io.hpp"

namespace mfos::pipeline {

using engine::Tensor;

TrainResult train_loop(const data::Manifest& manifest, TrainConfig cfg,
                       const std::filesystem::path& ckpt_out,
                       const std::filesystem::path& loss_log,
                       const std::filesystem::path& resume) {
  engine::ParamStore<float> store;
  if (!resume.empty()) {
    nlohmann::json header = engine::load_checkpoint(resume, store);
    cfg.model = model::ModelConfig::from_json(header.at("model"));
  }
  cfg.model.validate();
  cfg.schedule.total_steps = cfg.steps;
  model::Network<float> net(cfg.model, &store, derive_seed(cfg.seed, 0xA110C));

  data::ImageCache cache(&manifest);
  data::BatchOptions bopts;
  bopts.perturb_frames = cfg.perturb_frames;
  bopts.crop_aug = cfg.crop_aug;
  bopts.holdout = cfg.holdout;

  std::ofstream log;
  if (!loss_log.empty()) {
    log.open(loss_log, store.step > 0 ? std::ios::app : std::ios::trunc);
    if (!log) fail(ErrorKind::IoError, "cannot open loss log: " + loss_log.string());
    log.precision(9);
  }

  nlohmann::json header{{"model", cfg.model.to_json()}, {"train", cfg.to_json()}};

  TrainResult result;
  float best_loss = std::numeric_limits<float>::infinity();
  // keep the best weights in memory, written once at the end
  std::vector<std::pair<std::string, std::vector<float>>> best_params;
  std::vector<std::pair<std::string, engine::AdamState<float>>> best_moments;
  int64_t best_step = -1;

  for (int64_t step = store.step; step < cfg.steps; ++step) {
    Rng rng(derive_seed(cfg.seed, 0xBA7C0000ULL + uint64_t(step)));
    data::TrainBatch batch =
        data::make_batch(manifest, cache, cfg.model.img_res, cfg.batch, bopts, rng);

    Tensor<float> qimg = model::images_to_tensor<float>(batch.query_images);
    Tensor<float> rimg = model::images_to_tensor<float>(batch.ref_images);
    Tensor<float> rmap = model::pointmaps_to_tensor<float>(batch.ref_maps);
    Tensor<float> target = model::pointmaps_to_tensor<float>(batch.query_targets);
    Tensor<float> mask = model::masks_to_tensor<float>(batch.query_targets);

    model::PredictionMaps<float> maps =
        net.forward_batch(qimg, rimg, rmap, batch.b, batch.nq, batch.nr);
    Tensor<float> l = loss::final_loss(maps.coords, maps.conf_raw, target, mask, cfg.loss);

    store.zero_grad();
    engine::backward(l);
    engine::AdamWConfig ac = cfg.adamw;
    ac.lr = cfg.schedule.at(step);
    engine::adamw_step(store, ac);  // advances store.step

    float lv = l.item();
    result.losses.push_back(lv);
    if (log)
      log << "{\"step\":" << step << ",\"loss\":" << lv << ",\"lr\":" << ac.lr << "}\n" << std::flush;

    if (lv < best_loss) {
      best_loss = lv;
      best_step = step;
      best_params.clear();
      best_moments.clear();
      for (const auto& name : store.names()) {
        best_params.emplace_back(name, store.get(name).to_vector());
        if (const auto* st = store.find_adam_state(name); st && !st->m.empty())
          best_moments.emplace_back(name, *st);
      }
    }
  }
  result.steps_done = store.step;

  nlohmann::json final_header = header;
  engine::save_checkpoint(ckpt_out, store, final_header);
  result.final_ckpt = ckpt_out;

  if (best_step >= 0) {
    engine::ParamStore<float> best_store;
    for (auto& [name, vals] : best_params) {
      engine::Shape shape = store.get(name).shape();
      best_store.put(name, Tensor<float>::from_vector(shape, std::move(vals)));
    }
    for (auto& [name, st] : best_moments) best_store.adam_state(name) = std::move(st);
    best_store.step = best_step + 1;
    nlohmann::json best_header = header;
    best_header["best_loss"] = best_loss;
    std::filesystem::path best_path = ckpt_out;
    best_path += ".best";
    engine::save_checkpoint(best_path, best_store, best_header);
    result.best_ckpt = best_path;
  }
  return result;
}

model::ModelConfig load_network(const std::filesystem::path& ckpt,
                                engine::ParamStore<float>& store) {
  nlohmann::json header = engine::load_checkpoint(ckpt, store);
  if (!header.contains("model"))
    fail(ErrorKind::ParseError, "checkpoint has no model config: " + ckpt.string());
  return model::ModelConfig::from_json(header["model"]);
}

namespace {

struct PreparedView {
  ImageF32 image;
  geom::Intrinsics k;
  geom::Pose pose;
};

PreparedView prepare_view(const data::Manifest& manifest, data::ImageCache& cache,
                          const data::ViewRecord& view, int res, Rng& rng) {
  (void)manifest;
  const ImageF32& src = cache.get(view);
  PreparedView out;
  out.pose = view.pose;
  if (!view.bbox2d && src.width == res && src.height == res) {
    out.image = src;
    out.k = view.intrinsics;
    return out;
  }
  std::array<double, 4> bbox =
      view.bbox2d ? *view.bbox2d
                  : std::array<double, 4>{0, 0, double(src.width), double(src.height)};
  data::CropResult crop = data::crop_resize(src, view.intrinsics, bbox, res, std::nullopt, rng);
  out.image = std::move(crop.image);
  out.k = crop.k;
  out.pose = geom::compose(geom::Pose{crop.cam_roll, geom::Vec3::Zero()}, out.pose);
  return out;
}

DensePrediction oracle_prediction(const data::ObjectRecord& obj, const PreparedView& v, int res) {
  proxy::PointMap pm = proxy::render_target(obj.shape, v.pose, v.k, res, res);
  DensePrediction pred;
  pred.height = res;
  pred.width = res;
  pred.coords.assign(pm.coords.begin(), pm.coords.end());
  pred.conf_raw.resize(size_t(res) * res);
  for (size_t i = 0; i < pred.conf_raw.size(); ++i) pred.conf_raw[i] = pm.mask[i] ? 5.f : -5.f;
  return pred;
}

void dump_maps(const DensePrediction& pred, const std::filesystem::path& prefix) {
  const int res = pred.height;
  ImageU8 coord_img(res, res, 3);
  ImageU8 conf_img(res, res, 1);
  for (int y = 0; y < res; ++y) {
    for (int x = 0; x < res; ++x) {
      const float* c = pred.coord_at(x, y);
      for (int ch = 0; ch < 3; ++ch) {
        float v = std::clamp((c[ch] + 1.f) / 2.f, 0.f, 1.f);
        coord_img.at(x, y, ch) = uint8_t(std::lround(v * 255.f));
      }
      float raw = std::clamp(pred.raw_at(x, y), -5.f, 5.f);
      conf_img.at(x, y, 0) = uint8_t(std::lround((raw + 5.f) / 10.f * 255.f));
    }
  }
  std::filesystem::path cpath = prefix;
  cpath += "_coords.png";
  std::filesystem::path fpath = prefix;
  fpath += "_conf.png";
  io::write_png(cpath, coord_img);
  io::write_png(fpath, conf_img);
  std::filesystem::path rpath = prefix;
  rpath += "_coords.mft";
  io::write_raw_f32(rpath, {uint32_t(res), uint32_t(res), 3}, pred.coords);
  std::filesystem::path qpath = prefix;
  qpath += "_conf.mft";
  io::write_raw_f32(qpath, {uint32_t(res), uint32_t(res)}, pred.conf_raw);
}

}  // namespace

InferResult infer_one(const data::Manifest& manifest, data::ImageCache& cache,
                      model::Network<float>* net, const std::string& object_id, int query_idx,
                      const InferOptions& opts) {
  const data::ObjectRecord& obj = manifest.object(object_id);
  const int n_views = int(obj.views.size());
  if (query_idx < 0 || query_idx >= n_views)
    fail(ErrorKind::InvalidArgument, "query index out of range");
  if (!opts.oracle && net == nullptr)
    fail(ErrorKind::InvalidArgument, "no network provided");

  // reference selection; the query view must never leak into the references
  std::vector<int> refs = opts.ref_indices;
  if (!refs.empty()) {
    for (int r : refs) {
      if (r < 0 || r >= n_views) fail(ErrorKind::InvalidArgument, "reference index out of range");
      if (r == query_idx)
        fail(ErrorKind::InvalidArgument,
             "query view " + std::to_string(query_idx) + " is in the reference set");
    }
  } else {
    std::vector<int> candidates;
    std::vector<geom::Pose> poses;
    for (int v = 0; v < n_views; ++v) {
      if (v == query_idx) continue;
      candidates.push_back(v);
      poses.push_back(obj.views[size_t(v)].pose);
    }
    if (opts.k_refs < 1 || opts.k_refs > int(candidates.size()))
      fail(ErrorKind::BadK, "object has too few views for K=" + std::to_string(opts.k_refs));
    int seed_view = std::clamp(opts.seed_view, 0, int(candidates.size()) - 1);
    for (int ci : select::farthest_sample(poses, opts.k_refs, seed_view, opts.metric))
      refs.push_back(candidates[size_t(ci)]);
  }

  const int res = net ? net->config().img_res : obj.views[size_t(query_idx)].intrinsics.height;
  Rng rng(derive_seed(opts.seed, 0x1F0E));

  PreparedView query = prepare_view(manifest, cache, obj.views[size_t(query_idx)], res, rng);

  DensePrediction pred;
  if (opts.oracle) {
    pred = oracle_prediction(obj, query, res);
  } else {
    engine::NoGradGuard ng;
    std::vector<ImageF32> rimgs;
    std::vector<proxy::PointMap> rmaps;
    for (int r : refs) {
      PreparedView pv = prepare_view(manifest, cache, obj.views[size_t(r)], res, rng);
      rmaps.push_back(proxy::render_pointmap(obj.shape, pv.pose, pv.k, res, res));
      rimgs.push_back(std::move(pv.image));
    }
    std::vector<ImageF32> qimg{query.image};
    model::PredictionMaps<float> maps =
        net->forward(model::images_to_tensor<float>(qimg), model::images_to_tensor<float>(rimgs),
                     model::pointmaps_to_tensor<float>(rmaps));
    pred = model::snapshot(maps, 0);
  }

  if (!opts.dump_prefix.empty()) dump_maps(pred, opts.dump_prefix);

  pnp::CorrespondenceSet corr = pnp::extract_correspondences(pred, opts.pnp);
  corr = pnp::denormalize(corr, obj.shape.frame);
  pnp::RobustResult rr = pnp::robust_pnp(corr, query.k, opts.pnp, rng);

  InferResult out;
  // report the pose in the original (un-rolled) camera of the query view
  out.pose = rr.pose;
  out.ref_indices = refs;
  out.n_correspondences = int(corr.size());
  out.n_inliers = rr.n_inliers;
  out.mean_inlier_reproj_px = rr.mean_inlier_reproj_px;
  out.trials = rr.trials;
  return out;
}

nlohmann::json eval_run(const data::Manifest& manifest, model::Network<float>* net,
                        const EvalOptions& opts) {
  if (!opts.oracle && net == nullptr) fail(ErrorKind::InvalidArgument, "no network provided");

  int holdout = 0;
  if (opts.split == "all") {
    holdout = 0;
  } else if (opts.split.rfind("holdout:", 0) == 0) {
    holdout = std::stoi(opts.split.substr(8));
    if (holdout < 1) fail(ErrorKind::InvalidArgument, "holdout split needs a positive count");
  } else {
    fail(ErrorKind::InvalidArgument, "unknown split: " + opts.split);
  }

  data::ImageCache cache(&manifest);
  std::vector<metrics::QueryResult> results;
  nlohmann::json per_query = nlohmann::json::array();

  for (const auto& obj : manifest.objects) {
    const int n_views = int(obj.views.size());
    std::vector<int> queries;
    std::vector<int> ref_pool;  // candidate reference views
    if (holdout > 0) {
      if (n_views <= holdout) continue;  // nothing left to reference against
      for (int v = 0; v < n_views - holdout; ++v) ref_pool.push_back(v);
      for (int v = n_views - holdout; v < n_views; ++v) queries.push_back(v);
    } else {
      for (int v = 0; v < n_views; ++v) queries.push_back(v);
    }

    for (int q : queries) {
      InferOptions io_opts;
      io_opts.k_refs = opts.k_refs;
      io_opts.seed = derive_seed(opts.seed, uint64_t(manifest.object_index(obj.id)) * 100003 +
                                                uint64_t(q));
      io_opts.oracle = opts.oracle;
      io_opts.pnp = opts.pnp;
      io_opts.metric = opts.metric;
      if (holdout > 0) {
        // references come from the non-held-out pool only
        std::vector<geom::Pose> poses;
        for (int v : ref_pool) poses.push_back(obj.views[size_t(v)].pose);
        if (opts.k_refs < 1 || opts.k_refs > int(ref_pool.size()))
          fail(ErrorKind::BadK, "reference pool too small for K");
        for (int ci : select::farthest_sample(poses, opts.k_refs, 0, opts.metric))
          io_opts.ref_indices.push_back(ref_pool[size_t(ci)]);
      }

      metrics::QueryResult qr;
      qr.object_id = obj.id;
      qr.diameter = obj.diameter;
      nlohmann::json jq{{"object", obj.id}, {"query", q}};
      try {
        InferResult ir = infer_one(manifest, cache, net, obj.id, q, io_opts);
        const geom::Pose& gt = obj.views[size_t(q)].pose;
        auto [cm, deg] = metrics::cm_degree_err(ir.pose, gt);
        qr.rot_deg = deg;
        qr.trans_m = cm / 100.0;
        if (!obj.model_pts.empty() && obj.diameter > 0) {
          qr.add_m = metrics::add(ir.pose, gt, obj.model_pts, obj.diameter).dist;
          qr.adds_m = metrics::adds(ir.pose, gt, obj.model_pts, obj.diameter).dist;
          try {
            qr.proj2d_px =
                metrics::proj2d(ir.pose, gt, obj.model_pts, obj.views[size_t(q)].intrinsics).dist;
          } catch (const Error&) {
            // points behind camera under the predicted pose: no proj2d value
          }
        }
        jq["rot_deg"] = qr.rot_deg;
        jq["trans_m"] = qr.trans_m;
        jq["diameter"] = qr.diameter;
        jq["n_inliers"] = ir.n_inliers;
        jq["refs"] = ir.ref_indices;
      } catch (const Error& e) {
        qr.failed = true;
        jq["error"] = e.what();
      }
      results.push_back(qr);
      if (opts.per_query) per_query.push_back(jq);
    }
  }

  nlohmann::json report = metrics::report(results, opts.metric_cfg);
  report["options"] = {{"k", opts.k_refs},
                       {"split", opts.split},
                       {"seed", opts.seed},
                       {"oracle", opts.oracle},
                       {"conf_threshold", opts.pnp.conf_threshold}};
  if (opts.per_query) report["queries"] = per_query;
  return report;
}

}  // namespace mfos::pipeline
