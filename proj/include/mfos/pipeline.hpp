#pragma once

#include <filesystem>
#include <optional>

#include <json.hpp>

#include "mfos/data.hpp"
#include "mfos/loss.hpp"
#include "mfos/metrics.hpp"
#include "mfos/model.hpp"
#include "mfos/pnp.hpp"
#include "mfos/select.hpp"

namespace mfos::pipeline {

struct TrainConfig {
  model::ModelConfig model = model::ModelConfig::toy();
  data::BatchSpec batch = data::BatchSpec::toy();
  loss::LossConfig loss;
  engine::AdamWConfig adamw;  // lr field superseded by the schedule
  engine::LrSchedule schedule;
  int64_t steps = 2000;
  int holdout = 0;
  bool perturb_frames = true;
  std::optional<data::CropAugment> crop_aug;
  uint64_t seed = 0;

  static TrainConfig paper() {
    TrainConfig c;
    c.model = model::ModelConfig::paper();
    c.batch = data::BatchSpec::paper();
    c.schedule = {1e-4, 1e-6, 0.1, 40000};
    c.steps = 40000;
    return c;
  }

  static TrainConfig toy() {
    TrainConfig c;
    c.model = model::ModelConfig::toy();
    c.batch = data::BatchSpec::toy();
    c.schedule = {1e-3, 1e-5, 0.05, 2000};
    c.steps = 2000;
    return c;
  }

  // Canonical serialized form; the paper preset is pinned by a golden-file
  // test against this output.
  nlohmann::json to_json() const {
    return {
        {"optimizer",
         {{"name", "adamw"},
          {"betas", {adamw.beta1, adamw.beta2}},
          {"weight_decay", adamw.weight_decay}}},
        {"lr",
         {{"schedule", "cosine"},
          {"base", schedule.base_lr},
          {"min", schedule.min_lr},
          {"warmup_fraction", schedule.warmup_frac}}},
        {"batch",
         {{"objects", batch.objects},
          {"queries_per_object", batch.queries},
          {"refs_per_object", batch.refs},
          {"images_per_batch", batch.objects * (batch.queries + batch.refs)}}},
        {"input_resolution", model.img_res},
        {"background_error", loss.background_error},
    };
  }
};

struct TrainResult {
  std::vector<float> losses;  // one per step of this run
  std::filesystem::path final_ckpt;
  std::filesystem::path best_ckpt;
  int64_t steps_done = 0;
};

// Runs (or resumes) training. Checkpoints carry the model config; the loss
// log is JSONL with one {step, loss, lr} record per step. Per-step randomness
// is derived from (seed, step), so a resumed run reproduces an uninterrupted
// one bitwise.
TrainResult train_loop(const data::Manifest& manifest, TrainConfig cfg,
                       const std::filesystem::path& ckpt_out,
                       const std::filesystem::path& loss_log = {},
                       const std::filesystem::path& resume = {});

// Builds a network from a checkpoint; returns the embedded model config.
model::ModelConfig load_network(const std::filesystem::path& ckpt,
                                engine::ParamStore<float>& store);

struct InferOptions {
  int k_refs = 4;
  uint64_t seed = 0;
  int seed_view = 0;                  // farthest-sampling start (candidate order)
  std::vector<int> ref_indices;       // explicit references; must exclude the query
  bool oracle = false;                // test hook: predictions from the gt render
  std::filesystem::path dump_prefix;  // when set, writes coord/conf images
  pnp::PnPConfig pnp;
  select::ViewMetric metric = select::ViewMetric::Direction;
};

struct InferResult {
  geom::Pose pose;
  std::vector<int> ref_indices;
  int n_correspondences = 0;
  int n_inliers = 0;
  double mean_inlier_reproj_px = 0;
  int trials = 0;
};

InferResult infer_one(const data::Manifest& manifest, data::ImageCache& cache,
                      model::Network<float>* net, const std::string& object_id, int query_idx,
                      const InferOptions& opts);

struct EvalOptions {
  int k_refs = 4;
  std::string split = "holdout:8";  // or "all"
  uint64_t seed = 0;
  bool oracle = false;
  bool per_query = false;  // include raw per-query errors in the report
  pnp::PnPConfig pnp;
  metrics::MetricConfig metric_cfg;
  select::ViewMetric metric = select::ViewMetric::Direction;
};

// Evaluates every query of the split; per-query failures are recorded in the
// report, not fatal. Report schema in docs/formats.md.
nlohmann::json eval_run(const data::Manifest& manifest, model::Network<float>* net,
                        const EvalOptions& opts);

}  // namespace mfos::pipeline
