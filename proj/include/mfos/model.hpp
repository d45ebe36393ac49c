#pragma once

#include <map>
#include <span>

#include <json.hpp>

#include "mfos/engine.hpp"
#include "mfos/image.hpp"
#include "mfos/prediction.hpp"
#include "mfos/proxy.hpp"
#include "mfos/rng.hpp"

namespace mfos::model {

struct ModelConfig {
  int img_res = 224;
  int patch = 16;
  int dim = 768;
  int heads = 12;
  int enc_depth = 12;
  int dec_depth = 12;
  int posenc_vit_depth = 1;
  int posenc_dec_depth = 4;
  int mlp_ratio = 4;
  double rope_base = 100.0;

  static ModelConfig paper() { return ModelConfig{}; }

  static ModelConfig toy() {
    ModelConfig c;
    c.img_res = 64;
    c.patch = 8;
    c.dim = 64;
    c.heads = 4;
    c.enc_depth = 2;
    c.dec_depth = 2;
    c.posenc_vit_depth = 1;
    c.posenc_dec_depth = 2;
    return c;
  }

  int grid() const { return img_res / patch; }
  int tokens() const { return grid() * grid(); }

  void validate() const {
    if (img_res <= 0 || patch <= 0 || img_res % patch != 0)
      fail(ErrorKind::InvalidArgument, "img_res must be a positive multiple of patch");
    if (dim % (4 * heads) != 0)
      fail(ErrorKind::InvalidArgument, "dim must be divisible by 4*heads");
    if (enc_depth < 1 || dec_depth < 1 || posenc_vit_depth < 1 || posenc_dec_depth < 1)
      fail(ErrorKind::InvalidArgument, "depths must be >= 1");
  }

  nlohmann::json to_json() const {
    return {{"img_res", img_res},
            {"patch", patch},
            {"dim", dim},
            {"heads", heads},
            {"enc_depth", enc_depth},
            {"dec_depth", dec_depth},
            {"posenc_vit_depth", posenc_vit_depth},
            {"posenc_dec_depth", posenc_dec_depth},
            {"mlp_ratio", mlp_ratio},
            {"rope_base", rope_base}};
  }

  static ModelConfig from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.img_res = j.at("img_res").get<int>();
    c.patch = j.at("patch").get<int>();
    c.dim = j.at("dim").get<int>();
    c.heads = j.at("heads").get<int>();
    c.enc_depth = j.at("enc_depth").get<int>();
    c.dec_depth = j.at("dec_depth").get<int>();
    c.posenc_vit_depth = j.at("posenc_vit_depth").get<int>();
    c.posenc_dec_depth = j.at("posenc_dec_depth").get<int>();
    c.mlp_ratio = j.value("mlp_ratio", 4);
    c.rope_base = j.value("rope_base", 100.0);
    c.validate();
    return c;
  }
};

// Token features for a stack of views plus the 2-D grid position of every
// token (shared across views).
template <typename T>
struct TokenTensor {
  engine::Tensor<T> tokens;  // [V,S,D] or [B,N,S,D]
  std::shared_ptr<const std::vector<std::array<int, 2>>> positions;
};

template <typename T>
struct PredictionMaps {
  engine::Tensor<T> coords;    // [V,res,res,3]
  engine::Tensor<T> conf_raw;  // [V,res,res]
  int res = 0;
  int views = 0;
};

// Input images in [0,1] are mapped to [-1,1].
template <typename T>
engine::Tensor<T> images_to_tensor(std::span<const ImageF32> imgs) {
  if (imgs.empty()) fail(ErrorKind::InvalidArgument, "images_to_tensor: no images");
  const int h = imgs[0].height, w = imgs[0].width;
  std::vector<T> data;
  data.reserve(imgs.size() * size_t(h) * w * 3);
  for (const auto& img : imgs) {
    engine::require_shape(img.height == h && img.width == w && img.channels == 3,
                          "images_to_tensor: inconsistent image dims");
    for (float v : img.px) data.push_back(T(2.0f * v - 1.0f));
  }
  return engine::Tensor<T>::from_vector({int64_t(imgs.size()), h, w, 3}, std::move(data));
}

template <typename T>
engine::Tensor<T> pointmaps_to_tensor(std::span<const proxy::PointMap> maps) {
  if (maps.empty()) fail(ErrorKind::InvalidArgument, "pointmaps_to_tensor: no maps");
  const int h = maps[0].height, w = maps[0].width;
  std::vector<T> data;
  data.reserve(maps.size() * size_t(h) * w * 3);
  for (const auto& m : maps) {
    engine::require_shape(m.height == h && m.width == w,
                          "pointmaps_to_tensor: inconsistent dims");
    for (float v : m.coords) data.push_back(T(v));
  }
  return engine::Tensor<T>::from_vector({int64_t(maps.size()), h, w, 3}, std::move(data));
}

template <typename T>
engine::Tensor<T> masks_to_tensor(std::span<const proxy::PointMap> maps) {
  if (maps.empty()) fail(ErrorKind::InvalidArgument, "masks_to_tensor: no maps");
  const int h = maps[0].height, w = maps[0].width;
  std::vector<T> data;
  data.reserve(maps.size() * size_t(h) * w);
  for (const auto& m : maps) {
    for (uint8_t v : m.mask) data.push_back(v ? T(1) : T(0));
  }
  return engine::Tensor<T>::from_vector({int64_t(maps.size()), h, w}, std::move(data));
}

inline uint64_t fnv1a64(const std::string& s) {
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

// The four-stage network: ViT image encoder with RoPE self-attention, pose
// encoder fusing rendered proxy pointmaps into reference features, query
// decoder running packed self-/cross-attention, and a linear head mapping
// tokens back to a 4-channel image (3 coordinates + raw confidence).
//
// Parameters are created lazily in the shared store on first use; creation is
// seeded per parameter name, so initialization does not depend on call order.
template <typename T>
class Network {
 public:
  Network(ModelConfig cfg, engine::ParamStore<T>* store, uint64_t param_seed)
      : cfg_(cfg), store_(store), seed_(param_seed) {
    cfg_.validate();
    auto pos = std::make_shared<std::vector<std::array<int, 2>>>();
    const int g = cfg_.grid();
    pos->reserve(size_t(g) * g);
    for (int r = 0; r < g; ++r)
      for (int c = 0; c < g; ++c) pos->push_back({r, c});
    grid_positions_ = pos;
    head_dim_ = cfg_.dim / cfg_.heads;
  }

  const ModelConfig& config() const { return cfg_; }
  engine::ParamStore<T>& store() { return *store_; }
  std::shared_ptr<const std::vector<std::array<int, 2>>> grid_positions() const {
    return grid_positions_;
  }

  TokenTensor<T> encode_image(const engine::Tensor<T>& imgs) {
    engine::require_shape(imgs.rank() == 4 && imgs.dim(1) == cfg_.img_res &&
                              imgs.dim(2) == cfg_.img_res && imgs.dim(3) == 3,
                          "encode_image: expected [V,res,res,3]");
    engine::Tensor<T> tok =
        engine::linear(engine::patchify(imgs, cfg_.patch), weight("enc.embed.w", embed_in(), cfg_.dim),
                       zeros("enc.embed.b", cfg_.dim));
    for (int i = 0; i < cfg_.enc_depth; ++i)
      tok = vit_block(tok, "enc.blk" + std::to_string(i));
    tok = norm(tok, "enc.norm");
    return {tok, grid_positions_};
  }

  TokenTensor<T> encode_pose(const TokenTensor<T>& feat, const engine::Tensor<T>& maps) {
    engine::require_shape(feat.tokens.rank() == 3 && maps.rank() == 4 &&
                              feat.tokens.dim(0) == maps.dim(0),
                          "encode_pose: feature/map view counts differ");
    engine::require_shape(maps.dim(1) == cfg_.img_res && maps.dim(2) == cfg_.img_res,
                          "encode_pose: pointmap resolution mismatch");
    engine::Tensor<T> ptok =
        engine::linear(engine::patchify(maps, cfg_.patch), weight("pose.embed.w", embed_in(), cfg_.dim),
                       zeros("pose.embed.b", cfg_.dim));
    for (int i = 0; i < cfg_.posenc_vit_depth; ++i)
      ptok = vit_block(ptok, "pose.vit.blk" + std::to_string(i));
    ptok = norm(ptok, "pose.vit.norm");

    engine::Tensor<T> x = feat.tokens;
    const auto& rope = table(1);
    for (int i = 0; i < cfg_.posenc_dec_depth; ++i)
      x = dec_block(x, ptok, "pose.dec.blk" + std::to_string(i), rope, rope);
    x = norm(x, "pose.norm");
    return {x, grid_positions_};
  }

  // fq: [B,NQ,S,D], fr: [B,NR,S,D]. Self-attention packs query views on the
  // batch dimension, cross-attention packs views on the sequence dimension;
  // both packings are zero-copy views. Reference tokens are packed once and
  // shared by every query view of the object.
  engine::Tensor<T> decode(const engine::Tensor<T>& fq, const engine::Tensor<T>& fr) {
    engine::require_shape(fq.rank() == 4 && fr.rank() == 4, "decode: expected rank-4 inputs");
    engine::require_shape(fq.dim(0) == fr.dim(0) && fq.dim(3) == fr.dim(3),
                          "decode: batch or channel mismatch");
    engine::require_shape(fq.dim(2) == cfg_.tokens() && fr.dim(2) == cfg_.tokens(),
                          "decode: token count mismatch");
    const int64_t B = fq.dim(0), NQ = fq.dim(1), NR = fr.dim(1), S = fq.dim(2);

    engine::Tensor<T> mem = engine::pack_seq(fr);  // [B, NR*S, D]
    const auto& rope_q = table(1);
    const auto& rope_qs = table(NQ);
    const auto& rope_mem = table(NR);

    engine::Tensor<T> x = fq;
    for (int i = 0; i < cfg_.dec_depth; ++i) {
      std::string p = "dec.blk" + std::to_string(i);
      // self-attention per query view, packed on batch
      engine::Tensor<T> xb = engine::pack_batch(x);
      engine::Tensor<T> n1 = norm(xb, p + ".ln1");
      xb = engine::add(xb, engine::attn(n1, n1, cfg_.heads, rope_q, rope_q, attn_w(p + ".self")));
      x = engine::unpack_batch(xb, B, NQ);
      // cross-attention against all reference views, packed on sequence
      engine::Tensor<T> xs = engine::pack_seq(x);
      engine::Tensor<T> n2 = norm(xs, p + ".ln2");
      xs = engine::add(xs, engine::attn(n2, mem, cfg_.heads, rope_qs, rope_mem, attn_w(p + ".cross")));
      x = engine::unpack_seq(xs, NQ, S);
      // MLP, packed on batch
      xb = engine::pack_batch(x);
      engine::Tensor<T> n3 = norm(xb, p + ".ln3");
      xb = engine::add(xb, mlp(n3, p + ".mlp"));
      x = engine::unpack_batch(xb, B, NQ);
    }
    engine::Tensor<T> xb = engine::pack_batch(x);
    xb = norm(xb, "dec.norm");
    return engine::unpack_batch(xb, B, NQ);
  }

  PredictionMaps<T> head(const engine::Tensor<T>& tokens) {
    engine::require_shape(tokens.rank() == 3 && tokens.dim(1) == cfg_.tokens() &&
                              tokens.dim(2) == cfg_.dim,
                          "head: expected [V,S,D]");
    const int p = cfg_.patch, g = cfg_.grid();
    engine::Tensor<T> y = engine::linear(tokens, weight("head.w", cfg_.dim, p * p * 4),
                                         zeros("head.b", p * p * 4));
    engine::Tensor<T> maps = engine::unpatchify(y, p, g, g, 4);  // [V,res,res,4]
    PredictionMaps<T> out;
    out.coords = engine::slice_lastdim(maps, int64_t(0), int64_t(3));
    engine::Tensor<T> conf = engine::slice_lastdim(maps, int64_t(3), int64_t(4));
    out.conf_raw = engine::reshape(conf, {maps.dim(0), maps.dim(1), maps.dim(2)});
    out.res = cfg_.img_res;
    out.views = int(maps.dim(0));
    return out;
  }

  // Single query against K pose-annotated references.
  PredictionMaps<T> forward(const engine::Tensor<T>& query_img,
                            const engine::Tensor<T>& ref_imgs,
                            const engine::Tensor<T>& ref_maps) {
    engine::require_shape(ref_imgs.dim(0) == ref_maps.dim(0), "forward: ref count mismatch");
    const int64_t K = ref_imgs.dim(0);
    if (K < 1) fail(ErrorKind::InvalidArgument, "forward: needs at least one reference");
    TokenTensor<T> fq = encode_image(query_img);
    TokenTensor<T> fr = encode_pose(encode_image(ref_imgs), ref_maps);
    const int64_t S = cfg_.tokens(), D = cfg_.dim;
    engine::Tensor<T> dec = decode(engine::reshape(fq.tokens, {1, 1, S, D}),
                                   engine::reshape(fr.tokens, {1, K, S, D}));
    return head(engine::pack_batch(dec));
  }

  // Training-shaped forward: B objects, NQ queries and NR references each.
  PredictionMaps<T> forward_batch(const engine::Tensor<T>& query_imgs,
                                  const engine::Tensor<T>& ref_imgs,
                                  const engine::Tensor<T>& ref_maps, int64_t B, int64_t NQ,
                                  int64_t NR) {
    engine::require_shape(query_imgs.dim(0) == B * NQ, "forward_batch: query count");
    engine::require_shape(ref_imgs.dim(0) == B * NR, "forward_batch: reference count");
    TokenTensor<T> fq = encode_image(query_imgs);
    TokenTensor<T> fr = encode_pose(encode_image(ref_imgs), ref_maps);
    const int64_t S = cfg_.tokens(), D = cfg_.dim;
    engine::Tensor<T> dec = decode(engine::reshape(fq.tokens, {B, NQ, S, D}),
                                   engine::reshape(fr.tokens, {B, NR, S, D}));
    return head(engine::pack_batch(dec));
  }

 private:
  int64_t embed_in() const { return int64_t(cfg_.patch) * cfg_.patch * 3; }

  engine::Tensor<T>& weight(const std::string& name, int64_t in, int64_t out) {
    uint64_t s = derive_seed(seed_, fnv1a64(name));
    return store_->get_or_create(name, {in, out}, [s](T* dst, int64_t n) {
      Rng rng(s);
      for (int64_t i = 0; i < n; ++i) dst[i] = T(rng.trunc_normal(0.02));
    });
  }

  engine::Tensor<T>& zeros(const std::string& name, int64_t n) {
    return store_->get_or_create(name, {n}, nullptr);
  }

  engine::Tensor<T>& ones(const std::string& name, int64_t n) {
    return store_->get_or_create(name, {n}, [](T* dst, int64_t m) {
      for (int64_t i = 0; i < m; ++i) dst[i] = T(1);
    });
  }

  engine::AttnWeights<T> attn_w(const std::string& prefix) {
    const int64_t D = cfg_.dim;
    return {weight(prefix + ".wq", D, D), zeros(prefix + ".bq", D),
            weight(prefix + ".wk", D, D), zeros(prefix + ".bk", D),
            weight(prefix + ".wv", D, D), zeros(prefix + ".bv", D),
            weight(prefix + ".wo", D, D), zeros(prefix + ".bo", D)};
  }

  engine::Tensor<T> norm(const engine::Tensor<T>& x, const std::string& prefix) {
    return engine::layer_norm(x, ones(prefix + ".g", cfg_.dim), zeros(prefix + ".b", cfg_.dim));
  }

  engine::Tensor<T> mlp(const engine::Tensor<T>& x, const std::string& prefix) {
    const int64_t D = cfg_.dim, H = int64_t(cfg_.mlp_ratio) * D;
    return engine::linear(engine::gelu(engine::linear(x, weight(prefix + ".w1", D, H),
                                                      zeros(prefix + ".b1", H))),
                          weight(prefix + ".w2", H, D), zeros(prefix + ".b2", D));
  }

  engine::Tensor<T> vit_block(const engine::Tensor<T>& x0, const std::string& prefix) {
    const auto& rope = table(1);
    engine::Tensor<T> n1 = norm(x0, prefix + ".ln1");
    engine::Tensor<T> x =
        engine::add(x0, engine::attn(n1, n1, cfg_.heads, rope, rope, attn_w(prefix + ".attn")));
    engine::Tensor<T> n2 = norm(x, prefix + ".ln2");
    return engine::add(x, mlp(n2, prefix + ".mlp"));
  }

  engine::Tensor<T> dec_block(const engine::Tensor<T>& x0, const engine::Tensor<T>& mem,
                              const std::string& prefix, const engine::RopeTable<T>& rope_x,
                              const engine::RopeTable<T>& rope_mem) {
    engine::Tensor<T> n1 = norm(x0, prefix + ".ln1");
    engine::Tensor<T> x =
        engine::add(x0, engine::attn(n1, n1, cfg_.heads, rope_x, rope_x, attn_w(prefix + ".self")));
    engine::Tensor<T> n2 = norm(x, prefix + ".ln2");
    x = engine::add(x, engine::attn(n2, mem, cfg_.heads, rope_x, rope_mem, attn_w(prefix + ".cross")));
    engine::Tensor<T> n3 = norm(x, prefix + ".ln3");
    return engine::add(x, mlp(n3, prefix + ".mlp"));
  }

  // RoPE table for n views' tokens packed along the sequence: the per-view
  // patch grid repeats, carrying no view index.
  const engine::RopeTable<T>& table(int64_t n_views) {
    auto it = tables_.find(n_views);
    if (it != tables_.end()) return it->second;
    std::vector<std::array<int, 2>> pos;
    pos.reserve(size_t(n_views) * grid_positions_->size());
    for (int64_t v = 0; v < n_views; ++v)
      pos.insert(pos.end(), grid_positions_->begin(), grid_positions_->end());
    auto [ins, ok] = tables_.emplace(
        n_views, engine::RopeTable<T>::build(pos, head_dim_, cfg_.rope_base));
    (void)ok;
    return ins->second;
  }

  ModelConfig cfg_;
  engine::ParamStore<T>* store_;
  uint64_t seed_;
  int64_t head_dim_;
  std::shared_ptr<const std::vector<std::array<int, 2>>> grid_positions_;
  std::map<int64_t, engine::RopeTable<T>> tables_;
};

// Copies one view of a prediction out of the graph.
template <typename T>
DensePrediction snapshot(const PredictionMaps<T>& maps, int view) {
  DensePrediction d;
  d.height = maps.res;
  d.width = maps.res;
  const int64_t px = int64_t(maps.res) * maps.res;
  d.coords.resize(size_t(px) * 3);
  d.conf_raw.resize(size_t(px));
  const T* c = maps.coords.data() + int64_t(view) * px * 3;
  const T* r = maps.conf_raw.data() + int64_t(view) * px;
  for (int64_t i = 0; i < px * 3; ++i) d.coords[size_t(i)] = float(c[i]);
  for (int64_t i = 0; i < px; ++i) d.conf_raw[size_t(i)] = float(r[i]);
  return d;
}

}  // namespace mfos::model
