#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "mfos/model.hpp"
#include "test_util.hpp"

using namespace mfos;
using engine::Tensor;
using model::ModelConfig;
using model::Network;
using testutil::random_leaf;

namespace {

Tensor<float> random_tokens(Rng& rng, const ModelConfig& cfg, int views) {
  return random_leaf<float>(rng, {views, cfg.tokens(), cfg.dim}, false, -0.5, 0.5);
}

double max_abs_diff(const Tensor<float>& a, const Tensor<float>& b) {
  REQUIRE(a.numel() == b.numel());
  double m = 0;
  for (int64_t i = 0; i < a.numel(); ++i)
    m = std::max(m, std::abs(double(a.data()[i]) - double(b.data()[i])));
  return m;
}

}  // namespace

TEST_CASE("config arithmetic and invariants") {
  ModelConfig paper = ModelConfig::paper();
  CHECK(paper.img_res == 224);
  CHECK(paper.patch == 16);
  CHECK(paper.tokens() == 196);
  CHECK(paper.dim == 768);
  CHECK(paper.enc_depth == 12);
  CHECK(paper.dec_depth == 12);
  CHECK(paper.posenc_vit_depth == 1);
  CHECK(paper.posenc_dec_depth == 4);

  ModelConfig toy = ModelConfig::toy();
  CHECK(toy.tokens() == 64);
  CHECK(toy.dim == 64);
  toy.validate();

  ModelConfig bad = toy;
  bad.patch = 7;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = toy;
  bad.dim = 66;  // not divisible by 4*heads
  CHECK_THROWS_AS(bad.validate(), Error);

  ModelConfig rt = ModelConfig::from_json(toy.to_json());
  CHECK(rt.img_res == toy.img_res);
  CHECK(rt.dim == toy.dim);
  CHECK(rt.rope_base == toy.rope_base);
}

TEST_CASE("encode_image: token shape for both presets") {
  Rng rng(40);
  {
    engine::ParamStore<float> store;
    Network<float> net(ModelConfig::toy(), &store, 1);
    engine::NoGradGuard ng;
    Tensor<float> imgs = random_leaf<float>(rng, {2, 64, 64, 3}, false);
    auto tok = net.encode_image(imgs);
    CHECK(tok.tokens.shape() == engine::Shape{2, 64, 64});
  }
  {
    // paper-size encoder: 196 tokens of dim 768
    engine::ParamStore<float> store;
    Network<float> net(ModelConfig::paper(), &store, 1);
    engine::NoGradGuard ng;
    Tensor<float> img = random_leaf<float>(rng, {1, 224, 224, 3}, false);
    auto tok = net.encode_image(img);
    CHECK(tok.tokens.shape() == engine::Shape{1, 196, 768});
  }
}

TEST_CASE("encode_image: single-patch perturbation changes the encoding") {
  Rng rng(41);
  engine::ParamStore<float> store;
  Network<float> net(ModelConfig::toy(), &store, 2);
  engine::NoGradGuard ng;
  Tensor<float> img = random_leaf<float>(rng, {1, 64, 64, 3}, false);
  std::vector<float> bumped = img.to_vector();
  // perturb one pixel inside patch (3,5)
  int64_t idx = ((3 * 8 + 4) * 64 + (5 * 8 + 2)) * 3;
  bumped[size_t(idx)] += 0.7f;
  Tensor<float> img2 = Tensor<float>::from_vector(img.shape(), std::move(bumped));
  double d = max_abs_diff(net.encode_image(img).tokens, net.encode_image(img2).tokens);
  CHECK(d > 1e-4);
}

TEST_CASE("encode_pose: shape preserved, pose information flows") {
  Rng rng(42);
  engine::ParamStore<float> store;
  ModelConfig cfg = ModelConfig::toy();
  Network<float> net(cfg, &store, 3);
  engine::NoGradGuard ng;

  Tensor<float> imgs = random_leaf<float>(rng, {2, 64, 64, 3}, false);
  auto feat = net.encode_image(imgs);

  proxy::ProxyShape shape;
  shape.frame.half_extents = geom::Vec3(0.1, 0.1, 0.1);
  geom::Pose pose;
  pose.t = geom::Vec3(0, 0, 0.4);
  geom::Intrinsics k{55, 55, 32, 32, 64, 64};
  std::vector<proxy::PointMap> rendered{proxy::render_pointmap(shape, pose, k, 64, 64),
                                        proxy::render_pointmap(shape, pose, k, 64, 64)};
  std::vector<proxy::PointMap> empty{proxy::PointMap(64, 64), proxy::PointMap(64, 64)};

  auto f_rendered = net.encode_pose(feat, model::pointmaps_to_tensor<float>(rendered));
  CHECK(f_rendered.tokens.shape() == feat.tokens.shape());
  auto f_empty = net.encode_pose(feat, model::pointmaps_to_tensor<float>(empty));
  CHECK(max_abs_diff(f_rendered.tokens, f_empty.tokens) > 1e-4);
}

TEST_CASE("encode_pose: gradient reaches both image features and pose maps") {
  Rng rng(43);
  engine::ParamStore<double> store;
  ModelConfig cfg;
  cfg.img_res = 16;
  cfg.patch = 8;
  cfg.dim = 16;
  cfg.heads = 2;
  cfg.enc_depth = 1;
  cfg.dec_depth = 1;
  cfg.posenc_vit_depth = 1;
  cfg.posenc_dec_depth = 1;
  Network<double> net(cfg, &store, 4);

  Tensor<double> imgs = random_leaf<double>(rng, {1, 16, 16, 3}, true);
  Tensor<double> maps = random_leaf<double>(rng, {1, 16, 16, 3}, true);
  auto feat = net.encode_image(imgs);
  auto fprime = net.encode_pose(feat, maps);
  engine::backward(engine::mean_all(engine::mul(fprime.tokens, fprime.tokens)));

  auto nonzero = [](const std::vector<double>& g) {
    double s = 0;
    for (double v : g) s += std::abs(v);
    return s > 1e-12;
  };
  REQUIRE(imgs.has_grad());
  REQUIRE(maps.has_grad());
  CHECK(nonzero(imgs.grad()));
  CHECK(nonzero(maps.grad()));
}

TEST_CASE("decode: packed output equals per-query computation; permutation-invariant") {
  Rng rng(44);
  engine::ParamStore<float> store;
  ModelConfig cfg = ModelConfig::toy();
  Network<float> net(cfg, &store, 5);
  engine::NoGradGuard ng;
  const int64_t B = 2, S = cfg.tokens(), D = cfg.dim;

  for (int64_t nq : {1, 2, 3}) {
    for (int64_t nr : {1, 2, 4}) {
      Tensor<float> fq = random_leaf<float>(rng, {B, nq, S, D}, false, -0.5, 0.5);
      Tensor<float> fr = random_leaf<float>(rng, {B, nr, S, D}, false, -0.5, 0.5);
      Tensor<float> packed = net.decode(fq, fr);

      // per-query runs (packing degenerates at N_Q = 1)
      for (int64_t q = 0; q < nq; ++q) {
        std::vector<float> fq1(size_t(B * S * D));
        for (int64_t b = 0; b < B; ++b)
          std::memcpy(&fq1[size_t(b * S * D)], fq.data() + ((b * nq + q) * S * D),
                      size_t(S * D) * 4);
        Tensor<float> alone =
            net.decode(Tensor<float>::from_vector({B, 1, S, D}, std::move(fq1)), fr);
        for (int64_t b = 0; b < B; ++b) {
          for (int64_t i = 0; i < S * D; ++i) {
            float pv = packed.data()[((b * nq + q) * S) * D + i];
            float av = alone.data()[(b * S) * D + i];
            CHECK(std::abs(pv - av) < 1e-6);
          }
        }
      }

      // permuting reference views leaves each query's output unchanged
      if (nr > 1) {
        std::vector<float> perm(size_t(fr.numel()));
        for (int64_t b = 0; b < B; ++b)
          for (int64_t r = 0; r < nr; ++r) {
            int64_t src = (r + 1) % nr;
            std::memcpy(&perm[size_t((b * nr + r) * S * D)],
                        fr.data() + ((b * nr + src) * S * D), size_t(S * D) * 4);
          }
        Tensor<float> permuted =
            net.decode(fq, Tensor<float>::from_vector(fr.shape(), std::move(perm)));
        CHECK(max_abs_diff(packed, permuted) < 1e-5);
      }
    }
  }
}

TEST_CASE("head: zero weights give zero maps; resolution and round trip") {
  Rng rng(45);
  engine::ParamStore<float> store;
  ModelConfig cfg = ModelConfig::toy();
  Network<float> net(cfg, &store, 6);
  engine::NoGradGuard ng;
  Tensor<float> tok = random_tokens(rng, cfg, 3);
  auto maps = net.head(tok);
  CHECK(maps.coords.shape() == engine::Shape{3, 64, 64, 3});
  CHECK(maps.conf_raw.shape() == engine::Shape{3, 64, 64});

  // zero the head parameters: output must vanish
  auto& w = store.get("head.w");
  auto& b = store.get("head.b");
  std::fill(w.mutable_data(), w.mutable_data() + w.numel(), 0.f);
  std::fill(b.mutable_data(), b.mutable_data() + b.numel(), 0.f);
  auto zero_maps = net.head(tok);
  for (int64_t i = 0; i < zero_maps.coords.numel(); ++i)
    CHECK(zero_maps.coords.data()[i] == 0.f);
  for (int64_t i = 0; i < zero_maps.conf_raw.numel(); ++i)
    CHECK(zero_maps.conf_raw.data()[i] == 0.f);
}

TEST_CASE("forward: runtime-variable K and duplicate-reference invariance") {
  Rng rng(46);
  engine::ParamStore<float> store;
  ModelConfig cfg = ModelConfig::toy();
  Network<float> net(cfg, &store, 7);
  engine::NoGradGuard ng;

  Tensor<float> q = random_leaf<float>(rng, {1, 64, 64, 3}, false);
  Tensor<float> one_img = random_leaf<float>(rng, {1, 64, 64, 3}, false);
  Tensor<float> one_map = random_leaf<float>(rng, {1, 64, 64, 3}, false);

  model::PredictionMaps<float> base;
  for (int k : {1, 4, 16}) {
    std::vector<float> imgs, maps;
    for (int i = 0; i < k; ++i) {
      imgs.insert(imgs.end(), one_img.data(), one_img.data() + one_img.numel());
      maps.insert(maps.end(), one_map.data(), one_map.data() + one_map.numel());
    }
    auto out = net.forward(q, Tensor<float>::from_vector({k, 64, 64, 3}, std::move(imgs)),
                           Tensor<float>::from_vector({k, 64, 64, 3}, std::move(maps)));
    CHECK(out.coords.shape() == engine::Shape{1, 64, 64, 3});
    CHECK(out.conf_raw.shape() == engine::Shape{1, 64, 64});
    if (k == 1) {
      base = out;
    } else {
      // duplicated references renormalize to the same attention average
      CHECK(max_abs_diff(base.coords, out.coords) < 1e-5);
      CHECK(max_abs_diff(base.conf_raw, out.conf_raw) < 1e-5);
    }
  }
}

TEST_CASE("forward is deterministic given weights and inputs") {
  Rng rng(47);
  engine::ParamStore<float> store;
  Network<float> net(ModelConfig::toy(), &store, 8);
  engine::NoGradGuard ng;
  Tensor<float> q = random_leaf<float>(rng, {1, 64, 64, 3}, false);
  Tensor<float> r = random_leaf<float>(rng, {2, 64, 64, 3}, false);
  Tensor<float> m = random_leaf<float>(rng, {2, 64, 64, 3}, false);
  auto a = net.forward(q, r, m);
  auto b = net.forward(q, r, m);
  CHECK(std::memcmp(a.coords.data(), b.coords.data(), size_t(a.coords.numel()) * 4) == 0);
  CHECK(std::memcmp(a.conf_raw.data(), b.conf_raw.data(), size_t(a.conf_raw.numel()) * 4) == 0);
}

TEST_CASE("full pipeline gradient check (micro config, sampled params)") {
  testutil::PipelineFixture fx(123);
  fx.loss_value();  // materialize parameters
  auto leaves = fx.all_params();
  auto stats = testutil::fd_check(leaves, [&] { return fx.loss_value(); }, 1e-5, 6, 1e-9);
  CHECK(stats.checked > 100);
  CHECK(stats.max_rel < 1e-4);
  // whole-vector evidence at healthy magnitude
  double dir_rel =
      testutil::directional_fd_max_rel(leaves, [&] { return fx.loss_value(); }, 10, 9001);
  CHECK(dir_rel < 1e-4);
}

TEST_CASE("lazy parameter creation is call-order independent") {
  engine::ParamStore<float> s1, s2;
  Network<float> n1(ModelConfig::toy(), &s1, 42);
  Network<float> n2(ModelConfig::toy(), &s2, 42);
  engine::NoGradGuard ng;
  Rng rng(48);
  Tensor<float> img = random_leaf<float>(rng, {1, 64, 64, 3}, false);
  Tensor<float> map = random_leaf<float>(rng, {1, 64, 64, 3}, false);

  n1.encode_image(img);  // encoder params first
  n2.encode_pose(n2.encode_image(img), map);  // pose params interleaved
  n1.encode_pose(n1.encode_image(img), map);

  CHECK(std::memcmp(s1.get("enc.blk0.attn.wq").data(), s2.get("enc.blk0.attn.wq").data(),
                    size_t(s1.get("enc.blk0.attn.wq").numel()) * 4) == 0);
  CHECK(std::memcmp(s1.get("pose.embed.w").data(), s2.get("pose.embed.w").data(),
                    size_t(s1.get("pose.embed.w").numel()) * 4) == 0);
}
