#include <doctest.h>

#include <stdexcept>

#include <cmath>
#include <random>
#include <sstream>

#include "rg/data.hpp"
#include "rg/heads.hpp"
#include "rg/train.hpp"
#include "test_util.hpp"

using namespace rg;
using namespace rgtest;

namespace {

std::vector<double> all_params(const RGNetwork& net, const HeadBank& heads) {
  std::vector<double> out;
  for (const FilterBank& f : net.filters)
    out.insert(out.end(), f.data.begin(), f.data.end());
  for (const auto& b : net.biases) out.insert(out.end(), b.begin(), b.end());
  out.insert(out.end(), heads.coarse_weights.begin(),
             heads.coarse_weights.end());
  out.insert(out.end(), heads.coarse_bias.begin(), heads.coarse_bias.end());
  for (const auto& t : heads.taps)
    out.insert(out.end(), t.filter.data.begin(), t.filter.data.end());
  return out;
}

std::vector<double> all_grads(const ModelGrads& g) {
  std::vector<double> out;
  for (const FilterBank& f : g.filters)
    out.insert(out.end(), f.data.begin(), f.data.end());
  for (const auto& b : g.biases) out.insert(out.end(), b.begin(), b.end());
  out.insert(out.end(), g.coarse_weights.begin(), g.coarse_weights.end());
  out.insert(out.end(), g.coarse_bias.begin(), g.coarse_bias.end());
  for (const FilterBank& f : g.taps)
    out.insert(out.end(), f.data.begin(), f.data.end());
  return out;
}

// Small strictly-positive model: positive inputs, filters, and biases keep
// every pre-activation away from the rectifier kink for FD checks.
struct Fixture {
  RGNetwork net;
  HeadBank heads;
  Tensor image0, image1;
  std::vector<TrainingExample> batch;
  Tensor target0, target1;

  explicit Fixture(std::uint64_t seed, bool with_nms = false) {
    net = RGNetwork::build(
        {1, 6, 6},
        {{.in_channels = 1, .out_channels = 2, .k_h = 3, .k_w = 3, .stride = 2,
          .pad_h = 1, .pad_w = 1, .nms_group = with_nms ? 3 : 0},
         {.in_channels = 2, .out_channels = 2, .k_h = 3, .k_w = 3, .stride = 1,
          .pad_h = 1, .pad_w = 1}});
    const int taps[] = {1};
    heads = HeadBank::build(net, 2, taps);

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> pos(0.05, 0.4), uni(-0.5, 0.5);
    for (FilterBank& f : net.filters)
      for (double& v : f.data) v = pos(rng);
    for (auto& b : net.biases)
      for (double& v : b) v = pos(rng);
    for (double& v : heads.coarse_weights) v = uni(rng);
    for (double& v : heads.coarse_bias) v = uni(rng);
    for (double& v : heads.taps[0].filter.data) v = uni(rng);

    image0 = Tensor(1, 6, 6);
    image1 = Tensor(1, 6, 6);
    for (double& v : image0.data) v = pos(rng);
    for (double& v : image1.data) v = pos(rng);

    const Dims pd = prediction_dims(heads, net, -1);
    target0 = Tensor(pd);
    target1 = Tensor(pd);
    for (double& v : target0.data) v = (rng() % 2) ? 1.0 : 0.0;
    for (double& v : target1.data) v = (rng() % 2) ? 1.0 : 0.0;
    batch.push_back({&image0, target0, {1, 1}});
    batch.push_back({&image1, target1, {1, 0}});
  }
};

}  // namespace

TEST_CASE("zero-weight heads give zero gradient for all net filters") {
  Fixture fx(5);
  for (double& v : fx.heads.coarse_weights) v = 0.0;
  for (double& v : fx.heads.coarse_bias) v = 0.0;
  for (double& v : fx.heads.taps[0].filter.data) v = 0.0;
  const ModelGrads g = backward(fx.net, fx.heads, fx.batch, 2);
  for (const FilterBank& f : g.filters)
    for (double v : f.data) CHECK(v == 0.0);
  for (const auto& b : g.biases)
    for (double v : b) CHECK(v == 0.0);
}

TEST_CASE("single linear path matches the hand chain rule") {
  RGNetwork net = RGNetwork::build(
      {1, 1, 1}, {{.in_channels = 1, .out_channels = 1, .k_h = 1, .k_w = 1},
                  {.in_channels = 1, .out_channels = 1, .k_h = 1, .k_w = 1}});
  const double a = 0.7, c = 1.3, v = 0.9, x0 = 0.8;
  net.filters[0].data = {a};
  net.filters[1].data = {c};
  HeadBank heads = HeadBank::build(net, 1, {});
  heads.coarse_weights = {v};

  Tensor image(1, 1, 1);
  image.data = {x0};
  Tensor target(1, 1, 1);
  target.data = {1.0};
  std::vector<TrainingExample> batch{{&image, target, {1}}};

  const double z1 = a * x0, z2 = c * z1, logit = v * z2;
  const double dl = sigmoid(logit) - 1.0;

  const ModelGrads g = backward(net, heads, batch, 1);
  CHECK(g.coarse_weights[0] == doctest::Approx(dl * z2).epsilon(1e-12));
  CHECK(g.filters[1].data[0] == doctest::Approx(dl * v * z1).epsilon(1e-12));
  CHECK(g.filters[0].data[0] == doctest::Approx(dl * v * c * x0).epsilon(1e-12));
  CHECK(g.biases[1][0] == doctest::Approx(dl * v).epsilon(1e-12));
  CHECK(g.biases[0][0] == doctest::Approx(dl * v * c).epsilon(1e-12));
}

TEST_CASE("finite differences agree with backward for k = 1, 2, 3") {
  for (int k : {1, 2, 3}) {
    Fixture fx(40 + k);
    const double err = finite_diff_check(fx.net, fx.heads, fx.batch, k, 1e-5);
    CHECK(err < 1e-3);
  }
}

TEST_CASE("finite differences agree with backward through NMS") {
  Fixture fx(91, /*with_nms=*/true);
  const double err = finite_diff_check(fx.net, fx.heads, fx.batch, 2, 1e-5);
  CHECK(err < 1e-3);
}

TEST_CASE("zero model at zero targets is smooth and checks to 1e-6") {
  Fixture fx(7);
  for (FilterBank& f : fx.net.filters)
    for (double& v : f.data) v = 0.0;
  for (auto& b : fx.net.biases)
    for (double& v : b) v = 0.0;
  for (double& v : fx.heads.coarse_weights) v = 0.0;
  for (double& v : fx.heads.coarse_bias) v = 0.0;
  for (double& v : fx.heads.taps[0].filter.data) v = 0.0;
  for (auto& ex : fx.batch)
    for (double& v : ex.target.data) v = 0.0;
  const double err = finite_diff_check(fx.net, fx.heads, fx.batch, 2, 1e-5);
  CHECK(err < 1e-6);
}

TEST_CASE("truncating the unrolled graph to one pass reproduces k=1 exactly") {
  Fixture fx(13, /*with_nms=*/true);
  const ModelGrads g1 = backward(fx.net, fx.heads, fx.batch, 1);
  const ModelGrads g2 = backward(fx.net, fx.heads, fx.batch, 2, -1,
                                 /*passes_used=*/1);
  CHECK(all_grads(g1) == all_grads(g2));
  CHECK(g1.loss == g2.loss);
}

TEST_CASE("sgd_step definition on a single parameter") {
  RGNetwork net = RGNetwork::build(
      {1, 1, 1}, {{.in_channels = 1, .out_channels = 1, .k_h = 1, .k_w = 1}});
  net.filters[0].data = {1.0};
  HeadBank heads = HeadBank::build(net, 1, {});
  ModelGrads grads = zero_grads(net, heads);
  ModelGrads vel = zero_grads(net, heads);
  grads.filters[0].data[0] = 1.0;

  TrainConfig cfg;
  cfg.learning_rate = 0.1;
  cfg.momentum = 0.9;
  cfg.weight_decay = 0.0;
  sgd_step(net, heads, grads, vel, cfg, 0);
  CHECK(vel.filters[0].data[0] == doctest::Approx(-0.1).epsilon(1e-15));
  CHECK(net.filters[0].data[0] == doctest::Approx(0.9).epsilon(1e-15));
}

TEST_CASE("momentum 0 and decay 0 reduce sgd_step to plain gradient descent") {
  Fixture fx(3);
  const ModelGrads g = backward(fx.net, fx.heads, fx.batch, 2);
  ModelGrads vel = zero_grads(fx.net, fx.heads);

  const std::vector<double> before = all_params(fx.net, fx.heads);
  const std::vector<double> gv = all_grads(g);

  TrainConfig cfg;
  cfg.learning_rate = 0.05;
  cfg.momentum = 0.0;
  cfg.weight_decay = 0.0;
  cfg.lr_decay_per_finer_scale = 1.0;  // uniform lr across head scales
  sgd_step(fx.net, fx.heads, g, vel, cfg, 1);

  const std::vector<double> after = all_params(fx.net, fx.heads);
  for (std::size_t i = 0; i < before.size(); ++i)
    CHECK(after[i] == before[i] - 0.05 * gv[i]);
}

TEST_CASE("zero gradient and zero velocity leave parameters unchanged") {
  Fixture fx(4);
  const std::vector<double> before = all_params(fx.net, fx.heads);
  const ModelGrads g = zero_grads(fx.net, fx.heads);
  ModelGrads vel = zero_grads(fx.net, fx.heads);
  TrainConfig cfg;
  cfg.weight_decay = 0.0;
  sgd_step(fx.net, fx.heads, g, vel, cfg, 1);
  CHECK(all_params(fx.net, fx.heads) == before);
}

TEST_CASE("head learning rates decay per finer enabled scale") {
  RGNetwork net = RGNetwork::build(
      {1, 1, 4},
      {{.in_channels = 1, .out_channels = 1, .k_h = 1, .k_w = 1},
       {.in_channels = 1, .out_channels = 1, .k_h = 1, .k_w = 1, .stride = 2}});
  const int taps[] = {1};
  HeadBank heads = HeadBank::build(net, 1, taps);
  ModelGrads g = zero_grads(net, heads);
  ModelGrads vel = zero_grads(net, heads);
  for (double& v : g.coarse_bias) v = 1.0;
  g.taps[0].data[0] = 1.0;

  TrainConfig cfg;
  cfg.learning_rate = 1.0;
  cfg.momentum = 0.0;
  cfg.weight_decay = 0.0;
  cfg.lr_decay_per_finer_scale = 0.1;
  sgd_step(net, heads, g, vel, cfg, 1);
  // one finer tap enabled above the coarse head, none above the tap
  CHECK(heads.coarse_bias[0] == doctest::Approx(-0.1).epsilon(1e-15));
  CHECK(heads.taps[0].filter.data[0] == doctest::Approx(-1.0).epsilon(1e-15));
}

TEST_CASE("paper-scale optimizer settings are a valid configuration") {
  TrainConfig cfg;
  cfg.learning_rate = 1e-6;
  cfg.momentum = 0.9;
  cfg.weight_decay = 5e-4;
  CHECK_NOTHROW(cfg.validate());
  cfg.momentum = 1.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("training rejects an empty dataset") {
  RGNetwork net = RGNetwork::build(
      {1, 16, 16}, {{.in_channels = 1, .out_channels = 2, .k_h = 3, .k_w = 3,
                     .stride = 2, .pad_h = 1, .pad_w = 1}});
  HeadBank heads = HeadBank::build(net, 2, {});
  Dataset empty;
  TrainConfig cfg;
  CHECK_THROWS_AS(train(empty, net, heads, cfg), std::invalid_argument);
}

TEST_CASE("epochs = 0 leaves the model at its initialization") {
  DatasetSpec spec;
  spec.n_samples = 4;
  spec.image_size = 16;
  spec.n_keypoints = 2;
  spec.seed = 8;
  const Dataset data = generate_dataset(spec);

  RGNetwork net = RGNetwork::build(
      {1, 16, 16}, {{.in_channels = 1, .out_channels = 2, .k_h = 3, .k_w = 3,
                     .stride = 2, .pad_h = 1, .pad_w = 1}});
  HeadBank heads = HeadBank::build(net, 2, {});
  randomize_parameters(net, heads, 77);
  const std::vector<double> before = all_params(net, heads);

  TrainConfig cfg;
  cfg.epochs = 0;
  cfg.k = 1;
  const auto log = train(data, net, heads, cfg);
  CHECK(log.empty());
  CHECK(all_params(net, heads) == before);
}

TEST_CASE("training is bit-deterministic given the seed") {
  DatasetSpec spec;
  spec.n_samples = 6;
  spec.image_size = 16;
  spec.n_keypoints = 2;
  spec.seed = 9;
  const Dataset data = generate_dataset(spec);

  std::vector<std::vector<double>> results;
  for (int run = 0; run < 2; ++run) {
    RGNetwork net = RGNetwork::build(
        {1, 16, 16}, {{.in_channels = 1, .out_channels = 2, .k_h = 3, .k_w = 3,
                       .stride = 2, .pad_h = 1, .pad_w = 1}});
    HeadBank heads = HeadBank::build(net, 2, {});
    randomize_parameters(net, heads, 33);
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.k = 2;
    cfg.batch_size = 3;
    cfg.seed = 123;
    train(data, net, heads, cfg);
    results.push_back(all_params(net, heads));
  }
  CHECK(results[0] == results[1]);
}

TEST_CASE("training drives the loss well below its starting value") {
  DatasetSpec spec;
  spec.n_samples = 8;
  spec.image_size = 16;
  spec.n_keypoints = 2;
  spec.occlusion_rate = 0.0;
  spec.ambiguity = 0.0;
  spec.noise_std = 0.0;
  spec.seed = 10;
  const Dataset data = generate_dataset(spec);

  RGNetwork net = RGNetwork::build(
      {1, 16, 16}, {{.in_channels = 1, .out_channels = 4, .k_h = 3, .k_w = 3,
                     .stride = 2, .pad_h = 1, .pad_w = 1}});
  HeadBank heads = HeadBank::build(net, 2, {});
  randomize_parameters(net, heads, 55);

  TrainConfig cfg;
  cfg.learning_rate = 0.5;
  cfg.epochs = 50;
  cfg.k = 2;
  cfg.batch_size = 8;
  cfg.weight_decay = 0.0;
  cfg.seed = 1;
  std::ostringstream log;
  const auto history = train(data, net, heads, cfg, &log);
  REQUIRE(history.size() == 50);
  CHECK(history.back().mean_loss < 0.1 * history.front().mean_loss);
  CHECK(log.str().find("stage 1") != std::string::npos);
}
