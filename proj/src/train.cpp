#include "rg/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>

#include "rg/data.hpp"

namespace rg {

void TrainConfig::validate() const {
  if (learning_rate <= 0.0)
    throw std::invalid_argument("TrainConfig: learning_rate must be > 0");
  if (momentum < 0.0 || momentum >= 1.0)
    throw std::invalid_argument("TrainConfig: momentum must be in [0,1)");
  if (weight_decay < 0.0)
    throw std::invalid_argument("TrainConfig: weight_decay must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size < 1");
  if (epochs < 0) throw std::invalid_argument("TrainConfig: epochs < 0");
  if (k < 1) throw std::invalid_argument("TrainConfig: k < 1");
  if (positive_radius < 0.0)
    throw std::invalid_argument("TrainConfig: positive_radius < 0");
}

ModelGrads zero_grads(const RGNetwork& net, const HeadBank& heads) {
  ModelGrads g;
  for (const FilterBank& f : net.filters) {
    FilterBank z(f.out_channels, f.in_channels, f.k_h, f.k_w, f.stride,
                 f.pad_h, f.pad_w);
    g.filters.push_back(std::move(z));
  }
  for (const auto& b : net.biases) g.biases.emplace_back(b.size(), 0.0);
  g.coarse_weights.assign(heads.coarse_weights.size(), 0.0);
  g.coarse_bias.assign(heads.coarse_bias.size(), 0.0);
  for (const HeadBank::Tap& t : heads.taps) {
    FilterBank z(t.filter.out_channels, t.filter.in_channels, 1, 1);
    g.taps.push_back(std::move(z));
  }
  return g;
}

namespace {

// Full record of the unrolled forward computation for one sample: every
// intermediate version of every layer state, plus the update steps in order.
struct ForwardRecord {
  struct Step {
    int layer = 0;  // 0-based
    int pass = 0;
    int below_ver = 0;  // version of layer-1 read (unused for layer 0)
    int above_ver = 0;  // version of layer+1 read (unused for top layer)
    int out_ver = 0;
  };
  std::vector<std::vector<Tensor>> versions;  // versions[l][0] is all-zero
  std::vector<int> cur;
  std::vector<Step> steps;
};

ForwardRecord record_forward(const RGNetwork& net, const Tensor& x, int k) {
  if (k < 1) throw std::invalid_argument("record_forward: k < 1");
  const int L = net.num_layers();
  ForwardRecord rec;
  rec.versions.resize(L);
  rec.cur.assign(L, 0);
  InferenceTrace trace;
  for (int l = 0; l < L; ++l) {
    trace.z.emplace_back(net.layer_dims[l]);
    rec.versions[l].push_back(trace.z[l]);
  }
  for (int pass = 1; pass <= k; ++pass) {
    std::vector<int> order;
    if (pass == 1)
      for (int l = 1; l <= L; ++l) order.push_back(l);
    else if (pass % 2 == 0)
      for (int l = L - 1; l >= 1; --l) order.push_back(l);
    else
      for (int l = 2; l <= L; ++l) order.push_back(l);
    for (int layer : order) {
      const int l = layer - 1;
      ForwardRecord::Step st;
      st.layer = l;
      st.pass = pass;
      st.below_ver = l > 0 ? rec.cur[l - 1] : 0;
      st.above_ver = l + 1 < L ? rec.cur[l + 1] : 0;
      layer_update(net, trace, layer, x);
      rec.versions[l].push_back(trace.z[l]);
      rec.cur[l] = static_cast<int>(rec.versions[l].size()) - 1;
      st.out_ver = rec.cur[l];
      rec.steps.push_back(st);
    }
  }
  return rec;
}

// Truncates the record to the first `passes_used` passes.
void truncate_record(ForwardRecord& rec, int passes_used) {
  std::size_t ns = 0;
  while (ns < rec.steps.size() && rec.steps[ns].pass <= passes_used) ++ns;
  for (std::size_t s = ns; s < rec.steps.size(); ++s) {
    const auto& st = rec.steps[s];
    rec.versions[st.layer].pop_back();
    rec.cur[st.layer] = static_cast<int>(rec.versions[st.layer].size()) - 1;
  }
  rec.steps.resize(ns);
}

InferenceTrace final_trace(const ForwardRecord& rec) {
  InferenceTrace t;
  for (std::size_t l = 0; l < rec.versions.size(); ++l)
    t.z.push_back(rec.versions[l][rec.cur[l]]);
  return t;
}

// Heads backward: fills parameter grads and returns dLoss/dz for every
// layer (zero tensors where no head reads the layer).
std::vector<Tensor> heads_backward(const HeadBank& heads, const RGNetwork& net,
                                   const InferenceTrace& trace,
                                   const Tensor& g_logits, int nt,
                                   ModelGrads& out) {
  const int L = net.num_layers();
  std::vector<Tensor> gz;
  for (int l = 0; l < L; ++l) gz.emplace_back(net.layer_dims[l]);

  Tensor g = g_logits;
  for (int ti = nt - 1; ti >= 0; --ti) {
    const HeadBank::Tap& tap = heads.taps[ti];
    const Tensor& z = trace.z[tap.layer - 1];
    const FilterBank df = correlate_filter_grad(g, z, tap.filter);
    for (std::size_t p = 0; p < df.data.size(); ++p)
      out.taps[ti].data[p] += df.data[p];
    const Tensor gzt = convolve_transposed(tap.filter, g, z.dims());
    Tensor& acc = gz[tap.layer - 1];
    for (std::size_t p = 0; p < acc.data.size(); ++p)
      acc.data[p] += gzt.data[p];
    const int coarser_w =
        ti > 0 ? net.layer_dims[heads.taps[ti - 1].layer - 1].width
               : heads.coarse_w;
    g = downsample_sum(g, g.width / coarser_w);
  }

  const Tensor& top = trace.z.back();
  const std::size_t top_size = top.size();
  const std::size_t grid =
      static_cast<std::size_t>(heads.num_keypoints) * heads.coarse_h *
      heads.coarse_w;
  Tensor& gtop = gz[L - 1];
  for (std::size_t o = 0; o < grid; ++o) {
    const double go = g.data[o];
    out.coarse_bias[o] += go;
    if (go == 0.0) continue;
    const double* w = &heads.coarse_weights[o * top_size];
    double* gw = &out.coarse_weights[o * top_size];
    for (std::size_t t = 0; t < top_size; ++t) {
      gw[t] += go * top.data[t];
      gtop.data[t] += go * w[t];
    }
  }
  return gz;
}

void accumulate_sample_backward(const RGNetwork& net, const HeadBank& heads,
                                const TrainingExample& ex, int k, int nt,
                                int passes_used, ModelGrads& out) {
  ForwardRecord rec = record_forward(net, *ex.image, k);
  if (passes_used > 0 && passes_used < k) truncate_record(rec, passes_used);
  const InferenceTrace trace = final_trace(rec);

  const Tensor logits = predict_heads(heads, net, trace, nt);
  out.loss += heatmap_loss(logits, ex.target, ex.visible);
  const Tensor g_logits = heatmap_loss_grad(logits, ex.target, ex.visible);

  std::vector<Tensor> gcur =
      heads_backward(heads, net, trace, g_logits, nt, out);

  const int L = net.num_layers();
  for (auto it = rec.steps.rbegin(); it != rec.steps.rend(); ++it) {
    const auto& st = *it;
    const int l = st.layer;
    const Tensor& zout = rec.versions[l][st.out_ver];

    // Rectifier and NMS gate: gradient flows only where the produced
    // activation is strictly positive (NMS losers and clipped units get 0).
    Tensor g = gcur[l];
    for (std::size_t p = 0; p < g.data.size(); ++p)
      if (!(zout.data[p] > 0.0)) g.data[p] = 0.0;

    const Dims d = net.layer_dims[l];
    const std::size_t plane = static_cast<std::size_t>(d.height) * d.width;
    for (int c = 0; c < d.channels; ++c) {
      double s = 0.0;
      for (std::size_t p = 0; p < plane; ++p) s += g.data[c * plane + p];
      out.biases[l][c] += s;
    }

    const Tensor& below =
        l == 0 ? *ex.image : rec.versions[l - 1][st.below_ver];
    const FilterBank dfb = correlate_filter_grad(g, below, net.filters[l]);
    for (std::size_t p = 0; p < dfb.data.size(); ++p)
      out.filters[l].data[p] += dfb.data[p];
    if (l > 0) {
      const Tensor gb =
          convolve_transposed(net.filters[l], g, net.layer_dims[l - 1]);
      for (std::size_t p = 0; p < gb.data.size(); ++p)
        gcur[l - 1].data[p] += gb.data[p];
    }
    if (l + 1 < L) {
      const Tensor& above = rec.versions[l + 1][st.above_ver];
      const FilterBank dft =
          correlate_filter_grad(above, g, net.filters[l + 1]);
      for (std::size_t p = 0; p < dft.data.size(); ++p)
        out.filters[l + 1].data[p] += dft.data[p];
      const Tensor ga = correlate(net.filters[l + 1], g);
      for (std::size_t p = 0; p < ga.data.size(); ++p)
        gcur[l + 1].data[p] += ga.data[p];
    }
    // The overwritten older version starts with a fresh gradient.
    gcur[l] = Tensor(d);
  }
}

void scale_grads(ModelGrads& g, double s) {
  for (FilterBank& f : g.filters)
    for (double& v : f.data) v *= s;
  for (auto& b : g.biases)
    for (double& v : b) v *= s;
  for (double& v : g.coarse_weights) v *= s;
  for (double& v : g.coarse_bias) v *= s;
  for (FilterBank& f : g.taps)
    for (double& v : f.data) v *= s;
  g.loss *= s;
}

}  // namespace

ModelGrads backward(const RGNetwork& net, const HeadBank& heads,
                    std::span<const TrainingExample> batch, int k, int n_taps,
                    int passes_used) {
  if (batch.empty()) throw std::invalid_argument("backward: empty batch");
  const int nt = n_taps < 0 ? static_cast<int>(heads.taps.size()) : n_taps;
  ModelGrads out = zero_grads(net, heads);
  for (const TrainingExample& ex : batch)
    accumulate_sample_backward(net, heads, ex, k, nt, passes_used, out);
  scale_grads(out, 1.0 / static_cast<double>(batch.size()));
  return out;
}

double batch_loss(const RGNetwork& net, const HeadBank& heads,
                  std::span<const TrainingExample> batch, int k, int n_taps) {
  if (batch.empty()) throw std::invalid_argument("batch_loss: empty batch");
  const int nt = n_taps < 0 ? static_cast<int>(heads.taps.size()) : n_taps;
  double sum = 0.0;
  for (const TrainingExample& ex : batch) {
    const InferenceTrace trace = qp_k(net, *ex.image, k);
    sum += heatmap_loss(predict_heads(heads, net, trace, nt), ex.target,
                        ex.visible);
  }
  return sum / static_cast<double>(batch.size());
}

namespace {

double fd_one(const RGNetwork& net, const HeadBank& heads,
              std::span<const TrainingExample> batch, int k, int nt,
              double eps, double* param, double analytic) {
  const double saved = *param;
  *param = saved + eps;
  const double fp = batch_loss(net, heads, batch, k, nt);
  *param = saved - eps;
  const double fm = batch_loss(net, heads, batch, k, nt);
  *param = saved;
  const double fd = (fp - fm) / (2.0 * eps);
  const double denom = std::max(1e-7, std::abs(fd) + std::abs(analytic));
  return std::abs(fd - analytic) / denom;
}

}  // namespace

double finite_diff_check(RGNetwork& net, HeadBank& heads,
                         std::span<const TrainingExample> batch, int k,
                         double eps, int n_taps) {
  const int nt = n_taps < 0 ? static_cast<int>(heads.taps.size()) : n_taps;
  const ModelGrads g = backward(net, heads, batch, k, nt);

  // Perturbs parameters in place; every one is restored before returning.
  RGNetwork& n = net;
  HeadBank& h = heads;

  double worst = 0.0;
  auto check_block = [&](double* data, const double* grad, std::size_t len) {
    const std::size_t step = len > 512 ? len / 512 : 1;
    for (std::size_t i = 0; i < len; i += step)
      worst = std::max(worst, fd_one(net, heads, batch, k, nt, eps, data + i,
                                     grad[i]));
  };

  for (std::size_t l = 0; l < n.filters.size(); ++l)
    check_block(n.filters[l].data.data(), g.filters[l].data.data(),
                n.filters[l].data.size());
  for (std::size_t l = 0; l < n.biases.size(); ++l)
    check_block(n.biases[l].data(), g.biases[l].data(), n.biases[l].size());
  check_block(h.coarse_weights.data(), g.coarse_weights.data(),
              h.coarse_weights.size());
  check_block(h.coarse_bias.data(), g.coarse_bias.data(),
              h.coarse_bias.size());
  for (int ti = 0; ti < nt; ++ti)
    check_block(h.taps[ti].filter.data.data(), g.taps[ti].data.data(),
                h.taps[ti].filter.data.size());
  return worst;
}

namespace {

void momentum_update(double* theta, double* vel, const double* grad,
                     std::size_t len, double lr, double mu, double wd) {
  for (std::size_t i = 0; i < len; ++i) {
    vel[i] = mu * vel[i] - lr * (grad[i] + wd * theta[i]);
    theta[i] += vel[i];
  }
}

}  // namespace

void sgd_step(RGNetwork& net, HeadBank& heads, const ModelGrads& grads,
              ModelGrads& velocity, const TrainConfig& cfg, int n_taps) {
  const int nt = n_taps < 0 ? static_cast<int>(heads.taps.size()) : n_taps;
  const double lr = cfg.learning_rate;
  const double mu = cfg.momentum;
  const double wd = cfg.weight_decay;
  const double decay = cfg.lr_decay_per_finer_scale;

  for (std::size_t l = 0; l < net.filters.size(); ++l)
    momentum_update(net.filters[l].data.data(), velocity.filters[l].data.data(),
                    grads.filters[l].data.data(), net.filters[l].data.size(),
                    lr, mu, wd);
  for (std::size_t l = 0; l < net.biases.size(); ++l)
    momentum_update(net.biases[l].data(), velocity.biases[l].data(),
                    grads.biases[l].data(), net.biases[l].size(), lr, mu, wd);

  // The coarse head sits below every enabled tap; tap j sits below the
  // nt-1-j finer ones.
  const double coarse_lr = lr * std::pow(decay, nt);
  momentum_update(heads.coarse_weights.data(), velocity.coarse_weights.data(),
                  grads.coarse_weights.data(), heads.coarse_weights.size(),
                  coarse_lr, mu, wd);
  momentum_update(heads.coarse_bias.data(), velocity.coarse_bias.data(),
                  grads.coarse_bias.data(), heads.coarse_bias.size(),
                  coarse_lr, mu, wd);
  for (int ti = 0; ti < nt; ++ti) {
    const double tap_lr = lr * std::pow(decay, nt - 1 - ti);
    momentum_update(heads.taps[ti].filter.data.data(),
                    velocity.taps[ti].data.data(), grads.taps[ti].data.data(),
                    heads.taps[ti].filter.data.size(), tap_lr, mu, wd);
  }
}

void randomize_parameters(RGNetwork& net, HeadBank& heads,
                          std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (FilterBank& f : net.filters) {
    const double scale =
        0.5 / std::sqrt(static_cast<double>(f.in_channels) * f.k_h * f.k_w);
    for (double& v : f.data) v = scale * gauss(rng);
  }
  for (auto& b : net.biases)
    for (double& v : b) v = 0.01 * gauss(rng);
  {
    const Dims top = net.layer_dims.back();
    const double scale =
        0.5 / std::sqrt(static_cast<double>(top.channels) * top.height *
                        top.width);
    for (double& v : heads.coarse_weights) v = scale * gauss(rng);
    for (double& v : heads.coarse_bias) v = 0.0;
  }
  for (HeadBank::Tap& t : heads.taps) {
    const double scale = 0.5 / std::sqrt(static_cast<double>(t.filter.in_channels));
    for (double& v : t.filter.data) v = scale * gauss(rng);
  }
}

std::vector<TrainLogEntry> train(const Dataset& data, RGNetwork& net,
                                 HeadBank& heads, const TrainConfig& cfg,
                                 std::ostream* log) {
  cfg.validate();
  if (data.samples.empty())
    throw std::invalid_argument("train: dataset is empty");

  std::vector<TrainLogEntry> history;
  const int n_stages = static_cast<int>(heads.taps.size()) + 1;
  const int n = static_cast<int>(data.samples.size());

  for (int stage = 1; stage <= n_stages; ++stage) {
    const int nt = stage - 1;
    const Dims pd = prediction_dims(heads, net, nt);

    std::vector<TrainingExample> examples;
    examples.reserve(n);
    for (const Sample& s : data.samples) {
      TrainingExample ex;
      ex.image = &s.image;
      ex.target = make_target(s, pd.height, pd.width, cfg.positive_radius);
      ex.visible = s.visibility;
      examples.push_back(std::move(ex));
    }

    ModelGrads velocity = zero_grads(net, heads);
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
      const auto t0 = std::chrono::steady_clock::now();
      std::mt19937_64 rng(cfg.seed * 0x100000001b3ULL + stage * 1000003ULL +
                          epoch);
      std::shuffle(order.begin(), order.end(), rng);

      double loss_sum = 0.0;
      int n_batches = 0;
      std::vector<TrainingExample> batch;
      for (int start = 0; start < n; start += cfg.batch_size) {
        batch.clear();
        for (int i = start; i < std::min(n, start + cfg.batch_size); ++i)
          batch.push_back(examples[order[i]]);
        const ModelGrads g = backward(net, heads, batch, cfg.k, nt);
        sgd_step(net, heads, g, velocity, cfg, nt);
        loss_sum += g.loss;
        ++n_batches;
      }

      TrainLogEntry e;
      e.stage = stage;
      e.epoch = epoch;
      e.mean_loss = loss_sum / std::max(1, n_batches);
      e.seconds = std::chrono::duration<double>(
                      std::chrono::steady_clock::now() - t0)
                      .count();
      history.push_back(e);
      if (log)
        (*log) << "stage " << stage << " epoch " << epoch << " loss "
               << e.mean_loss << " time " << e.seconds << "s\n";
    }
  }
  return history;
}

}  // namespace rg
