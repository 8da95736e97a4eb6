#include "rg/heads.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace rg {

HeadBank HeadBank::build(const RGNetwork& net, int num_keypoints,
                         std::span<const int> tap_layers) {
  if (num_keypoints < 1)
    throw std::invalid_argument("HeadBank: need at least one keypoint");
  if (net.num_layers() < 1)
    throw std::invalid_argument("HeadBank: empty network");
  HeadBank h;
  h.num_keypoints = num_keypoints;
  const Dims top = net.layer_dims.back();
  h.coarse_h = top.height;
  h.coarse_w = top.width;
  const std::size_t top_size =
      static_cast<std::size_t>(top.channels) * top.height * top.width;
  h.coarse_weights.assign(static_cast<std::size_t>(num_keypoints) *
                              h.coarse_h * h.coarse_w * top_size,
                          0.0);
  h.coarse_bias.assign(
      static_cast<std::size_t>(num_keypoints) * h.coarse_h * h.coarse_w, 0.0);

  int prev_w = h.coarse_w;
  std::vector<bool> used(net.num_layers() + 1, false);
  for (int layer : tap_layers) {
    if (layer < 1 || layer > net.num_layers())
      throw std::invalid_argument("HeadBank: tap layer " +
                                  std::to_string(layer) + " out of range");
    if (used[layer])
      throw std::invalid_argument("HeadBank: duplicate tap layer " +
                                  std::to_string(layer));
    used[layer] = true;
    const Dims d = net.layer_dims[layer - 1];
    if (d.width < prev_w || d.width % prev_w != 0)
      throw std::invalid_argument(
          "HeadBank: tap layer " + std::to_string(layer) +
          " is not an integer upsample of the previous scale");
    prev_w = d.width;
    Tap t;
    t.layer = layer;
    t.filter = FilterBank(num_keypoints, d.channels, 1, 1);
    h.taps.push_back(std::move(t));
  }
  return h;
}

Tensor upsample_nearest(const Tensor& x, int factor) {
  if (factor < 1) throw std::invalid_argument("upsample_nearest: factor < 1");
  Tensor out(x.channels, x.height * factor, x.width * factor);
  for (int c = 0; c < x.channels; ++c)
    for (int y = 0; y < out.height; ++y)
      for (int xx = 0; xx < out.width; ++xx)
        out.at(c, y, xx) = x.at(c, y / factor, xx / factor);
  return out;
}

Tensor downsample_sum(const Tensor& g, int factor) {
  if (factor < 1) throw std::invalid_argument("downsample_sum: factor < 1");
  if (g.height % factor != 0 || g.width % factor != 0)
    throw std::invalid_argument("downsample_sum: dims not divisible");
  Tensor out(g.channels, g.height / factor, g.width / factor);
  for (int c = 0; c < g.channels; ++c)
    for (int y = 0; y < g.height; ++y)
      for (int xx = 0; xx < g.width; ++xx)
        out.at(c, y / factor, xx / factor) += g.at(c, y, xx);
  return out;
}

Dims prediction_dims(const HeadBank& heads, const RGNetwork& net, int n_taps) {
  const int nt = n_taps < 0 ? static_cast<int>(heads.taps.size()) : n_taps;
  if (nt > static_cast<int>(heads.taps.size()))
    throw std::invalid_argument("prediction_dims: n_taps out of range");
  if (nt == 0) return {heads.num_keypoints, heads.coarse_h, heads.coarse_w};
  const Dims d = net.layer_dims[heads.taps[nt - 1].layer - 1];
  return {heads.num_keypoints, d.height, d.width};
}

Tensor predict_heads(const HeadBank& heads, const RGNetwork& net,
                     const InferenceTrace& trace, int n_taps) {
  const int nt = n_taps < 0 ? static_cast<int>(heads.taps.size()) : n_taps;
  if (nt < 0 || nt > static_cast<int>(heads.taps.size()))
    throw std::invalid_argument("predict_heads: n_taps out of range");
  if (static_cast<int>(trace.z.size()) != net.num_layers())
    throw std::invalid_argument("predict_heads: trace/network layer mismatch");

  const Tensor& top = trace.z.back();
  const std::size_t top_size = top.size();
  if (heads.coarse_weights.size() !=
      static_cast<std::size_t>(heads.num_keypoints) * heads.coarse_h *
          heads.coarse_w * top_size)
    throw std::invalid_argument("predict_heads: coarse head does not match "
                                "the top layer");

  Tensor pred(heads.num_keypoints, heads.coarse_h, heads.coarse_w);
  for (int m = 0; m < heads.num_keypoints; ++m)
    for (int gy = 0; gy < heads.coarse_h; ++gy)
      for (int gx = 0; gx < heads.coarse_w; ++gx) {
        const std::size_t o =
            (static_cast<std::size_t>(m) * heads.coarse_h + gy) *
                heads.coarse_w +
            gx;
        const double* w = &heads.coarse_weights[o * top_size];
        double acc = heads.coarse_bias[o];
        for (std::size_t t = 0; t < top_size; ++t) acc += w[t] * top.data[t];
        pred.data[o] = acc;
      }

  for (int ti = 0; ti < nt; ++ti) {
    const HeadBank::Tap& tap = heads.taps[ti];
    const Tensor& z = trace.z[tap.layer - 1];
    if (z.channels != tap.filter.in_channels)
      throw std::invalid_argument("predict_heads: tap " + std::to_string(ti) +
                                  " channel mismatch with layer " +
                                  std::to_string(tap.layer));
    if (z.width % pred.width != 0 || z.height % pred.height != 0)
      throw std::invalid_argument("predict_heads: tap " + std::to_string(ti) +
                                  " resolution is not an integer multiple");
    const int factor = z.width / pred.width;
    if (z.height / pred.height != factor)
      throw std::invalid_argument("predict_heads: anisotropic upsample factor");
    pred = upsample_nearest(pred, factor);
    const Tensor fine = correlate(tap.filter, z);
    for (std::size_t p = 0; p < pred.data.size(); ++p)
      pred.data[p] += fine.data[p];
  }
  return pred;
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

namespace {

void check_loss_inputs(const Tensor& logits, const Tensor& target,
                       std::span<const std::uint8_t> visible) {
  if (!logits.same_shape(target))
    throw std::invalid_argument("heatmap_loss: logits/target shape mismatch");
  if (static_cast<int>(visible.size()) != logits.channels)
    throw std::invalid_argument("heatmap_loss: visibility mask length "
                                "does not match keypoint count");
  for (double t : target.data)
    if (t != 0.0 && t != 1.0)
      throw std::invalid_argument("heatmap_loss: target is not binary");
}

// Numerically stable -[t log s(l) + (1-t) log(1 - s(l))].
double bce_with_logit(double logit, double t) {
  const double m = std::max(logit, 0.0);
  return m - logit * t + std::log1p(std::exp(-std::abs(logit)));
}

}  // namespace

double heatmap_loss(const Tensor& logits, const Tensor& target,
                    std::span<const std::uint8_t> visible) {
  check_loss_inputs(logits, target, visible);
  double sum = 0.0;
  const std::size_t plane =
      static_cast<std::size_t>(logits.height) * logits.width;
  for (int m = 0; m < logits.channels; ++m) {
    const double* l = &logits.data[m * plane];
    const double* t = &target.data[m * plane];
    for (std::size_t p = 0; p < plane; ++p) {
      const double tv = visible[m] ? t[p] : 0.0;
      sum += bce_with_logit(l[p], tv);
    }
  }
  return sum / static_cast<double>(logits.data.size());
}

Tensor heatmap_loss_grad(const Tensor& logits, const Tensor& target,
                         std::span<const std::uint8_t> visible) {
  check_loss_inputs(logits, target, visible);
  Tensor g(logits.dims());
  const double inv = 1.0 / static_cast<double>(logits.data.size());
  const std::size_t plane =
      static_cast<std::size_t>(logits.height) * logits.width;
  for (int m = 0; m < logits.channels; ++m)
    for (std::size_t p = 0; p < plane; ++p) {
      const double tv = visible[m] ? target.data[m * plane + p] : 0.0;
      g.data[m * plane + p] = (sigmoid(logits.data[m * plane + p]) - tv) * inv;
    }
  return g;
}

}  // namespace rg
