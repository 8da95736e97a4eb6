#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "rg/infer.hpp"
#include "rg/model.hpp"

namespace rg {

/// Multi-scale linear predictors on top of the inferred activations.
/// The coarse head is a spatially-varying (fully-connected) linear map from
/// the top layer to an M-channel coarse grid; each tap is a 1x1 filter bank
/// over an intermediate layer. Taps are ordered coarse to fine and fused by
/// nearest-neighbor upsampling followed by addition.
struct HeadBank {
  struct Tap {
    int layer = 0;      // 1-based latent layer index
    FilterBank filter;  // 1x1, out_channels = num_keypoints
  };

  int num_keypoints = 0;
  int coarse_h = 0;
  int coarse_w = 0;
  // coarse_weights[m][gy][gx][c][h][w] over the top layer, flattened
  std::vector<double> coarse_weights;
  std::vector<double> coarse_bias;  // [m][gy][gx]
  std::vector<Tap> taps;

  /// Zero-initialized bank whose coarse grid equals the top layer's spatial
  /// dims. tap_layers are 1-based and must be ordered coarse to fine.
  static HeadBank build(const RGNetwork& net, int num_keypoints,
                        std::span<const int> tap_layers);
};

/// Nearest-neighbor upsampling by an integer factor.
Tensor upsample_nearest(const Tensor& x, int factor);

/// Adjoint of upsample_nearest: sums each factor x factor block.
Tensor downsample_sum(const Tensor& g, int factor);

/// Output dims when the first n_taps taps are enabled (-1 = all).
Dims prediction_dims(const HeadBank& heads, const RGNetwork& net, int n_taps);

/// Coarse-to-fine fused keypoint logits. Only the first n_taps taps are
/// applied (-1 = all); the running prediction is upsampled to each tap's
/// resolution and the tap's 1x1 output is added.
Tensor predict_heads(const HeadBank& heads, const RGNetwork& net,
                     const InferenceTrace& trace, int n_taps = -1);

double sigmoid(double x);

/// Mean per-pixel logistic log-loss over pixels and keypoints. Channels of
/// invisible keypoints are scored against all-zero targets. Targets must be
/// binary.
double heatmap_loss(const Tensor& logits, const Tensor& target,
                    std::span<const std::uint8_t> visible);

/// dLoss/dlogits for heatmap_loss (same normalization).
Tensor heatmap_loss_grad(const Tensor& logits, const Tensor& target,
                         std::span<const std::uint8_t> visible);

}  // namespace rg
