#pragma once

#include <optional>
#include <span>
#include <vector>

#include "rg/tensor.hpp"

namespace rg {

/// One latent layer of the hierarchy. The filter bank connecting the layer
/// below to this layer has geometry (out_channels x in_channels x k_h x k_w,
/// stride, pad). nms_group > 0 marks lateral inhibition over non-overlapping
/// spatial windows of that extent (per channel).
struct LayerConfig {
  int in_channels = 0;
  int out_channels = 0;
  int k_h = 0;
  int k_w = 0;
  int stride = 1;
  int pad_h = 0;
  int pad_w = 0;
  int nms_group = 0;  // 0 = no lateral inhibition
};

/// Hierarchical rectified Gaussian weight structure. Self-weights are fixed
/// at -1 and not stored; lateral inhibition is a hard constraint carried by
/// the group geometry, not a stored number. filters[i] connects latent layer
/// i to latent layer i+1 (with the observed image below layer 0).
struct RGNetwork {
  std::vector<LayerConfig> layers;
  std::vector<FilterBank> filters;            // one per layer
  std::vector<std::vector<double>> biases;    // per layer, per out channel
  Dims input_dims;
  std::vector<Dims> layer_dims;  // computed from input_dims and the configs

  int num_layers() const { return static_cast<int>(layers.size()); }

  /// Validates shapes (including NMS tilings), computes layer_dims, and
  /// zero-initializes all filters and biases.
  static RGNetwork build(Dims input, std::vector<LayerConfig> cfgs);
};

/// NMS window extent along one axis: the group extent clipped to the axis.
int nms_window(int group, int axis_extent);

/// Explicit QP over the latent variables only: maximize 1/2 z'Wz + b'z
/// subject to z >= 0 and at-most-one-positive within each group.
struct DenseQP {
  int n = 0;
  std::vector<double> W;  // n*n, symmetric, diag -1 for expanded networks
  std::vector<double> b;
  std::vector<std::vector<int>> groups;  // disjoint index sets

  double w(int i, int j) const { return W[static_cast<std::size_t>(i) * n + j]; }
  double& w(int i, int j) { return W[static_cast<std::size_t>(i) * n + j]; }
};

/// 1/2 z'Wz + b'z, or nullopt when some group has two or more strictly
/// positive entries (the -inf lateral weights realized as a hard constraint).
/// Negative entries in z are rejected.
std::optional<double> score(const DenseQP& qp, std::span<const double> z);

struct CopositiveVerdict {
  bool copositive_on_grid = false;
  std::vector<double> counterexample;  // nonempty iff not copositive_on_grid
  double value = 0.0;                  // z'Mz at the counterexample
};

/// Evaluates z'Mz over all rational points of the standard simplex with
/// denominator `resolution`. Certifies only "copositive on this grid".
/// Rejected when the grid is too large to enumerate at desk scale.
CopositiveVerdict check_copositive_grid(int n, std::span<const double> M,
                                        int resolution);

/// Index of latent variable (layer, c, y, x) in the dense expansion:
/// layer-major, then channel-major, then row-major. `layer` is 0-based.
int dense_index(const RGNetwork& net, int layer, int c, int y, int x);

/// Total latent variable count of a network.
int latent_count(const RGNetwork& net);

/// Testing bridge from the structured hierarchy to a generic dense QP.
/// The observed image x is folded into b (b_eff = bias + bottom-up drive
/// from x for layer 0), so the dense solvers see latent variables only.
DenseQP dense_expand(const RGNetwork& net, const Tensor& x);

}  // namespace rg
