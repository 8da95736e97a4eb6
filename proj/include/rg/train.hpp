#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "rg/heads.hpp"
#include "rg/infer.hpp"
#include "rg/model.hpp"

namespace rg {

struct TrainConfig {
  double learning_rate = 1e-2;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  int batch_size = 8;
  int epochs = 10;        // per coarse-to-fine stage
  int k = 2;              // passes for qp_k
  double lr_decay_per_finer_scale = 0.1;
  double positive_radius = 1.0;  // pixels at heatmap resolution
  std::uint64_t seed = 0;

  void validate() const;
};

struct TrainingExample {
  const Tensor* image = nullptr;
  Tensor target;                        // binary heatmap at logit resolution
  std::vector<std::uint8_t> visible;    // per keypoint
};

/// Gradient (or velocity) storage mirroring every learned parameter.
struct ModelGrads {
  std::vector<FilterBank> filters;
  std::vector<std::vector<double>> biases;
  std::vector<double> coarse_weights;
  std::vector<double> coarse_bias;
  std::vector<FilterBank> taps;
  double loss = 0.0;  // mean data loss over the batch (no decay term)
};

ModelGrads zero_grads(const RGNetwork& net, const HeadBank& heads);

/// Reverse-mode derivative of the mean heatmap loss through the k-times
/// unrolled inference graph. Tied filters accumulate gradient from every
/// unrolled use (both the correlation and the transposed-convolution side);
/// rectification gates on positive activations and NMS routes gradient to
/// the selected position only. `passes_used` truncates the unrolled graph
/// to its first passes (0 = all k); the loss is then taken at that depth.
ModelGrads backward(const RGNetwork& net, const HeadBank& heads,
                    std::span<const TrainingExample> batch, int k,
                    int n_taps = -1, int passes_used = 0);

/// Forward-only mean loss of a batch (used by the finite-difference check).
double batch_loss(const RGNetwork& net, const HeadBank& heads,
                  std::span<const TrainingExample> batch, int k,
                  int n_taps = -1);

/// Central-difference verification of backward. Checks every parameter of
/// small models (deterministically subsampled beyond 512 per block) and
/// returns the max relative error. Callers must keep pre-activations away
/// from the rectifier kink by >= 10*eps.
double finite_diff_check(RGNetwork& net, HeadBank& heads,
                         std::span<const TrainingExample> batch, int k,
                         double eps, int n_taps = -1);

/// Momentum SGD over every enabled parameter:
/// v <- momentum*v - lr_eff*(g + weight_decay*theta); theta <- theta + v.
/// Head parameters built on coarser scales decay their lr by
/// lr_decay_per_finer_scale for every finer enabled tap.
void sgd_step(RGNetwork& net, HeadBank& heads, const ModelGrads& grads,
              ModelGrads& velocity, const TrainConfig& cfg, int n_taps);

/// Deterministic random initialization of all filters, biases, and heads.
void randomize_parameters(RGNetwork& net, HeadBank& heads, std::uint64_t seed);

struct Dataset;  // see rg/data.hpp

struct TrainLogEntry {
  int stage = 0;
  int epoch = 0;
  double mean_loss = 0.0;
  double seconds = 0.0;
};

/// Coarse-to-fine staged training: stage s enables the s coarsest scales,
/// initialized from the previous stage. Deterministic given cfg.seed.
std::vector<TrainLogEntry> train(const Dataset& data, RGNetwork& net,
                                 HeadBank& heads, const TrainConfig& cfg,
                                 std::ostream* log = nullptr);

}  // namespace rg
