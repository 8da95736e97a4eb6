#pragma once

#include <functional>
#include <span>
#include <vector>

#include "rg/model.hpp"
#include "rg/tensor.hpp"

namespace rg {

/// Per-layer activation states across coordinate-descent passes.
/// Invariant: activations are nonnegative at all times, and within each NMS
/// group at most one is strictly positive.
struct InferenceTrace {
  std::vector<Tensor> z;        // one per latent layer
  int passes = 0;               // completed passes
  double converged_gap = 0.0;   // max |delta z| over the final pass
};

/// The 1-d clipped coordinate update with the self-weight fixed at -1.
inline double coord_update_scalar(double drive) {
  return drive > 0.0 ? drive : 0.0;
}

/// Joint update of disjoint NMS groups: within each window the maximally
/// driven position receives max(0, drive), all others exactly 0. Ties break
/// to the lowest linear index.
Tensor nms_group_update(const Tensor& drives, int group);

/// One layerwise coordinate update (Eq-style: z_i = rect(b + top + bot),
/// then NMS if configured). `layer` is 1-based; all other layers untouched.
void layer_update(const RGNetwork& net, InferenceTrace& trace, int layer,
                  const Tensor& x);

/// k passes of layerwise coordinate descent starting from z = 0.
/// Pass 1 ascends layers 1..L; even passes descend L-1..1; odd passes > 1
/// ascend 2..L. Always returns finite activations, for any weights.
InferenceTrace qp_k(const RGNetwork& net, const Tensor& x, int k);

/// Alternating passes until the max per-pass activation change drops below
/// gap_tol (or max_passes is hit). Used by the oracle-equivalence tests.
InferenceTrace qp_converge(const RGNetwork& net, const Tensor& x,
                           double gap_tol, int max_passes);

struct DenseCDResult {
  std::vector<double> z;
  int sweeps = 0;
  bool converged = false;
  bool diverged = false;  // iterates exceeded the divergence threshold
};

/// Called after every single coordinate/group update with the current z.
using DenseCDObserver = std::function<void(std::span<const double>)>;

/// Cyclic clipped coordinate descent on a dense QP with diag(W) = -1.
/// Coordinates inside a group are updated jointly by the NMS rule.
DenseCDResult dense_coordinate_descent(const DenseQP& qp, int max_sweeps,
                                       double tol,
                                       const DenseCDObserver& observer = {});

/// Projected gradient ascent z <- max(0, z + step * (Wz + b)). Rejected for
/// instances with groups (no projection onto the exclusivity sets).
std::vector<double> projected_gradient(const DenseQP& qp, double step,
                                       int iters);

}  // namespace rg
