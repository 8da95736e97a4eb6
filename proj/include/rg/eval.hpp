#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "rg/tensor.hpp"

namespace rg {

struct PrPoint {
  double threshold = 0.0;
  double precision = 0.0;
  double recall = 0.0;
};

struct EvalReport {
  double pck = 0.0;
  std::vector<double> pck_per_keypoint;
  std::vector<PrPoint> pr_curve;
  double recall_at_p80 = 0.0;
};

struct KeypointPrediction {
  double x = 0.0;
  double y = 0.0;
  double confidence = 0.0;  // sigmoid of the peak logit
};

/// Argmax location and peak confidence per keypoint channel; heatmap
/// coordinates are mapped back to image pixels through the cell centers.
std::vector<KeypointPrediction> extract_keypoints(const Tensor& logits,
                                                  int image_h, int image_w);

/// Fraction of visible ground-truth keypoints with Euclidean error
/// <= alpha * ref_size. preds/gts are flat x,y pairs per sample,
/// visibility selects which ground-truth keypoints are scored.
double eval_pck(std::span<const double> pred_xy, std::span<const double> gt_xy,
                std::span<const std::uint8_t> visible, double alpha,
                double ref_size);

/// Precision-recall over all thresholds of the confidence scores, treating
/// `labels` as the positive class. Throws when there are no positives.
EvalReport eval_visibility_pr(std::span<const double> confidences,
                              std::span<const std::uint8_t> labels);

}  // namespace rg
