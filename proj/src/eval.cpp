#include "rg/eval.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "rg/heads.hpp"

namespace rg {

std::vector<KeypointPrediction> extract_keypoints(const Tensor& logits,
                                                  int image_h, int image_w) {
  std::vector<KeypointPrediction> out;
  const double fx = static_cast<double>(image_w) / logits.width;
  const double fy = static_cast<double>(image_h) / logits.height;
  for (int m = 0; m < logits.channels; ++m) {
    int by = 0, bx = 0;
    double best = logits.at(m, 0, 0);
    for (int y = 0; y < logits.height; ++y)
      for (int x = 0; x < logits.width; ++x)
        if (logits.at(m, y, x) > best) {
          best = logits.at(m, y, x);
          by = y;
          bx = x;
        }
    KeypointPrediction p;
    p.x = (bx + 0.5) * fx - 0.5;
    p.y = (by + 0.5) * fy - 0.5;
    p.confidence = sigmoid(best);
    out.push_back(p);
  }
  return out;
}

double eval_pck(std::span<const double> pred_xy, std::span<const double> gt_xy,
                std::span<const std::uint8_t> visible, double alpha,
                double ref_size) {
  if (pred_xy.size() != gt_xy.size() || pred_xy.size() != 2 * visible.size())
    throw std::invalid_argument("eval_pck: length mismatch");
  int correct = 0, total = 0;
  for (std::size_t m = 0; m < visible.size(); ++m) {
    if (!visible[m]) continue;  // only visible keypoints are scored
    ++total;
    const double err = std::hypot(pred_xy[2 * m] - gt_xy[2 * m],
                                  pred_xy[2 * m + 1] - gt_xy[2 * m + 1]);
    if (err <= alpha * ref_size) ++correct;
  }
  return total > 0 ? static_cast<double>(correct) / total : 0.0;
}

EvalReport eval_visibility_pr(std::span<const double> confidences,
                              std::span<const std::uint8_t> labels) {
  if (confidences.size() != labels.size())
    throw std::invalid_argument("eval_visibility_pr: length mismatch");
  int positives = 0;
  for (std::uint8_t l : labels) positives += l ? 1 : 0;
  if (positives == 0)
    throw std::invalid_argument(
        "eval_visibility_pr: no positive labels, recall undefined");

  std::vector<double> thresholds(confidences.begin(), confidences.end());
  std::sort(thresholds.begin(), thresholds.end());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()),
                   thresholds.end());

  EvalReport rep;
  for (double t : thresholds) {
    int tp = 0, fp = 0;
    for (std::size_t i = 0; i < confidences.size(); ++i) {
      if (confidences[i] >= t) {
        if (labels[i])
          ++tp;
        else
          ++fp;
      }
    }
    PrPoint p;
    p.threshold = t;
    p.precision = tp + fp > 0 ? static_cast<double>(tp) / (tp + fp) : 1.0;
    p.recall = static_cast<double>(tp) / positives;
    rep.pr_curve.push_back(p);
    if (p.precision >= 0.8)
      rep.recall_at_p80 = std::max(rep.recall_at_p80, p.recall);
  }
  return rep;
}

}  // namespace rg
