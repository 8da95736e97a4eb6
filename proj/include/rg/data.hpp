#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rg/tensor.hpp"

namespace rg {

/// One synthetic image with per-keypoint locations (pixel units, x right,
/// y down) and visibility flags. Invisible keypoints keep their coordinates
/// but are excluded from localization targets.
struct Sample {
  Tensor image;                         // 1 x S x S
  std::vector<double> keypoints;        // x0,y0,x1,y1,...
  std::vector<std::uint8_t> visibility;
};

struct DatasetSpec {
  std::uint32_t n_samples = 0;
  std::uint32_t image_size = 56;
  std::uint32_t n_keypoints = 5;  // head, l-hand, r-hand, l-foot, r-foot
  double occlusion_rate = 0.0;
  double ambiguity = 1.0;  // probability mirrored limbs look identical
  double noise_std = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct Dataset {
  DatasetSpec spec;
  std::vector<Sample> samples;
};

/// Renders one articulated stick figure with occluder rectangles. Pure
/// function of (spec.seed, index).
Sample generate_sample(const DatasetSpec& spec, std::uint32_t index);

Dataset generate_dataset(const DatasetSpec& spec);

/// M-channel binary heatmap: channel m is 1 within Euclidean distance
/// `radius` of keypoint m (coordinates rescaled to heatmap resolution),
/// all-zero when the keypoint is invisible. radius 0 marks the single
/// rounded pixel.
Tensor make_target(const Sample& s, int heatmap_h, int heatmap_w,
                   double radius);

/// Binary "RGDS" container, little-endian, byte-exact round trip.
void write_dataset(const Dataset& d, const std::string& path);
Dataset load_dataset(const std::string& path);

/// Plain-text interoperability variant: one PGM image per sample plus a
/// manifest with one line per sample (path, then x y v per keypoint).
void write_manifest(const Dataset& d, const std::string& dir);

}  // namespace rg
