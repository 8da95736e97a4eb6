#pragma once

#include <string>
#include <vector>

#include "rg/heads.hpp"
#include "rg/model.hpp"
#include "rg/train.hpp"

namespace rg {

/// Parsed model + training configuration. The textual format is a
/// key = value document, one entry per line, '#' comments. Architecture
/// keys: input (CxHxW), repeated layer lines (out= k= [stride=] [pad=]
/// [nms=]), taps (layer indices, coarse to fine), keypoints. Training keys
/// mirror TrainConfig: lr, momentum, weight_decay, batch_size, epochs, k,
/// lr_decay_per_finer_scale, positive_radius, seed.
struct FullConfig {
  Dims input{1, 56, 56};
  std::vector<LayerConfig> layers;
  std::vector<int> tap_layers;
  int keypoints = 5;
  TrainConfig train;
};

FullConfig parse_config(const std::string& text);
FullConfig load_config(const std::string& path);

struct Model {
  RGNetwork net;
  HeadBank heads;
};

/// Builds the zero-initialized network and head bank described by a config.
Model build_model(const FullConfig& cfg);

}  // namespace rg
