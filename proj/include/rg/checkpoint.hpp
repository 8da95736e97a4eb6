#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "rg/heads.hpp"
#include "rg/model.hpp"
#include "rg/train.hpp"

namespace rg {

struct TrainState {
  std::uint32_t stage = 0;
  std::uint32_t epoch = 0;
  ModelGrads velocity;
};

/// Self-describing model container: architecture plus every parameter as
/// little-endian float64 ("RGCK" format). Round trips are bit-exact.
struct Checkpoint {
  RGNetwork net;
  HeadBank heads;
  std::optional<TrainState> state;
};

void save_checkpoint(const Checkpoint& ck, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

/// Empty string when the checkpoint architecture matches the given network
/// and head structure; otherwise a description naming the first mismatch.
std::string architecture_mismatch(const Checkpoint& ck, const RGNetwork& net,
                                  const HeadBank& heads);

}  // namespace rg
