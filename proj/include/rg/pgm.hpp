#pragma once

#include <string>

#include "rg/tensor.hpp"

namespace rg {

/// Writes a single-channel tensor as binary PGM (P5, maxval 255);
/// values are clamped to [0,1] and scaled by 255.
void write_pgm(const std::string& path, const Tensor& image);

/// Reads a binary PGM into a single-channel tensor with values in [0,1].
Tensor read_pgm(const std::string& path);

}  // namespace rg
