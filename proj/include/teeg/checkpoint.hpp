#pragma once

#include <string>

#include "teeg/tensor.hpp"

namespace teeg {

// Flat binary parameter container. Layout: magic "TEEG1", then per tensor:
// u16 name length, UTF-8 name, u8 rank, u32 dims, little-endian f64 payload.
// Tensors are written in name order, so files are byte-reproducible.
void save_checkpoint(const std::string& path, const TensorMap& tensors);
TensorMap load_checkpoint(const std::string& path);

std::string checkpoint_to_bytes(const TensorMap& tensors);
TensorMap checkpoint_from_bytes(const std::string& bytes);

}  // namespace teeg
