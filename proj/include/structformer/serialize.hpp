#pragma once

#include <string>

#include "structformer/tensor.hpp"

namespace structformer {

// Binary tensor container, little-endian:
//   magic "SFTC", version u32, tensor count u64,
//   then per tensor: name length u32, UTF-8 name, rank u32,
//   dims u64 x rank, values f32 x numel.
void save_tensor_container(const std::string& path, const ParamMap& tensors);
ParamMap load_tensor_container(const std::string& path);

}  // namespace structformer
