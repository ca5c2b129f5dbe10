#pragma once

#include <string>
#include <vector>

#include "pxrl/tensor.hpp"

namespace pxrl {

// Container for parameters and activation dumps. Layout: magic bytes "PXRL",
// format version u32, then per-tensor records of (name length u32, name
// bytes, rank u32, dims u32[], values f32), all little-endian, until EOF.

inline constexpr uint32_t kCheckpointVersion = 1;

struct NamedTensor {
    std::string name;
    Shape shape;
    std::vector<float> values;
};

void write_tensor_file(const std::string& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_tensor_file(const std::string& path);

// Convenience: save/load the named parameter list of a bundle.
void save_checkpoint(const std::string& path, const std::vector<std::pair<std::string, TensorPtr<float>>>& params);
void load_checkpoint(const std::string& path, const std::vector<std::pair<std::string, TensorPtr<float>>>& params);

}  // namespace pxrl
