#pragma once

#include <string>

#include "husformer/model.hpp"

namespace hus {

struct Checkpoint {
    ModelConfig config;
    ModelParams params;
};

// Flat binary parameter snapshot:
//   magic "HSFC" | version u32 | config_json_len u32 | config JSON |
//   tensor_count u32 | per tensor { rank u32, dims u32..., f64 data }
// Tensors appear in registration order; reloading rebuilds the variant from
// the embedded config and restores every value bit-exactly.
void save_checkpoint(const std::string& path, const ModelConfig& cfg, const ModelParams& params);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace hus
