#pragma once

#include "husformer/model.hpp"

namespace hus {

// Resolved architectural facts for a configured variant.
struct VariantDescriptor {
    Variant kind = Variant::husformer;
    std::size_t cross_modal_transformers = 0;  // husformer: n, husfuse: 0, huspair: n^2-n
    std::size_t parameter_count = 0;
};

// Builds and initializes the parameter set plus wiring for cfg.variant:
//   husformer — one cross-modal transformer per modality, Keys/Values from
//               the fusion representation;
//   husfuse   — no cross-modal stage, the low-level fusion feeds the
//               self-attention module directly;
//   huspair   — one cross-modal transformer per ordered modality pair
//               (target, source), outputs averaged per target.
// Weights are drawn uniformly from [-1/sqrt(fan_in), +1/sqrt(fan_in)];
// layer-norm gains start at 1, biases at 0.
ModelParams build_variant(const ModelConfig& cfg, Rng& rng);

std::size_t count_parameters(const ModelParams& params);

VariantDescriptor describe_variant(const ModelConfig& cfg, const ModelParams& params);

}  // namespace hus
