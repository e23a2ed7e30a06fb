#pragma once

#include <string>

#include "husformer/model.hpp"
#include "husformer/train.hpp"

namespace hus {

// One run = model + training setup + dataset + outputs. Parsed from a JSON
// document; unknown keys are rejected and all ranges are validated before
// any computation starts.
struct RunConfig {
    std::string dataset_path;
    std::string output_dir;
    Variant variant = Variant::husformer;
    bool dump_attention = false;
    std::size_t jobs = 1;

    // Model fields; modalities (names/shapes) are resolved from the dataset
    // header, kernel sizes come from the config.
    std::size_t hidden_dim = 40;
    std::size_t heads = 3;
    std::size_t cm_layers = 4;
    std::size_t sa_layers = 1;
    std::size_t d_k = 0;
    std::size_t d_v = 0;
    std::size_t ffn_dim = 64;
    double attn_dropout = 0.0;
    double output_dropout = 0.0;
    bool positional_encoding = true;
    std::vector<std::size_t> kernel_sizes;  // one per modality, or one for all

    TrainConfig train;
};

RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);

// Combines the run config with the dataset header into a validated
// ModelConfig.
ModelConfig resolve_model_config(const RunConfig& run, const Dataset& dataset);

// Round-trip serialization of a resolved model config (used inside
// checkpoints).
std::string model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const std::string& json_text);

// Cross-validation report: config echo, seed, per-fold metrics and loss
// traces, aggregate mean/std.
std::string cross_validation_report_json(const CrossValidationResult& result, const ModelConfig& cfg,
                                         const TrainConfig& tc, const std::string& dataset_path);

}  // namespace hus
