#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "husformer/data.hpp"
#include "husformer/tensor.hpp"

namespace hus {

// One modality's input geometry plus its temporal-convolution kernel width.
struct ModalitySpec {
    std::string name;
    std::size_t channels = 0;    // L_i
    std::size_t input_dim = 0;   // D_i (samples per window)
    std::size_t kernel_size = 1; // k_i, odd
};

enum class Variant { husformer, husfuse, huspair };

const char* variant_name(Variant v);
Variant variant_from_name(const std::string& name);

struct ModelConfig {
    std::vector<ModalitySpec> modalities;
    std::size_t hidden_dim = 40;  // shared width D after the front-end
    std::size_t heads = 3;
    std::size_t cm_layers = 4;    // U, depth of each cross-modal transformer
    std::size_t sa_layers = 1;
    std::size_t d_k = 0;          // 0 resolves to hidden_dim / heads
    std::size_t d_v = 0;
    std::size_t ffn_dim = 64;
    double attn_dropout = 0.0;    // inside cross-modal attention blocks
    double output_dropout = 0.0;  // between flatten and the class linear
    std::size_t num_classes = 2;
    Variant variant = Variant::husformer;
    bool positional_encoding = true;
    double layer_norm_eps = 1e-5;

    std::size_t fusion_rows() const;     // L_F = sum of channels
    std::size_t head_key_dim() const;    // resolved d_k
    std::size_t head_value_dim() const;  // resolved d_v

    // Throws ConfigError on any invalid field. Single-modality configs are
    // accepted (degenerate, used by single-modality baselines); huspair
    // additionally requires n >= 2 at build time.
    void validate() const;
};

struct LayerNormParams {
    TensorPtr gain, bias;
};

struct AttentionHeadParams {
    TensorPtr w_q, w_k, w_v;  // [D x d_k], [D x d_k], [D x d_v]
};

struct AttentionBlockParams {
    std::vector<AttentionHeadParams> heads;
    TensorPtr w_o;  // [m*d_v x D]
};

struct FeedForwardParams {
    TensorPtr w1, b1, w2, b2;
};

struct CrossModalLayerParams {
    LayerNormParams ln_fusion, ln_target, ln_ffn;
    AttentionBlockParams attention;
    FeedForwardParams ffn;
};

// Index of the fusion representation when used as an attention source.
inline constexpr int kFusionSource = -1;

struct CrossModalTransformerParams {
    int target = 0;              // modality index supplying the Queries
    int source = kFusionSource;  // kFusionSource, or a modality index (huspair)
    std::vector<CrossModalLayerParams> layers;
};

struct SelfAttentionLayerParams {
    LayerNormParams ln_attention, ln_ffn;
    AttentionBlockParams attention;
    FeedForwardParams ffn;
};

struct FrontEndParams {
    TensorPtr conv_kernels;        // [L_i x L_i x k_i]
    TensorPtr time_w, time_b;      // [D_i x D], [D]
};

struct OutputHeadParams {
    TensorPtr alpha_w, alpha_b;  // residual row linear, D -> D
    TensorPtr beta_w, beta_b;    // flattened L_F*D -> classes
};

struct ModelParams {
    std::vector<FrontEndParams> front_ends;
    std::vector<CrossModalTransformerParams> cross_modal;
    std::vector<SelfAttentionLayerParams> self_attention;
    OutputHeadParams head;

    // Every trainable tensor exactly once, in a fixed order; names are
    // parallel and used for diagnostics.
    std::vector<TensorPtr> trainable;
    std::vector<std::string> names;

    void register_param(const std::string& name, const TensorPtr& t);
};

struct ScoreMatrix {
    std::size_t rows = 0, cols = 0;
    std::vector<double> values;

    double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
};

// Attention matrices captured during one forward pass. Cross-modal and
// self-attention scores are head-averaged softmax matrices, one per layer.
struct AttentionDump {
    std::vector<std::pair<std::string, std::vector<ScoreMatrix>>> cross_modal;
    std::vector<ScoreMatrix> self_attention;
    ScoreMatrix z_f;
};

std::string attention_dump_to_json(const AttentionDump& dump);

struct ForwardOptions {
    Tape* tape = nullptr;
    bool training = false;
    Rng* rng = nullptr;           // required when training with dropout > 0
    AttentionDump* dump = nullptr;
};

struct ForwardResult {
    TensorPtr probs;  // [1 x num_classes]
    std::size_t predicted = 0;
};

// Sinusoidal position table, rows for pos = 1..length.
TensorPtr positional_encoding(std::size_t length, std::size_t dim);

// Temporal convolution, learned time-axis projection to the shared width,
// then positional encoding; one [L_i x D] tensor per modality.
std::vector<TensorPtr> embed_modalities(const MultiModalSample& sample, const ModelParams& params,
                                        const ModelConfig& cfg, const ForwardOptions& opts);

// Row concatenation of the per-modality features, [L_F x D].
TensorPtr fuse_low_level(Tape* tape, const std::vector<TensorPtr>& features);

// Single-head cross-modal attention; if `scores` is non-null the softmax
// matrix [rows(target) x rows(source)] is written there.
TensorPtr cross_modal_head(Tape* tape, const TensorPtr& target, const TensorPtr& source,
                           const TensorPtr& w_q, const TensorPtr& w_k, const TensorPtr& w_v,
                           ScoreMatrix* scores);

// Concatenated heads projected back to width D.
TensorPtr multi_head_cross_modal(Tape* tape, const TensorPtr& target, const TensorPtr& source,
                                 const AttentionBlockParams& block, double attn_dropout,
                                 const ForwardOptions& opts, ScoreMatrix* scores);

// Stack of pre-norm cross-modal attention layers; the Key/Value source is
// the layer-0 fusion representation at every depth.
TensorPtr cross_modal_transformer(const TensorPtr& target, const TensorPtr& fusion,
                                  const CrossModalTransformerParams& cmt, const ModelConfig& cfg,
                                  const ForwardOptions& opts, std::vector<ScoreMatrix>* scores);

// Pre-norm self-attention encoder over the mid-level fusion sequence.
TensorPtr self_attention_encoder(const TensorPtr& input, const ModelParams& params,
                                 const ModelConfig& cfg, const ForwardOptions& opts);

// Residual row linear, flatten, dropout, class linear, softmax.
ForwardResult output_head(const TensorPtr& z_f, const ModelParams& params, const ModelConfig& cfg,
                          const ForwardOptions& opts);

// Whole pipeline for one sample.
ForwardResult forward(const MultiModalSample& sample, const ModelParams& params,
                      const ModelConfig& cfg, const ForwardOptions& opts);

}  // namespace hus
