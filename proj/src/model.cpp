#include "husformer/model.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

namespace hus {

namespace {

ScoreMatrix matrix_from(const TensorPtr& t) {
    ScoreMatrix m;
    m.rows = t->rows();
    m.cols = t->cols();
    m.values = t->data;
    return m;
}

nlohmann::ordered_json matrix_to_json(const ScoreMatrix& m) {
    auto rows = nlohmann::ordered_json::array();
    for (std::size_t r = 0; r < m.rows; ++r) {
        auto row = nlohmann::ordered_json::array();
        for (std::size_t c = 0; c < m.cols; ++c) row.push_back(m.values[r * m.cols + c]);
        rows.push_back(std::move(row));
    }
    return rows;
}

// Scaled-dot-product attention for one head. Captures the softmax matrix
// (before dropout) into `scores` when requested.
TensorPtr attention_head(Tape* tape, const TensorPtr& target, const TensorPtr& source,
                         const TensorPtr& w_q, const TensorPtr& w_k, const TensorPtr& w_v,
                         double attn_dropout, const ForwardOptions& opts, ScoreMatrix* scores) {
    if (w_q->cols() != w_k->cols()) {
        throw ConfigError("attention head: d_k mismatch between Q and K projections (" +
                          std::to_string(w_q->cols()) + " vs " + std::to_string(w_k->cols()) + ")");
    }
    const double scale_factor = 1.0 / std::sqrt(static_cast<double>(w_q->cols()));
    TensorPtr q = matmul(tape, target, w_q);
    TensorPtr k = matmul(tape, source, w_k);
    TensorPtr v = matmul(tape, source, w_v);
    TensorPtr s = scale(tape, matmul(tape, q, transpose(tape, k)), scale_factor);
    TensorPtr p = softmax_rows(tape, s);
    if (scores) *scores = matrix_from(p);
    if (opts.training && attn_dropout > 0.0) p = dropout(tape, p, attn_dropout, true, opts.rng);
    return matmul(tape, p, v);
}

// Multi-head attention with output projection shared by the cross-modal
// and self-attention blocks. `scores`, when non-null, receives the
// head-averaged softmax matrix.
TensorPtr multi_head_attention(Tape* tape, const TensorPtr& target, const TensorPtr& source,
                               const AttentionBlockParams& block, double attn_dropout,
                               const ForwardOptions& opts, ScoreMatrix* scores) {
    std::vector<TensorPtr> heads;
    heads.reserve(block.heads.size());
    ScoreMatrix head_scores;
    ScoreMatrix averaged;
    for (std::size_t h = 0; h < block.heads.size(); ++h) {
        const auto& hp = block.heads[h];
        TensorPtr out = attention_head(tape, target, source, hp.w_q, hp.w_k, hp.w_v, attn_dropout, opts,
                                       scores ? &head_scores : nullptr);
        if (scores) {
            if (h == 0) {
                averaged = head_scores;
            } else {
                for (std::size_t i = 0; i < averaged.values.size(); ++i)
                    averaged.values[i] += head_scores.values[i];
            }
        }
        heads.push_back(std::move(out));
    }
    if (scores) {
        const double inv = 1.0 / static_cast<double>(block.heads.size());
        for (double& v : averaged.values) v *= inv;
        *scores = std::move(averaged);
    }
    // Concat along the feature axis: [L x m*d_v], then project to D.
    TensorPtr joined;
    if (heads.size() == 1) {
        joined = heads[0];
    } else {
        std::vector<TensorPtr> transposed;
        transposed.reserve(heads.size());
        for (const auto& h : heads) transposed.push_back(transpose(tape, h));
        joined = transpose(tape, concat_rows(tape, transposed));
    }
    return matmul(tape, joined, block.w_o);
}

TensorPtr feed_forward(Tape* tape, const TensorPtr& x, const FeedForwardParams& p) {
    return linear(tape, relu(tape, linear(tape, x, p.w1, p.b1)), p.w2, p.b2);
}

}  // namespace

const char* variant_name(Variant v) {
    switch (v) {
        case Variant::husformer: return "husformer";
        case Variant::husfuse: return "husfuse";
        case Variant::huspair: return "huspair";
    }
    return "?";
}

Variant variant_from_name(const std::string& name) {
    if (name == "husformer") return Variant::husformer;
    if (name == "husfuse") return Variant::husfuse;
    if (name == "huspair") return Variant::huspair;
    throw ConfigError("unknown variant '" + name + "' (expected husformer, husfuse or huspair)");
}

std::size_t ModelConfig::fusion_rows() const {
    std::size_t total = 0;
    for (const auto& m : modalities) total += m.channels;
    return total;
}

std::size_t ModelConfig::head_key_dim() const { return d_k != 0 ? d_k : hidden_dim / heads; }

std::size_t ModelConfig::head_value_dim() const { return d_v != 0 ? d_v : hidden_dim / heads; }

void ModelConfig::validate() const {
    if (modalities.empty()) throw ConfigError("model config: at least one modality required");
    for (const auto& m : modalities) {
        if (m.channels == 0) throw ConfigError("modality '" + m.name + "': channels must be >= 1");
        if (m.input_dim == 0) throw ConfigError("modality '" + m.name + "': input_dim must be >= 1");
        if (m.kernel_size == 0 || m.kernel_size % 2 == 0) {
            throw ConfigError("modality '" + m.name + "': kernel_size must be odd, got " +
                              std::to_string(m.kernel_size));
        }
    }
    if (hidden_dim == 0) throw ConfigError("model config: hidden_dim must be >= 1");
    if (heads == 0) throw ConfigError("model config: heads must be >= 1");
    if (cm_layers == 0) throw ConfigError("model config: cm_layers must be >= 1");
    if (sa_layers == 0) throw ConfigError("model config: sa_layers must be >= 1");
    if (ffn_dim == 0) throw ConfigError("model config: ffn_dim must be >= 1");
    if (d_k == 0 && hidden_dim % heads != 0) {
        throw ConfigError("model config: hidden_dim " + std::to_string(hidden_dim) +
                          " is not divisible by heads " + std::to_string(heads) +
                          "; set d_k/d_v explicitly");
    }
    if (d_v == 0 && hidden_dim % heads != 0) {
        throw ConfigError("model config: hidden_dim not divisible by heads; set d_v explicitly");
    }
    if (attn_dropout < 0.0 || attn_dropout >= 1.0) {
        throw ConfigError("model config: attn_dropout must lie in [0, 1)");
    }
    if (output_dropout < 0.0 || output_dropout >= 1.0) {
        throw ConfigError("model config: output_dropout must lie in [0, 1)");
    }
    if (num_classes < 2) throw ConfigError("model config: num_classes must be >= 2");
    if (layer_norm_eps <= 0.0) throw ConfigError("model config: layer_norm_eps must be > 0");
}

void ModelParams::register_param(const std::string& name, const TensorPtr& t) {
    t->requires_grad = true;
    t->grad.assign(t->data.size(), 0.0);
    trainable.push_back(t);
    names.push_back(name);
}

TensorPtr positional_encoding(std::size_t length, std::size_t dim) {
    auto pe = Tensor::zeros({length, dim});
    for (std::size_t row = 0; row < length; ++row) {
        const double pos = static_cast<double>(row + 1);  // positions run 1..L
        for (std::size_t k = 0; 2 * k < dim; ++k) {
            const double freq = std::pow(10000.0, -2.0 * static_cast<double>(k) / static_cast<double>(dim));
            pe->data[row * dim + 2 * k] = std::sin(pos * freq);
            if (2 * k + 1 < dim) pe->data[row * dim + 2 * k + 1] = std::cos(pos * freq);
        }
    }
    return pe;
}

std::vector<TensorPtr> embed_modalities(const MultiModalSample& sample, const ModelParams& params,
                                        const ModelConfig& cfg, const ForwardOptions& opts) {
    if (sample.arrays.size() != cfg.modalities.size()) {
        throw DataError("sample has " + std::to_string(sample.arrays.size()) +
                        " modalities, model expects " + std::to_string(cfg.modalities.size()));
    }
    std::vector<TensorPtr> features;
    features.reserve(cfg.modalities.size());
    for (std::size_t i = 0; i < cfg.modalities.size(); ++i) {
        const auto& spec = cfg.modalities[i];
        if (sample.arrays[i].size() != spec.channels * spec.input_dim) {
            throw DataError("modality '" + spec.name + "': sample has " +
                            std::to_string(sample.arrays[i].size()) + " values, expected " +
                            std::to_string(spec.channels) + "x" + std::to_string(spec.input_dim));
        }
        TensorPtr x = Tensor::from({spec.channels, spec.input_dim}, sample.arrays[i]);
        TensorPtr convolved = conv1d_same(opts.tape, x, params.front_ends[i].conv_kernels);
        TensorPtr projected =
            linear(opts.tape, convolved, params.front_ends[i].time_w, params.front_ends[i].time_b);
        if (cfg.positional_encoding) {
            projected = add(opts.tape, projected, positional_encoding(spec.channels, cfg.hidden_dim));
        }
        features.push_back(std::move(projected));
    }
    return features;
}

TensorPtr fuse_low_level(Tape* tape, const std::vector<TensorPtr>& features) {
    return concat_rows(tape, features);
}

TensorPtr cross_modal_head(Tape* tape, const TensorPtr& target, const TensorPtr& source,
                           const TensorPtr& w_q, const TensorPtr& w_k, const TensorPtr& w_v,
                           ScoreMatrix* scores) {
    ForwardOptions opts;
    opts.tape = tape;
    return attention_head(tape, target, source, w_q, w_k, w_v, 0.0, opts, scores);
}

TensorPtr multi_head_cross_modal(Tape* tape, const TensorPtr& target, const TensorPtr& source,
                                 const AttentionBlockParams& block, double attn_dropout,
                                 const ForwardOptions& opts, ScoreMatrix* scores) {
    return multi_head_attention(tape, target, source, block, attn_dropout, opts, scores);
}

TensorPtr cross_modal_transformer(const TensorPtr& target, const TensorPtr& fusion,
                                  const CrossModalTransformerParams& cmt, const ModelConfig& cfg,
                                  const ForwardOptions& opts, std::vector<ScoreMatrix>* scores) {
    Tape* tape = opts.tape;
    const double eps = cfg.layer_norm_eps;
    TensorPtr z = target;
    for (const auto& layer : cmt.layers) {
        // Key/Value always come from the layer-0 fusion representation.
        TensorPtr fusion_normed = layer_norm(tape, fusion, layer.ln_fusion.gain, layer.ln_fusion.bias, eps);
        TensorPtr target_normed = layer_norm(tape, z, layer.ln_target.gain, layer.ln_target.bias, eps);
        ScoreMatrix layer_scores;
        TensorPtr attended = multi_head_attention(tape, target_normed, fusion_normed, layer.attention,
                                                  cfg.attn_dropout, opts, scores ? &layer_scores : nullptr);
        if (scores) scores->push_back(std::move(layer_scores));
        TensorPtr z_dot = add(tape, attended, target_normed);
        TensorPtr z_dot_normed = layer_norm(tape, z_dot, layer.ln_ffn.gain, layer.ln_ffn.bias, eps);
        z = add(tape, feed_forward(tape, z_dot_normed, layer.ffn), z_dot_normed);
    }
    return z;
}

TensorPtr self_attention_encoder(const TensorPtr& input, const ModelParams& params,
                                 const ModelConfig& cfg, const ForwardOptions& opts) {
    Tape* tape = opts.tape;
    const double eps = cfg.layer_norm_eps;
    TensorPtr x = input;
    for (const auto& layer : params.self_attention) {
        TensorPtr normed = layer_norm(tape, x, layer.ln_attention.gain, layer.ln_attention.bias, eps);
        ScoreMatrix layer_scores;
        TensorPtr attended = multi_head_attention(tape, normed, normed, layer.attention, 0.0, opts,
                                                  opts.dump ? &layer_scores : nullptr);
        if (opts.dump) opts.dump->self_attention.push_back(std::move(layer_scores));
        TensorPtr x_res = add(tape, attended, normed);
        TensorPtr res_normed = layer_norm(tape, x_res, layer.ln_ffn.gain, layer.ln_ffn.bias, eps);
        x = add(tape, feed_forward(tape, res_normed, layer.ffn), res_normed);
    }
    return x;
}

ForwardResult output_head(const TensorPtr& z_f, const ModelParams& params, const ModelConfig& cfg,
                          const ForwardOptions& opts) {
    Tape* tape = opts.tape;
    TensorPtr z_hat = add(tape, z_f, linear(tape, z_f, params.head.alpha_w, params.head.alpha_b));
    TensorPtr flat = flatten_rows(tape, z_hat);
    if (opts.training && cfg.output_dropout > 0.0) {
        flat = dropout(tape, flat, cfg.output_dropout, true, opts.rng);
    }
    TensorPtr logits = linear(tape, flat, params.head.beta_w, params.head.beta_b);
    ForwardResult result;
    result.probs = softmax_rows(tape, logits);
    result.predicted = 0;
    for (std::size_t c = 1; c < result.probs->numel(); ++c) {
        if (result.probs->data[c] > result.probs->data[result.predicted]) result.predicted = c;
    }
    return result;
}

ForwardResult forward(const MultiModalSample& sample, const ModelParams& params, const ModelConfig& cfg,
                      const ForwardOptions& opts) {
    Tape* tape = opts.tape;
    const std::size_t n = cfg.modalities.size();
    std::vector<TensorPtr> low_level = embed_modalities(sample, params, cfg, opts);
    TensorPtr fusion = fuse_low_level(tape, low_level);

    TensorPtr mid_level;
    if (cfg.variant == Variant::husfuse) {
        mid_level = fusion;
    } else {
        std::vector<std::vector<TensorPtr>> per_target(n);
        for (const auto& cmt : params.cross_modal) {
            const TensorPtr& source =
                cmt.source == kFusionSource ? fusion : low_level[static_cast<std::size_t>(cmt.source)];
            std::vector<ScoreMatrix> scores;
            TensorPtr reinforced =
                cross_modal_transformer(low_level[static_cast<std::size_t>(cmt.target)], source, cmt, cfg,
                                        opts, opts.dump ? &scores : nullptr);
            if (opts.dump) {
                std::string key = cfg.modalities[static_cast<std::size_t>(cmt.target)].name;
                if (cmt.source != kFusionSource) {
                    key += "<-" + cfg.modalities[static_cast<std::size_t>(cmt.source)].name;
                }
                opts.dump->cross_modal.emplace_back(std::move(key), std::move(scores));
            }
            per_target[static_cast<std::size_t>(cmt.target)].push_back(std::move(reinforced));
        }
        std::vector<TensorPtr> reinforced;
        reinforced.reserve(n);
        for (std::size_t i = 0; i < n; ++i) {
            auto& outputs = per_target[i];
            if (outputs.empty()) {
                throw ConfigError("variant wiring left modality '" + cfg.modalities[i].name +
                                  "' without a cross-modal transformer");
            }
            if (outputs.size() == 1) {
                reinforced.push_back(outputs[0]);
            } else {
                // huspair: average the pairwise outputs for this target.
                TensorPtr sum = outputs[0];
                for (std::size_t j = 1; j < outputs.size(); ++j) sum = add(tape, sum, outputs[j]);
                reinforced.push_back(scale(tape, sum, 1.0 / static_cast<double>(outputs.size())));
            }
        }
        mid_level = concat_rows(tape, reinforced);
    }

    TensorPtr z_f = self_attention_encoder(mid_level, params, cfg, opts);
    if (opts.dump) {
        opts.dump->z_f.rows = z_f->rows();
        opts.dump->z_f.cols = z_f->cols();
        opts.dump->z_f.values = z_f->data;
    }
    return output_head(z_f, params, cfg, opts);
}

std::string attention_dump_to_json(const AttentionDump& dump) {
    nlohmann::ordered_json j;
    j["cross_modal"] = nlohmann::ordered_json::object();
    for (const auto& [name, layers] : dump.cross_modal) {
        auto arr = nlohmann::ordered_json::array();
        for (const auto& m : layers) arr.push_back(matrix_to_json(m));
        j["cross_modal"][name] = std::move(arr);
    }
    j["self"] = nlohmann::ordered_json::array();
    for (const auto& m : dump.self_attention) j["self"].push_back(matrix_to_json(m));
    j["z_f"] = matrix_to_json(dump.z_f);
    return j.dump() + "\n";
}

}  // namespace hus
