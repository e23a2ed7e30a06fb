#include "husformer/variants.hpp"

#include <cmath>

namespace hus {

namespace {

TensorPtr init_uniform(std::vector<std::size_t> shape, std::size_t fan_in, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    return Tensor::random_uniform(std::move(shape), -bound, bound, rng);
}

LayerNormParams make_layer_norm(ModelParams& params, const std::string& prefix, std::size_t dim) {
    LayerNormParams ln;
    ln.gain = Tensor::full({dim}, 1.0);
    ln.bias = Tensor::zeros({dim});
    params.register_param(prefix + ".gain", ln.gain);
    params.register_param(prefix + ".bias", ln.bias);
    return ln;
}

AttentionBlockParams make_attention_block(ModelParams& params, const std::string& prefix,
                                          const ModelConfig& cfg, Rng& rng) {
    const std::size_t d = cfg.hidden_dim;
    const std::size_t dk = cfg.head_key_dim();
    const std::size_t dv = cfg.head_value_dim();
    AttentionBlockParams block;
    for (std::size_t h = 0; h < cfg.heads; ++h) {
        AttentionHeadParams head;
        head.w_q = init_uniform({d, dk}, d, rng);
        head.w_k = init_uniform({d, dk}, d, rng);
        head.w_v = init_uniform({d, dv}, d, rng);
        const std::string hp = prefix + ".head" + std::to_string(h);
        params.register_param(hp + ".w_q", head.w_q);
        params.register_param(hp + ".w_k", head.w_k);
        params.register_param(hp + ".w_v", head.w_v);
        block.heads.push_back(std::move(head));
    }
    block.w_o = init_uniform({cfg.heads * dv, d}, cfg.heads * dv, rng);
    params.register_param(prefix + ".w_o", block.w_o);
    return block;
}

FeedForwardParams make_feed_forward(ModelParams& params, const std::string& prefix,
                                    const ModelConfig& cfg, Rng& rng) {
    const std::size_t d = cfg.hidden_dim;
    const std::size_t f = cfg.ffn_dim;
    FeedForwardParams ffn;
    ffn.w1 = init_uniform({d, f}, d, rng);
    ffn.b1 = init_uniform({f}, d, rng);
    ffn.w2 = init_uniform({f, d}, f, rng);
    ffn.b2 = init_uniform({d}, f, rng);
    params.register_param(prefix + ".w1", ffn.w1);
    params.register_param(prefix + ".b1", ffn.b1);
    params.register_param(prefix + ".w2", ffn.w2);
    params.register_param(prefix + ".b2", ffn.b2);
    return ffn;
}

CrossModalTransformerParams make_cross_modal(ModelParams& params, const std::string& prefix,
                                             int target, int source, const ModelConfig& cfg, Rng& rng) {
    CrossModalTransformerParams cmt;
    cmt.target = target;
    cmt.source = source;
    for (std::size_t u = 0; u < cfg.cm_layers; ++u) {
        const std::string lp = prefix + ".layer" + std::to_string(u);
        CrossModalLayerParams layer;
        layer.ln_fusion = make_layer_norm(params, lp + ".ln_fusion", cfg.hidden_dim);
        layer.ln_target = make_layer_norm(params, lp + ".ln_target", cfg.hidden_dim);
        layer.attention = make_attention_block(params, lp + ".attn", cfg, rng);
        layer.ln_ffn = make_layer_norm(params, lp + ".ln_ffn", cfg.hidden_dim);
        layer.ffn = make_feed_forward(params, lp + ".ffn", cfg, rng);
        cmt.layers.push_back(std::move(layer));
    }
    return cmt;
}

}  // namespace

ModelParams build_variant(const ModelConfig& cfg, Rng& rng) {
    cfg.validate();
    const std::size_t n = cfg.modalities.size();
    if (cfg.variant == Variant::huspair && n < 2) {
        throw ConfigError("huspair requires at least 2 modalities, got " + std::to_string(n));
    }

    ModelParams params;
    for (std::size_t i = 0; i < n; ++i) {
        const auto& spec = cfg.modalities[i];
        FrontEndParams fe;
        fe.conv_kernels = init_uniform({spec.channels, spec.channels, spec.kernel_size},
                                       spec.channels * spec.kernel_size, rng);
        fe.time_w = init_uniform({spec.input_dim, cfg.hidden_dim}, spec.input_dim, rng);
        fe.time_b = init_uniform({cfg.hidden_dim}, spec.input_dim, rng);
        const std::string prefix = "front_end." + spec.name;
        params.register_param(prefix + ".conv", fe.conv_kernels);
        params.register_param(prefix + ".time_w", fe.time_w);
        params.register_param(prefix + ".time_b", fe.time_b);
        params.front_ends.push_back(std::move(fe));
    }

    switch (cfg.variant) {
        case Variant::husformer:
            for (std::size_t i = 0; i < n; ++i) {
                params.cross_modal.push_back(make_cross_modal(
                    params, "cm." + cfg.modalities[i].name, static_cast<int>(i), kFusionSource, cfg, rng));
            }
            break;
        case Variant::husfuse:
            break;
        case Variant::huspair:
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = 0; j < n; ++j) {
                    if (i == j) continue;
                    params.cross_modal.push_back(make_cross_modal(
                        params, "cm." + cfg.modalities[i].name + "<-" + cfg.modalities[j].name,
                        static_cast<int>(i), static_cast<int>(j), cfg, rng));
                }
            }
            break;
    }

    for (std::size_t s = 0; s < cfg.sa_layers; ++s) {
        const std::string lp = "sa.layer" + std::to_string(s);
        SelfAttentionLayerParams layer;
        layer.ln_attention = make_layer_norm(params, lp + ".ln_attn", cfg.hidden_dim);
        layer.attention = make_attention_block(params, lp + ".attn", cfg, rng);
        layer.ln_ffn = make_layer_norm(params, lp + ".ln_ffn", cfg.hidden_dim);
        layer.ffn = make_feed_forward(params, lp + ".ffn", cfg, rng);
        params.self_attention.push_back(std::move(layer));
    }

    const std::size_t d = cfg.hidden_dim;
    const std::size_t flat = cfg.fusion_rows() * d;
    params.head.alpha_w = init_uniform({d, d}, d, rng);
    params.head.alpha_b = init_uniform({d}, d, rng);
    params.head.beta_w = init_uniform({flat, cfg.num_classes}, flat, rng);
    params.head.beta_b = init_uniform({cfg.num_classes}, flat, rng);
    params.register_param("head.alpha_w", params.head.alpha_w);
    params.register_param("head.alpha_b", params.head.alpha_b);
    params.register_param("head.beta_w", params.head.beta_w);
    params.register_param("head.beta_b", params.head.beta_b);
    return params;
}

std::size_t count_parameters(const ModelParams& params) {
    std::size_t total = 0;
    for (const auto& t : params.trainable) total += t->numel();
    return total;
}

VariantDescriptor describe_variant(const ModelConfig& cfg, const ModelParams& params) {
    VariantDescriptor desc;
    desc.kind = cfg.variant;
    desc.cross_modal_transformers = params.cross_modal.size();
    desc.parameter_count = count_parameters(params);
    return desc;
}

}  // namespace hus
