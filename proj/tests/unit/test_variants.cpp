#include <doctest.h>

#include "husformer/variants.hpp"

using namespace hus;

namespace {

ModelConfig config_with_modalities(std::size_t n, Variant variant) {
    ModelConfig cfg;
    for (std::size_t i = 0; i < n; ++i) {
        cfg.modalities.push_back({"m" + std::to_string(i), 1 + i % 2, 4, 3});
    }
    cfg.hidden_dim = 8;
    cfg.heads = 2;
    cfg.cm_layers = 1;
    cfg.sa_layers = 1;
    cfg.ffn_dim = 8;
    cfg.num_classes = 3;
    cfg.variant = variant;
    return cfg;
}

}  // namespace

TEST_CASE("cross-modal transformer counts per variant") {
    for (std::size_t n : {3u, 4u, 5u, 6u}) {
        Rng rng(1);
        ModelConfig former = config_with_modalities(n, Variant::husformer);
        ModelParams former_params = build_variant(former, rng);
        CHECK(describe_variant(former, former_params).cross_modal_transformers == n);

        ModelConfig pair = config_with_modalities(n, Variant::huspair);
        ModelParams pair_params = build_variant(pair, rng);
        CHECK(describe_variant(pair, pair_params).cross_modal_transformers == n * n - n);

        ModelConfig fuse = config_with_modalities(n, Variant::husfuse);
        ModelParams fuse_params = build_variant(fuse, rng);
        CHECK(describe_variant(fuse, fuse_params).cross_modal_transformers == 0);

        // huspair/husformer transformer ratio is exactly n-1.
        CHECK(pair_params.cross_modal.size() == former_params.cross_modal.size() * (n - 1));
    }
}

TEST_CASE("six modalities build 6 and 30 transformers") {
    Rng rng(2);
    ModelConfig former = config_with_modalities(6, Variant::husformer);
    CHECK(build_variant(former, rng).cross_modal.size() == 6);
    ModelConfig pair = config_with_modalities(6, Variant::huspair);
    CHECK(build_variant(pair, rng).cross_modal.size() == 30);
}

TEST_CASE("huspair wiring covers every ordered pair") {
    Rng rng(3);
    ModelConfig cfg = config_with_modalities(3, Variant::huspair);
    ModelParams params = build_variant(cfg, rng);
    std::vector<std::pair<int, int>> routes;
    for (const auto& cmt : params.cross_modal) routes.emplace_back(cmt.target, cmt.source);
    const std::vector<std::pair<int, int>> expect = {{0, 1}, {0, 2}, {1, 0}, {1, 2}, {2, 0}, {2, 1}};
    CHECK(routes == expect);
}

TEST_CASE("huspair needs at least two modalities") {
    Rng rng(4);
    ModelConfig cfg = config_with_modalities(1, Variant::huspair);
    CHECK_THROWS_AS(build_variant(cfg, rng), ConfigError);
}

TEST_CASE("count_parameters counts scalars") {
    ModelParams params;
    params.register_param("w", Tensor::zeros({40, 40}));
    params.register_param("b", Tensor::zeros({40}));
    CHECK(count_parameters(params) == 1640);
}

TEST_CASE("parameter count ordering across variants") {
    for (std::size_t n : {2u, 3u, 5u}) {
        Rng rng(5);
        ModelParams fuse = build_variant(config_with_modalities(n, Variant::husfuse), rng);
        ModelParams former = build_variant(config_with_modalities(n, Variant::husformer), rng);
        ModelParams pair = build_variant(config_with_modalities(n, Variant::huspair), rng);
        CHECK(count_parameters(fuse) < count_parameters(former));
        CHECK(count_parameters(former) < count_parameters(pair));
    }
}

TEST_CASE("doubling depth roughly doubles the cross-modal parameter share") {
    Rng rng(6);
    ModelConfig shallow = config_with_modalities(3, Variant::husformer);
    shallow.cm_layers = 2;
    ModelConfig deep = shallow;
    deep.cm_layers = 4;

    ModelConfig none = shallow;
    none.variant = Variant::husfuse;  // same model without the cross-modal stage

    const std::size_t base = count_parameters(build_variant(none, rng));
    const std::size_t shallow_cm = count_parameters(build_variant(shallow, rng)) - base;
    const std::size_t deep_cm = count_parameters(build_variant(deep, rng)) - base;
    CHECK(deep_cm == 2 * shallow_cm);
}

TEST_CASE("all variants classify the same sample shape") {
    Rng data_rng(7);
    ModelConfig base = config_with_modalities(3, Variant::husformer);
    MultiModalSample sample;
    for (const auto& m : base.modalities) {
        std::vector<double> arr(m.channels * m.input_dim);
        for (double& v : arr) v = data_rng.uniform(-1.0, 1.0);
        sample.arrays.push_back(std::move(arr));
    }
    sample.label = 0;

    for (Variant variant : {Variant::husformer, Variant::husfuse, Variant::huspair}) {
        ModelConfig cfg = base;
        cfg.variant = variant;
        Rng rng(8);
        ModelParams params = build_variant(cfg, rng);
        ForwardOptions opts;
        ForwardResult out = forward(sample, params, cfg, opts);
        CHECK(out.probs->numel() == 3);
        double sum = 0.0;
        for (double v : out.probs->data) sum += v;
        CHECK(sum == doctest::Approx(1.0));
    }
}

TEST_CASE("husfuse feeds the fusion rows straight into self-attention") {
    Rng rng(9);
    ModelConfig cfg = config_with_modalities(3, Variant::husfuse);
    ModelParams params = build_variant(cfg, rng);
    MultiModalSample sample;
    Rng data_rng(10);
    for (const auto& m : cfg.modalities) {
        std::vector<double> arr(m.channels * m.input_dim);
        for (double& v : arr) v = data_rng.uniform(-1.0, 1.0);
        sample.arrays.push_back(std::move(arr));
    }
    AttentionDump dump;
    ForwardOptions opts;
    opts.dump = &dump;
    forward(sample, params, cfg, opts);
    CHECK(dump.cross_modal.empty());
    CHECK(dump.z_f.rows == cfg.fusion_rows());
    REQUIRE(!dump.self_attention.empty());
    CHECK(dump.self_attention[0].rows == cfg.fusion_rows());
}
