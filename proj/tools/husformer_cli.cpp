#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "husformer/checkpoint.hpp"
#include "husformer/config.hpp"
#include "husformer/data.hpp"
#include "husformer/metrics.hpp"
#include "husformer/stats.hpp"
#include "husformer/train.hpp"
#include "husformer/variants.hpp"

#include <nlohmann/json.hpp>

namespace {

namespace fs = std::filesystem;
using hus::ConfigError;
using hus::DataError;

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    out << text;
    if (!out) throw DataError("failed writing '" + path + "'");
}

std::string eval_metrics_json(const hus::EvalMetrics& metrics, std::size_t samples) {
    nlohmann::ordered_json j;
    j["samples"] = samples;
    j["accuracy"] = metrics.accuracy;
    j["f1"] = metrics.f1;
    j["label_mae"] = metrics.label_mae;
    auto confusion = nlohmann::ordered_json::array();
    for (const auto& row : metrics.confusion) {
        auto r = nlohmann::ordered_json::array();
        for (std::size_t v : row) r.push_back(v);
        confusion.push_back(std::move(r));
    }
    j["confusion"] = std::move(confusion);
    return j.dump(2) + "\n";
}

void check_compatible(const hus::ModelConfig& cfg, const hus::Dataset& dataset) {
    if (cfg.modalities.size() != dataset.modalities.size()) {
        throw DataError("checkpoint has " + std::to_string(cfg.modalities.size()) +
                        " modalities, dataset has " + std::to_string(dataset.modalities.size()));
    }
    for (std::size_t i = 0; i < cfg.modalities.size(); ++i) {
        const auto& spec = cfg.modalities[i];
        const auto& layout = dataset.modalities[i];
        if (spec.channels != layout.channels || spec.input_dim != layout.dim) {
            throw DataError("modality '" + layout.name + "': checkpoint expects " +
                            std::to_string(spec.channels) + "x" + std::to_string(spec.input_dim) +
                            ", dataset provides " + std::to_string(layout.channels) + "x" +
                            std::to_string(layout.dim));
        }
    }
    if (cfg.num_classes != dataset.num_classes) {
        throw DataError("checkpoint expects " + std::to_string(cfg.num_classes) +
                        " classes, dataset provides " + std::to_string(dataset.num_classes));
    }
}

int cmd_synth(std::size_t n_modalities, std::size_t samples, std::size_t classes, double coupling,
              double noise, std::uint64_t seed, const std::string& out_path) {
    if (coupling < 0.0 || coupling > 1.0) {
        throw ConfigError("--coupling must lie in [0, 1], got " + std::to_string(coupling));
    }
    if (noise < 0.0) throw ConfigError("--noise must be >= 0");
    hus::SynthesisParams params;
    params.modalities = hus::default_synth_layout(n_modalities);
    params.num_samples = samples;
    params.num_classes = static_cast<std::uint32_t>(classes);
    params.coupling = coupling;
    params.noise = noise;
    params.seed = seed;
    hus::Dataset ds = hus::synthesize_dataset(params);
    hus::write_dataset(ds, out_path);
    write_text(out_path + ".manifest.json", hus::synthesis_manifest_json(params));
    std::cout << "wrote " << out_path << ": " << samples << " samples, " << n_modalities
              << " modalities, " << classes << " classes, coupling " << coupling << ", seed " << seed
              << "\n";
    return 0;
}

int cmd_train(const std::string& config_path, const std::string& variant_override) {
    hus::RunConfig run = hus::load_run_config(config_path);
    if (!variant_override.empty()) run.variant = hus::variant_from_name(variant_override);
    if (run.output_dir.empty()) throw ConfigError("config: 'output_dir' is required for train");

    hus::Dataset dataset = hus::read_dataset(run.dataset_path);
    hus::ModelConfig cfg = hus::resolve_model_config(run, dataset);
    if (dataset.size() < 2) throw DataError("dataset too small to train on");

    {
        hus::Rng probe(0);
        hus::ModelParams probe_params = hus::build_variant(cfg, probe);
        const auto desc = hus::describe_variant(cfg, probe_params);
        std::cout << "variant " << hus::variant_name(cfg.variant) << ": "
                  << desc.cross_modal_transformers << " cross-modal transformers, "
                  << desc.parameter_count << " parameters\n";
    }

    fs::create_directories(run.output_dir);
    hus::CrossValidationResult cv = hus::cross_validate(dataset, cfg, run.train, run.jobs);
    write_text(run.output_dir + "/report.json",
               hus::cross_validation_report_json(cv, cfg, run.train, run.dataset_path));
    std::cout << "cross-validation: acc " << cv.acc_mean << " +/- " << cv.acc_std << ", f1 "
              << cv.f1_mean << " +/- " << cv.f1_std << "\n";

    // Final model on the full dataset; this is what the checkpoint stores.
    hus::Rng final_rng(run.train.seed + run.train.k_folds);
    hus::ModelParams params = hus::build_variant(cfg, final_rng);
    std::vector<std::size_t> all(dataset.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    hus::train(params, cfg, dataset, all, run.train, final_rng);
    hus::save_checkpoint(run.output_dir + "/checkpoint.hsfc", cfg, params);

    const hus::EvalMetrics final_metrics = hus::evaluate(params, cfg, dataset, all);
    write_text(run.output_dir + "/final_eval.json", eval_metrics_json(final_metrics, all.size()));
    if (run.dump_attention && dataset.size() > 0) {
        hus::AttentionDump dump;
        hus::ForwardOptions opts;
        opts.dump = &dump;
        hus::forward(dataset.samples[0], params, cfg, opts);
        write_text(run.output_dir + "/attention_0.json", hus::attention_dump_to_json(dump));
    }
    std::cout << "wrote " << run.output_dir << "/report.json and checkpoint.hsfc\n";
    return 0;
}

int cmd_eval(const std::string& checkpoint_path, const std::string& dataset_path,
             const std::string& out_path) {
    hus::Checkpoint ckpt = hus::load_checkpoint(checkpoint_path);
    hus::Dataset dataset = hus::read_dataset(dataset_path);
    check_compatible(ckpt.config, dataset);
    if (dataset.size() == 0) throw DataError("dataset is empty");
    std::vector<std::size_t> all(dataset.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    const hus::EvalMetrics metrics = hus::evaluate(ckpt.params, ckpt.config, dataset, all);
    const std::string text = eval_metrics_json(metrics, all.size());
    if (out_path.empty()) {
        std::cout << text;
    } else {
        write_text(out_path, text);
        std::cout << "accuracy " << metrics.accuracy << ", f1 " << metrics.f1 << " -> " << out_path
                  << "\n";
    }
    return 0;
}

int cmd_dump_attention(const std::string& checkpoint_path, const std::string& dataset_path,
                       const std::vector<std::size_t>& indices, const std::string& out_dir) {
    hus::Checkpoint ckpt = hus::load_checkpoint(checkpoint_path);
    hus::Dataset dataset = hus::read_dataset(dataset_path);
    check_compatible(ckpt.config, dataset);
    for (std::size_t idx : indices) {
        if (idx >= dataset.size()) {
            throw DataError("sample index " + std::to_string(idx) + " out of range (dataset has " +
                            std::to_string(dataset.size()) + " samples)");
        }
    }
    fs::create_directories(out_dir);
    for (std::size_t idx : indices) {
        hus::AttentionDump dump;
        hus::ForwardOptions opts;
        opts.dump = &dump;
        hus::forward(dataset.samples[idx], ckpt.params, ckpt.config, opts);
        const std::string path = out_dir + "/attention_" + std::to_string(idx) + ".json";
        write_text(path, hus::attention_dump_to_json(dump));
        std::cout << "wrote " << path << "\n";
    }
    return 0;
}

hus::ModelConfig tiny_gradcheck_config(hus::Variant variant) {
    hus::ModelConfig cfg;
    cfg.modalities = {{"a", 2, 5, 3}, {"b", 3, 4, 1}};
    cfg.hidden_dim = 8;
    cfg.heads = 2;
    cfg.cm_layers = 1;
    cfg.sa_layers = 1;
    cfg.ffn_dim = 8;
    cfg.num_classes = 3;
    cfg.variant = variant;
    return cfg;
}

int cmd_gradcheck(const std::string& config_path, const std::string& variant_arg, std::size_t param_cap) {
    std::vector<hus::Variant> variants;
    if (variant_arg == "all") {
        variants = {hus::Variant::husformer, hus::Variant::husfuse, hus::Variant::huspair};
    } else {
        variants = {hus::variant_from_name(variant_arg)};
    }

    bool all_pass = true;
    for (hus::Variant variant : variants) {
        hus::ModelConfig cfg;
        hus::MultiModalSample sample;
        if (config_path.empty()) {
            cfg = tiny_gradcheck_config(variant);
            hus::Rng data_rng(11);
            for (const auto& m : cfg.modalities) {
                std::vector<double> arr(m.channels * m.input_dim);
                for (double& v : arr) v = data_rng.uniform(-1.0, 1.0);
                sample.arrays.push_back(std::move(arr));
            }
            sample.label = 1;
        } else {
            hus::RunConfig run = hus::load_run_config(config_path);
            hus::Dataset dataset = hus::read_dataset(run.dataset_path);
            if (dataset.size() == 0) throw DataError("dataset is empty");
            cfg = hus::resolve_model_config(run, dataset);
            cfg.variant = variant;
            sample = dataset.samples[0];
        }
        // Dropout stays off: gradcheck needs a deterministic loss.
        cfg.attn_dropout = 0.0;
        cfg.output_dropout = 0.0;

        hus::Rng rng(3);
        hus::ModelParams params = hus::build_variant(cfg, rng);
        const std::size_t count = hus::count_parameters(params);
        if (count > param_cap) {
            throw ConfigError("gradcheck: model has " + std::to_string(count) +
                              " parameters, cap is " + std::to_string(param_cap) +
                              " (use a smaller config)");
        }
        const auto loss_fn = [&](hus::Tape* tape) {
            hus::ForwardOptions opts;
            opts.tape = tape;
            hus::ForwardResult out = hus::forward(sample, params, cfg, opts);
            return hus::mae_loss(tape, out.probs, sample.label);
        };
        const double err = hus::gradient_check(loss_fn, params.trainable, 1e-5);
        const bool pass = err < 1e-4;
        all_pass = all_pass && pass;
        std::cout << "gradcheck " << hus::variant_name(variant) << ": " << count
                  << " parameters, max relative error " << err << " -> " << (pass ? "PASS" : "FAIL")
                  << "\n";
    }
    return all_pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-modal fusion transformer: synthesize data, train, evaluate, inspect attention"};
    app.require_subcommand(1);

    auto* synth = app.add_subcommand("synth", "Generate a synthetic multi-modal dataset");
    std::size_t synth_modalities = 3, synth_samples = 2000, synth_classes = 3;
    double synth_coupling = 1.0, synth_noise = 0.3;
    std::uint64_t synth_seed = 0;
    std::string synth_out;
    synth->add_option("--modalities", synth_modalities, "Number of modalities");
    synth->add_option("--samples", synth_samples, "Number of samples");
    synth->add_option("--classes", synth_classes, "Number of classes");
    synth->add_option("--coupling", synth_coupling, "Cross-modal coupling in [0,1]");
    synth->add_option("--noise", synth_noise, "Additive noise sigma");
    synth->add_option("--seed", synth_seed, "Generator seed");
    synth->add_option("-o,--output", synth_out, "Output dataset path")->required();

    auto* train = app.add_subcommand("train", "Cross-validate and train from a JSON config");
    std::string train_config, train_variant;
    train->add_option("config", train_config, "Path to run config JSON")->required();
    train->add_option("--variant", train_variant, "Override the config's variant");

    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
    std::string eval_checkpoint, eval_dataset, eval_out;
    eval->add_option("checkpoint", eval_checkpoint, "Checkpoint path")->required();
    eval->add_option("dataset", eval_dataset, "Dataset path")->required();
    eval->add_option("-o,--output", eval_out, "Metrics JSON path (default: stdout)");

    auto* dump = app.add_subcommand("dump-attn", "Export attention matrices for selected samples");
    std::string dump_checkpoint, dump_dataset, dump_out = ".";
    std::vector<std::size_t> dump_indices;
    dump->add_option("checkpoint", dump_checkpoint, "Checkpoint path")->required();
    dump->add_option("dataset", dump_dataset, "Dataset path")->required();
    dump->add_option("--sample", dump_indices, "Sample indices to dump")->required();
    dump->add_option("-o,--output", dump_out, "Output directory");

    auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of the full model gradient");
    std::string gc_config, gc_variant = "all";
    std::size_t gc_cap = 20000;
    gradcheck->add_option("--config", gc_config, "Optional run config (default: built-in tiny model)");
    gradcheck->add_option("--variant", gc_variant, "husformer, husfuse, huspair or all");
    gradcheck->add_option("--param-cap", gc_cap, "Refuse models larger than this");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (synth->parsed()) {
            return cmd_synth(synth_modalities, synth_samples, synth_classes, synth_coupling, synth_noise,
                             synth_seed, synth_out);
        }
        if (train->parsed()) return cmd_train(train_config, train_variant);
        if (eval->parsed()) return cmd_eval(eval_checkpoint, eval_dataset, eval_out);
        if (dump->parsed()) return cmd_dump_attention(dump_checkpoint, dump_dataset, dump_indices, dump_out);
        if (gradcheck->parsed()) return cmd_gradcheck(gc_config, gc_variant, gc_cap);
    } catch (const hus::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const hus::FormatError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const hus::DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
