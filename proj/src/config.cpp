#include "husformer/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace hus {

namespace {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

void reject_unknown_keys(const json& obj, const std::set<std::string>& known, const std::string& where) {
    for (const auto& [key, _] : obj.items()) {
        if (!known.count(key)) {
            throw ConfigError("unknown key '" + key + "' in " + where);
        }
    }
}

const json& require(const json& obj, const std::string& key, const std::string& where) {
    auto it = obj.find(key);
    if (it == obj.end()) throw ConfigError("missing key '" + key + "' in " + where);
    return *it;
}

std::size_t get_size(const json& obj, const std::string& key, const std::string& where) {
    const json& v = require(obj, key, where);
    if (!v.is_number_unsigned()) {
        throw ConfigError("key '" + key + "' in " + where + " must be a non-negative integer");
    }
    return v.get<std::size_t>();
}

std::size_t get_size_or(const json& obj, const std::string& key, std::size_t fallback,
                        const std::string& where) {
    if (!obj.contains(key)) return fallback;
    return get_size(obj, key, where);
}

double get_number(const json& obj, const std::string& key, const std::string& where) {
    const json& v = require(obj, key, where);
    if (!v.is_number()) throw ConfigError("key '" + key + "' in " + where + " must be a number");
    return v.get<double>();
}

double get_number_or(const json& obj, const std::string& key, double fallback, const std::string& where) {
    if (!obj.contains(key)) return fallback;
    return get_number(obj, key, where);
}

std::string get_string(const json& obj, const std::string& key, const std::string& where) {
    const json& v = require(obj, key, where);
    if (!v.is_string()) throw ConfigError("key '" + key + "' in " + where + " must be a string");
    return v.get<std::string>();
}

bool get_bool_or(const json& obj, const std::string& key, bool fallback, const std::string& where) {
    if (!obj.contains(key)) return fallback;
    const json& v = obj.at(key);
    if (!v.is_boolean()) throw ConfigError("key '" + key + "' in " + where + " must be a boolean");
    return v.get<bool>();
}

ordered_json confusion_to_json(const Confusion& confusion) {
    auto rows = ordered_json::array();
    for (const auto& row : confusion) {
        auto r = ordered_json::array();
        for (std::size_t v : row) r.push_back(v);
        rows.push_back(std::move(r));
    }
    return rows;
}

ordered_json train_config_to_json(const TrainConfig& tc) {
    ordered_json j;
    j["batch_size"] = tc.batch_size;
    j["learning_rate"] = tc.learning_rate;
    j["epochs"] = tc.epochs;
    j["beta1"] = tc.beta1;
    j["beta2"] = tc.beta2;
    j["adam_eps"] = tc.adam_eps;
    j["k_folds"] = tc.k_folds;
    j["holdout_fraction"] = tc.holdout_fraction;
    j["seed"] = tc.seed;
    return j;
}

ordered_json model_config_to_json_obj(const ModelConfig& cfg) {
    ordered_json j;
    j["variant"] = variant_name(cfg.variant);
    j["hidden_dim"] = cfg.hidden_dim;
    j["heads"] = cfg.heads;
    j["cm_layers"] = cfg.cm_layers;
    j["sa_layers"] = cfg.sa_layers;
    j["d_k"] = cfg.d_k;
    j["d_v"] = cfg.d_v;
    j["ffn_dim"] = cfg.ffn_dim;
    j["attn_dropout"] = cfg.attn_dropout;
    j["output_dropout"] = cfg.output_dropout;
    j["num_classes"] = cfg.num_classes;
    j["positional_encoding"] = cfg.positional_encoding;
    j["layer_norm_eps"] = cfg.layer_norm_eps;
    j["modalities"] = ordered_json::array();
    for (const auto& m : cfg.modalities) {
        j["modalities"].push_back({{"name", m.name},
                                   {"channels", m.channels},
                                   {"input_dim", m.input_dim},
                                   {"kernel_size", m.kernel_size}});
    }
    return j;
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!root.is_object()) throw ConfigError("config root must be a JSON object");
    reject_unknown_keys(root, {"dataset", "output_dir", "variant", "dump_attention", "jobs", "model", "train"},
                        "config root");

    RunConfig run;
    run.dataset_path = get_string(root, "dataset", "config root");
    run.output_dir = root.contains("output_dir") ? get_string(root, "output_dir", "config root") : "";
    run.variant = variant_from_name(get_string(root, "variant", "config root"));
    run.dump_attention = get_bool_or(root, "dump_attention", false, "config root");
    run.jobs = get_size_or(root, "jobs", 1, "config root");
    if (run.jobs == 0) throw ConfigError("jobs must be >= 1");

    const json& model = require(root, "model", "config root");
    if (!model.is_object()) throw ConfigError("'model' must be an object");
    reject_unknown_keys(model,
                        {"hidden_dim", "heads", "cm_layers", "sa_layers", "d_k", "d_v", "ffn_dim",
                         "attn_dropout", "output_dropout", "kernel_sizes", "positional_encoding"},
                        "model");
    run.hidden_dim = get_size(model, "hidden_dim", "model");
    run.heads = get_size(model, "heads", "model");
    run.cm_layers = get_size_or(model, "cm_layers", 4, "model");
    run.sa_layers = get_size_or(model, "sa_layers", 1, "model");
    run.d_k = get_size_or(model, "d_k", 0, "model");
    run.d_v = get_size_or(model, "d_v", 0, "model");
    run.ffn_dim = get_size(model, "ffn_dim", "model");
    run.attn_dropout = get_number(model, "attn_dropout", "model");
    run.output_dropout = get_number(model, "output_dropout", "model");
    run.positional_encoding = get_bool_or(model, "positional_encoding", true, "model");
    const json& kernels = require(model, "kernel_sizes", "model");
    if (kernels.is_number_unsigned()) {
        run.kernel_sizes = {kernels.get<std::size_t>()};
    } else if (kernels.is_array()) {
        for (const auto& k : kernels) {
            if (!k.is_number_unsigned()) throw ConfigError("kernel_sizes entries must be positive integers");
            run.kernel_sizes.push_back(k.get<std::size_t>());
        }
    } else {
        throw ConfigError("kernel_sizes must be an integer or an array of integers");
    }
    if (run.kernel_sizes.empty()) throw ConfigError("kernel_sizes must not be empty");
    for (std::size_t k : run.kernel_sizes) {
        if (k == 0 || k % 2 == 0) {
            throw ConfigError("kernel_sizes entries must be odd, got " + std::to_string(k));
        }
    }

    const json& train = require(root, "train", "config root");
    if (!train.is_object()) throw ConfigError("'train' must be an object");
    reject_unknown_keys(train,
                        {"batch_size", "learning_rate", "epochs", "beta1", "beta2", "adam_eps", "k_folds",
                         "holdout_fraction", "seed"},
                        "train");
    run.train.batch_size = get_size(train, "batch_size", "train");
    run.train.learning_rate = get_number(train, "learning_rate", "train");
    run.train.epochs = get_size(train, "epochs", "train");
    run.train.beta1 = get_number_or(train, "beta1", 0.9, "train");
    run.train.beta2 = get_number_or(train, "beta2", 0.999, "train");
    run.train.adam_eps = get_number_or(train, "adam_eps", 1e-8, "train");
    run.train.k_folds = get_size(train, "k_folds", "train");
    run.train.holdout_fraction = get_number_or(train, "holdout_fraction", 0.2, "train");
    run.train.seed = get_size(train, "seed", "train");
    run.train.validate();
    return run;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_run_config(buf.str());
}

ModelConfig resolve_model_config(const RunConfig& run, const Dataset& dataset) {
    if (run.kernel_sizes.size() != 1 && run.kernel_sizes.size() != dataset.modalities.size()) {
        throw ConfigError("kernel_sizes has " + std::to_string(run.kernel_sizes.size()) +
                          " entries, dataset has " + std::to_string(dataset.modalities.size()) +
                          " modalities");
    }
    ModelConfig cfg;
    for (std::size_t i = 0; i < dataset.modalities.size(); ++i) {
        const auto& layout = dataset.modalities[i];
        ModalitySpec spec;
        spec.name = layout.name;
        spec.channels = layout.channels;
        spec.input_dim = layout.dim;
        spec.kernel_size = run.kernel_sizes.size() == 1 ? run.kernel_sizes[0] : run.kernel_sizes[i];
        cfg.modalities.push_back(std::move(spec));
    }
    cfg.hidden_dim = run.hidden_dim;
    cfg.heads = run.heads;
    cfg.cm_layers = run.cm_layers;
    cfg.sa_layers = run.sa_layers;
    cfg.d_k = run.d_k;
    cfg.d_v = run.d_v;
    cfg.ffn_dim = run.ffn_dim;
    cfg.attn_dropout = run.attn_dropout;
    cfg.output_dropout = run.output_dropout;
    cfg.num_classes = dataset.num_classes;
    cfg.variant = run.variant;
    cfg.positional_encoding = run.positional_encoding;
    cfg.validate();
    return cfg;
}

std::string model_config_to_json(const ModelConfig& cfg) {
    return model_config_to_json_obj(cfg).dump();
}

ModelConfig model_config_from_json(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("model config is not valid JSON: ") + e.what());
    }
    ModelConfig cfg;
    cfg.variant = variant_from_name(get_string(j, "variant", "model config"));
    cfg.hidden_dim = get_size(j, "hidden_dim", "model config");
    cfg.heads = get_size(j, "heads", "model config");
    cfg.cm_layers = get_size(j, "cm_layers", "model config");
    cfg.sa_layers = get_size(j, "sa_layers", "model config");
    cfg.d_k = get_size(j, "d_k", "model config");
    cfg.d_v = get_size(j, "d_v", "model config");
    cfg.ffn_dim = get_size(j, "ffn_dim", "model config");
    cfg.attn_dropout = get_number(j, "attn_dropout", "model config");
    cfg.output_dropout = get_number(j, "output_dropout", "model config");
    cfg.num_classes = get_size(j, "num_classes", "model config");
    cfg.positional_encoding = get_bool_or(j, "positional_encoding", true, "model config");
    cfg.layer_norm_eps = get_number(j, "layer_norm_eps", "model config");
    const json& mods = require(j, "modalities", "model config");
    for (const auto& m : mods) {
        ModalitySpec spec;
        spec.name = get_string(m, "name", "modality");
        spec.channels = get_size(m, "channels", "modality");
        spec.input_dim = get_size(m, "input_dim", "modality");
        spec.kernel_size = get_size(m, "kernel_size", "modality");
        cfg.modalities.push_back(std::move(spec));
    }
    cfg.validate();
    return cfg;
}

std::string cross_validation_report_json(const CrossValidationResult& result, const ModelConfig& cfg,
                                         const TrainConfig& tc, const std::string& dataset_path) {
    ordered_json j;
    j["dataset"] = dataset_path;
    j["seed"] = tc.seed;
    j["model"] = model_config_to_json_obj(cfg);
    j["train"] = train_config_to_json(tc);
    j["folds"] = ordered_json::array();
    for (const auto& fold : result.folds) {
        ordered_json f;
        f["fold"] = fold.fold;
        f["epoch_loss"] = fold.epoch_loss;
        f["accuracy"] = fold.metrics.accuracy;
        f["f1"] = fold.metrics.f1;
        f["label_mae"] = fold.metrics.label_mae;
        f["confusion"] = confusion_to_json(fold.metrics.confusion);
        j["folds"].push_back(std::move(f));
    }
    j["aggregate"] = {{"accuracy_mean", result.acc_mean},
                      {"accuracy_std", result.acc_std},
                      {"f1_mean", result.f1_mean},
                      {"f1_std", result.f1_std}};
    return j.dump(2) + "\n";
}

}  // namespace hus
