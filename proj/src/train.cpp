#include "husformer/train.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "husformer/stats.hpp"
#include "husformer/variants.hpp"

namespace hus {

void TrainConfig::validate() const {
    if (batch_size == 0) throw ConfigError("train config: batch_size must be >= 1");
    if (!(learning_rate > 0.0)) throw ConfigError("train config: learning_rate must be > 0");
    if (!(beta1 > 0.0 && beta1 < 1.0)) throw ConfigError("train config: beta1 must lie in (0, 1)");
    if (!(beta2 > 0.0 && beta2 < 1.0)) throw ConfigError("train config: beta2 must lie in (0, 1)");
    if (!(adam_eps > 0.0)) throw ConfigError("train config: adam_eps must be > 0");
    if (k_folds == 0) throw ConfigError("train config: k_folds must be >= 1");
    if (k_folds == 1 && !(holdout_fraction > 0.0 && holdout_fraction < 1.0)) {
        throw ConfigError("train config: k_folds=1 requires holdout_fraction in (0, 1)");
    }
}

AdamState AdamState::for_params(const std::vector<TensorPtr>& params) {
    AdamState state;
    state.m.reserve(params.size());
    state.v.reserve(params.size());
    for (const auto& p : params) {
        state.m.emplace_back(p->numel(), 0.0);
        state.v.emplace_back(p->numel(), 0.0);
    }
    return state;
}

void adam_step(const std::vector<TensorPtr>& params, AdamState& state, double lr, double beta1,
               double beta2, double eps) {
    if (state.m.size() != params.size()) {
        throw ConfigError("adam_step: state was built for a different parameter list");
    }
    ++state.t;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& p = *params[i];
        auto& m = state.m[i];
        auto& v = state.v[i];
        for (std::size_t j = 0; j < p.numel(); ++j) {
            const double g = p.grad[j];
            m[j] = beta1 * m[j] + (1.0 - beta1) * g;
            v[j] = beta2 * v[j] + (1.0 - beta2) * g * g;
            const double m_hat = m[j] / bc1;
            const double v_hat = v[j] / bc2;
            p.data[j] -= lr * m_hat / (std::sqrt(v_hat) + eps);
        }
    }
}

TensorPtr mae_loss(Tape* tape, const TensorPtr& probs, std::size_t label) {
    if (label >= probs->numel()) {
        throw DataError("mae_loss: label " + std::to_string(label) + " out of range for " +
                        std::to_string(probs->numel()) + " classes");
    }
    const bool want = tape && probs->requires_grad;
    auto loss = Tensor::zeros({1, 1}, want);
    double acc = 0.0;
    for (std::size_t j = 0; j < probs->numel(); ++j) {
        acc += std::abs(probs->data[j] - (j == label ? 1.0 : 0.0));
    }
    loss->data[0] = acc;
    if (want) {
        tape->record([probs, loss, label] {
            const double g = loss->grad[0];
            for (std::size_t j = 0; j < probs->numel(); ++j) {
                const double diff = probs->data[j] - (j == label ? 1.0 : 0.0);
                if (diff > 0.0) {
                    probs->grad[j] += g;
                } else if (diff < 0.0) {
                    probs->grad[j] -= g;
                }
            }
        });
    }
    return loss;
}

std::vector<std::vector<std::size_t>> kfold_split(std::size_t n, std::size_t k, std::uint64_t seed) {
    if (k < 2) throw ConfigError("kfold_split: k must be >= 2");
    if (n < k) {
        throw ConfigError("kfold_split: dataset size " + std::to_string(n) + " < fold count " +
                          std::to_string(k));
    }
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng(seed);
    rng.shuffle(order);

    std::vector<std::vector<std::size_t>> folds(k);
    const std::size_t base = n / k;
    const std::size_t extra = n % k;  // first `extra` folds take one more
    std::size_t at = 0;
    for (std::size_t f = 0; f < k; ++f) {
        const std::size_t len = base + (f < extra ? 1 : 0);
        folds[f].assign(order.begin() + static_cast<std::ptrdiff_t>(at),
                        order.begin() + static_cast<std::ptrdiff_t>(at + len));
        at += len;
    }
    return folds;
}

TrainTrace train(ModelParams& params, const ModelConfig& cfg, const Dataset& dataset,
                 const std::vector<std::size_t>& indices, const TrainConfig& tc, Rng& rng) {
    tc.validate();
    if (indices.empty()) throw DataError("train: no training samples");

    TrainTrace trace;
    AdamState adam = AdamState::for_params(params.trainable);
    ForwardOptions opts;
    opts.training = true;
    opts.rng = &rng;

    for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
        const auto batches = batch_indices(indices.size(), tc.batch_size, true, rng.next_u64());
        double epoch_sum = 0.0;
        for (const auto& batch : batches) {
            for (const auto& p : params.trainable) p->zero_grad();
            const double inv_batch = 1.0 / static_cast<double>(batch.size());
            for (std::size_t pos : batch) {
                Tape tape;
                opts.tape = &tape;
                const MultiModalSample& sample = dataset.samples[indices[pos]];
                ForwardResult out = forward(sample, params, cfg, opts);
                TensorPtr loss = mae_loss(&tape, out.probs, sample.label);
                const double value = loss->data[0];
                if (!std::isfinite(value)) {
                    throw EvalError("train: non-finite loss " + std::to_string(value) + " at step " +
                                    std::to_string(adam.t + 1));
                }
                epoch_sum += value;
                tape.backward(loss, inv_batch);
            }
            adam_step(params.trainable, adam, tc.learning_rate, tc.beta1, tc.beta2, tc.adam_eps);
        }
        trace.epoch_loss.push_back(epoch_sum / static_cast<double>(indices.size()));
    }
    return trace;
}

EvalMetrics evaluate(const ModelParams& params, const ModelConfig& cfg, const Dataset& dataset,
                     const std::vector<std::size_t>& indices) {
    if (indices.empty()) throw DataError("evaluate: no samples");
    std::vector<std::size_t> labels, predictions;
    labels.reserve(indices.size());
    predictions.reserve(indices.size());
    ForwardOptions opts;  // eval mode: no tape, no dropout
    double mae_sum = 0.0;
    for (std::size_t idx : indices) {
        const MultiModalSample& sample = dataset.samples[idx];
        ForwardResult out = forward(sample, params, cfg, opts);
        labels.push_back(sample.label);
        predictions.push_back(out.predicted);
        mae_sum += std::abs(static_cast<double>(sample.label) - static_cast<double>(out.predicted));
    }
    EvalMetrics metrics;
    metrics.confusion = make_confusion(labels, predictions, cfg.num_classes);
    metrics.accuracy = multiclass_avg_accuracy(metrics.confusion);
    metrics.f1 = multiclass_avg_f1(metrics.confusion);
    metrics.label_mae = mae_sum / static_cast<double>(indices.size());
    return metrics;
}

namespace {

FoldResult run_fold(std::size_t fold, const Dataset& dataset, const ModelConfig& cfg,
                    const TrainConfig& tc, const std::vector<std::size_t>& test,
                    const std::vector<std::size_t>& train_indices) {
    Rng fold_rng(tc.seed + fold);
    ModelParams params = build_variant(cfg, fold_rng);
    FoldResult result;
    result.fold = fold;
    result.epoch_loss = train(params, cfg, dataset, train_indices, tc, fold_rng).epoch_loss;
    result.metrics = evaluate(params, cfg, dataset, test);
    return result;
}

}  // namespace

CrossValidationResult cross_validate(const Dataset& dataset, const ModelConfig& cfg,
                                     const TrainConfig& tc, std::size_t jobs) {
    tc.validate();
    cfg.validate();
    if (cfg.num_classes != dataset.num_classes) {
        throw ConfigError("cross_validate: model classes " + std::to_string(cfg.num_classes) +
                          " != dataset classes " + std::to_string(dataset.num_classes));
    }

    // Test/train index pairs per fold.
    std::vector<std::vector<std::size_t>> test_sets;
    if (tc.k_folds == 1) {
        std::vector<std::size_t> order(dataset.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        Rng rng(tc.seed);
        rng.shuffle(order);
        std::size_t holdout = static_cast<std::size_t>(
            std::round(static_cast<double>(dataset.size()) * tc.holdout_fraction));
        holdout = std::max<std::size_t>(1, std::min(holdout, dataset.size() - 1));
        test_sets.push_back({order.begin(), order.begin() + static_cast<std::ptrdiff_t>(holdout)});
    } else {
        test_sets = kfold_split(dataset.size(), tc.k_folds, tc.seed);
    }

    std::vector<std::vector<std::size_t>> train_sets(test_sets.size());
    for (std::size_t f = 0; f < test_sets.size(); ++f) {
        std::vector<bool> is_test(dataset.size(), false);
        for (std::size_t i : test_sets[f]) is_test[i] = true;
        for (std::size_t i = 0; i < dataset.size(); ++i) {
            if (!is_test[i]) train_sets[f].push_back(i);
        }
    }

    CrossValidationResult result;
    result.folds.resize(test_sets.size());
    const std::size_t workers = std::max<std::size_t>(1, std::min(jobs, test_sets.size()));
    if (workers == 1) {
        for (std::size_t f = 0; f < test_sets.size(); ++f) {
            try {
                result.folds[f] = run_fold(f, dataset, cfg, tc, test_sets[f], train_sets[f]);
            } catch (const std::exception& e) {
                throw EvalError("fold " + std::to_string(f) + " failed: " + e.what());
            }
        }
    } else {
        std::vector<std::exception_ptr> errors(test_sets.size());
        std::size_t next = 0;
        while (next < test_sets.size()) {
            const std::size_t chunk = std::min(workers, test_sets.size() - next);
            std::vector<std::thread> pool;
            pool.reserve(chunk);
            for (std::size_t w = 0; w < chunk; ++w) {
                const std::size_t f = next + w;
                pool.emplace_back([&, f] {
                    try {
                        result.folds[f] = run_fold(f, dataset, cfg, tc, test_sets[f], train_sets[f]);
                    } catch (...) {
                        errors[f] = std::current_exception();
                    }
                });
            }
            for (auto& t : pool) t.join();
            next += chunk;
        }
        for (std::size_t f = 0; f < errors.size(); ++f) {
            if (errors[f]) {
                try {
                    std::rethrow_exception(errors[f]);
                } catch (const std::exception& e) {
                    throw EvalError("fold " + std::to_string(f) + " failed: " + e.what());
                }
            }
        }
    }

    std::vector<double> accs, f1s;
    for (const auto& fold : result.folds) {
        accs.push_back(fold.metrics.accuracy);
        f1s.push_back(fold.metrics.f1);
    }
    result.acc_mean = mean(accs);
    result.acc_std = sample_std(accs);
    result.f1_mean = mean(f1s);
    result.f1_std = sample_std(f1s);
    return result;
}

}  // namespace hus
