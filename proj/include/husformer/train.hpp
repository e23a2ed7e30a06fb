#pragma once

#include <cstdint>
#include <vector>

#include "husformer/data.hpp"
#include "husformer/metrics.hpp"
#include "husformer/model.hpp"

namespace hus {

struct TrainConfig {
    std::size_t batch_size = 32;
    double learning_rate = 1e-3;
    std::size_t epochs = 10;  // 0 is allowed and leaves the parameters untouched
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    std::size_t k_folds = 10;
    double holdout_fraction = 0.2;  // only used when k_folds == 1
    std::uint64_t seed = 0;

    void validate() const;
};

// First/second moment buffers, one pair per parameter tensor.
struct AdamState {
    std::vector<std::vector<double>> m, v;
    std::uint64_t t = 0;

    static AdamState for_params(const std::vector<TensorPtr>& params);
};

// Standard Adam update with bias correction; consumes the gradients
// currently stored in the parameters.
void adam_step(const std::vector<TensorPtr>& params, AdamState& state, double lr, double beta1,
               double beta2, double eps);

// Mean absolute error between the probability vector and the one-hot label,
// as a differentiable scalar on the tape.
TensorPtr mae_loss(Tape* tape, const TensorPtr& probs, std::size_t label);

// Shuffled partition of 0..n-1 into k folds whose sizes differ by at most 1.
std::vector<std::vector<std::size_t>> kfold_split(std::size_t n, std::size_t k, std::uint64_t seed);

struct TrainTrace {
    std::vector<double> epoch_loss;  // mean per-sample loss per epoch
};

// Mini-batch training over the given sample indices: forward, MAE loss,
// backward, Adam step, with a fresh shuffle every epoch. The rng drives
// shuffling and dropout; pass the stream that initialized the parameters
// for a fully reproducible run. Aborts with EvalError on non-finite loss.
TrainTrace train(ModelParams& params, const ModelConfig& cfg, const Dataset& dataset,
                 const std::vector<std::size_t>& indices, const TrainConfig& tc, Rng& rng);

struct EvalMetrics {
    double accuracy = 0.0;
    double f1 = 0.0;
    double label_mae = 0.0;  // mean |label - prediction| over samples
    Confusion confusion;
};

EvalMetrics evaluate(const ModelParams& params, const ModelConfig& cfg, const Dataset& dataset,
                     const std::vector<std::size_t>& indices);

struct FoldResult {
    std::size_t fold = 0;
    std::vector<double> epoch_loss;
    EvalMetrics metrics;
};

struct CrossValidationResult {
    std::vector<FoldResult> folds;
    double acc_mean = 0.0, acc_std = 0.0;
    double f1_mean = 0.0, f1_std = 0.0;
};

// K-fold cross validation (or a single shuffled holdout split when
// k_folds == 1). Fold f trains a fresh model with derived seed
// tc.seed + f; folds are independent and may run on up to `jobs` threads
// without changing any result.
CrossValidationResult cross_validate(const Dataset& dataset, const ModelConfig& cfg,
                                     const TrainConfig& tc, std::size_t jobs = 1);

}  // namespace hus
