#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <vector>

#include "husformer/errors.hpp"
#include "husformer/rng.hpp"

namespace hus {

struct Tensor;
using TensorPtr = std::shared_ptr<Tensor>;

// Dense row-major real64 tensor. `grad` is allocated (and kept the same
// length as `data`) exactly when `requires_grad` is set.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;
    std::vector<double> grad;
    bool requires_grad = false;

    std::size_t numel() const { return data.size(); }
    std::size_t rows() const { return shape.empty() ? 0 : shape[0]; }
    std::size_t cols() const { return shape.size() < 2 ? 0 : shape[1]; }

    double& at(std::size_t r, std::size_t c) { return data[r * shape[1] + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * shape[1] + c]; }

    void zero_grad();

    static TensorPtr zeros(std::vector<std::size_t> shape, bool requires_grad = false);
    static TensorPtr full(std::vector<std::size_t> shape, double value, bool requires_grad = false);
    static TensorPtr from(std::vector<std::size_t> shape, std::vector<double> values,
                          bool requires_grad = false);
    // Elements drawn uniformly from [lo, hi).
    static TensorPtr random_uniform(std::vector<std::size_t> shape, double lo, double hi,
                                    Rng& rng, bool requires_grad = false);
};

std::string shape_str(const std::vector<std::size_t>& shape);

// Ordered record of executed operations. Each forward op that sees a
// non-null tape appends one backward rule; backward() seeds the loss
// gradient and replays the rules in reverse execution order, accumulating
// (+=) into every requires_grad tensor reachable from the loss. A tape is
// confined to one thread and is cleared between training steps.
class Tape {
public:
    void record(std::function<void()> rule) { rules_.push_back(std::move(rule)); }

    // Seeds d(loss)/d(loss) = seed and replays the tape. `loss` must be a
    // single-element tensor with requires_grad set.
    void backward(const TensorPtr& loss, double seed = 1.0);

    void clear() { rules_.clear(); }
    std::size_t size() const { return rules_.size(); }

private:
    std::vector<std::function<void()>> rules_;
};

// Forward operations. `tape` may be null: the value is computed the same
// way but no backward rule is recorded (pure evaluation).

// [M x K] . [K x N] -> [M x N]
TensorPtr matmul(Tape* tape, const TensorPtr& a, const TensorPtr& b);

// Row-wise softmax with max subtraction; rows sum to 1.
TensorPtr softmax_rows(Tape* tape, const TensorPtr& x);

// Normalizes the last axis (length D) to mean 0 / variance 1, then applies
// gain (x) + bias elementwise along that axis.
TensorPtr layer_norm(Tape* tape, const TensorPtr& x, const TensorPtr& gain,
                     const TensorPtr& bias, double eps);

// Temporal convolution along the second (time) axis, mixing the first
// (channel) axis: x [L_in x T], kernels [L_out x L_in x k] -> [L_out x T].
// k must be odd; output length is preserved by symmetric zero padding.
TensorPtr conv1d_same(Tape* tape, const TensorPtr& x, const TensorPtr& kernels);

// Inverted dropout: in training mode each element is zeroed with
// probability `rate` and survivors are scaled by 1/(1-rate); in eval mode
// the input is returned unchanged.
TensorPtr dropout(Tape* tape, const TensorPtr& x, double rate, bool training, Rng* rng);

TensorPtr add(Tape* tape, const TensorPtr& a, const TensorPtr& b);
TensorPtr scale(Tape* tape, const TensorPtr& a, double s);
TensorPtr relu(Tape* tape, const TensorPtr& x);
TensorPtr concat_rows(Tape* tape, const std::vector<TensorPtr>& parts);
TensorPtr transpose(Tape* tape, const TensorPtr& x);

// x [M x In] . w [In x Out] (+ bias [Out] on every row; bias may be null).
TensorPtr linear(Tape* tape, const TensorPtr& x, const TensorPtr& w, const TensorPtr& b);

// Row-major reshape to [1 x numel].
TensorPtr flatten_rows(Tape* tape, const TensorPtr& x);

// Sum of all elements -> [1 x 1].
TensorPtr sum_all(Tape* tape, const TensorPtr& x);

// Central-difference check of the reverse-mode gradients of `f` with
// respect to every element of `params`. `f` must be deterministic given the
// parameter values (run dropout in eval mode or with a fixed stream); it is
// invoked with a tape for the analytic pass and with null for the numeric
// probes. Returns max over parameters of
// |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
double gradient_check(const std::function<TensorPtr(Tape*)>& f,
                      const std::vector<TensorPtr>& params, double h);

}  // namespace hus
