#include "husformer/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace hus {

namespace {

std::size_t shape_numel(const std::vector<std::size_t>& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

void require_2d(const TensorPtr& t, const char* op) {
    if (t->shape.size() != 2) {
        throw DimensionError(std::string(op) + ": expected a 2-D tensor, got shape " + shape_str(t->shape));
    }
}

bool grad_wanted(const Tape* tape, std::initializer_list<const TensorPtr*> inputs) {
    if (!tape) return false;
    for (const TensorPtr* t : inputs) {
        if (*t && (*t)->requires_grad) return true;
    }
    return false;
}

TensorPtr make_output(std::vector<std::size_t> shape, bool requires_grad) {
    return Tensor::zeros(std::move(shape), requires_grad);
}

}  // namespace

std::string shape_str(const std::vector<std::size_t>& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

void Tensor::zero_grad() {
    std::fill(grad.begin(), grad.end(), 0.0);
}

TensorPtr Tensor::zeros(std::vector<std::size_t> shape, bool requires_grad) {
    auto t = std::make_shared<Tensor>();
    t->shape = std::move(shape);
    t->data.assign(shape_numel(t->shape), 0.0);
    t->requires_grad = requires_grad;
    if (requires_grad) t->grad.assign(t->data.size(), 0.0);
    return t;
}

TensorPtr Tensor::full(std::vector<std::size_t> shape, double value, bool requires_grad) {
    auto t = zeros(std::move(shape), requires_grad);
    std::fill(t->data.begin(), t->data.end(), value);
    return t;
}

TensorPtr Tensor::from(std::vector<std::size_t> shape, std::vector<double> values, bool requires_grad) {
    if (shape_numel(shape) != values.size()) {
        throw DimensionError("Tensor::from: " + std::to_string(values.size()) +
                             " values do not fill shape " + shape_str(shape));
    }
    auto t = std::make_shared<Tensor>();
    t->shape = std::move(shape);
    t->data = std::move(values);
    t->requires_grad = requires_grad;
    if (requires_grad) t->grad.assign(t->data.size(), 0.0);
    return t;
}

TensorPtr Tensor::random_uniform(std::vector<std::size_t> shape, double lo, double hi, Rng& rng,
                                 bool requires_grad) {
    auto t = zeros(std::move(shape), requires_grad);
    for (double& v : t->data) v = rng.uniform(lo, hi);
    return t;
}

void Tape::backward(const TensorPtr& loss, double seed) {
    if (!loss->requires_grad || loss->numel() != 1) {
        throw EvalError("Tape::backward: loss must be a single-element tensor with requires_grad");
    }
    loss->grad[0] += seed;
    for (auto it = rules_.rbegin(); it != rules_.rend(); ++it) (*it)();
}

TensorPtr matmul(Tape* tape, const TensorPtr& a, const TensorPtr& b) {
    require_2d(a, "matmul");
    require_2d(b, "matmul");
    if (a->shape[1] != b->shape[0]) {
        throw DimensionError("matmul: inner dimensions differ, " + shape_str(a->shape) + " vs " +
                             shape_str(b->shape));
    }
    const std::size_t m = a->shape[0], k = a->shape[1], n = b->shape[1];
    auto out = make_output({m, n}, grad_wanted(tape, {&a, &b}));
    const double* ad = a->data.data();
    const double* bd = b->data.data();
    double* od = out->data.data();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const double av = ad[i * k + p];
            if (av == 0.0) continue;
            const double* brow = bd + p * n;
            double* orow = od + i * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
    if (out->requires_grad) {
        tape->record([a, b, out, m, k, n] {
            const double* gd = out->grad.data();
            if (a->requires_grad) {
                // dA = dC . B^T
                double* gad = a->grad.data();
                const double* bd2 = b->data.data();
                for (std::size_t i = 0; i < m; ++i) {
                    for (std::size_t p = 0; p < k; ++p) {
                        double acc = 0.0;
                        const double* grow = gd + i * n;
                        const double* brow = bd2 + p * n;
                        for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
                        gad[i * k + p] += acc;
                    }
                }
            }
            if (b->requires_grad) {
                // dB = A^T . dC
                double* gbd = b->grad.data();
                const double* ad2 = a->data.data();
                for (std::size_t i = 0; i < m; ++i) {
                    const double* grow = gd + i * n;
                    for (std::size_t p = 0; p < k; ++p) {
                        const double av = ad2[i * k + p];
                        if (av == 0.0) continue;
                        double* gbrow = gbd + p * n;
                        for (std::size_t j = 0; j < n; ++j) gbrow[j] += av * grow[j];
                    }
                }
            }
        });
    }
    return out;
}

TensorPtr softmax_rows(Tape* tape, const TensorPtr& x) {
    require_2d(x, "softmax_rows");
    const std::size_t m = x->shape[0], n = x->shape[1];
    auto out = make_output({m, n}, grad_wanted(tape, {&x}));
    for (std::size_t i = 0; i < m; ++i) {
        const double* row = x->data.data() + i * n;
        double* orow = out->data.data() + i * n;
        double mx = row[0];
        for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, row[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            orow[j] = std::exp(row[j] - mx);
            sum += orow[j];
        }
        const double inv = 1.0 / sum;
        for (std::size_t j = 0; j < n; ++j) orow[j] *= inv;
    }
    if (out->requires_grad) {
        tape->record([x, out, m, n] {
            // dX_row = P .* (dP - (dP . P))
            for (std::size_t i = 0; i < m; ++i) {
                const double* p = out->data.data() + i * n;
                const double* gp = out->grad.data() + i * n;
                double* gx = x->grad.data() + i * n;
                double dot = 0.0;
                for (std::size_t j = 0; j < n; ++j) dot += gp[j] * p[j];
                for (std::size_t j = 0; j < n; ++j) gx[j] += p[j] * (gp[j] - dot);
            }
        });
    }
    return out;
}

TensorPtr layer_norm(Tape* tape, const TensorPtr& x, const TensorPtr& gain, const TensorPtr& bias,
                     double eps) {
    if (x->shape.empty()) throw DimensionError("layer_norm: scalar input");
    if (eps < 0.0) throw ConfigError("layer_norm: eps must be >= 0");
    const std::size_t d = x->shape.back();
    if (gain->numel() != d || bias->numel() != d) {
        throw DimensionError("layer_norm: gain/bias length must equal last axis " + std::to_string(d));
    }
    const std::size_t rows = x->numel() / d;
    auto out = make_output(x->shape, grad_wanted(tape, {&x, &gain, &bias}));
    // Per-row normalized values and 1/sigma are kept for the backward rule.
    auto xhat = std::make_shared<std::vector<double>>(x->numel());
    auto inv_sigma = std::make_shared<std::vector<double>>(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = x->data.data() + r * d;
        double mean = 0.0;
        for (std::size_t j = 0; j < d; ++j) mean += row[j];
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            const double c = row[j] - mean;
            var += c * c;
        }
        var /= static_cast<double>(d);
        const double is = 1.0 / std::sqrt(var + eps);
        (*inv_sigma)[r] = is;
        double* xh = xhat->data() + r * d;
        double* orow = out->data.data() + r * d;
        for (std::size_t j = 0; j < d; ++j) {
            xh[j] = (row[j] - mean) * is;
            orow[j] = gain->data[j] * xh[j] + bias->data[j];
        }
    }
    if (out->requires_grad) {
        tape->record([x, gain, bias, out, xhat, inv_sigma, rows, d] {
            const double dn = static_cast<double>(d);
            for (std::size_t r = 0; r < rows; ++r) {
                const double* gy = out->grad.data() + r * d;
                const double* xh = xhat->data() + r * d;
                const double is = (*inv_sigma)[r];
                if (gain->requires_grad) {
                    for (std::size_t j = 0; j < d; ++j) gain->grad[j] += gy[j] * xh[j];
                }
                if (bias->requires_grad) {
                    for (std::size_t j = 0; j < d; ++j) bias->grad[j] += gy[j];
                }
                if (x->requires_grad) {
                    // dx = is/D * (D*dxhat - sum(dxhat) - xhat * sum(dxhat .* xhat))
                    double s1 = 0.0, s2 = 0.0;
                    for (std::size_t j = 0; j < d; ++j) {
                        const double dxh = gy[j] * gain->data[j];
                        s1 += dxh;
                        s2 += dxh * xh[j];
                    }
                    double* gx = x->grad.data() + r * d;
                    for (std::size_t j = 0; j < d; ++j) {
                        const double dxh = gy[j] * gain->data[j];
                        gx[j] += is / dn * (dn * dxh - s1 - xh[j] * s2);
                    }
                }
            }
        });
    }
    return out;
}

TensorPtr conv1d_same(Tape* tape, const TensorPtr& x, const TensorPtr& kernels) {
    require_2d(x, "conv1d_same");
    if (kernels->shape.size() != 3) {
        throw DimensionError("conv1d_same: kernels must be [L_out x L_in x k], got " +
                             shape_str(kernels->shape));
    }
    const std::size_t l_out = kernels->shape[0], l_in = kernels->shape[1], k = kernels->shape[2];
    if (k % 2 == 0) throw ConfigError("conv1d_same: kernel width must be odd, got " + std::to_string(k));
    if (x->shape[0] != l_in) {
        throw DimensionError("conv1d_same: input channels " + shape_str(x->shape) +
                             " do not match kernels " + shape_str(kernels->shape));
    }
    const std::size_t t_len = x->shape[1];
    const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(k / 2);
    auto out = make_output({l_out, t_len}, grad_wanted(tape, {&x, &kernels}));
    const std::ptrdiff_t tn = static_cast<std::ptrdiff_t>(t_len);
    for (std::size_t o = 0; o < l_out; ++o) {
        double* orow = out->data.data() + o * t_len;
        for (std::size_t i = 0; i < l_in; ++i) {
            const double* xrow = x->data.data() + i * t_len;
            const double* ker = kernels->data.data() + (o * l_in + i) * k;
            for (std::ptrdiff_t t = 0; t < tn; ++t) {
                double acc = 0.0;
                for (std::size_t d = 0; d < k; ++d) {
                    const std::ptrdiff_t s = t + static_cast<std::ptrdiff_t>(d) - off;
                    if (s >= 0 && s < tn) acc += xrow[s] * ker[d];
                }
                orow[t] += acc;
            }
        }
    }
    if (out->requires_grad) {
        tape->record([x, kernels, out, l_out, l_in, k, t_len, off] {
            const std::ptrdiff_t tn = static_cast<std::ptrdiff_t>(t_len);
            for (std::size_t o = 0; o < l_out; ++o) {
                const double* gy = out->grad.data() + o * t_len;
                for (std::size_t i = 0; i < l_in; ++i) {
                    const double* xrow = x->data.data() + i * t_len;
                    const double* ker = kernels->data.data() + (o * l_in + i) * k;
                    double* gk = kernels->requires_grad ? kernels->grad.data() + (o * l_in + i) * k : nullptr;
                    double* gx = x->requires_grad ? x->grad.data() + i * t_len : nullptr;
                    for (std::ptrdiff_t t = 0; t < tn; ++t) {
                        const double g = gy[t];
                        if (g == 0.0) continue;
                        for (std::size_t d = 0; d < k; ++d) {
                            const std::ptrdiff_t s = t + static_cast<std::ptrdiff_t>(d) - off;
                            if (s < 0 || s >= tn) continue;
                            if (gk) gk[d] += xrow[s] * g;
                            if (gx) gx[s] += ker[d] * g;
                        }
                    }
                }
            }
        });
    }
    return out;
}

TensorPtr dropout(Tape* tape, const TensorPtr& x, double rate, bool training, Rng* rng) {
    if (rate < 0.0 || rate >= 1.0) {
        throw ConfigError("dropout: rate must lie in [0, 1), got " + std::to_string(rate));
    }
    if (!training || rate == 0.0) return x;
    if (!rng) throw ConfigError("dropout: training mode requires a random source");
    auto out = make_output(x->shape, grad_wanted(tape, {&x}));
    auto mask = std::make_shared<std::vector<double>>(x->numel());
    const double keep_scale = 1.0 / (1.0 - rate);
    for (std::size_t i = 0; i < x->numel(); ++i) {
        const double m = rng->uniform() < rate ? 0.0 : keep_scale;
        (*mask)[i] = m;
        out->data[i] = x->data[i] * m;
    }
    if (out->requires_grad) {
        tape->record([x, out, mask] {
            for (std::size_t i = 0; i < x->numel(); ++i) x->grad[i] += out->grad[i] * (*mask)[i];
        });
    }
    return out;
}

TensorPtr add(Tape* tape, const TensorPtr& a, const TensorPtr& b) {
    if (a->shape != b->shape) {
        throw DimensionError("add: shape mismatch " + shape_str(a->shape) + " vs " + shape_str(b->shape));
    }
    auto out = make_output(a->shape, grad_wanted(tape, {&a, &b}));
    for (std::size_t i = 0; i < out->numel(); ++i) out->data[i] = a->data[i] + b->data[i];
    if (out->requires_grad) {
        tape->record([a, b, out] {
            if (a->requires_grad)
                for (std::size_t i = 0; i < out->numel(); ++i) a->grad[i] += out->grad[i];
            if (b->requires_grad)
                for (std::size_t i = 0; i < out->numel(); ++i) b->grad[i] += out->grad[i];
        });
    }
    return out;
}

TensorPtr scale(Tape* tape, const TensorPtr& a, double s) {
    auto out = make_output(a->shape, grad_wanted(tape, {&a}));
    for (std::size_t i = 0; i < out->numel(); ++i) out->data[i] = a->data[i] * s;
    if (out->requires_grad) {
        tape->record([a, out, s] {
            for (std::size_t i = 0; i < out->numel(); ++i) a->grad[i] += out->grad[i] * s;
        });
    }
    return out;
}

TensorPtr relu(Tape* tape, const TensorPtr& x) {
    auto out = make_output(x->shape, grad_wanted(tape, {&x}));
    for (std::size_t i = 0; i < out->numel(); ++i) out->data[i] = x->data[i] > 0.0 ? x->data[i] : 0.0;
    if (out->requires_grad) {
        tape->record([x, out] {
            for (std::size_t i = 0; i < out->numel(); ++i)
                if (x->data[i] > 0.0) x->grad[i] += out->grad[i];
        });
    }
    return out;
}

TensorPtr concat_rows(Tape* tape, const std::vector<TensorPtr>& parts) {
    if (parts.empty()) throw DimensionError("concat_rows: no inputs");
    const std::size_t n = parts[0]->cols();
    std::size_t total_rows = 0;
    bool want = false;
    for (const auto& p : parts) {
        require_2d(p, "concat_rows");
        if (p->shape[1] != n) {
            throw DimensionError("concat_rows: column mismatch " + shape_str(parts[0]->shape) + " vs " +
                                 shape_str(p->shape));
        }
        total_rows += p->shape[0];
        want = want || (tape && p->requires_grad);
    }
    auto out = make_output({total_rows, n}, want);
    std::size_t row = 0;
    for (const auto& p : parts) {
        std::copy(p->data.begin(), p->data.end(), out->data.begin() + row * n);
        row += p->shape[0];
    }
    if (out->requires_grad) {
        tape->record([parts, out, n] {
            std::size_t row = 0;
            for (const auto& p : parts) {
                if (p->requires_grad) {
                    const double* g = out->grad.data() + row * n;
                    for (std::size_t i = 0; i < p->numel(); ++i) p->grad[i] += g[i];
                }
                row += p->shape[0];
            }
        });
    }
    return out;
}

TensorPtr transpose(Tape* tape, const TensorPtr& x) {
    require_2d(x, "transpose");
    const std::size_t m = x->shape[0], n = x->shape[1];
    auto out = make_output({n, m}, grad_wanted(tape, {&x}));
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out->data[j * m + i] = x->data[i * n + j];
    if (out->requires_grad) {
        tape->record([x, out, m, n] {
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) x->grad[i * n + j] += out->grad[j * m + i];
        });
    }
    return out;
}

TensorPtr linear(Tape* tape, const TensorPtr& x, const TensorPtr& w, const TensorPtr& b) {
    require_2d(x, "linear");
    require_2d(w, "linear");
    if (x->shape[1] != w->shape[0]) {
        throw DimensionError("linear: input width " + shape_str(x->shape) + " does not match weights " +
                             shape_str(w->shape));
    }
    const std::size_t m = x->shape[0], in = w->shape[0], out_n = w->shape[1];
    if (b && b->numel() != out_n) {
        throw DimensionError("linear: bias length " + std::to_string(b->numel()) + " != " +
                             std::to_string(out_n));
    }
    auto out = make_output({m, out_n}, grad_wanted(tape, {&x, &w, &b}));
    for (std::size_t i = 0; i < m; ++i) {
        double* orow = out->data.data() + i * out_n;
        if (b) std::copy(b->data.begin(), b->data.end(), orow);
        const double* xrow = x->data.data() + i * in;
        for (std::size_t p = 0; p < in; ++p) {
            const double xv = xrow[p];
            if (xv == 0.0) continue;
            const double* wrow = w->data.data() + p * out_n;
            for (std::size_t j = 0; j < out_n; ++j) orow[j] += xv * wrow[j];
        }
    }
    if (out->requires_grad) {
        tape->record([x, w, b, out, m, in, out_n] {
            const double* gd = out->grad.data();
            if (x->requires_grad) {
                for (std::size_t i = 0; i < m; ++i) {
                    const double* grow = gd + i * out_n;
                    double* gx = x->grad.data() + i * in;
                    for (std::size_t p = 0; p < in; ++p) {
                        const double* wrow = w->data.data() + p * out_n;
                        double acc = 0.0;
                        for (std::size_t j = 0; j < out_n; ++j) acc += grow[j] * wrow[j];
                        gx[p] += acc;
                    }
                }
            }
            if (w->requires_grad) {
                for (std::size_t i = 0; i < m; ++i) {
                    const double* grow = gd + i * out_n;
                    const double* xrow = x->data.data() + i * in;
                    for (std::size_t p = 0; p < in; ++p) {
                        const double xv = xrow[p];
                        if (xv == 0.0) continue;
                        double* gw = w->grad.data() + p * out_n;
                        for (std::size_t j = 0; j < out_n; ++j) gw[j] += xv * grow[j];
                    }
                }
            }
            if (b && b->requires_grad) {
                for (std::size_t i = 0; i < m; ++i) {
                    const double* grow = gd + i * out_n;
                    for (std::size_t j = 0; j < out_n; ++j) b->grad[j] += grow[j];
                }
            }
        });
    }
    return out;
}

TensorPtr flatten_rows(Tape* tape, const TensorPtr& x) {
    auto out = make_output({1, x->numel()}, grad_wanted(tape, {&x}));
    out->data = x->data;
    if (out->requires_grad) {
        tape->record([x, out] {
            for (std::size_t i = 0; i < x->numel(); ++i) x->grad[i] += out->grad[i];
        });
    }
    return out;
}

TensorPtr sum_all(Tape* tape, const TensorPtr& x) {
    auto out = make_output({1, 1}, grad_wanted(tape, {&x}));
    double acc = 0.0;
    for (double v : x->data) acc += v;
    out->data[0] = acc;
    if (out->requires_grad) {
        tape->record([x, out] {
            const double g = out->grad[0];
            for (std::size_t i = 0; i < x->numel(); ++i) x->grad[i] += g;
        });
    }
    return out;
}

double gradient_check(const std::function<TensorPtr(Tape*)>& f, const std::vector<TensorPtr>& params,
                      double h) {
    Tape tape;
    TensorPtr loss = f(&tape);
    if (loss->numel() != 1) throw EvalError("gradient_check: f must produce a scalar");
    if (!std::isfinite(loss->data[0])) throw EvalError("gradient_check: non-finite loss");
    for (const auto& p : params) p->zero_grad();
    tape.backward(loss);

    double max_rel = 0.0;
    for (const auto& p : params) {
        for (std::size_t i = 0; i < p->numel(); ++i) {
            const double saved = p->data[i];
            p->data[i] = saved + h;
            const double up = f(nullptr)->data[0];
            p->data[i] = saved - h;
            const double down = f(nullptr)->data[0];
            p->data[i] = saved;
            if (!std::isfinite(up) || !std::isfinite(down)) {
                throw EvalError("gradient_check: non-finite loss during probing");
            }
            const double numeric = (up - down) / (2.0 * h);
            const double analytic = p->grad[i];
            const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
            max_rel = std::max(max_rel, std::abs(analytic - numeric) / denom);
        }
    }
    return max_rel;
}

}  // namespace hus
