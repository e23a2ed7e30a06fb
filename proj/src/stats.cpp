#include "husformer/stats.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace hus {

namespace {

// Continued fraction for the incomplete beta (modified Lentz).
double beta_continued_fraction(double a, double b, double x) {
    constexpr int kMaxIter = 300;
    constexpr double kEps = 3e-16;
    constexpr double kTiny = 1e-300;

    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < kEps) return h;
    }
    throw EvalError("incomplete beta continued fraction failed to converge");
}

double sample_variance(const std::vector<double>& v, double m) {
    double acc = 0.0;
    for (double x : v) acc += (x - m) * (x - m);
    return acc / static_cast<double>(v.size() - 1);
}

}  // namespace

double regularized_incomplete_beta(double a, double b, double x) {
    if (a <= 0.0 || b <= 0.0) throw EvalError("incomplete beta: a, b must be positive");
    if (x < 0.0 || x > 1.0) throw EvalError("incomplete beta: x must lie in [0, 1]");
    if (x == 0.0) return 0.0;
    if (x == 1.0) return 1.0;
    const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                            a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(ln_front);
    if (x < (a + 1.0) / (a + b + 2.0)) {
        return front * beta_continued_fraction(a, b, x) / a;
    }
    return 1.0 - std::exp(std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                          b * std::log1p(-x) + a * std::log(x)) *
                     beta_continued_fraction(b, a, 1.0 - x) / b;
}

double mean(const std::vector<double>& v) {
    double acc = 0.0;
    for (double x : v) acc += x;
    return acc / static_cast<double>(v.size());
}

double sample_std(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    return std::sqrt(sample_variance(v, mean(v)));
}

TTestResult welch_t_test(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() < 2 || b.size() < 2) {
        throw DataError("welch_t_test: both samples need at least 2 observations");
    }
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    const double ma = mean(a);
    const double mb = mean(b);
    const double va = sample_variance(a, ma);
    const double vb = sample_variance(b, mb);

    TTestResult result;
    const double se2 = va / na + vb / nb;
    if (se2 == 0.0) {
        // Both samples constant.
        if (ma == mb) {
            result.t = 0.0;
            result.p = 1.0;
        } else {
            result.t = ma > mb ? std::numeric_limits<double>::infinity()
                               : -std::numeric_limits<double>::infinity();
            result.p = 0.0;
        }
        result.df = na + nb - 2.0;
        return result;
    }
    result.t = (ma - mb) / std::sqrt(se2);
    result.df = se2 * se2 /
                ((va / na) * (va / na) / (na - 1.0) + (vb / nb) * (vb / nb) / (nb - 1.0));
    // Two-sided: P(|T| > |t|) = I_{df/(df+t^2)}(df/2, 1/2).
    result.p = regularized_incomplete_beta(result.df / 2.0, 0.5,
                                           result.df / (result.df + result.t * result.t));
    return result;
}

}  // namespace hus
