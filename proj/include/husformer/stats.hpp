#pragma once

#include <vector>

#include "husformer/errors.hpp"

namespace hus {

struct TTestResult {
    double t = 0.0;
    double p = 1.0;
    double df = 0.0;
};

// Welch's unequal-variance two-sample t-test, two-sided p-value through the
// regularized incomplete beta. Degenerate input (both variances zero):
// p = 1 when the means agree, p = 0 otherwise.
TTestResult welch_t_test(const std::vector<double>& a, const std::vector<double>& b);

// I_x(a, b), evaluated by continued fraction (Lentz's method).
double regularized_incomplete_beta(double a, double b, double x);

double mean(const std::vector<double>& v);

// Sample standard deviation (n-1 denominator); 0 for fewer than 2 values.
double sample_std(const std::vector<double>& v);

}  // namespace hus
