#include <doctest.h>

#include <boost/math/distributions/students_t.hpp>
#include <cmath>

#include "husformer/rng.hpp"
#include "husformer/stats.hpp"

using namespace hus;

namespace {

// Independent high-precision reference for the two-sided Welch p-value.
double reference_p(double t, double df) {
    boost::math::students_t dist(df);
    return 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
}

}  // namespace

TEST_CASE("identical samples give t=0, p=1") {
    std::vector<double> a = {1.0, 2.0, 3.0, 4.0};
    const TTestResult r = welch_t_test(a, a);
    CHECK(r.t == doctest::Approx(0.0));
    CHECK(r.p == doctest::Approx(1.0));
}

TEST_CASE("well-separated samples are significant") {
    std::vector<double> a = {0, 0, 0, 0, 0};
    std::vector<double> b = {10, 10, 10, 10, 10.0001};
    const TTestResult r = welch_t_test(a, b);
    CHECK(r.p < 0.01);
}

TEST_CASE("degenerate constant samples") {
    std::vector<double> a = {2.0, 2.0, 2.0};
    std::vector<double> b = {2.0, 2.0};
    CHECK(welch_t_test(a, b).p == doctest::Approx(1.0));
    std::vector<double> c = {3.0, 3.0};
    CHECK(welch_t_test(a, c).p == doctest::Approx(0.0));
    CHECK_THROWS_AS(welch_t_test({1.0}, a), DataError);
}

TEST_CASE("p-values match the reference within 1e-6 on random pairs") {
    Rng rng(23);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t na = 3 + rng.below(20);
        const std::size_t nb = 3 + rng.below(20);
        std::vector<double> a(na), b(nb);
        const double shift = rng.uniform(-1.0, 1.0);
        for (double& x : a) x = rng.normal();
        for (double& x : b) x = rng.normal() * rng.uniform(0.5, 2.0) + shift;
        const TTestResult r = welch_t_test(a, b);
        CHECK(std::abs(r.p - reference_p(r.t, r.df)) < 1e-6);
    }
}

TEST_CASE("incomplete beta sanity") {
    CHECK(regularized_incomplete_beta(2.0, 3.0, 0.0) == 0.0);
    CHECK(regularized_incomplete_beta(2.0, 3.0, 1.0) == 1.0);
    // I_x(1,1) is the identity.
    CHECK(regularized_incomplete_beta(1.0, 1.0, 0.37) == doctest::Approx(0.37).epsilon(1e-12));
    // Symmetry I_x(a,b) = 1 - I_{1-x}(b,a).
    const double lhs = regularized_incomplete_beta(2.5, 4.5, 0.3);
    const double rhs = 1.0 - regularized_incomplete_beta(4.5, 2.5, 0.7);
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
}

TEST_CASE("mean and sample std") {
    std::vector<double> v = {1.0, 2.0, 3.0, 4.0};
    CHECK(mean(v) == doctest::Approx(2.5));
    CHECK(sample_std(v) == doctest::Approx(std::sqrt(5.0 / 3.0)));
    CHECK(sample_std({1.0}) == 0.0);
}
