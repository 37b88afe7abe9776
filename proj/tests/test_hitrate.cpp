#include <doctest.h>

#include <boost/math/distributions/beta.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/math/special_functions/beta.hpp>

#include <cmath>

#include "tiered/hitrate.hpp"

using namespace tiered;

namespace {

// E[min] = integral of P(min > x) = integral of (1 - F(x))^B, with F from boost
double oracle_min(double a, double b, std::size_t B) {
    boost::math::quadrature::tanh_sinh<double> ts;
    return ts.integrate(
            [&](double x) { return std::pow(boost::math::ibetac(a, b, x), double(B)); }, 0.0, 1.0);
}

CoverageCurve skewed_curve(std::size_t n, double s) {
    std::vector<std::uint64_t> counts(n), bytes(n, 1000);
    for (std::size_t i = 0; i < n; ++i) {
        counts[i] = static_cast<std::uint64_t>(1e6 * std::pow(double(i + 1), -s));
    }
    return coverage_curve(make_access_profile(counts, bytes, 4, 1000));
}

} // namespace

TEST_CASE("variance_at") {
    CHECK(variance_at(0.5, 0.07) == 0.07);
    CHECK(variance_at(0.0, 0.2) == 0.0);
    CHECK(variance_at(1.0, 0.2) == 0.0);
    CHECK(variance_at(0.25, 0.04) == doctest::Approx(0.03).epsilon(1e-15));
    CHECK_THROWS_AS(variance_at(1.2, 0.1), Error);
    CHECK_THROWS_AS(variance_at(0.3, 0.3), Error);
}

TEST_CASE("beta_from_moments") {
    const auto u = beta_from_moments(0.5, 1.0 / 12);
    CHECK(u.alpha == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(u.beta == doctest::Approx(1.0).epsilon(1e-12));

    const auto p = beta_from_moments(0.5, 0.05);
    CHECK(p.alpha == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(p.beta == doctest::Approx(2.0).epsilon(1e-12));
    // moments of the fitted density by independent quadrature
    boost::math::quadrature::tanh_sinh<double> ts;
    boost::math::beta_distribution<double> dist(p.alpha, p.beta);
    const double m1 = ts.integrate([&](double x) { return x * boost::math::pdf(dist, x); }, 0.0, 1.0);
    const double m2 = ts.integrate([&](double x) { return x * x * boost::math::pdf(dist, x); }, 0.0, 1.0);
    CHECK(m1 == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(m2 - m1 * m1 == doctest::Approx(0.05).epsilon(1e-9));

    CHECK_THROWS_AS(beta_from_moments(0.3, 0.21), Error);
    CHECK_THROWS_AS(beta_from_moments(0.3, 0.3 * 0.7), Error);

    for (double m : {0.01, 0.2, 0.5, 0.77, 0.999}) {
        for (double frac : {1e-4, 0.1, 0.5, 0.95}) {
            const double v = frac * m * (1 - m);
            const auto q = beta_from_moments(m, v);
            CHECK(std::abs(q.mean() - m) <= 1e-9);
            CHECK(std::abs(q.variance() - v) <= 1e-9);
        }
    }
}

TEST_CASE("incomplete beta matches boost") {
    for (double a : {0.05, 0.5, 1.0, 3.0, 40.0}) {
        for (double b : {0.1, 1.0, 2.5, 60.0}) {
            for (double x : {1e-8, 0.01, 0.3, 0.5, 0.9, 0.999999}) {
                const auto [lo, up] = beta_cdf_sf({a, b}, x);
                CHECK(lo == doctest::Approx(boost::math::ibeta(a, b, x)).epsilon(1e-10));
                CHECK(up == doctest::Approx(boost::math::ibetac(a, b, x)).epsilon(1e-10));
            }
        }
    }
}

TEST_CASE("expected_min_hitrate closed forms") {
    CHECK(expected_min_hitrate({1, 1}, 3).eta_min == doctest::Approx(0.25).epsilon(1e-10));
    CHECK(expected_min_hitrate({2.5, 4}, 1).eta_min == 2.5 / 6.5);
    for (std::size_t B : {2, 7, 100}) {
        CHECK(std::abs(expected_min_hitrate({1, 1}, B).eta_min - 1.0 / double(B + 1)) < 1e-9);
        // Beta(1, b): 1 - F = (1 - x)^b, so E[min] = 1 / (1 + B b)
        for (double b : {0.3, 2.0, 9.0}) {
            CHECK(std::abs(expected_min_hitrate({1, b}, B).eta_min - 1 / (1 + double(B) * b)) < 1e-9);
        }
        // Beta(a, 1): F = x^a, E[min] = Beta(1/a, B + 1) / a
        for (double a : {0.4, 3.0}) {
            const double want = boost::math::beta(1 / a, double(B) + 1) / a;
            CHECK(std::abs(expected_min_hitrate({a, 1}, B).eta_min - want) < 1e-9);
        }
    }
}

TEST_CASE("expected_min_hitrate against tail-integral oracle") {
    for (double a : {0.1, 0.5, 1.0, 2.0, 5.0, 30.0}) {
        for (double b : {0.1, 0.5, 2.0, 5.0, 200.0}) {
            for (std::size_t B : {2, 4, 16, 64, 512}) {
                const double got = expected_min_hitrate({a, b}, B).eta_min;
                CHECK_MESSAGE(
                        std::abs(got - oracle_min(a, b, B)) < 1e-7,
                        "a=" << a << " b=" << b << " B=" << B);
            }
        }
    }
}

TEST_CASE("expected_min_hitrate monotonicity and bounds") {
    for (double m : {0.05, 0.3, 0.5, 0.8}) {
        for (double s2 : {0.01, 0.1, 0.24}) {
            double prev = 1;
            for (std::size_t B = 1; B <= 256; B *= 2) {
                const double v = batch_min_hitrate(m, s2, B);
                CHECK(v >= 0);
                CHECK(v <= m + 1e-12);
                CHECK(v <= prev + 1e-12);
                prev = v;
            }
        }
    }
    for (double s2 : {0.01, 0.1, 0.24}) {
        for (std::size_t B : {2, 16, 128}) {
            double prev = 0;
            for (double m = 0.01; m < 1; m += 0.01) {
                const double v = batch_min_hitrate(m, s2, B);
                CHECK(v >= prev - 1e-12);
                prev = v;
            }
        }
    }
}

TEST_CASE("Monte-Carlo oracle") {
    const auto one = mc_min_hitrate_oracle({2, 5}, 1, 200000, 3);
    CHECK(std::abs(one.mean - 2.0 / 7) <= 3 * one.std_error);
    const auto u7 = mc_min_hitrate_oracle({1, 1}, 7, 200000, 4);
    CHECK(std::abs(u7.mean - 0.125) <= 3 * u7.std_error);
    CHECK(mc_min_hitrate_oracle({1, 1}, 7, 10000, 4).mean == mc_min_hitrate_oracle({1, 1}, 7, 10000, 4).mean);

    const auto mc = mc_min_hitrate_oracle({2, 2}, 16, 1000000, 5);
    CHECK(std::abs(expected_min_hitrate({2, 2}, 16).eta_min - mc.mean) <= 3 * mc.std_error);

    const std::size_t sizes[] = {1, 3, 8};
    const auto sweep = mc_min_hitrate_sweep({0.5, 0.5}, sizes, 200000, 6);
    for (std::size_t i = 0; i < 3; ++i) {
        const double want = expected_min_hitrate({0.5, 0.5}, sizes[i]).eta_min;
        CHECK(std::abs(sweep[i].mean - want) <= 3 * sweep[i].std_error);
    }
}

TEST_CASE("degenerate hit-rate inputs") {
    CHECK(batch_min_hitrate(0.00005, 0.2, 16) == 0.00005);
    CHECK(batch_min_hitrate(0.99995, 0.2, 16) == 0.99995);
    CHECK(batch_min_hitrate(0.4, 0.0, 16) == 0.4);
    // sigma2_max = 0.25 hits the feasibility bound and is clamped
    const double v = batch_min_hitrate(0.4, 0.25, 4);
    CHECK(v >= 0);
    CHECK(v < 0.4);
}

TEST_CASE("hitrate_to_coverage") {
    const auto curve = skewed_curve(200, 1.1);
    CHECK(hitrate_to_coverage(curve, 0.05, 8, 0.0).rho == 0.0);
    const auto full = hitrate_to_coverage(curve, 0.05, 8, 1.0);
    CHECK(full.rho == 1.0);
    CHECK(full.saturated);

    CoverageInverter inv(curve, 0.05);
    for (std::size_t B : {1, 4, 32}) {
        for (double t = 0.05; t < 0.95; t += 0.05) {
            const auto r = inv.invert(B, t);
            CHECK(r.n_hot == curve.count_for(r.rho));
            // forward check: target met at rho, missed one cluster earlier
            CHECK(batch_min_hitrate(curve.points[r.n_hot].mean_hitrate, 0.05, B) >= t);
            if (r.n_hot > 0) {
                CHECK(batch_min_hitrate(curve.points[r.n_hot - 1].mean_hitrate, 0.05, B) < t);
            }
        }
    }
    CoverageCurve empty;
    CHECK_THROWS_AS(hitrate_to_coverage(empty, 0.05, 4, 0.5), Error);
}
