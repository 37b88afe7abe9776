#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tiered/profiler.hpp"
#include "tiered/synth.hpp"

using namespace tiered;

namespace {

struct Fixture {
    GaussianMixture mix;
    VectorDataset data;
    IvfIndex index;

    Fixture() {
        MixtureSpec spec;
        spec.dim = 16;
        spec.n_modes = 64;
        mix = make_mixture(spec);
        data = sample_vectors(mix, 10000, 1);
        index = train_ivf(data, 64, Quantization::None, 1);
    }
};

const Fixture& fixture() {
    static const Fixture f;
    return f;
}

VectorDataset repeat_query(const VectorDataset& src, std::size_t row, std::size_t n) {
    VectorDataset out;
    out.dim = src.dim;
    for (std::size_t i = 0; i < n; ++i) {
        out.push_back(i, src.row(row));
    }
    return out;
}

} // namespace

TEST_CASE("profile_access counting") {
    const auto& f = fixture();
    const auto one = repeat_query(f.data, 3, 1);
    const auto p1 = profile_access(f.index, one, 3);
    CHECK(std::count(p1.counts.begin(), p1.counts.end(), 1u) == 3);
    CHECK(std::count(p1.counts.begin(), p1.counts.end(), 0u) == 61);

    const auto same = repeat_query(f.data, 5, 50);
    const auto ps = profile_access(f.index, same, 4);
    const auto curve = coverage_curve(ps);
    CHECK(curve.points[4].mean_hitrate == 1.0);

    const auto qs = sample_queries(f.mix, QueryWorkload{}, 500, 3);
    const auto p = profile_access(f.index, qs, 8);
    CHECK(p.total_accesses == 500 * 8);
    CHECK(std::accumulate(p.counts.begin(), p.counts.end(), std::uint64_t{0}) == 4000);
    auto sorted = p.ranking;
    std::sort(sorted.begin(), sorted.end());
    for (ClusterId c = 0; c < 64; ++c) {
        CHECK(sorted[c] == c);
    }
    for (std::size_t i = 1; i < p.ranking.size(); ++i) {
        const auto a = p.ranking[i - 1], b = p.ranking[i];
        CHECK((p.counts[a] > p.counts[b] || (p.counts[a] == p.counts[b] && a < b)));
    }
}

TEST_CASE("coverage curve") {
    const std::vector<std::uint64_t> counts(40, 7), bytes(40, 100);
    const auto curve = coverage_curve(make_access_profile(counts, bytes, 1, 280));
    CHECK(curve.at(0).mean_hitrate == 0.0);
    CHECK(curve.at(1).mean_hitrate == 1.0);
    CHECK(curve.at(0.25).mean_hitrate == doctest::Approx(0.25));
    CHECK(curve.at(0.25).hot_bytes == 1000);
    CHECK(curve.count_for(0.26) == 11);

    const auto& f = fixture();
    const auto qs = sample_queries(f.mix, QueryWorkload{}, 400, 4);
    const auto prof = profile_access(f.index, qs, 6);
    const auto c2 = coverage_curve(prof);
    for (std::size_t k = 1; k < c2.points.size(); ++k) {
        CHECK(c2.points[k].mean_hitrate >= c2.points[k - 1].mean_hitrate);
    }
    // averaging per-query hit rates reproduces the curve exactly
    for (std::size_t k : {0, 3, 13, 40, 64}) {
        const auto rates = measure_hitrates(f.index, qs, 6, prof.hot_set(k));
        const double mean = std::accumulate(rates.begin(), rates.end(), 0.0) / double(rates.size());
        CHECK(mean == doctest::Approx(c2.points[k].mean_hitrate).epsilon(1e-12));
    }
    AccessProfile empty;
    CHECK_THROWS_AS(coverage_curve(empty), Error);
}

TEST_CASE("measure_hitrates endpoints and trend") {
    const auto& f = fixture();
    const auto qs = sample_queries(f.mix, QueryWorkload{}, 300, 5);
    std::vector<ClusterId> all(64);
    std::iota(all.begin(), all.end(), 0);
    for (double r : measure_hitrates(f.index, qs, 8, all)) {
        CHECK(r == 1.0);
    }
    for (double r : measure_hitrates(f.index, qs, 8, {})) {
        CHECK(r == 0.0);
    }
    const auto prof = profile_access(f.index, qs, 8);
    double prev = -1;
    for (double cov : {0.05, 0.1, 0.15, 0.2}) {
        const auto rates = measure_hitrates(f.index, qs, 8, prof.hot_set(std::size_t(cov * 64)));
        const double mean = std::accumulate(rates.begin(), rates.end(), 0.0) / double(rates.size());
        CHECK(mean > prev);
        prev = mean;
    }
}

TEST_CASE("sigma max") {
    const auto& f = fixture();
    const auto same = repeat_query(f.data, 9, 30);
    const auto prof = profile_access(f.index, same, 4);
    const auto s0 = profile_sigma_max(f.index, same, 4, prof, coverage_curve(prof));
    CHECK(s0.sigma2_max == 0.0);

    const std::vector<double> half{0, 1, 0, 1, 1, 0};
    CHECK(population_variance(half) == 0.25);

    // two populations of queries, each pinned to one shortlist
    VectorDataset two;
    two.dim = f.data.dim;
    for (std::size_t i = 0; i < 40; ++i) {
        two.push_back(i, f.data.row(i < 25 ? 100 : 7000));
    }
    const auto p2 = profile_access(f.index, two, 4);
    const auto c2 = coverage_curve(p2);
    const auto s2 = profile_sigma_max(f.index, two, 4, p2, c2);
    const auto rates = measure_hitrates(f.index, two, 4, p2.hot_set(s2.n_hot));
    double mean = 0, ss = 0;
    for (double r : rates) {
        mean += r / double(rates.size());
    }
    for (double r : rates) {
        ss += (r - mean) * (r - mean);
    }
    CHECK(s2.sigma2_max == doctest::Approx(ss / double(rates.size())));
    CHECK(s2.sigma2_max <= 0.25);
}

TEST_CASE("latency profiling") {
    const auto& f = fixture();
    const auto qs = sample_queries(f.mix, QueryWorkload{}, 64, 6);
    const std::size_t sizes[] = {1, 8};
    const auto samples = profile_latency(f.index, qs, sizes, 4, {3, 1});
    REQUIRE(samples.size() == 2);
    for (const auto& s : samples) {
        CHECK(s.t_cq_ms > 0);
        CHECK(s.t_lut_ms > 0);
        CHECK(std::isfinite(s.t_lut_ms));
    }
    const std::size_t one[] = {16};
    const auto small = profile_latency(f.index, qs, one, 2, {5, 1});
    const auto large = profile_latency(f.index, qs, one, 32, {5, 1});
    CHECK(large[0].t_lut_ms > small[0].t_lut_ms);

    const std::size_t grid[] = {1, 2, 4, 8, 16};
    const auto c1 = counted_latency(f.index, grid, 8, {});
    const auto c2 = counted_latency(f.index, grid, 8, {});
    CHECK(latency_csv(c1) == latency_csv(c2));
    CHECK(latency_csv(c1).rfind("b,t_cq_ms,t_lut_ms\n", 0) == 0);
}

TEST_CASE("piecewise-linear fitting") {
    SUBCASE("exact line") {
        std::vector<double> x{1, 2, 4, 8, 16, 32}, y;
        for (double b : x) {
            y.push_back(1.5 + 0.25 * b);
        }
        const auto f = fit_piecewise_linear(x, y, 3);
        CHECK(f.segments() == 1);
        CHECK(f.slopes()[0] == doctest::Approx(0.25).epsilon(1e-9));
        CHECK(f.intercepts()[0] == doctest::Approx(1.5).epsilon(1e-9));
    }
    SUBCASE("knee recovered") {
        std::vector<double> x, y;
        for (double b = 1; b <= 32; b += 1) {
            x.push_back(b);
            y.push_back(b <= 8 ? 2 + 1.0 * b : 10 + 0.2 * (b - 8));
        }
        const auto f = fit_piecewise_linear(x, y, 2);
        REQUIRE(f.segments() == 2);
        CHECK(std::abs(f.breakpoints()[1] - 8) <= 1);
        for (std::size_t i = 1; i < f.segments(); ++i) {
            const double b = f.breakpoints()[i];
            CHECK(std::abs(
                          (f.slopes()[i - 1] * b + f.intercepts()[i - 1]) -
                          (f.slopes()[i] * b + f.intercepts()[i])) < 1e-9);
        }
        CHECK(f.residual_rms() < 1e-9);
    }
    SUBCASE("constant") {
        std::vector<double> x{1, 2, 4, 8}, y(4, 3.0);
        const auto f = fit_piecewise_linear(x, y, 3);
        CHECK(f.segments() == 1);
        CHECK(std::abs(f.slopes()[0]) < 1e-12);
        CHECK(f(100) == doctest::Approx(3.0));
    }
    SUBCASE("degenerate") {
        std::vector<double> x{4, 4, 4}, y{1, 2, 3};
        CHECK_THROWS_AS(fit_piecewise_linear(x, y, 2), Error);
    }
}
