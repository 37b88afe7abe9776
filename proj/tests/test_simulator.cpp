#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numeric>
#include <sstream>

#include "tiered/bytes.hpp"
#include "tiered/simulator.hpp"

using namespace tiered;

namespace {

Scenario base_scenario() {
    Scenario sc;
    sc.latency = {PiecewiseLinear::linear(0.5, 0.05), PiecewiseLinear::linear(2, 1.5)};
    sc.llm.mu_llm0_rps = 50;
    sc.llm.prefill_base_ms = 40;
    sc.llm.prefill_per_req_ms = 0;
    sc.slo = {60, 120};
    sc.memory.kv_bytes = 1000;
    sc.memory.index_bytes = {0, 80, 160, 240, 320, 400, 480, 560, 640, 720, 800};
    sc.rho = 0.3;
    sc.hits = {0.6, 0.1, {}};
    sc.n_shards = 2;
    sc.lambda_rps = 20;
    sc.duration_s = 200;
    return sc;
}

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
        out.push_back(cell);
    }
    return out;
}

} // namespace

TEST_CASE("generate_workload") {
    const auto w = generate_workload(10, 100, 3);
    CHECK(std::abs(double(w.arrivals.size()) - 1000) <= 3 * std::sqrt(1000.0));
    const auto again = generate_workload(10, 100, 3);
    CHECK(again.arrivals == w.arrivals);
    CHECK(again.hit_seed == w.hit_seed);
    CHECK(generate_workload(10, 100, 4).arrivals != w.arrivals);

    // sample mean of the gaps against 1/lambda
    const auto big = generate_workload(10, 2000, 5);
    std::vector<double> gaps;
    Tick prev = 0;
    for (auto t : big.arrivals) {
        gaps.push_back(ticks_to_ms(t - prev));
        prev = t;
    }
    const double mean = std::accumulate(gaps.begin(), gaps.end(), 0.0) / double(gaps.size());
    double ss = 0;
    for (double g : gaps) {
        ss += (g - mean) * (g - mean);
    }
    const double se = std::sqrt(ss / double(gaps.size() - 1) / double(gaps.size()));
    CHECK(std::abs(mean - 100.0) <= 3 * se);
    CHECK_THROWS_AS(generate_workload(0, 10, 1), Error);
}

TEST_CASE("percentile") {
    CHECK(percentile({5, 1, 3, 2, 4}, 50) == 3);
    CHECK(percentile({5, 1, 3, 2, 4}, 100) == 5);
    CHECK(percentile({5, 1, 3, 2, 4}, 1) == 1);
    CHECK(percentile({1, 2, 3, 4, 5, 6, 7, 8, 9, 10}, 90) == 9);
    CHECK_THROWS_AS(percentile({}, 50), Error);
}

TEST_CASE("record identities and conservation") {
    for (auto mode : {SimMode::CpuOnly, SimMode::AllGpu, SimMode::DedicatedGpu, SimMode::Tiered}) {
        auto sc = base_scenario();
        sc.mode = mode;
        const auto wl = generate_workload(sc.lambda_rps, sc.duration_s, sc.seed);
        const auto m = simulate(sc, wl);
        REQUIRE(m.feasible);
        REQUIRE(m.requests.size() == wl.arrivals.size());
        std::size_t batched = 0;
        Tick prev_end = 0;
        std::size_t first = 0;
        for (const auto& b : m.batches) {
            // the server only idles when nothing is waiting
            if (b.start > prev_end) {
                CHECK(m.requests[first].arrival == b.start);
                if (first > 0) {
                    CHECK(m.requests[first - 1].arrival <= prev_end);
                }
            }
            CHECK(b.mean_release_on_ms <= b.mean_release_off_ms + 1e-9);
            prev_end = b.start + b.service;
            first += b.size;
            batched += b.size;
        }
        CHECK(batched == m.requests.size());
        for (std::size_t i = 0; i < m.requests.size(); ++i) {
            const auto& r = m.requests[i];
            CHECK(r.request_id == i);
            CHECK(r.arrival == wl.arrivals[i]);
            CHECK(r.ttft() == r.search_queue + r.llm_queue + r.search + r.prefill);
            CHECK(r.search_queue >= 0);
            CHECK(r.llm_queue >= 0);
            if (mode != SimMode::Tiered) {
                CHECK(r.hit_rate == 0);
            }
        }
        CHECK(m.slo_attainment >= 0);
        CHECK(m.slo_attainment <= 1);
    }
}

TEST_CASE("light traffic") {
    auto sc = base_scenario();
    sc.mode = SimMode::CpuOnly;
    sc.lambda_rps = 1;
    sc.duration_s = 3000;
    const auto m = simulate(sc);
    const double alone = sc.latency.search(1) + sc.llm.prefill_ms(1);
    CHECK(m.p50_ttft_ms == doctest::Approx(alone).epsilon(1e-3));
    CHECK(m.p90_ttft_ms <= alone * 1.05);
    CHECK_FALSE(m.saturated);
}

TEST_CASE("overload saturates") {
    auto sc = base_scenario();
    sc.lambda_rps = 80;  // mu is at most 50
    sc.duration_s = 100;
    const auto m = simulate(sc);
    CHECK(m.saturated);
    const auto& rs = m.requests;
    CHECK(rs.back().e2e() > 10 * rs.front().e2e());
    CHECK(rs.back().e2e() > rs[rs.size() / 2].e2e());
}

TEST_CASE("Little's law at stable load") {
    auto sc = base_scenario();
    sc.lambda_rps = 30;
    sc.duration_s = 2000;
    const auto m = simulate(sc);
    REQUIRE_FALSE(m.saturated);
    double sojourn = 0;
    Tick horizon = 0;
    for (const auto& r : m.requests) {
        sojourn += ticks_to_ms(r.ttft());
        horizon = std::max(horizon, r.arrival + r.ttft());
    }
    sojourn /= double(m.requests.size());
    // time-average occupancy from independent probe instants
    const int probes = 20000;
    double occupancy = 0;
    std::size_t lo = 0;
    for (int p = 0; p < probes; ++p) {
        const Tick t = Tick(double(horizon) * (p + 0.5) / probes);
        while (lo < m.requests.size() && m.requests[lo].arrival + 200'000'000 < t) {
            ++lo;  // nobody stays 200 s; skip them
        }
        for (std::size_t i = lo; i < m.requests.size() && m.requests[i].arrival <= t; ++i) {
            occupancy += t < m.requests[i].arrival + m.requests[i].ttft() ? 1 : 0;
        }
    }
    occupancy /= probes;
    const double lambda_emp = double(m.requests.size()) / (ticks_to_ms(horizon) / 1000.0);
    CHECK(occupancy == doctest::Approx(lambda_emp * sojourn / 1000.0).epsilon(0.10));
}

TEST_CASE("modes") {
    auto sc = base_scenario();
    SUBCASE("all_gpu pays for the whole index") {
        sc.mode = SimMode::AllGpu;
        sc.memory.index_bytes.back() = 600;
        const auto m = simulate(sc);
        CHECK(m.mu_llm_rps == doctest::Approx(50 * 0.4));
        sc.memory.index_bytes.back() = 2000;
        CHECK_FALSE(simulate(sc).feasible);
        sc.memory.index_bytes.back() = 1000;  // fits, but leaves no KV
        CHECK_FALSE(simulate(sc).feasible);
    }
    SUBCASE("dedicated_gpu gives up accelerators") {
        sc.mode = SimMode::DedicatedGpu;
        sc.n_accelerators = 4;
        sc.dedicated_accelerators = 1;
        CHECK(simulate(sc).mu_llm_rps == doctest::Approx(37.5));
    }
    SUBCASE("tiered hit rates follow the model") {
        sc.mode = SimMode::Tiered;
        sc.duration_s = 500;
        const auto m = simulate(sc);
        CHECK(m.mu_llm_rps == doctest::Approx(50 * (1 - 0.3 * 800 / 1000.0)));
        double mean = 0;
        for (const auto& r : m.requests) {
            mean += r.hit_rate;
        }
        mean /= double(m.requests.size());
        // Beta(mean 0.6, var 4*0.1*0.24) standard error over ~10^4 draws
        CHECK(std::abs(mean - 0.6) < 3 * std::sqrt(0.096 / double(m.requests.size())));
    }
    SUBCASE("measured trace") {
        sc.mode = SimMode::Tiered;
        sc.hits.trace = {0.25, 0.75};
        const auto m = simulate(sc);
        for (const auto& r : m.requests) {
            CHECK((r.hit_rate == 0.25 || r.hit_rate == 0.75));
        }
    }
    SUBCASE("batch cap") {
        sc.mode = SimMode::CpuOnly;
        sc.max_batch = 3;
        sc.lambda_rps = 45;
        for (const auto& b : simulate(sc).batches) {
            CHECK(b.size <= 3);
        }
    }
}

TEST_CASE("determinism") {
    auto sc = base_scenario();
    const auto a = simulate(sc);
    const auto b = simulate(sc);
    CHECK(requests_csv(a) == requests_csv(b));
    sc.seed = 2;
    CHECK(requests_csv(simulate(sc)) != requests_csv(a));
}

TEST_CASE("dispatcher only moves releases earlier") {
    auto sc = base_scenario();
    sc.lambda_rps = 35;
    sc.dispatcher = true;
    const auto on = simulate(sc);
    sc.dispatcher = false;
    const auto off = simulate(sc);
    REQUIRE(on.batches.size() == off.batches.size());
    for (std::size_t i = 0; i < on.batches.size(); ++i) {
        CHECK(on.batches[i].start == off.batches[i].start);
        CHECK(on.batches[i].size == off.batches[i].size);
    }
    for (std::size_t i = 0; i < on.requests.size(); ++i) {
        CHECK(on.requests[i].search <= off.requests[i].search);
    }
    CHECK(on.mean_search_ms < off.mean_search_ms);
}

TEST_CASE("max compliant lambda") {
    auto sc = base_scenario();
    sc.mode = SimMode::CpuOnly;
    const auto r = max_compliant_lambda(sc, 0.9, 1, 0.01);
    REQUIRE(r.lambda_rps > 1);
    auto at = sc;
    at.lambda_rps = r.lambda_rps;
    at.duration_s = std::max(sc.duration_s, 2000 / r.lambda_rps);
    CHECK(simulate(at).slo_attainment >= 0.9);
    at.lambda_rps = r.lambda_rps * 1.03;
    at.duration_s = std::max(sc.duration_s, 2000 / at.lambda_rps);
    CHECK(simulate(at).slo_attainment < 0.9);
}

TEST_CASE("reports") {
    auto sc = base_scenario();
    const std::vector<double> lambdas{10, 20, 30};
    const std::vector<SimMode> modes{SimMode::CpuOnly, SimMode::Tiered};
    const auto rows = sweep(sc, lambdas, modes);
    REQUIRE(rows.size() == 6);
    const auto csv = sweep_csv(rows);
    CHECK(csv.rfind(kSweepCsvHeader, 0) == 0);

    // attainment recomputed from the per-request file
    sc.lambda_rps = 20;
    sc.mode = SimMode::Tiered;
    const auto m = simulate(sc);
    std::stringstream in(requests_csv(m));
    std::string line;
    std::getline(in, line);
    CHECK(line == kRequestCsvHeader);
    std::size_t met = 0, n = 0;
    while (std::getline(in, line)) {
        const auto cells = split(line);
        REQUIRE(cells.size() == 9);
        met += std::stod(cells[5]) <= sc.slo.slo_search_ms + sc.slo.slo_llm_ms ? 1 : 0;
        ++n;
    }
    CHECK(n == m.requests.size());
    CHECK(double(met) / double(n) == rows[3].slo_attainment);

    const auto dir = std::filesystem::temp_directory_path() / "tiered_report_test";
    std::filesystem::remove_all(dir);
    CHECK_THROWS_AS(write_report(dir, std::span<const SweepRow>{}), Error);
    CHECK_FALSE(std::filesystem::exists(dir));
    write_report(dir, rows);
    CHECK(read_text_file(dir / "sweep.csv") == csv);
    const auto svg = read_text_file(dir / "attainment.svg");
    CHECK(svg.find("<svg") == 0);
    CHECK(attainment_svg(rows, "SLO attainment") == svg);
    std::filesystem::remove_all(dir);
    CHECK_THROWS_AS(sweep(sc, std::span<const double>{}, modes), Error);
}
