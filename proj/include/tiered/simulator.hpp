#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "tiered/partitioner.hpp"
#include "tiered/pipeline.hpp"

namespace tiered {

using Tick = std::int64_t;  // microseconds of virtual time

inline Tick ms_to_ticks(double ms) {
    return static_cast<Tick>(std::llround(ms * 1000.0));
}
inline double ticks_to_ms(Tick t) {
    return double(t) / 1000.0;
}

enum class SimMode { CpuOnly, AllGpu, DedicatedGpu, Tiered };

std::string to_string(SimMode m);
SimMode parse_sim_mode(const std::string& name);

/// Per-query hit rates: Beta draws around `mean`, or resampled from a
/// measured trace when one is attached.
struct HitRateModel {
    double mean = 0;
    double sigma2_max = 0;
    std::vector<double> trace;
};

struct Scenario {
    double lambda_rps = 10;
    double duration_s = 100;
    std::uint64_t seed = 1;
    SimMode mode = SimMode::Tiered;
    SloConfig slo;
    LatencyModel latency;  // host curves
    LlmModel llm;
    MemoryModel memory;    // used for mu(rho) and the all-GPU footprint
    double rho = 0;        // tiered coverage
    HitRateModel hits;     // at rho
    double gpu_speedup = 10;
    std::size_t n_shards = 1;
    std::size_t n_accelerators = 4;
    std::size_t dedicated_accelerators = 1;
    bool dispatcher = true;
    double merge_ms = 0;
    std::size_t max_batch = 0;  // 0 = serve the whole queue
    std::size_t output_tokens = 64;
    double decode_ms_per_token = 10;
};

struct Workload {
    std::vector<Tick> arrivals;
    std::uint64_t hit_seed = 0;  // stream for per-request hit-rate draws
};

/// Poisson arrivals over the duration. Modes run on the same workload see
/// the same arrivals and the same hit-rate stream.
Workload generate_workload(double lambda_rps, double duration_s, std::uint64_t seed);

struct RequestRecord {
    std::uint64_t request_id = 0;
    Tick arrival = 0;
    Tick search_queue = 0;  // arrival to batch start
    Tick search = 0;        // batch start to release
    Tick llm_queue = 0;     // release to LLM admission
    Tick prefill = 0;
    Tick decode = 0;
    std::size_t batch_size = 0;
    double hit_rate = 0;

    Tick queue() const {
        return search_queue + llm_queue;
    }
    Tick ttft() const {
        return queue() + search + prefill;
    }
    Tick e2e() const {
        return ttft() + decode;
    }
};

struct BatchRecord {
    Tick start = 0;
    std::size_t size = 0;
    Tick service = 0;            // until the last tier finishes
    double mean_release_on_ms = 0;   // mean search completion, dispatcher on
    double mean_release_off_ms = 0;  // same batch, dispatcher off
};

struct SimMetrics {
    SimMode mode = SimMode::Tiered;
    double lambda_rps = 0;
    double mu_llm_rps = 0;
    bool feasible = true;  // false when the mode's index cannot fit at all
    std::vector<RequestRecord> requests;
    std::vector<BatchRecord> batches;
    double p50_ttft_ms = 0, p90_ttft_ms = 0, p95_ttft_ms = 0;
    double p50_e2e_ms = 0, p90_e2e_ms = 0, p95_e2e_ms = 0;
    double p90_search_ms = 0;  // search queue + search
    double mean_search_ms = 0;
    double slo_attainment = 0;
    double mean_batch = 0;
    bool saturated = false;
};

/// Nearest-rank percentile, q in (0, 100].
double percentile(std::vector<double> values, double q);

SimMetrics simulate(const Scenario& scenario);
SimMetrics simulate(const Scenario& scenario, const Workload& workload);

struct SweepRow {
    double lambda_rps = 0;
    SimMode mode = SimMode::Tiered;
    double p50_ttft_ms = 0, p90_ttft_ms = 0, p95_ttft_ms = 0;
    double slo_attainment = 0;
    double mean_batch = 0;
    bool saturated = false;
    // TTFT breakdown means
    double queue_ms = 0, search_ms = 0, prefill_ms = 0;
};

SweepRow summarize(const SimMetrics& m);

std::vector<SweepRow> sweep(const Scenario& base, std::span<const double> lambdas, std::span<const SimMode> modes);

struct MaxLambda {
    double lambda_rps = 0;
    int evaluations = 0;
};

/// Largest arrival rate whose attainment is at least `target`, by doubling
/// from `lo` and bisecting to a relative width of `rel_tol`.
MaxLambda max_compliant_lambda(const Scenario& base, double target = 0.9, double lo = 1, double rel_tol = 0.01);

/// Host curve scaled down by a constant factor.
LatencyModel scale_latency(const LatencyModel& m, double factor);

// ---------------------------------------------------------------- reports

inline constexpr const char* kRequestCsvHeader =
        "request_id,arrival_ms,queue_ms,search_ms,prefill_ms,ttft_ms,e2e_ms,batch_size,hit_rate";
inline constexpr const char* kSweepCsvHeader =
        "lambda_rps,mode,p50_ttft,p90_ttft,p95_ttft,slo_attainment,mean_batch,saturated";

std::string requests_csv(const SimMetrics& m);
std::string sweep_csv(std::span<const SweepRow> rows);
/// Attainment against lambda, one line per mode.
std::string attainment_svg(std::span<const SweepRow> rows, const std::string& title);
/// Stacked queue / search / prefill bars, one per row.
std::string breakdown_svg(std::span<const SweepRow> rows, const std::string& title);

/// Writes sweep.csv, attainment.svg and breakdown.svg into `dir`. Nothing is
/// written for an empty sweep.
void write_report(const std::filesystem::path& dir, std::span<const SweepRow> rows);

} // namespace tiered
