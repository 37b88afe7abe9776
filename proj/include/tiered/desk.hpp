#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "tiered/hitrate.hpp"
#include "tiered/partitioner.hpp"
#include "tiered/profiler.hpp"
#include "tiered/simulator.hpp"
#include "tiered/synth.hpp"
#include "tiered/vecstore.hpp"

namespace tiered {

/// The default small-machine setup: a synthetic skewed corpus, its IVF
/// index, profiles, a plan, and the simulator scenario built from them.
struct DeskConfig {
    MixtureSpec mixture{32, 128, 1.0, 0.5, 11};
    std::size_t n_vectors = 50000;
    std::size_t n_clusters = 256;
    std::size_t nprobe = 16;
    std::size_t n_calibration = 2000;
    std::uint64_t data_seed = 21;
    std::uint64_t calibration_seed = 22;
    std::uint64_t index_seed = 23;
    QueryWorkload workload;
    CountedCostModel cost{4.0, 600.0, 0.5, 0.5, 8, 2.0};
    std::vector<std::size_t> latency_batches{1, 2, 4, 8, 16, 32, 64, 128};
    SloConfig slo;
    LlmModel llm{120, 50, 5};
    double full_index_share = 0.6;  // whole index as a fraction of the KV budget
    double gpu_speedup = 10;
    std::size_t n_shards = 2;
};

struct Desk {
    DeskConfig config;
    GaussianMixture mixture;
    IvfIndex index;
    AccessProfile profile;
    CoverageCurve curve;
    SigmaMax sigma;
    std::vector<LatencySample> latency_samples;
    LatencyModel latency;
    MemoryModel memory;
    PartitionPlan plan;
    Scenario scenario;  // tiered at the plan's coverage
};

/// Index plus profiles only; `plan_desk` finishes the job for a given SLO.
Desk build_desk(const DeskConfig& config = {});

/// Plans with `slo` and rebuilds the scenario around the result.
void plan_desk(Desk& desk, const SloConfig& slo);

/// Scenario fields shared by every mode, taken from the plan.
Scenario scenario_from_plan(
        const PartitionPlan& plan,
        const CoverageCurve& curve,
        double sigma2_max,
        const SloConfig& slo,
        const LatencyModel& latency,
        const LlmModel& llm,
        const MemoryModel& memory);

} // namespace tiered
