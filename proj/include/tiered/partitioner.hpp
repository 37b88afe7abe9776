#pragma once

#include <cstddef>
#include <vector>

#include "tiered/hitrate.hpp"
#include "tiered/profiler.hpp"

namespace tiered {

/// Latency targets; all times in milliseconds.
struct SloConfig {
    double slo_search_ms = 150;
    double slo_llm_ms = 217;
    double epsilon = 1.0;   // queuing reserve as a multiple of one batch latency
    double delta = 0.005;   // bisection tolerance on rho
};

/// KV-cache budget and index footprint per hot prefix.
struct MemoryModel {
    double kv_bytes = 0;     // KV-cache budget with no index resident
    double param_bytes = 0;  // informational
    std::vector<double> index_bytes;  // index_bytes[k]: top-k clusters resident

    double index_bytes_at(double rho) const;
    std::size_t count_for(double rho) const;
};

/// `index_scale` maps desk-scale list bytes onto the modeled device.
MemoryModel make_memory_model(
        const CoverageCurve& curve,
        double kv_bytes,
        double param_bytes = 0,
        double index_scale = 1.0);

struct LlmModel {
    double mu_llm0_rps = 10;    // bare-LLM peak throughput
    double prefill_base_ms = 50;
    double prefill_per_req_ms = 5;

    double prefill_ms(double batch) const {
        return prefill_base_ms + prefill_per_req_ms * batch;
    }
};

double latency_bound(const SloConfig& slo);

/// mu scaled by the KV capacity left after loading the hot index.
double llm_throughput_at(const MemoryModel& mem, const LlmModel& llm, double rho);

/// Batch size implied by a budget and a throughput: tau_ms * mu / 1000.
double expected_batch(double tau_ms, double mu_rps);

struct BranchResult {
    std::size_t batch = 0;
    double bound_ms = 0;     // latency the branch must meet
    double eta_target = 0;   // required minimum hit rate, before clamping
    CoverageResult coverage;
};

struct InferResult {
    double rho = 0;
    std::size_t n_hot = 0;
    bool saturated = false;
    BranchResult up;
    bool has_down = false;
    BranchResult down;
    bool chose_down = false;
};

/**
 * Coverage needed at throughput mu for a per-batch budget tau_s. The
 * rounded-up batch must finish within tau_s; the rounded-down batch within
 * the time it takes to accumulate, B / mu. The smaller coverage wins.
 */
InferResult infer_partition(
        double tau_s_ms,
        double mu_rps,
        const LatencyModel& latency,
        const CoverageInverter& inverter);

struct PartitionStep {
    double rho_low = 0;
    double rho_high = 0;
    double rho_m = 0;
    double mu_rps = 0;
    double rho = 0;
    bool memory_infeasible = false;
};

struct PartitionPlan {
    double rho = 0;
    std::size_t n_clusters = 0;
    std::size_t n_hot = 0;
    std::vector<ClusterId> hot_cluster_ids;
    std::size_t predicted_batch = 0;
    double predicted_tau_s_ms = 0;
    double predicted_mu_rps = 0;
    double predicted_eta_min = 0;
    double tau_budget_ms = 0;
    double index_bytes = 0;
    bool meets_bound = false;
    bool saturated = false;
    int iterations = 0;
    int polish_steps = 0;  // grid steps added after bisection, see partition()
    std::vector<PartitionStep> trace;
};

/**
 * How the lower bracket moves when the inferred coverage exceeds the
 * midpoint. Verbatim jumps straight to the inferred rho, which can step past
 * the fixed point on ordinary curves; Midpoint keeps the fixed point
 * bracketed.
 */
enum class BisectionRule { Midpoint, Verbatim };

struct PartitionOptions {
    BisectionRule rule = BisectionRule::Midpoint;
    bool self_consistent = true;  // grid walk after bisection, see partition()
};

/// The bisection loop over rho. Throws Infeasible when the returned rho's
/// index does not fit in the KV budget, NoConvergence past 64 iterations.
PartitionPlan partition(
        const SloConfig& slo,
        const MemoryModel& mem,
        const LlmModel& llm,
        const LatencyModel& latency,
        const AccessProfile& profile,
        const CoverageInverter& inverter,
        const PartitionOptions& opts = {});

/// Forward evaluation: coverage returned by infer_partition at mu(rho).
double partition_feedback(
        double rho,
        const SloConfig& slo,
        const MemoryModel& mem,
        const LlmModel& llm,
        const LatencyModel& latency,
        const CoverageInverter& inverter);

/// Hybrid batch latency T_CQ(B) + (1 - eta) T_LUT(B).
inline double hybrid_latency(const LatencyModel& m, double batch, double eta) {
    return m.cq(batch) + (1 - eta) * m.lut(batch);
}

} // namespace tiered
