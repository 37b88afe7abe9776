#include "tiered/desk.hpp"

#include "tiered/error.hpp"

namespace tiered {

Desk build_desk(const DeskConfig& config) {
    TIERED_CHECK(
            config.full_index_share > 0 && config.full_index_share < 1,
            ErrorKind::InvalidArgument,
            "full_index_share must be in (0, 1)");
    Desk d;
    d.config = config;
    d.mixture = make_mixture(config.mixture);
    const auto data = sample_vectors(d.mixture, config.n_vectors, config.data_seed);
    d.index = train_ivf(data, config.n_clusters, Quantization::None, config.index_seed);
    // calibration ids start past the corpus so they never collide
    const auto calib = sample_queries(
            d.mixture, config.workload, config.n_calibration, config.calibration_seed, config.n_vectors);
    const auto shortlists = coarse_quantize(d.index, calib, config.nprobe);
    std::vector<std::uint64_t> counts(d.index.n_clusters(), 0);
    for (const auto& s : shortlists) {
        for (auto c : s.cluster_ids) {
            ++counts[c];
        }
    }
    d.profile = make_access_profile(std::move(counts), d.index.all_cluster_bytes(), config.nprobe, calib.size());
    d.curve = coverage_curve(d.profile);
    d.sigma = sigma_max_from_shortlists(shortlists, d.profile, d.curve);
    d.latency_samples = counted_latency(d.index, config.latency_batches, config.nprobe, config.cost);
    d.latency = fit_latency_model(d.latency_samples);
    const double full = d.curve.points.back().hot_bytes;
    d.memory = make_memory_model(d.curve, full / config.full_index_share);
    plan_desk(d, config.slo);
    return d;
}

void plan_desk(Desk& d, const SloConfig& slo) {
    const CoverageInverter inverter(d.curve, d.sigma.sigma2_max);
    d.plan = partition(slo, d.memory, d.config.llm, d.latency, d.profile, inverter);
    d.scenario = scenario_from_plan(d.plan, d.curve, d.sigma.sigma2_max, slo, d.latency, d.config.llm, d.memory);
    d.scenario.gpu_speedup = d.config.gpu_speedup;
    d.scenario.n_shards = d.config.n_shards;
}

Scenario scenario_from_plan(
        const PartitionPlan& plan,
        const CoverageCurve& curve,
        double sigma2_max,
        const SloConfig& slo,
        const LatencyModel& latency,
        const LlmModel& llm,
        const MemoryModel& memory) {
    TIERED_CHECK(plan.n_hot < curve.points.size(), ErrorKind::InvalidArgument, "plan does not match the coverage curve");
    Scenario sc;
    sc.mode = SimMode::Tiered;
    sc.slo = slo;
    sc.latency = latency;
    sc.llm = llm;
    sc.memory = memory;
    sc.rho = plan.rho;
    sc.hits.mean = curve.points[plan.n_hot].mean_hitrate;
    sc.hits.sigma2_max = sigma2_max;
    sc.lambda_rps = plan.predicted_mu_rps > 0 ? plan.predicted_mu_rps : llm.mu_llm0_rps;
    return sc;
}

} // namespace tiered
