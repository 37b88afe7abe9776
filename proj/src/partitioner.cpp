#include "tiered/partitioner.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "tiered/log.hpp"

namespace tiered {

namespace {

constexpr int kMaxIterations = 64;
constexpr int kStallWindow = 4;
constexpr double kSnap = 1e-9;

BranchResult run_branch(
        std::size_t batch,
        double bound_ms,
        const LatencyModel& latency,
        const CoverageInverter& inverter) {
    BranchResult r;
    r.batch = batch;
    r.bound_ms = bound_ms;
    const double b = double(batch);
    const double cq = latency.cq(b);
    const double lut = latency.lut(b);
    TIERED_CHECK(
            std::isfinite(cq) && std::isfinite(lut),
            ErrorKind::NonFinite,
            "latency model is not finite at batch " + std::to_string(batch));
    const double total = cq + lut;
    if (lut > 0) {
        r.eta_target = (total - bound_ms) / lut;
    } else {
        r.eta_target = total <= bound_ms ? 0.0 : 2.0;
    }
    r.coverage = inverter.invert(batch, std::clamp(r.eta_target, 0.0, 1.0));
    if (r.eta_target > 1) {
        // CQ alone overruns the bound; no cache size helps
        r.coverage.saturated = true;
    }
    return r;
}

} // namespace

std::size_t MemoryModel::count_for(double rho) const {
    TIERED_CHECK(index_bytes.size() >= 2, ErrorKind::InvalidArgument, "empty memory model");
    const std::size_t n = index_bytes.size() - 1;
    if (rho <= 0) {
        return 0;
    }
    if (rho >= 1) {
        return n;
    }
    return std::min(n, static_cast<std::size_t>(std::ceil(rho * double(n) - kSnap)));
}

double MemoryModel::index_bytes_at(double rho) const {
    return index_bytes[count_for(rho)];
}

MemoryModel make_memory_model(
        const CoverageCurve& curve,
        double kv_bytes,
        double param_bytes,
        double index_scale) {
    TIERED_CHECK(kv_bytes > 0, ErrorKind::InvalidArgument, "KV budget must be positive");
    TIERED_CHECK(index_scale > 0, ErrorKind::InvalidArgument, "index scale must be positive");
    MemoryModel m;
    m.kv_bytes = kv_bytes;
    m.param_bytes = param_bytes;
    for (const auto& pt : curve.points) {
        m.index_bytes.push_back(double(pt.hot_bytes) * index_scale);
    }
    return m;
}

double latency_bound(const SloConfig& slo) {
    TIERED_CHECK(slo.slo_search_ms > 0, ErrorKind::InvalidArgument, "SLO must be positive");
    TIERED_CHECK(slo.epsilon >= 0, ErrorKind::InvalidArgument, "epsilon must be >= 0");
    return slo.slo_search_ms / (1 + slo.epsilon);
}

double llm_throughput_at(const MemoryModel& mem, const LlmModel& llm, double rho) {
    TIERED_CHECK(llm.mu_llm0_rps > 0, ErrorKind::InvalidArgument, "mu_llm0 must be positive");
    const double idx = mem.index_bytes_at(rho);
    TIERED_CHECK(
            idx <= mem.kv_bytes,
            ErrorKind::Infeasible,
            "index of " + std::to_string(idx) + " bytes exceeds KV budget " +
                    std::to_string(mem.kv_bytes));
    return std::min(llm.mu_llm0_rps, (mem.kv_bytes - idx) / mem.kv_bytes * llm.mu_llm0_rps);
}

double expected_batch(double tau_ms, double mu_rps) {
    return tau_ms * mu_rps / 1000.0;
}

InferResult infer_partition(
        double tau_s_ms,
        double mu_rps,
        const LatencyModel& latency,
        const CoverageInverter& inverter) {
    TIERED_CHECK(tau_s_ms > 0 && mu_rps > 0, ErrorKind::InvalidArgument, "tau_s and mu must be positive");
    const double x = expected_batch(tau_s_ms, mu_rps);
    TIERED_CHECK(std::isfinite(x), ErrorKind::NonFinite, "non-finite batch size");
    // snap B to an integer when rounding noise is all that separates them
    const double near = std::round(x);
    const double bx = std::abs(x - near) < kSnap ? near : x;
    const auto b_up = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(bx)));
    const auto b_down = static_cast<std::size_t>(std::floor(bx));

    InferResult r;
    r.up = run_branch(b_up, tau_s_ms, latency, inverter);
    if (b_down >= 1) {
        r.has_down = true;
        r.down = run_branch(b_down, double(b_down) / mu_rps * 1000.0, latency, inverter);
        r.chose_down = r.down.coverage.rho < r.up.coverage.rho;
    }
    const auto& best = r.chose_down ? r.down : r.up;
    r.rho = best.coverage.rho;
    r.n_hot = best.coverage.n_hot;
    r.saturated = best.coverage.saturated;
    return r;
}

double partition_feedback(
        double rho,
        const SloConfig& slo,
        const MemoryModel& mem,
        const LlmModel& llm,
        const LatencyModel& latency,
        const CoverageInverter& inverter) {
    return infer_partition(latency_bound(slo), llm_throughput_at(mem, llm, rho), latency, inverter).rho;
}

PartitionPlan partition(
        const SloConfig& slo,
        const MemoryModel& mem,
        const LlmModel& llm,
        const LatencyModel& latency,
        const AccessProfile& profile,
        const CoverageInverter& inverter,
        const PartitionOptions& opts) {
    TIERED_CHECK(slo.delta > 0, ErrorKind::InvalidArgument, "delta must be positive");
    TIERED_CHECK(
            mem.index_bytes.size() == inverter.n_clusters() + 1 &&
                    profile.n_clusters == inverter.n_clusters(),
            ErrorKind::InvalidArgument,
            "memory model, profile and coverage curve disagree on cluster count");
    const double tau = latency_bound(slo);

    PartitionPlan plan;
    plan.tau_budget_ms = tau;
    plan.n_clusters = inverter.n_clusters();

    double lo = 0, hi = 1, rho = 0;
    bool saturated = false;
    std::vector<double> widths;
    while (hi - lo > slo.delta) {
        if (plan.iterations >= kMaxIterations) {
            throw_error(ErrorKind::NoConvergence, "partitioning did not converge in 64 iterations");
        }
        ++plan.iterations;
        PartitionStep step;
        step.rho_low = lo;
        step.rho_high = hi;
        step.rho_m = 0.5 * (lo + hi);
        if (mem.index_bytes_at(step.rho_m) > mem.kv_bytes) {
            // the midpoint's index does not fit at all: search below it
            step.memory_infeasible = true;
            hi = step.rho_m;
            plan.trace.push_back(step);
            continue;
        }
        step.mu_rps = llm_throughput_at(mem, llm, step.rho_m);
        const auto r = infer_partition(tau, step.mu_rps, latency, inverter);
        rho = r.rho;
        saturated = r.saturated;
        step.rho = rho;
        plan.trace.push_back(step);
        if (rho > step.rho_m) {
            lo = opts.rule == BisectionRule::Verbatim ? rho : step.rho_m;
        } else {
            hi = step.rho_m;
        }
        widths.push_back(hi - lo);
        if (widths.size() > kStallWindow &&
            widths.back() >= widths[widths.size() - 1 - kStallWindow]) {
            throw_error(ErrorKind::NoConvergence, "partitioning interval stopped shrinking");
        }
    }

    // The last inference ran at mu(rho_m), not mu(rho). Walk up the grid until
    // rho covers its own demand so the plan is self-consistent.
    const std::size_t n = plan.n_clusters;
    const std::size_t start = mem.count_for(rho);
    for (std::size_t k = start; opts.self_consistent && k < n && mem.index_bytes[k] <= mem.kv_bytes; ++k) {
        const double r = double(k) / double(n);
        if (infer_partition(tau, llm_throughput_at(mem, llm, r), latency, inverter).rho <= r) {
            plan.polish_steps = int(k - start);
            rho = r;
            saturated = false;
            break;
        }
    }

    plan.rho = rho;
    plan.n_hot = mem.count_for(rho);
    plan.hot_cluster_ids = profile.hot_set(plan.n_hot);
    plan.index_bytes = mem.index_bytes[plan.n_hot];
    plan.predicted_mu_rps = llm_throughput_at(mem, llm, rho);

    // forward prediction at the deployed coverage
    const auto fwd = infer_partition(tau, plan.predicted_mu_rps, latency, inverter);
    auto predict = [&](const BranchResult& br) {
        const double eta = inverter.eta_min_at(plan.n_hot, br.batch);
        return std::make_pair(eta, hybrid_latency(latency, double(br.batch), eta));
    };
    const BranchResult* chosen = &fwd.up;
    auto [eta, t] = predict(fwd.up);
    plan.meets_bound = t <= fwd.up.bound_ms + 1e-9;
    if (!plan.meets_bound && fwd.has_down) {
        const auto [eta_d, t_d] = predict(fwd.down);
        if (t_d <= fwd.down.bound_ms + 1e-9) {
            chosen = &fwd.down;
            eta = eta_d;
            t = t_d;
            plan.meets_bound = true;
        }
    }
    plan.predicted_batch = chosen->batch;
    plan.predicted_eta_min = eta;
    plan.predicted_tau_s_ms = t;
    plan.saturated = saturated || (plan.n_hot == plan.n_clusters && !plan.meets_bound);
    if (!plan.meets_bound) {
        log_warn("partition plan misses its latency bound at the returned coverage");
    }
    return plan;
}

} // namespace tiered
