#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tiered/vecstore.hpp"

namespace tiered {

/// How often each cluster appeared in calibration shortlists.
struct AccessProfile {
    std::size_t n_clusters = 0;
    std::size_t nprobe = 0;
    std::size_t n_queries = 0;
    std::vector<std::uint64_t> counts;
    std::uint64_t total_accesses = 0;
    /// Cluster ids by descending count, ties by ascending id.
    std::vector<ClusterId> ranking;
    std::vector<std::uint64_t> cluster_bytes;

    /// The `n_hot` most accessed clusters, in ranking order.
    std::vector<ClusterId> hot_set(std::size_t n_hot) const;
};

AccessProfile make_access_profile(
        std::vector<std::uint64_t> counts,
        std::vector<std::uint64_t> cluster_bytes,
        std::size_t nprobe,
        std::size_t n_queries);

AccessProfile profile_access(
        const IvfIndex& index,
        const VectorDataset& calibration_queries,
        std::size_t nprobe);

struct CoveragePoint {
    double rho = 0;
    double mean_hitrate = 0;
    std::uint64_t hot_bytes = 0;
    std::size_t n_hot = 0;
};

/// Mean hit rate and hot-tier bytes for every whole-cluster prefix of the
/// ranking: points[k] caches the top k clusters, rho = k / n_clusters.
struct CoverageCurve {
    std::vector<CoveragePoint> points;

    std::size_t n_clusters() const {
        return points.empty() ? 0 : points.size() - 1;
    }
    /// Whole clusters needed for coverage rho, i.e. ceil(rho * n_clusters).
    std::size_t count_for(double rho) const;
    const CoveragePoint& at(double rho) const {
        return points.at(count_for(rho));
    }
};

CoverageCurve coverage_curve(const AccessProfile& profile);

/// Fraction of each query's shortlist that falls in `hot_set`.
std::vector<double> measure_hitrates(
        const IvfIndex& index,
        const VectorDataset& queries,
        std::size_t nprobe,
        std::span<const ClusterId> hot_set);

std::vector<double> hitrates_from_shortlists(
        std::span<const ClusterShortlist> shortlists,
        std::span<const ClusterId> hot_set,
        std::size_t n_clusters);

/// Population variance (divides by n), so values in [0,1] stay <= 0.25.
double population_variance(std::span<const double> xs);

struct SigmaMax {
    double sigma2_max = 0;
    double coverage_at_half = 0;  // rho whose mean hit rate is closest to 0.5
    double mean_at_half = 0;
    std::size_t n_hot = 0;
};

/// Variance of per-query hit rates at the prefix whose mean is nearest 0.5.
SigmaMax sigma_max_from_shortlists(
        std::span<const ClusterShortlist> shortlists,
        const AccessProfile& profile,
        const CoverageCurve& curve);

SigmaMax profile_sigma_max(
        const IvfIndex& index,
        const VectorDataset& queries,
        std::size_t nprobe,
        const AccessProfile& profile,
        const CoverageCurve& curve);

struct LatencySample {
    std::size_t batch = 0;
    double t_cq_ms = 0;
    double t_lut_ms = 0;
};

struct LatencyProfileOptions {
    std::size_t repetitions = 5;
    std::size_t warmup = 1;
};

/// Wall-clock medians of the coarse-quantization and scan stages per batch
/// size. Queries are cycled to fill large batches.
std::vector<LatencySample> profile_latency(
        const IvfIndex& index,
        const VectorDataset& queries,
        std::span<const std::size_t> batch_sizes,
        std::size_t nprobe,
        const LatencyProfileOptions& opts = {});

/**
 * Deterministic stand-in for wall-clock profiling: stage time is a fixed
 * overhead plus work (distance evaluations x dim) at a fixed rate, with
 * `lanes` queries running concurrently. Single queries run one lane, so
 * the curve has the single-to-multi-threaded knee at b = 1 -> 2.
 */
struct CountedCostModel {
    double cq_ns_per_op = 1.0;
    double lut_ns_per_op = 1.0;
    double cq_fixed_ms = 0.05;
    double lut_fixed_ms = 0.05;
    double lanes = 8;
    double single_query_speedup = 2.0;
};

std::vector<LatencySample> counted_latency(
        const IvfIndex& index,
        std::span<const std::size_t> batch_sizes,
        std::size_t nprobe,
        const CountedCostModel& model);

/**
 * Continuous piecewise-linear function of batch size. Segment i covers
 * [breakpoints[i], breakpoints[i+1]); the first segment also covers values
 * below breakpoints[0] and the last one extrapolates. Evaluation is clamped
 * at zero.
 */
class PiecewiseLinear {
  public:
    PiecewiseLinear() = default;
    PiecewiseLinear(
            std::vector<double> breakpoints,
            std::vector<double> slopes,
            std::vector<double> intercepts,
            double residual_rms = 0);

    static PiecewiseLinear linear(double intercept, double slope);

    double operator()(double b) const;

    const std::vector<double>& breakpoints() const {
        return breakpoints_;
    }
    const std::vector<double>& slopes() const {
        return slopes_;
    }
    const std::vector<double>& intercepts() const {
        return intercepts_;
    }
    std::size_t segments() const {
        return slopes_.size();
    }
    double residual_rms() const {
        return rms_;
    }
    bool empty() const {
        return slopes_.empty();
    }

    friend bool operator==(const PiecewiseLinear&, const PiecewiseLinear&) = default;

  private:
    std::vector<double> breakpoints_;
    std::vector<double> slopes_;
    std::vector<double> intercepts_;
    double rms_ = 0;
};

/// Least-squares continuous fit with at most `max_segments` segments; knees
/// are searched exhaustively over the interior sample positions.
PiecewiseLinear fit_piecewise_linear(
        std::span<const double> x,
        std::span<const double> y,
        std::size_t max_segments);

/// CPU latency of the two search stages as functions of batch size (ms).
struct LatencyModel {
    PiecewiseLinear cq;
    PiecewiseLinear lut;

    double search(double b) const {
        return cq(b) + lut(b);
    }
};

LatencyModel fit_latency_model(std::span<const LatencySample> samples, std::size_t max_segments = 3);

/// `b,t_cq_ms,t_lut_ms` with a header row.
std::string latency_csv(std::span<const LatencySample> samples);

} // namespace tiered
