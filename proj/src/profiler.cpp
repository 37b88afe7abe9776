#include "tiered/profiler.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>

namespace tiered {

// ---------------------------------------------------------------- access skew

std::vector<ClusterId> AccessProfile::hot_set(std::size_t n_hot) const {
    n_hot = std::min(n_hot, ranking.size());
    return {ranking.begin(), ranking.begin() + static_cast<std::ptrdiff_t>(n_hot)};
}

AccessProfile make_access_profile(
        std::vector<std::uint64_t> counts,
        std::vector<std::uint64_t> cluster_bytes,
        std::size_t nprobe,
        std::size_t n_queries) {
    TIERED_CHECK(
            counts.size() == cluster_bytes.size(),
            ErrorKind::InvalidArgument,
            "counts and cluster_bytes differ in length");
    AccessProfile p;
    p.n_clusters = counts.size();
    p.nprobe = nprobe;
    p.n_queries = n_queries;
    p.total_accesses = std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
    p.ranking.resize(p.n_clusters);
    std::iota(p.ranking.begin(), p.ranking.end(), 0);
    std::stable_sort(p.ranking.begin(), p.ranking.end(), [&](ClusterId a, ClusterId b) {
        return counts[a] > counts[b];
    });
    p.counts = std::move(counts);
    p.cluster_bytes = std::move(cluster_bytes);
    return p;
}

AccessProfile profile_access(
        const IvfIndex& index,
        const VectorDataset& calibration_queries,
        std::size_t nprobe) {
    TIERED_CHECK(!calibration_queries.empty(), ErrorKind::InvalidArgument, "empty calibration set");
    std::vector<std::uint64_t> counts(index.n_clusters(), 0);
    for (const auto& sl : coarse_quantize(index, calibration_queries, nprobe)) {
        for (ClusterId c : sl.cluster_ids) {
            ++counts[c];
        }
    }
    return make_access_profile(
            std::move(counts), index.all_cluster_bytes(), nprobe, calibration_queries.size());
}

std::size_t CoverageCurve::count_for(double rho) const {
    const std::size_t n = n_clusters();
    if (rho <= 0) {
        return 0;
    }
    if (rho >= 1) {
        return n;
    }
    // the small slack keeps k/n from rounding up to k+1
    const auto k = static_cast<std::size_t>(std::ceil(rho * double(n) - 1e-9));
    return std::min(k, n);
}

CoverageCurve coverage_curve(const AccessProfile& profile) {
    TIERED_CHECK(profile.total_accesses > 0, ErrorKind::InvalidArgument, "empty access profile");
    const std::size_t n = profile.n_clusters;
    CoverageCurve curve;
    curve.points.resize(n + 1);
    std::uint64_t acc = 0;
    std::uint64_t bytes = 0;
    for (std::size_t k = 0; k <= n; ++k) {
        if (k > 0) {
            const ClusterId c = profile.ranking[k - 1];
            acc += profile.counts[c];
            bytes += profile.cluster_bytes[c];
        }
        auto& pt = curve.points[k];
        pt.n_hot = k;
        pt.rho = double(k) / double(n);
        pt.mean_hitrate = double(acc) / double(profile.total_accesses);
        pt.hot_bytes = bytes;
    }
    // exact endpoints regardless of rounding
    curve.points.back().mean_hitrate = 1.0;
    return curve;
}

std::vector<double> hitrates_from_shortlists(
        std::span<const ClusterShortlist> shortlists,
        std::span<const ClusterId> hot_set,
        std::size_t n_clusters) {
    std::vector<char> hot(n_clusters, 0);
    for (ClusterId c : hot_set) {
        TIERED_CHECK(c < n_clusters, ErrorKind::UnknownCluster, "hot set names unknown cluster");
        hot[c] = 1;
    }
    std::vector<double> out;
    out.reserve(shortlists.size());
    for (const auto& sl : shortlists) {
        std::size_t hits = 0;
        for (ClusterId c : sl.cluster_ids) {
            hits += hot[c];
        }
        out.push_back(sl.cluster_ids.empty() ? 0.0 : double(hits) / double(sl.cluster_ids.size()));
    }
    return out;
}

std::vector<double> measure_hitrates(
        const IvfIndex& index,
        const VectorDataset& queries,
        std::size_t nprobe,
        std::span<const ClusterId> hot_set) {
    const auto shortlists = coarse_quantize(index, queries, nprobe);
    return hitrates_from_shortlists(shortlists, hot_set, index.n_clusters());
}

double population_variance(std::span<const double> xs) {
    if (xs.empty()) {
        return 0.0;
    }
    const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / double(xs.size());
    double ss = 0;
    for (double x : xs) {
        ss += (x - mean) * (x - mean);
    }
    return ss / double(xs.size());
}

SigmaMax sigma_max_from_shortlists(
        std::span<const ClusterShortlist> shortlists,
        const AccessProfile& profile,
        const CoverageCurve& curve) {
    TIERED_CHECK(shortlists.size() >= 2, ErrorKind::InvalidArgument, "need at least 2 queries");
    TIERED_CHECK(!curve.points.empty(), ErrorKind::InvalidArgument, "empty coverage curve");
    std::size_t best = 0;
    for (std::size_t k = 1; k < curve.points.size(); ++k) {
        if (std::abs(curve.points[k].mean_hitrate - 0.5) <
            std::abs(curve.points[best].mean_hitrate - 0.5)) {
            best = k;
        }
    }
    const auto hot = profile.hot_set(best);
    const auto rates = hitrates_from_shortlists(shortlists, hot, profile.n_clusters);
    SigmaMax s;
    s.sigma2_max = std::min(population_variance(rates), 0.25);
    s.coverage_at_half = curve.points[best].rho;
    s.mean_at_half = curve.points[best].mean_hitrate;
    s.n_hot = best;
    return s;
}

SigmaMax profile_sigma_max(
        const IvfIndex& index,
        const VectorDataset& queries,
        std::size_t nprobe,
        const AccessProfile& profile,
        const CoverageCurve& curve) {
    const auto shortlists = coarse_quantize(index, queries, nprobe);
    return sigma_max_from_shortlists(shortlists, profile, curve);
}

// ---------------------------------------------------------------- latency

namespace {

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

VectorDataset cyclic_batch(const VectorDataset& queries, std::size_t b) {
    VectorDataset out;
    out.dim = queries.dim;
    out.data.reserve(b * queries.dim);
    for (std::size_t i = 0; i < b; ++i) {
        out.push_back(i, queries.row(i % queries.size()));
    }
    return out;
}

} // namespace

std::vector<LatencySample> profile_latency(
        const IvfIndex& index,
        const VectorDataset& queries,
        std::span<const std::size_t> batch_sizes,
        std::size_t nprobe,
        const LatencyProfileOptions& opts) {
    TIERED_CHECK(!queries.empty(), ErrorKind::InvalidArgument, "no profiling queries");
    TIERED_CHECK(opts.repetitions >= 1, ErrorKind::InvalidArgument, "repetitions must be >= 1");
    using clock = std::chrono::steady_clock;
    static_assert(clock::is_steady);
    std::vector<LatencySample> out;
    for (std::size_t b : batch_sizes) {
        TIERED_CHECK(b >= 1, ErrorKind::InvalidArgument, "batch sizes must be >= 1");
        const auto batch = cyclic_batch(queries, b);
        std::vector<double> cq, lut;
        for (std::size_t rep = 0; rep < opts.warmup + opts.repetitions; ++rep) {
            const auto t0 = clock::now();
            const auto shortlists = coarse_quantize(index, batch, nprobe);
            const auto t1 = clock::now();
            std::size_t sink = 0;
            for (std::size_t i = 0; i < batch.size(); ++i) {
                sink += scan_clusters(index, batch.row(i), shortlists[i].cluster_ids, 10).hits.size();
            }
            const auto t2 = clock::now();
            if (sink == SIZE_MAX) {
                throw_error(ErrorKind::Internal, "unreachable");
            }
            if (rep >= opts.warmup) {
                cq.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
                lut.push_back(std::chrono::duration<double, std::milli>(t2 - t1).count());
            }
        }
        out.push_back({b, median(cq), median(lut)});
    }
    return out;
}

std::vector<LatencySample> counted_latency(
        const IvfIndex& index,
        std::span<const std::size_t> batch_sizes,
        std::size_t nprobe,
        const CountedCostModel& m) {
    TIERED_CHECK(m.lanes >= 1, ErrorKind::InvalidArgument, "lanes must be >= 1");
    const double n = double(index.n_clusters());
    const double mean_list = n > 0 ? double(index.total_size()) / n : 0.0;
    const double probes = std::min(double(nprobe), n);
    const double cq_query_ms = n * double(index.dim()) * m.cq_ns_per_op * 1e-6;
    const double lut_query_ms = probes * mean_list * double(index.dim()) * m.lut_ns_per_op * 1e-6;
    std::vector<LatencySample> out;
    for (std::size_t b : batch_sizes) {
        TIERED_CHECK(b >= 1, ErrorKind::InvalidArgument, "batch sizes must be >= 1");
        // one query: intra-query parallelism only; batches: lanes share queries
        const double waves = b == 1 ? 1.0 / m.single_query_speedup
                                    : (double(b) + m.lanes - 1.0) / m.lanes;
        out.push_back(
                {b, m.cq_fixed_ms + cq_query_ms * waves, m.lut_fixed_ms + lut_query_ms * waves});
    }
    return out;
}

// ---------------------------------------------------------------- piecewise linear

PiecewiseLinear::PiecewiseLinear(
        std::vector<double> breakpoints,
        std::vector<double> slopes,
        std::vector<double> intercepts,
        double residual_rms)
        : breakpoints_(std::move(breakpoints)),
          slopes_(std::move(slopes)),
          intercepts_(std::move(intercepts)),
          rms_(residual_rms) {
    TIERED_CHECK(
            !slopes_.empty() && slopes_.size() == intercepts_.size() &&
                    slopes_.size() == breakpoints_.size(),
            ErrorKind::InvalidArgument,
            "piecewise-linear segments are inconsistent");
    TIERED_CHECK(
            std::is_sorted(breakpoints_.begin(), breakpoints_.end()),
            ErrorKind::InvalidArgument,
            "breakpoints must ascend");
}

PiecewiseLinear PiecewiseLinear::linear(double intercept, double slope) {
    return PiecewiseLinear({1.0}, {slope}, {intercept});
}

double PiecewiseLinear::operator()(double b) const {
    TIERED_CHECK(!slopes_.empty(), ErrorKind::InvalidArgument, "empty piecewise-linear model");
    const auto it = std::upper_bound(breakpoints_.begin(), breakpoints_.end(), b);
    const std::size_t seg =
            it == breakpoints_.begin() ? 0 : static_cast<std::size_t>(it - breakpoints_.begin()) - 1;
    return std::max(0.0, slopes_[seg] * b + intercepts_[seg]);
}

namespace {

struct HingeFit {
    std::vector<double> knots;
    Eigen::VectorXd coef;  // intercept, slope, one hinge per knot
    double rss = 0;
};

HingeFit fit_hinges(std::span<const double> x, std::span<const double> y, std::vector<double> knots) {
    const auto n = static_cast<Eigen::Index>(x.size());
    const auto p = static_cast<Eigen::Index>(2 + knots.size());
    Eigen::MatrixXd a(n, p);
    Eigen::VectorXd rhs(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        a(i, 0) = 1.0;
        a(i, 1) = x[i];
        for (std::size_t j = 0; j < knots.size(); ++j) {
            a(i, 2 + static_cast<Eigen::Index>(j)) = std::max(0.0, x[i] - knots[j]);
        }
        rhs(i) = y[i];
    }
    HingeFit f;
    f.coef = a.colPivHouseholderQr().solve(rhs);
    f.rss = (a * f.coef - rhs).squaredNorm();
    f.knots = std::move(knots);
    return f;
}

void for_each_combination(
        const std::vector<double>& pool,
        std::size_t r,
        std::size_t start,
        std::vector<double>& cur,
        const std::function<void(const std::vector<double>&)>& fn) {
    if (cur.size() == r) {
        fn(cur);
        return;
    }
    for (std::size_t i = start; i < pool.size(); ++i) {
        cur.push_back(pool[i]);
        for_each_combination(pool, r, i + 1, cur, fn);
        cur.pop_back();
    }
}

} // namespace

PiecewiseLinear fit_piecewise_linear(
        std::span<const double> x,
        std::span<const double> y,
        std::size_t max_segments) {
    TIERED_CHECK(x.size() == y.size(), ErrorKind::InvalidArgument, "x/y length mismatch");
    TIERED_CHECK(max_segments >= 1, ErrorKind::InvalidArgument, "max_segments must be >= 1");
    std::vector<double> xs(x.begin(), x.end());
    std::sort(xs.begin(), xs.end());
    xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
    TIERED_CHECK(
            xs.size() >= 2, ErrorKind::InvalidArgument, "need at least two distinct batch sizes");
    for (double v : y) {
        TIERED_CHECK(std::isfinite(v), ErrorKind::NonFinite, "non-finite latency sample");
    }

    // candidate knees: interior distinct sample positions
    const std::vector<double> pool(xs.begin() + 1, xs.end() - 1);
    double tss = 0, sq = 0;
    {
        const double my = std::accumulate(y.begin(), y.end(), 0.0) / double(y.size());
        for (double v : y) {
            tss += (v - my) * (v - my);
            sq += v * v;
        }
    }
    HingeFit best = fit_hinges(x, y, {});
    // rounding noise in an exact fit must not buy an extra segment
    const double margin = 1e-9 * tss + 1e-20 * (1 + sq);
    for (std::size_t r = 1; r < max_segments && r <= pool.size(); ++r) {
        HingeFit best_r;
        bool have = false;
        std::vector<double> cur;
        for_each_combination(pool, r, 0, cur, [&](const std::vector<double>& knots) {
            auto f = fit_hinges(x, y, knots);
            if (!have || f.rss < best_r.rss) {
                best_r = std::move(f);
                have = true;
            }
        });
        // extra segments must earn their keep
        if (have && best_r.rss < best.rss - margin) {
            best = std::move(best_r);
        }
    }

    std::vector<double> breakpoints{xs.front()};
    std::vector<double> slopes{best.coef(1)};
    std::vector<double> intercepts{best.coef(0)};
    for (std::size_t j = 0; j < best.knots.size(); ++j) {
        const double c = best.coef(2 + static_cast<Eigen::Index>(j));
        breakpoints.push_back(best.knots[j]);
        slopes.push_back(slopes.back() + c);
        intercepts.push_back(intercepts.back() - c * best.knots[j]);
    }
    return PiecewiseLinear(
            std::move(breakpoints),
            std::move(slopes),
            std::move(intercepts),
            std::sqrt(best.rss / double(x.size())));
}

LatencyModel fit_latency_model(std::span<const LatencySample> samples, std::size_t max_segments) {
    std::vector<double> b, cq, lut;
    for (const auto& s : samples) {
        b.push_back(double(s.batch));
        cq.push_back(s.t_cq_ms);
        lut.push_back(s.t_lut_ms);
    }
    return {fit_piecewise_linear(b, cq, max_segments), fit_piecewise_linear(b, lut, max_segments)};
}

std::string latency_csv(std::span<const LatencySample> samples) {
    std::string out = "b,t_cq_ms,t_lut_ms\n";
    char line[128];
    for (const auto& s : samples) {
        std::snprintf(line, sizeof(line), "%zu,%.6f,%.6f\n", s.batch, s.t_cq_ms, s.t_lut_ms);
        out += line;
    }
    return out;
}

} // namespace tiered
