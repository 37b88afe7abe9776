#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <mutex>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "tiered/profiler.hpp"
#include "tiered/random.hpp"

namespace tiered {

struct BetaParams {
    double alpha = 1;
    double beta = 1;

    double mean() const {
        return alpha / (alpha + beta);
    }
    double variance() const {
        const double s = alpha + beta;
        return alpha * beta / (s * s * (s + 1));
    }
};

struct MinHitEstimate {
    std::size_t batch = 1;
    double eta_min = 0;
};

struct McEstimate {
    double mean = 0;
    double std_error = 0;
    std::size_t n_samples = 0;
};

/// 4 * sigma2_max * mean * (1 - mean).
double variance_at(double mean, double sigma2_max);

/// Method of moments. Throws Infeasible unless 0 < variance < mean(1-mean).
BetaParams beta_from_moments(double mean, double variance);

double beta_pdf(const BetaParams& p, double x);

/// Regularized incomplete beta as a (lower, upper) pair; both tails are
/// computed directly so neither loses precision to cancellation.
std::pair<double, double> beta_cdf_sf(const BetaParams& p, double x);

inline double beta_cdf(const BetaParams& p, double x) {
    return beta_cdf_sf(p, x).first;
}

/// E[min of B iid draws], integrating B x f(x) (1-F(x))^(B-1) over [0,1].
/// Throws NoConvergence if the adaptive quadrature runs out of depth.
MinHitEstimate expected_min_hitrate(const BetaParams& p, std::size_t B);

double sample_beta(const BetaParams& p, std::mt19937_64& rng, NormalSampler& normal);

McEstimate mc_min_hitrate_oracle(const BetaParams& p, std::size_t B, std::size_t n_samples, std::uint64_t seed);

/// One estimate per batch size from shared draws: each sample takes the
/// running minimum of max(batch_sizes) draws and records every prefix.
std::vector<McEstimate> mc_min_hitrate_sweep(
        const BetaParams& p,
        std::span<const std::size_t> batch_sizes,
        std::size_t n_samples,
        std::uint64_t seed);

/// Expected batch-minimum hit rate for a cache whose mean hit rate is
/// `mean`, with the variance scaled from sigma2_max. Means within 1e-4 of
/// either end, and zero variance, are treated as a point mass.
double batch_min_hitrate(double mean, double sigma2_max, std::size_t B);

struct CoverageResult {
    double rho = 0;
    std::size_t n_hot = 0;
    bool saturated = false;
    double eta_min = 0;  // predicted at the returned rho
};

/**
 * Inverts batch_min_hitrate over a coverage curve's whole-cluster grid.
 * Results per (k, B) are memoized, so one inverter can serve a whole
 * partitioning run. Thread-safe.
 */
class CoverageInverter {
  public:
    CoverageInverter(const CoverageCurve& curve, double sigma2_max);

    CoverageResult invert(std::size_t B, double eta_min_target) const;
    double eta_min_at(std::size_t n_hot, std::size_t B) const;

    std::size_t n_clusters() const {
        return means_.empty() ? 0 : means_.size() - 1;
    }
    double sigma2_max() const {
        return sigma2_max_;
    }

  private:
    std::vector<double> means_;
    double sigma2_max_;
    mutable std::mutex mu_;
    mutable std::map<std::pair<std::size_t, std::size_t>, double> cache_;
};

CoverageResult hitrate_to_coverage(
        const CoverageCurve& curve,
        double sigma2_max,
        std::size_t B,
        double eta_min_target);

} // namespace tiered
