#include "tiered/hitrate.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "tiered/log.hpp"

namespace tiered {

namespace {

constexpr double kPointMassEdge = 1e-4;
constexpr double kInfeasibleClamp = 0.999;

double log_beta_fn(double a, double b) {
    return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
}

// Lentz evaluation of the incomplete-beta continued fraction.
double beta_cf(double a, double b, double x) {
    constexpr double tiny = 1e-300;
    constexpr double eps = 1e-15;
    constexpr int max_iter = 20000;
    const double qab = a + b;
    const double qap = a + 1;
    const double qam = a - 1;
    double c = 1;
    double d = 1 - qab * x / qap;
    if (std::abs(d) < tiny) {
        d = tiny;
    }
    d = 1 / d;
    double h = d;
    for (int m = 1; m <= max_iter; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1 + aa * d;
        if (std::abs(d) < tiny) {
            d = tiny;
        }
        c = 1 + aa / c;
        if (std::abs(c) < tiny) {
            c = tiny;
        }
        d = 1 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1 + aa * d;
        if (std::abs(d) < tiny) {
            d = tiny;
        }
        c = 1 + aa / c;
        if (std::abs(c) < tiny) {
            c = tiny;
        }
        d = 1 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1) < eps) {
            return h;
        }
    }
    throw_error(ErrorKind::NoConvergence, "incomplete beta continued fraction did not converge");
}

// (lower, upper) tails at x, with x, 1-x and their logs supplied separately so
// callers near either endpoint keep full precision.
std::pair<double, double> inc_beta(double a, double b, double x, double omx, double lx, double lomx) {
    if (std::isinf(lx)) {
        return {0.0, 1.0};
    }
    if (std::isinf(lomx)) {
        return {1.0, 0.0};
    }
    const double lfront = a * lx + b * lomx - log_beta_fn(a, b);
    if (x < (a + 1) / (a + b + 2)) {
        const double lower = std::exp(lfront) * beta_cf(a, b, x) / a;
        return {lower, 1 - lower};
    }
    const double upper = std::exp(lfront) * beta_cf(b, a, omx) / b;
    return {1 - upper, upper};
}

struct GaussLegendre {
    static constexpr int n = 20;
    std::array<double, n> x{};
    std::array<double, n> w{};

    GaussLegendre() {
        for (int i = 0; i < n; ++i) {
            double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
            double dp = 0;
            for (int it = 0; it < 100; ++it) {
                double p0 = 1, p1 = 0;
                for (int j = 1; j <= n; ++j) {
                    const double p2 = p1;
                    p1 = p0;
                    p0 = ((2.0 * j - 1) * z * p1 - (j - 1.0) * p2) / j;
                }
                dp = n * (z * p0 - p1) / (z * z - 1);
                const double dz = p0 / dp;
                z -= dz;
                if (std::abs(dz) < 1e-16) {
                    break;
                }
            }
            x[i] = z;
            w[i] = 2 / ((1 - z * z) * dp * dp);
        }
    }
};

const GaussLegendre& gl() {
    static const GaussLegendre rule;
    return rule;
}

template <class F>
double gl_panel(const F& f, double lo, double hi) {
    const auto& r = gl();
    const double half = 0.5 * (hi - lo);
    const double mid = 0.5 * (hi + lo);
    double s = 0;
    for (int i = 0; i < GaussLegendre::n; ++i) {
        s += r.w[i] * f(mid + half * r.x[i]);
    }
    return s * half;
}

template <class F>
double adaptive(const F& f, double lo, double hi, double whole, double tol, int depth) {
    const double mid = 0.5 * (lo + hi);
    const double left = gl_panel(f, lo, mid);
    const double right = gl_panel(f, mid, hi);
    const double sum = left + right;
    if (std::abs(sum - whole) <= std::max(tol, 1e-13 * std::abs(sum))) {
        return sum;
    }
    if (depth >= 50) {
        throw_error(ErrorKind::NoConvergence, "quadrature exceeded subdivision depth");
    }
    const double sub_tol = std::max(0.5 * tol, 1e-14);
    return adaptive(f, lo, mid, left, sub_tol, depth + 1) +
            adaptive(f, mid, hi, right, sub_tol, depth + 1);
}

template <class F>
double integrate(const F& f, double lo, double hi, double tol) {
    if (hi <= lo) {
        return 0.0;
    }
    return adaptive(f, lo, hi, gl_panel(f, lo, hi), tol, 0);
}

// Seeds for the semi-infinite pieces in the exponential substitution.
std::vector<double> tail_seeds(double t_max) {
    std::vector<double> s{0.0};
    for (double t = 1; t < t_max; t = 2 * t + 1) {
        s.push_back(t);
    }
    s.push_back(t_max);
    return s;
}

} // namespace

double variance_at(double mean, double sigma2_max) {
    TIERED_CHECK(
            std::isfinite(mean) && mean >= 0 && mean <= 1,
            ErrorKind::InvalidArgument,
            "mean hit rate must lie in [0,1]");
    TIERED_CHECK(
            std::isfinite(sigma2_max) && sigma2_max >= 0 && sigma2_max <= 0.25,
            ErrorKind::InvalidArgument,
            "sigma2_max must lie in [0,0.25]");
    return 4 * sigma2_max * mean * (1 - mean);
}

BetaParams beta_from_moments(double mean, double variance) {
    TIERED_CHECK(
            std::isfinite(mean) && mean > 0 && mean < 1,
            ErrorKind::InvalidArgument,
            "mean must lie in (0,1)");
    TIERED_CHECK(
            std::isfinite(variance) && variance > 0 && variance < mean * (1 - mean),
            ErrorKind::Infeasible,
            "variance " + std::to_string(variance) + " is infeasible for mean " + std::to_string(mean));
    const double nu = mean * (1 - mean) / variance - 1;
    return {mean * nu, (1 - mean) * nu};
}

double beta_pdf(const BetaParams& p, double x) {
    if (x < 0 || x > 1) {
        return 0.0;
    }
    if (x == 0 || x == 1) {
        const double e = x == 0 ? p.alpha : p.beta;
        if (e < 1) {
            return std::numeric_limits<double>::infinity();
        }
        if (e > 1) {
            return 0.0;
        }
        return std::exp(-log_beta_fn(p.alpha, p.beta));
    }
    return std::exp(
            (p.alpha - 1) * std::log(x) + (p.beta - 1) * std::log1p(-x) -
            log_beta_fn(p.alpha, p.beta));
}

std::pair<double, double> beta_cdf_sf(const BetaParams& p, double x) {
    TIERED_CHECK(p.alpha > 0 && p.beta > 0, ErrorKind::InvalidArgument, "beta shapes must be > 0");
    if (x <= 0) {
        return {0.0, 1.0};
    }
    if (x >= 1) {
        return {1.0, 0.0};
    }
    return inc_beta(p.alpha, p.beta, x, 1 - x, std::log(x), std::log1p(-x));
}

MinHitEstimate expected_min_hitrate(const BetaParams& p, std::size_t B) {
    TIERED_CHECK(B >= 1, ErrorKind::InvalidArgument, "batch size must be >= 1");
    TIERED_CHECK(
            std::isfinite(p.alpha) && std::isfinite(p.beta) && p.alpha > 0 && p.beta > 0,
            ErrorKind::InvalidArgument,
            "beta shapes must be finite and > 0");
    if (B == 1) {
        return {B, p.mean()};
    }
    const double a = p.alpha;
    const double b = p.beta;
    const double lbeta = log_beta_fn(a, b);
    const double log_b = std::log(double(B));
    const double bm1 = double(B) - 1;

    // B x f(x) (1-F(x))^(B-1) times a jacobian, all in logs; inputs carry x
    // and 1-x separately
    auto integrand = [&](double x, double omx, double lx, double lomx, double ljac) {
        // x and 1-x may underflow to 0 where their logs are still finite
        if (std::isinf(lx) || std::isinf(lomx)) {
            return 0.0;
        }
        const double q = inc_beta(a, b, x, omx, lx, lomx).second;
        if (q <= 0) {
            return 0.0;
        }
        return std::exp(ljac + log_b + a * lx + (b - 1) * lomx - lbeta + bm1 * std::log(q));
    };

    const double mean = p.mean();
    const double sd = std::sqrt(p.variance());
    std::vector<double> cuts{0.5};
    for (double k : {1.0, 2.0, 4.0, 8.0}) {
        cuts.push_back(mean - k * sd);
        cuts.push_back(mean + k * sd);
    }
    cuts.push_back(mean);
    std::erase_if(cuts, [](double c) { return !(c > 1e-12 && c < 1 - 1e-12); });
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

    constexpr double tol = 1e-10;
    double total = 0;

    // [0, c0]: x = c0 e^-t
    const double c0 = cuts.front();
    const double lc0 = std::log(c0);
    auto left = [&](double t) {
        const double lx = lc0 - t;
        const double x = std::exp(lx);
        return integrand(x, 1 - x, lx, std::log1p(-x), lx);
    };
    const auto lseeds = tail_seeds(45.0);
    for (std::size_t i = 0; i + 1 < lseeds.size(); ++i) {
        total += integrate(left, lseeds[i], lseeds[i + 1], tol);
    }

    auto middle = [&](double x) { return integrand(x, 1 - x, std::log(x), std::log1p(-x), 0.0); };
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
        total += integrate(middle, cuts[i], cuts[i + 1], tol);
    }

    // [c_last, 1]: 1 - x = (1 - c_last) e^-t; the tail decays like e^(-b B t)
    const double w = 1 - cuts.back();
    const double lw = std::log(w);
    auto right = [&](double t) {
        const double lomx = lw - t;
        const double omx = std::exp(lomx);
        return integrand(1 - omx, omx, std::log1p(-omx), lomx, lomx);
    };
    const auto rseeds = tail_seeds(45.0 / std::min(1.0, b * double(B)));
    for (std::size_t i = 0; i + 1 < rseeds.size(); ++i) {
        total += integrate(right, rseeds[i], rseeds[i + 1], tol);
    }

    TIERED_CHECK(std::isfinite(total), ErrorKind::NoConvergence, "quadrature produced a non-finite value");
    return {B, std::clamp(total, 0.0, mean)};
}

namespace {

// log of a Gamma(shape, 1) draw; shapes below 1 use the boost U^(1/a) in logs
double log_gamma_draw(double shape, std::mt19937_64& rng, NormalSampler& normal) {
    double boost = 0;
    if (shape < 1) {
        boost = std::log(uniform_open(rng)) / shape;
        shape += 1;
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1 / std::sqrt(9 * d);
    for (;;) {
        double z, v;
        do {
            z = normal(rng);
            v = 1 + c * z;
        } while (v <= 0);
        v = v * v * v;
        const double u = uniform_open(rng);
        if (std::log(u) < 0.5 * z * z + d - d * v + d * std::log(v)) {
            return std::log(d * v) + boost;
        }
    }
}

} // namespace

double sample_beta(const BetaParams& p, std::mt19937_64& rng, NormalSampler& normal) {
    const double lx = log_gamma_draw(p.alpha, rng, normal);
    const double ly = log_gamma_draw(p.beta, rng, normal);
    return 1 / (1 + std::exp(ly - lx));
}

std::vector<McEstimate> mc_min_hitrate_sweep(
        const BetaParams& p,
        std::span<const std::size_t> batch_sizes,
        std::size_t n_samples,
        std::uint64_t seed) {
    TIERED_CHECK(!batch_sizes.empty(), ErrorKind::InvalidArgument, "no batch sizes");
    TIERED_CHECK(n_samples >= 2, ErrorKind::InvalidArgument, "need at least 2 samples");
    TIERED_CHECK(p.alpha > 0 && p.beta > 0, ErrorKind::InvalidArgument, "beta shapes must be > 0");
    std::size_t max_b = 0;
    for (std::size_t b : batch_sizes) {
        TIERED_CHECK(b >= 1, ErrorKind::InvalidArgument, "batch size must be >= 1");
        max_b = std::max(max_b, b);
    }
    // record[j] lists the output slots whose batch size is j+1
    std::vector<std::vector<std::size_t>> record(max_b);
    for (std::size_t i = 0; i < batch_sizes.size(); ++i) {
        record[batch_sizes[i] - 1].push_back(i);
    }
    std::vector<double> sum(batch_sizes.size(), 0), sum2(batch_sizes.size(), 0);
    std::mt19937_64 rng(seed);
    NormalSampler normal;
    for (std::size_t s = 0; s < n_samples; ++s) {
        double m = 1;
        for (std::size_t j = 0; j < max_b; ++j) {
            m = std::min(m, sample_beta(p, rng, normal));
            for (std::size_t slot : record[j]) {
                sum[slot] += m;
                sum2[slot] += m * m;
            }
        }
    }
    std::vector<McEstimate> out(batch_sizes.size());
    const double n = double(n_samples);
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double mean = sum[i] / n;
        const double var = std::max(0.0, (sum2[i] - n * mean * mean) / (n - 1));
        out[i] = {mean, std::sqrt(var / n), n_samples};
    }
    return out;
}

McEstimate mc_min_hitrate_oracle(const BetaParams& p, std::size_t B, std::size_t n_samples, std::uint64_t seed) {
    const std::size_t sizes[] = {B};
    return mc_min_hitrate_sweep(p, sizes, n_samples, seed).front();
}

double batch_min_hitrate(double mean, double sigma2_max, std::size_t B) {
    double var = variance_at(mean, sigma2_max);
    TIERED_CHECK(B >= 1, ErrorKind::InvalidArgument, "batch size must be >= 1");
    if (mean < kPointMassEdge || mean > 1 - kPointMassEdge || var <= 0 || B == 1) {
        return mean;
    }
    const double cap = mean * (1 - mean);
    if (var >= cap) {
        log_warn(
                "hit-rate variance " + std::to_string(var) + " infeasible at mean " +
                std::to_string(mean) + "; clamping");
        var = kInfeasibleClamp * cap;
    }
    return expected_min_hitrate(beta_from_moments(mean, var), B).eta_min;
}

CoverageInverter::CoverageInverter(const CoverageCurve& curve, double sigma2_max)
        : sigma2_max_(sigma2_max) {
    TIERED_CHECK(curve.points.size() >= 2, ErrorKind::InvalidArgument, "empty coverage curve");
    TIERED_CHECK(
            sigma2_max >= 0 && sigma2_max <= 0.25,
            ErrorKind::InvalidArgument,
            "sigma2_max must lie in [0,0.25]");
    means_.reserve(curve.points.size());
    for (const auto& pt : curve.points) {
        means_.push_back(std::clamp(pt.mean_hitrate, 0.0, 1.0));
    }
}

double CoverageInverter::eta_min_at(std::size_t n_hot, std::size_t B) const {
    TIERED_CHECK(n_hot < means_.size(), ErrorKind::InvalidArgument, "hot count beyond curve");
    const auto key = std::make_pair(n_hot, B);
    {
        std::lock_guard lock(mu_);
        if (auto it = cache_.find(key); it != cache_.end()) {
            return it->second;
        }
    }
    const double v = batch_min_hitrate(means_[n_hot], sigma2_max_, B);
    std::lock_guard lock(mu_);
    cache_.emplace(key, v);
    return v;
}

CoverageResult CoverageInverter::invert(std::size_t B, double target) const {
    TIERED_CHECK(std::isfinite(target), ErrorKind::NonFinite, "non-finite hit-rate target");
    const std::size_t n = n_clusters();
    if (target <= 0) {
        return {0.0, 0, false, eta_min_at(0, B)};
    }
    // eta_min grows with the hot prefix, so bisect for the first k meeting the target
    std::size_t lo = 0;
    std::size_t hi = n;
    if (eta_min_at(n, B) < target) {
        return {1.0, n, true, eta_min_at(n, B)};
    }
    while (lo < hi) {
        const std::size_t mid = lo + (hi - lo) / 2;
        if (eta_min_at(mid, B) >= target) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    return {double(lo) / double(n), lo, lo == n, eta_min_at(lo, B)};
}

CoverageResult hitrate_to_coverage(
        const CoverageCurve& curve,
        double sigma2_max,
        std::size_t B,
        double eta_min_target) {
    return CoverageInverter(curve, sigma2_max).invert(B, eta_min_target);
}

} // namespace tiered
