#include "tiered/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "tiered/random.hpp"

namespace tiered {

namespace {

std::size_t sample_cdf(const std::vector<double>& cdf, std::mt19937_64& rng) {
    const double u = uniform_open(rng) * cdf.back();
    const auto it = std::lower_bound(cdf.begin(), cdf.end(), u);
    return std::min<std::size_t>(static_cast<std::size_t>(it - cdf.begin()), cdf.size() - 1);
}

void sample_around(
        const GaussianMixture& mix,
        std::size_t mode,
        double scale,
        std::mt19937_64& rng,
        NormalSampler& normal,
        std::vector<float>& out) {
    const std::size_t d = mix.spec.dim;
    out.resize(d);
    for (std::size_t j = 0; j < d; ++j) {
        out[j] = mix.centers[mode * d + j] + static_cast<float>(scale * normal(rng));
    }
}

} // namespace

GaussianMixture make_mixture(const MixtureSpec& spec) {
    TIERED_CHECK(spec.dim >= 1 && spec.n_modes >= 1, ErrorKind::InvalidArgument, "empty mixture");
    GaussianMixture mix;
    mix.spec = spec;
    std::mt19937_64 rng(spec.seed);
    NormalSampler normal;
    mix.centers.resize(spec.n_modes * spec.dim);
    for (auto& c : mix.centers) {
        c = static_cast<float>(spec.center_scale * normal(rng));
    }
    // uneven data mass so inverted lists differ in size
    mix.weights.resize(spec.n_modes);
    for (auto& w : mix.weights) {
        w = 0.5 + uniform_open(rng);
    }
    const double total = std::accumulate(mix.weights.begin(), mix.weights.end(), 0.0);
    for (auto& w : mix.weights) {
        w /= total;
    }
    return mix;
}

VectorDataset sample_vectors(
        const GaussianMixture& mix,
        std::size_t n,
        std::uint64_t seed,
        VectorId first_id) {
    std::mt19937_64 rng(seed);
    NormalSampler normal;
    std::vector<double> cdf(mix.weights.size());
    std::partial_sum(mix.weights.begin(), mix.weights.end(), cdf.begin());
    VectorDataset ds;
    ds.dim = mix.spec.dim;
    ds.data.reserve(n * ds.dim);
    ds.ids.reserve(n);
    std::vector<float> v;
    for (std::size_t i = 0; i < n; ++i) {
        sample_around(mix, sample_cdf(cdf, rng), mix.spec.point_scale, rng, normal, v);
        ds.push_back(first_id + i, v);
    }
    return ds;
}

std::vector<std::size_t> popularity_order(std::size_t n_modes, std::uint64_t popularity_seed) {
    std::vector<std::size_t> order(n_modes);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(popularity_seed);
    for (std::size_t i = n_modes; i > 1; --i) {
        std::swap(order[i - 1], order[uniform_index(rng, i)]);
    }
    return order;
}

VectorDataset sample_queries(
        const GaussianMixture& mix,
        const QueryWorkload& workload,
        std::size_t n,
        std::uint64_t seed,
        VectorId first_id) {
    const std::size_t m = mix.spec.n_modes;
    std::vector<double> cdf(m);
    std::vector<std::size_t> order(m);
    if (workload.zipf_s > 0) {
        order = popularity_order(m, workload.popularity_seed);
        double acc = 0;
        for (std::size_t r = 0; r < m; ++r) {
            acc += std::pow(double(r + 1), -workload.zipf_s);
            cdf[r] = acc;
        }
    } else {
        std::iota(order.begin(), order.end(), 0);
        std::partial_sum(mix.weights.begin(), mix.weights.end(), cdf.begin());
    }
    std::mt19937_64 rng(seed);
    NormalSampler normal;
    VectorDataset qs;
    qs.dim = mix.spec.dim;
    qs.data.reserve(n * qs.dim);
    std::vector<float> v;
    for (std::size_t i = 0; i < n; ++i) {
        sample_around(mix, order[sample_cdf(cdf, rng)], workload.query_scale, rng, normal, v);
        qs.push_back(first_id + i, v);
    }
    return qs;
}

} // namespace tiered
