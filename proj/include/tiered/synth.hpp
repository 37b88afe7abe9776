#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "tiered/vecstore.hpp"

namespace tiered {

/// Gaussian mixture used for offline desk-scale datasets.
struct MixtureSpec {
    std::size_t dim = 32;
    std::size_t n_modes = 128;
    double center_scale = 1.0;  // stddev of mode centers per dimension
    double point_scale = 0.5;   // stddev of points around their mode
    std::uint64_t seed = 1;
};

struct GaussianMixture {
    MixtureSpec spec;
    std::vector<float> centers;   // n_modes x dim
    std::vector<double> weights;  // data mass per mode, sums to 1
};

GaussianMixture make_mixture(const MixtureSpec& spec);

/// Draws `n` vectors from the mixture; ids are first_id, first_id + 1, ...
VectorDataset sample_vectors(
        const GaussianMixture& mix,
        std::size_t n,
        std::uint64_t seed,
        VectorId first_id = 0);

/**
 * Query popularity over mixture modes. With zipf_s > 0 the mode of rank r
 * (under a permutation chosen by popularity_seed) is drawn with probability
 * proportional to r^-zipf_s; with zipf_s == 0 queries follow the data mass.
 * Changing popularity_seed permutes which modes are hot.
 */
struct QueryWorkload {
    double zipf_s = 1.2;
    std::uint64_t popularity_seed = 7;
    double query_scale = 0.5;
};

std::vector<std::size_t> popularity_order(std::size_t n_modes, std::uint64_t popularity_seed);

VectorDataset sample_queries(
        const GaussianMixture& mix,
        const QueryWorkload& workload,
        std::size_t n,
        std::uint64_t seed,
        VectorId first_id = 0);

} // namespace tiered
