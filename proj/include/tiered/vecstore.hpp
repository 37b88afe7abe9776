#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "tiered/error.hpp"

namespace tiered {

using VectorId = std::uint64_t;
using ClusterId = std::uint32_t;

enum class Metric : std::uint8_t { L2 = 0, InnerProduct = 1 };
enum class Quantization : std::uint8_t { None = 0, Scalar8 = 1 };

/// Dense row-major set of vectors with caller-assigned ids. Queries use the
/// same type; their ids become TopK::query_id.
struct VectorDataset {
    std::size_t dim = 0;
    std::vector<float> data;
    std::vector<VectorId> ids;

    std::size_t size() const {
        return ids.size();
    }
    bool empty() const {
        return ids.empty();
    }
    std::span<const float> row(std::size_t i) const {
        return {data.data() + i * dim, dim};
    }

    /// Appends one row; `v.size()` must equal dim.
    void push_back(VectorId id, std::span<const float> v);

    /// Throws unless rows have length dim, ids are unique and values finite.
    void validate() const;

    /// Rows [first, first + count) as a new dataset.
    VectorDataset slice(std::size_t first, std::size_t count) const;
};

struct Hit {
    VectorId id = 0;
    float distance = 0.0f;

    friend bool operator==(const Hit&, const Hit&) = default;
};

/// Total order used everywhere results are ranked: distance, then id.
inline bool hit_less(const Hit& a, const Hit& b) {
    return a.distance < b.distance || (a.distance == b.distance && a.id < b.id);
}

struct TopK {
    std::uint64_t query_id = 0;
    std::vector<Hit> hits;

    friend bool operator==(const TopK&, const TopK&) = default;
};

struct ClusterShortlist {
    std::uint64_t query_id = 0;
    std::vector<ClusterId> cluster_ids;
    std::vector<float> distances;
};

/// Distance under `metric`; inner product is negated so smaller is closer.
float distance(Metric metric, std::span<const float> a, std::span<const float> b);

/// Per-dimension min/max affine mapping of floats to 8-bit codes.
struct ScalarQuantizer {
    std::vector<float> vmin;
    std::vector<float> vdiff;

    static ScalarQuantizer train(const VectorDataset& data);
    void encode(std::span<const float> x, std::span<std::uint8_t> code) const;
    void decode(std::span<const std::uint8_t> code, std::span<float> x) const;

    friend bool operator==(const ScalarQuantizer&, const ScalarQuantizer&) = default;
};

struct InvertedList {
    std::vector<VectorId> ids;
    std::vector<float> vectors;       // Quantization::None
    std::vector<std::uint8_t> codes;  // Quantization::Scalar8

    std::size_t size() const {
        return ids.size();
    }

    friend bool operator==(const InvertedList&, const InvertedList&) = default;
};

/**
 * Inverted-file index: a flat coarse quantizer over `n_clusters` centroids
 * plus one inverted list per centroid. Immutable once built, so concurrent
 * read-only searches are safe.
 *
 * Cluster ids are dense 0..n_clusters-1. Shard fragments reuse this type
 * with local ids and keep the global mapping alongside (see splitter.hpp).
 */
class IvfIndex {
  public:
    IvfIndex() = default;
    IvfIndex(
            std::size_t dim,
            Metric metric,
            Quantization quantization,
            std::vector<float> centroids,
            ScalarQuantizer sq = {});

    std::size_t dim() const {
        return dim_;
    }
    std::size_t n_clusters() const {
        return lists_.size();
    }
    Metric metric() const {
        return metric_;
    }
    Quantization quantization() const {
        return quantization_;
    }
    const ScalarQuantizer& scalar_quantizer() const {
        return sq_;
    }
    std::span<const float> centroids() const {
        return centroids_;
    }
    std::span<const float> centroid(ClusterId c) const {
        return {centroids_.data() + std::size_t(c) * dim_, dim_};
    }
    const InvertedList& list(ClusterId c) const {
        return lists_.at(c);
    }
    std::size_t total_size() const;

    /// Storage footprint of one list: ids plus payload.
    std::uint64_t cluster_bytes(ClusterId c) const;
    std::vector<std::uint64_t> all_cluster_bytes() const;

    /// Nearest centroid under the index metric, ties to the lower id.
    ClusterId assign(std::span<const float> v) const;

    /// Assigns and appends every row of `data`.
    void add(const VectorDataset& data);

    /// Appends `v` to list `c` without reassignment (used when copying lists).
    void append(ClusterId c, VectorId id, std::span<const float> v);
    void append_list(ClusterId c, const InvertedList& src);

    /// Decoded copy of entry `i` of list `c`.
    void reconstruct(ClusterId c, std::size_t i, std::span<float> out) const;

    friend bool operator==(const IvfIndex&, const IvfIndex&) = default;

  private:
    std::size_t dim_ = 0;
    Metric metric_ = Metric::L2;
    Quantization quantization_ = Quantization::None;
    std::vector<float> centroids_;
    ScalarQuantizer sq_;
    std::vector<InvertedList> lists_;
};

struct KMeansOptions {
    int max_iterations = 25;
    double tolerance = 1e-4;
    /// Training subsample cap per centroid, 0 = train on everything.
    std::size_t max_points_per_centroid = 256;
};

/// Lloyd's k-means with k-means++ seeding, then assigns the whole dataset.
IvfIndex train_ivf(
        const VectorDataset& dataset,
        std::size_t n_clusters,
        Quantization quantization,
        std::uint64_t seed,
        Metric metric = Metric::L2,
        const KMeansOptions& opts = {});

/// Raw k-means centroids (row-major, n_clusters x dim).
std::vector<float> kmeans(
        const VectorDataset& dataset,
        std::size_t n_clusters,
        std::uint64_t seed,
        Metric metric,
        const KMeansOptions& opts);

ClusterShortlist coarse_quantize(
        const IvfIndex& index,
        std::span<const float> query,
        std::size_t nprobe,
        std::uint64_t query_id = 0);

std::vector<ClusterShortlist> coarse_quantize(
        const IvfIndex& index,
        const VectorDataset& queries,
        std::size_t nprobe);

/// Exact distances to every entry of the listed clusters, best `k` kept.
TopK scan_clusters(
        const IvfIndex& index,
        std::span<const float> query,
        std::span<const ClusterId> cluster_ids,
        std::size_t k,
        std::uint64_t query_id = 0);

/// Monolithic baseline: coarse quantization followed by a scan per query.
std::vector<TopK> search(
        const IvfIndex& index,
        const VectorDataset& queries,
        std::size_t nprobe,
        std::size_t k);

void check_query(const IvfIndex& index, std::span<const float> query);

// Binary index format "TIVF".
inline constexpr std::uint16_t kIndexFormatVersion = 1;
std::vector<std::uint8_t> serialize_index(const IvfIndex& index);
IvfIndex deserialize_index(std::span<const std::uint8_t> bytes);
void save_index(const IvfIndex& index, const std::filesystem::path& path);
IvfIndex load_index(const std::filesystem::path& path);

// Dataset container "TVEC": magic, version u16, dim u32, count u64, ids, rows.
std::vector<std::uint8_t> serialize_dataset(const VectorDataset& data);
VectorDataset deserialize_dataset(std::span<const std::uint8_t> bytes);
void save_dataset(const VectorDataset& data, const std::filesystem::path& path);
VectorDataset load_dataset(const std::filesystem::path& path);

} // namespace tiered
