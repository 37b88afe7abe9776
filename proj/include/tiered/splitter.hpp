#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "tiered/vecstore.hpp"

namespace tiered {

inline constexpr std::int32_t kColdTier = -1;
inline constexpr std::uint16_t kColdShardId = 0xFFFF;

/**
 * Placement of every cluster: on one accelerator shard under a dense local
 * id, or on the host (cold). Indexed by global cluster id.
 */
struct ShardMap {
    std::size_t n_shards = 0;
    std::vector<std::int32_t> shard_of;   // kColdTier for cold clusters
    std::vector<ClusterId> local_of;      // valid only for hot clusters
    std::vector<std::vector<ClusterId>> shard_clusters;  // local id -> global id
    std::vector<ClusterId> cold;          // ascending
    std::vector<std::uint64_t> shard_bytes;

    std::size_t n_clusters() const {
        return shard_of.size();
    }
    bool is_hot(ClusterId c) const {
        return shard_of.at(c) != kColdTier;
    }
    std::size_t n_hot() const;

    /// Throws Internal if the placement tables disagree with each other.
    void validate() const;

    friend bool operator==(const ShardMap&, const ShardMap&) = default;
};

/**
 * Sort `hot` by descending bytes (ties by ascending id) and deal the result
 * round-robin over the shards. Unknown or repeated ids are errors.
 */
ShardMap plan_shards(
        std::span<const std::uint64_t> cluster_bytes,
        std::span<const ClusterId> hot,
        std::size_t n_shards);

/// Map built from explicit per-shard cluster lists (used while shards swap).
ShardMap shard_map_from_lists(
        std::size_t n_clusters,
        std::vector<std::vector<ClusterId>> shard_clusters,
        std::span<const std::uint64_t> cluster_bytes);

/// An index fragment holding only resident clusters, under local ids.
struct ShardIndex {
    std::uint16_t shard_id = 0;
    std::vector<ClusterId> global_ids;  // local id -> global id
    IvfIndex index;

    std::size_t n_clusters() const {
        return global_ids.size();
    }

    friend bool operator==(const ShardIndex&, const ShardIndex&) = default;
};

struct SplitResult {
    ShardMap map;
    std::vector<ShardIndex> shards;
    ShardIndex cold;  // every non-hot cluster, shard_id = kColdShardId
};

/// Copies the clusters named in `local_to_global` out of `index`.
ShardIndex extract_shard(
        const IvfIndex& index,
        std::uint16_t shard_id,
        std::span<const ClusterId> local_to_global);

SplitResult split_index(const IvfIndex& index, std::span<const ClusterId> hot, std::size_t n_shards);

struct RemapResult {
    std::vector<std::vector<ClusterId>> shard_local;  // per shard, local ids
    std::vector<ClusterId> cold;                      // global ids
};

/// Routes one shortlist through the map; order inside each bucket follows
/// the shortlist.
RemapResult remap(const ShardMap& map, const ClusterShortlist& shortlist);

// Shard file "TSHD".
inline constexpr std::uint16_t kShardFormatVersion = 1;
std::vector<std::uint8_t> serialize_shard(const ShardIndex& shard);
ShardIndex deserialize_shard(std::span<const std::uint8_t> bytes);
void save_shard(const ShardIndex& shard, const std::filesystem::path& path);
ShardIndex load_shard(const std::filesystem::path& path);

} // namespace tiered
