#include "tiered/splitter.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "tiered/bytes.hpp"

namespace tiered {

std::size_t ShardMap::n_hot() const {
    std::size_t n = 0;
    for (const auto& s : shard_clusters) {
        n += s.size();
    }
    return n;
}

void ShardMap::validate() const {
    const std::size_t n = shard_of.size();
    TIERED_CHECK(
            local_of.size() == n && shard_clusters.size() == n_shards && shard_bytes.size() == n_shards,
            ErrorKind::Internal,
            "shard map table sizes disagree");
    std::vector<int> seen(n, 0);
    for (std::size_t s = 0; s < n_shards; ++s) {
        for (std::size_t l = 0; l < shard_clusters[s].size(); ++l) {
            const ClusterId g = shard_clusters[s][l];
            TIERED_CHECK(g < n, ErrorKind::Internal, "shard map holds an unknown cluster");
            TIERED_CHECK(
                    shard_of[g] == std::int32_t(s) && local_of[g] == l,
                    ErrorKind::Internal,
                    "shard map forward and reverse tables disagree");
            ++seen[g];
        }
    }
    for (ClusterId g : cold) {
        TIERED_CHECK(g < n && shard_of[g] == kColdTier, ErrorKind::Internal, "bad cold entry");
        ++seen[g];
    }
    for (std::size_t g = 0; g < n; ++g) {
        TIERED_CHECK(seen[g] == 1, ErrorKind::Internal, "hot and cold sets do not partition the clusters");
    }
}

ShardMap shard_map_from_lists(
        std::size_t n_clusters,
        std::vector<std::vector<ClusterId>> shard_clusters,
        std::span<const std::uint64_t> cluster_bytes) {
    TIERED_CHECK(
            cluster_bytes.size() == n_clusters,
            ErrorKind::InvalidArgument,
            "cluster byte table has the wrong length");
    ShardMap m;
    m.n_shards = shard_clusters.size();
    m.shard_of.assign(n_clusters, kColdTier);
    m.local_of.assign(n_clusters, 0);
    m.shard_bytes.assign(m.n_shards, 0);
    for (std::size_t s = 0; s < m.n_shards; ++s) {
        for (std::size_t l = 0; l < shard_clusters[s].size(); ++l) {
            const ClusterId g = shard_clusters[s][l];
            TIERED_CHECK(
                    g < n_clusters,
                    ErrorKind::UnknownCluster,
                    "unknown cluster id " + std::to_string(g));
            TIERED_CHECK(
                    m.shard_of[g] == kColdTier,
                    ErrorKind::InvalidArgument,
                    "cluster " + std::to_string(g) + " placed twice");
            m.shard_of[g] = std::int32_t(s);
            m.local_of[g] = ClusterId(l);
            m.shard_bytes[s] += cluster_bytes[g];
        }
    }
    for (std::size_t g = 0; g < n_clusters; ++g) {
        if (m.shard_of[g] == kColdTier) {
            m.cold.push_back(ClusterId(g));
        }
    }
    m.shard_clusters = std::move(shard_clusters);
    return m;
}

ShardMap plan_shards(
        std::span<const std::uint64_t> cluster_bytes,
        std::span<const ClusterId> hot,
        std::size_t n_shards) {
    TIERED_CHECK(n_shards >= 1, ErrorKind::InvalidArgument, "need at least one shard");
    TIERED_CHECK(n_shards < kColdShardId, ErrorKind::InvalidArgument, "too many shards");
    std::vector<ClusterId> order(hot.begin(), hot.end());
    for (ClusterId c : order) {
        TIERED_CHECK(
                c < cluster_bytes.size(),
                ErrorKind::UnknownCluster,
                "plan references unknown cluster " + std::to_string(c));
    }
    std::sort(order.begin(), order.end(), [&](ClusterId a, ClusterId b) {
        return cluster_bytes[a] > cluster_bytes[b] || (cluster_bytes[a] == cluster_bytes[b] && a < b);
    });
    std::vector<std::vector<ClusterId>> lists(n_shards);
    for (std::size_t i = 0; i < order.size(); ++i) {
        lists[i % n_shards].push_back(order[i]);
    }
    return shard_map_from_lists(cluster_bytes.size(), std::move(lists), cluster_bytes);
}

ShardIndex extract_shard(
        const IvfIndex& index,
        std::uint16_t shard_id,
        std::span<const ClusterId> local_to_global) {
    std::vector<float> centroids;
    centroids.reserve(local_to_global.size() * index.dim());
    for (ClusterId g : local_to_global) {
        TIERED_CHECK(
                g < index.n_clusters(),
                ErrorKind::UnknownCluster,
                "unknown cluster id " + std::to_string(g));
        const auto c = index.centroid(g);
        centroids.insert(centroids.end(), c.begin(), c.end());
    }
    ShardIndex s;
    s.shard_id = shard_id;
    s.global_ids.assign(local_to_global.begin(), local_to_global.end());
    s.index = IvfIndex(
            index.dim(), index.metric(), index.quantization(), std::move(centroids), index.scalar_quantizer());
    for (std::size_t l = 0; l < local_to_global.size(); ++l) {
        s.index.append_list(ClusterId(l), index.list(local_to_global[l]));
    }
    return s;
}

SplitResult split_index(const IvfIndex& index, std::span<const ClusterId> hot, std::size_t n_shards) {
    SplitResult r;
    r.map = plan_shards(index.all_cluster_bytes(), hot, n_shards);
    for (std::size_t s = 0; s < n_shards; ++s) {
        r.shards.push_back(extract_shard(index, std::uint16_t(s), r.map.shard_clusters[s]));
    }
    r.cold = extract_shard(index, kColdShardId, r.map.cold);
    return r;
}

RemapResult remap(const ShardMap& map, const ClusterShortlist& shortlist) {
    RemapResult r;
    r.shard_local.resize(map.n_shards);
    for (ClusterId g : shortlist.cluster_ids) {
        TIERED_CHECK(
                g < map.n_clusters(),
                ErrorKind::UnknownCluster,
                "unknown cluster id " + std::to_string(g));
        const auto s = map.shard_of[g];
        if (s == kColdTier) {
            r.cold.push_back(g);
        } else {
            r.shard_local[std::size_t(s)].push_back(map.local_of[g]);
        }
    }
    return r;
}

std::vector<std::uint8_t> serialize_shard(const ShardIndex& shard) {
    const auto& idx = shard.index;
    TIERED_CHECK(
            idx.n_clusters() == shard.global_ids.size(),
            ErrorKind::Internal,
            "shard id table does not match its index");
    ByteWriter w;
    w.put_magic("TSHD");
    w.put<std::uint16_t>(kShardFormatVersion);
    w.put<std::uint16_t>(shard.shard_id);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(idx.metric()));
    w.put<std::uint8_t>(static_cast<std::uint8_t>(idx.quantization()));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(idx.dim()));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(idx.n_clusters()));
    if (idx.quantization() == Quantization::Scalar8) {
        w.put_span(std::span<const float>(idx.scalar_quantizer().vmin));
        w.put_span(std::span<const float>(idx.scalar_quantizer().vdiff));
    }
    for (ClusterId l = 0; l < idx.n_clusters(); ++l) {
        const auto& list = idx.list(l);
        w.put<std::uint32_t>(shard.global_ids[l]);
        w.put<std::uint32_t>(l);
        w.put<std::uint64_t>(list.size());
        w.put_span(idx.centroid(l));
        w.put_span(std::span<const VectorId>(list.ids));
        if (idx.quantization() == Quantization::Scalar8) {
            w.put_span(std::span<const std::uint8_t>(list.codes));
        } else {
            w.put_span(std::span<const float>(list.vectors));
        }
    }
    return w.take();
}

ShardIndex deserialize_shard(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes);
    r.expect_magic("TSHD");
    const auto version = r.get<std::uint16_t>();
    TIERED_CHECK(
            version == kShardFormatVersion,
            ErrorKind::Format,
            "unsupported shard format version " + std::to_string(version));
    ShardIndex s;
    s.shard_id = r.get<std::uint16_t>();
    const auto metric = r.get<std::uint8_t>();
    const auto quant = r.get<std::uint8_t>();
    TIERED_CHECK(metric <= 1 && quant <= 1, ErrorKind::Format, "bad metric/quantization tag");
    const auto dim = r.get<std::uint32_t>();
    const auto n = r.get<std::uint32_t>();
    TIERED_CHECK(dim >= 1, ErrorKind::Format, "zero dim");
    const bool sq8 = static_cast<Quantization>(quant) == Quantization::Scalar8;
    ScalarQuantizer sq;
    if (sq8) {
        sq.vmin.resize(dim);
        sq.vdiff.resize(dim);
        r.get_into(std::span(sq.vmin));
        r.get_into(std::span(sq.vdiff));
    }
    const std::size_t per_vec = sq8 ? dim : dim * sizeof(float);
    const std::size_t header = 2 * sizeof(std::uint32_t) + sizeof(std::uint64_t) + dim * sizeof(float);
    TIERED_CHECK(std::uint64_t(n) * header <= r.remaining(), ErrorKind::Format, "truncated shard");

    std::vector<float> centroids(std::size_t(n) * dim);
    std::vector<InvertedList> lists(n);
    for (std::uint32_t i = 0; i < n; ++i) {
        const auto g = r.get<std::uint32_t>();
        const auto l = r.get<std::uint32_t>();
        TIERED_CHECK(l == i, ErrorKind::Format, "local cluster ids must be dense and ordered");
        const auto count = r.get<std::uint64_t>();
        r.get_into(std::span(centroids).subspan(std::size_t(i) * dim, dim));
        TIERED_CHECK(
                count <= r.remaining() / (sizeof(VectorId) + per_vec),
                ErrorKind::Format,
                "truncated inverted list");
        auto& list = lists[i];
        list.ids.resize(count);
        r.get_into(std::span(list.ids));
        if (sq8) {
            list.codes.resize(count * dim);
            r.get_into(std::span(list.codes));
        } else {
            list.vectors.resize(count * dim);
            r.get_into(std::span(list.vectors));
        }
        s.global_ids.push_back(g);
    }
    TIERED_CHECK(r.remaining() == 0, ErrorKind::Format, "trailing bytes after shard");
    auto sorted = s.global_ids;
    std::sort(sorted.begin(), sorted.end());
    TIERED_CHECK(
            std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end(),
            ErrorKind::Format,
            "shard lists a global cluster twice");
    s.index = IvfIndex(dim, static_cast<Metric>(metric), static_cast<Quantization>(quant), std::move(centroids), std::move(sq));
    for (std::uint32_t i = 0; i < n; ++i) {
        s.index.append_list(i, lists[i]);
    }
    return s;
}

void save_shard(const ShardIndex& shard, const std::filesystem::path& path) {
    write_file(path, serialize_shard(shard));
}

ShardIndex load_shard(const std::filesystem::path& path) {
    return deserialize_shard(read_file(path));
}

} // namespace tiered
