#include "tiered/vecstore.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>
#include <unordered_set>

#include "tiered/bytes.hpp"
#include "tiered/random.hpp"

namespace tiered {

namespace {

float l2_sqr(const float* a, const float* b, std::size_t d) {
    float s0 = 0, s1 = 0, s2 = 0, s3 = 0;
    std::size_t i = 0;
    for (; i + 4 <= d; i += 4) {
        const float d0 = a[i] - b[i];
        const float d1 = a[i + 1] - b[i + 1];
        const float d2 = a[i + 2] - b[i + 2];
        const float d3 = a[i + 3] - b[i + 3];
        s0 += d0 * d0;
        s1 += d1 * d1;
        s2 += d2 * d2;
        s3 += d3 * d3;
    }
    for (; i < d; ++i) {
        const float t = a[i] - b[i];
        s0 += t * t;
    }
    return (s0 + s1) + (s2 + s3);
}

float inner_product(const float* a, const float* b, std::size_t d) {
    float s0 = 0, s1 = 0, s2 = 0, s3 = 0;
    std::size_t i = 0;
    for (; i + 4 <= d; i += 4) {
        s0 += a[i] * b[i];
        s1 += a[i + 1] * b[i + 1];
        s2 += a[i + 2] * b[i + 2];
        s3 += a[i + 3] * b[i + 3];
    }
    for (; i < d; ++i) {
        s0 += a[i] * b[i];
    }
    return (s0 + s1) + (s2 + s3);
}

inline float dist(Metric m, const float* a, const float* b, std::size_t d) {
    return m == Metric::L2 ? l2_sqr(a, b, d) : -inner_product(a, b, d);
}

void check_finite(std::span<const float> v, const char* what) {
    for (float x : v) {
        if (!std::isfinite(x)) {
            throw_error(ErrorKind::NonFinite, std::string("non-finite value in ") + what);
        }
    }
}

// Max-heap on hit_less keeping the k best hits seen so far.
class TopKCollector {
  public:
    explicit TopKCollector(std::size_t k) : k_(k) {
        heap_.reserve(k);
    }

    void push(VectorId id, float d) {
        if (k_ == 0) {
            return;
        }
        Hit h{id, d};
        if (heap_.size() < k_) {
            heap_.push_back(h);
            std::push_heap(heap_.begin(), heap_.end(), hit_less);
        } else if (hit_less(h, heap_.front())) {
            std::pop_heap(heap_.begin(), heap_.end(), hit_less);
            heap_.back() = h;
            std::push_heap(heap_.begin(), heap_.end(), hit_less);
        }
    }

    std::vector<Hit> take_sorted() {
        std::sort_heap(heap_.begin(), heap_.end(), hit_less);
        return std::move(heap_);
    }

  private:
    std::size_t k_;
    std::vector<Hit> heap_;
};

} // namespace

float distance(Metric metric, std::span<const float> a, std::span<const float> b) {
    TIERED_CHECK(a.size() == b.size(), ErrorKind::DimensionMismatch, "vector length mismatch");
    return dist(metric, a.data(), b.data(), a.size());
}

// ---------------------------------------------------------------- dataset

void VectorDataset::push_back(VectorId id, std::span<const float> v) {
    TIERED_CHECK(v.size() == dim, ErrorKind::DimensionMismatch, "row length != dim");
    data.insert(data.end(), v.begin(), v.end());
    ids.push_back(id);
}

void VectorDataset::validate() const {
    TIERED_CHECK(dim >= 1, ErrorKind::InvalidArgument, "dim must be >= 1");
    TIERED_CHECK(
            data.size() == ids.size() * dim,
            ErrorKind::DimensionMismatch,
            "data size is not ids.size() * dim");
    std::unordered_set<VectorId> seen;
    seen.reserve(ids.size());
    for (auto id : ids) {
        TIERED_CHECK(
                seen.insert(id).second,
                ErrorKind::InvalidArgument,
                "duplicate vector id " + std::to_string(id));
    }
    check_finite(data, "dataset");
}

VectorDataset VectorDataset::slice(std::size_t first, std::size_t count) const {
    TIERED_CHECK(first + count <= size(), ErrorKind::InvalidArgument, "slice out of range");
    VectorDataset out;
    out.dim = dim;
    out.data.assign(
            data.begin() + static_cast<std::ptrdiff_t>(first * dim),
            data.begin() + static_cast<std::ptrdiff_t>((first + count) * dim));
    out.ids.assign(
            ids.begin() + static_cast<std::ptrdiff_t>(first),
            ids.begin() + static_cast<std::ptrdiff_t>(first + count));
    return out;
}

// ---------------------------------------------------------------- scalar quantizer

ScalarQuantizer ScalarQuantizer::train(const VectorDataset& data) {
    ScalarQuantizer sq;
    sq.vmin.assign(data.dim, 0.0f);
    sq.vdiff.assign(data.dim, 0.0f);
    if (data.empty()) {
        return sq;
    }
    std::vector<float> vmax(data.dim);
    for (std::size_t j = 0; j < data.dim; ++j) {
        sq.vmin[j] = vmax[j] = data.data[j];
    }
    for (std::size_t i = 1; i < data.size(); ++i) {
        auto r = data.row(i);
        for (std::size_t j = 0; j < data.dim; ++j) {
            sq.vmin[j] = std::min(sq.vmin[j], r[j]);
            vmax[j] = std::max(vmax[j], r[j]);
        }
    }
    for (std::size_t j = 0; j < data.dim; ++j) {
        sq.vdiff[j] = vmax[j] - sq.vmin[j];
    }
    return sq;
}

void ScalarQuantizer::encode(std::span<const float> x, std::span<std::uint8_t> code) const {
    for (std::size_t j = 0; j < x.size(); ++j) {
        float t = vdiff[j] > 0 ? (x[j] - vmin[j]) / vdiff[j] : 0.0f;
        t = std::clamp(t, 0.0f, 1.0f);
        code[j] = static_cast<std::uint8_t>(std::lround(t * 255.0f));
    }
}

void ScalarQuantizer::decode(std::span<const std::uint8_t> code, std::span<float> x) const {
    for (std::size_t j = 0; j < code.size(); ++j) {
        x[j] = vmin[j] + (static_cast<float>(code[j]) / 255.0f) * vdiff[j];
    }
}

// ---------------------------------------------------------------- index

IvfIndex::IvfIndex(
        std::size_t dim,
        Metric metric,
        Quantization quantization,
        std::vector<float> centroids,
        ScalarQuantizer sq)
        : dim_(dim),
          metric_(metric),
          quantization_(quantization),
          centroids_(std::move(centroids)),
          sq_(std::move(sq)) {
    TIERED_CHECK(dim_ >= 1, ErrorKind::InvalidArgument, "dim must be >= 1");
    TIERED_CHECK(
            centroids_.size() % dim_ == 0,
            ErrorKind::DimensionMismatch,
            "centroid block is not a multiple of dim");
    if (quantization_ == Quantization::Scalar8) {
        TIERED_CHECK(
                sq_.vmin.size() == dim_ && sq_.vdiff.size() == dim_,
                ErrorKind::InvalidArgument,
                "scalar8 index needs per-dimension quantizer parameters");
    }
    lists_.resize(centroids_.size() / dim_);
}

std::size_t IvfIndex::total_size() const {
    std::size_t n = 0;
    for (const auto& l : lists_) {
        n += l.size();
    }
    return n;
}

std::uint64_t IvfIndex::cluster_bytes(ClusterId c) const {
    const auto& l = lists_.at(c);
    const std::uint64_t per_vec =
            quantization_ == Quantization::Scalar8 ? dim_ : dim_ * sizeof(float);
    return l.size() * (sizeof(VectorId) + per_vec);
}

std::vector<std::uint64_t> IvfIndex::all_cluster_bytes() const {
    std::vector<std::uint64_t> out(n_clusters());
    for (ClusterId c = 0; c < out.size(); ++c) {
        out[c] = cluster_bytes(c);
    }
    return out;
}

ClusterId IvfIndex::assign(std::span<const float> v) const {
    TIERED_CHECK(n_clusters() > 0, ErrorKind::InvalidArgument, "index has no clusters");
    ClusterId best = 0;
    float best_d = dist(metric_, v.data(), centroids_.data(), dim_);
    for (ClusterId c = 1; c < n_clusters(); ++c) {
        const float d = dist(metric_, v.data(), centroids_.data() + std::size_t(c) * dim_, dim_);
        if (d < best_d) {
            best_d = d;
            best = c;
        }
    }
    return best;
}

void IvfIndex::add(const VectorDataset& data) {
    TIERED_CHECK(data.dim == dim_, ErrorKind::DimensionMismatch, "dataset dim != index dim");
    for (std::size_t i = 0; i < data.size(); ++i) {
        auto r = data.row(i);
        append(assign(r), data.ids[i], r);
    }
}

void IvfIndex::append(ClusterId c, VectorId id, std::span<const float> v) {
    auto& l = lists_.at(c);
    l.ids.push_back(id);
    if (quantization_ == Quantization::Scalar8) {
        const auto off = l.codes.size();
        l.codes.resize(off + dim_);
        sq_.encode(v, std::span(l.codes).subspan(off, dim_));
    } else {
        l.vectors.insert(l.vectors.end(), v.begin(), v.end());
    }
}

void IvfIndex::append_list(ClusterId c, const InvertedList& src) {
    auto& l = lists_.at(c);
    l.ids.insert(l.ids.end(), src.ids.begin(), src.ids.end());
    l.vectors.insert(l.vectors.end(), src.vectors.begin(), src.vectors.end());
    l.codes.insert(l.codes.end(), src.codes.begin(), src.codes.end());
}

void IvfIndex::reconstruct(ClusterId c, std::size_t i, std::span<float> out) const {
    const auto& l = lists_.at(c);
    if (quantization_ == Quantization::Scalar8) {
        sq_.decode(std::span(l.codes).subspan(i * dim_, dim_), out);
    } else {
        std::copy_n(l.vectors.begin() + static_cast<std::ptrdiff_t>(i * dim_), dim_, out.begin());
    }
}

// ---------------------------------------------------------------- k-means

std::vector<float> kmeans(
        const VectorDataset& ds,
        std::size_t k,
        std::uint64_t seed,
        Metric metric,
        const KMeansOptions& opts) {
    const std::size_t n = ds.size();
    const std::size_t d = ds.dim;
    std::mt19937_64 rng(seed);

    std::vector<std::size_t> sample(n);
    std::iota(sample.begin(), sample.end(), 0);
    if (opts.max_points_per_centroid > 0 && n > k * opts.max_points_per_centroid) {
        for (std::size_t i = n - 1; i > 0; --i) {
            std::swap(sample[i], sample[uniform_index(rng, i + 1)]);
        }
        sample.resize(k * opts.max_points_per_centroid);
        std::sort(sample.begin(), sample.end());
    }
    const std::size_t m = sample.size();
    auto point = [&](std::size_t i) { return ds.data.data() + sample[i] * d; };

    // k-means++ seeding (always on squared L2)
    std::vector<float> cent(k * d);
    std::vector<double> mind(m);
    std::size_t first = uniform_index(rng, m);
    std::copy_n(point(first), d, cent.begin());
    for (std::size_t i = 0; i < m; ++i) {
        mind[i] = l2_sqr(point(i), cent.data(), d);
    }
    for (std::size_t c = 1; c < k; ++c) {
        const double total = std::accumulate(mind.begin(), mind.end(), 0.0);
        std::size_t pick = 0;
        if (total > 0) {
            double r = uniform_open(rng) * total;
            for (pick = 0; pick + 1 < m; ++pick) {
                r -= mind[pick];
                if (r <= 0 && mind[pick] > 0) {
                    break;
                }
            }
            while (mind[pick] == 0 && pick > 0) {
                --pick;
            }
        } else {
            pick = uniform_index(rng, m);
        }
        float* cc = cent.data() + c * d;
        std::copy_n(point(pick), d, cc);
        for (std::size_t i = 0; i < m; ++i) {
            mind[i] = std::min<double>(mind[i], l2_sqr(point(i), cc, d));
        }
    }

    // Lloyd iterations
    std::vector<ClusterId> assign(m);
    std::vector<double> sums(k * d);
    std::vector<std::size_t> counts(k);
    for (int it = 0; it < opts.max_iterations; ++it) {
        for (std::size_t i = 0; i < m; ++i) {
            const float* p = point(i);
            ClusterId best = 0;
            float best_d = dist(metric, p, cent.data(), d);
            for (ClusterId c = 1; c < k; ++c) {
                const float dd = dist(metric, p, cent.data() + c * d, d);
                if (dd < best_d) {
                    best_d = dd;
                    best = c;
                }
            }
            assign[i] = best;
        }
        std::fill(sums.begin(), sums.end(), 0.0);
        std::fill(counts.begin(), counts.end(), 0);
        for (std::size_t i = 0; i < m; ++i) {
            const float* p = point(i);
            double* s = sums.data() + assign[i] * d;
            for (std::size_t j = 0; j < d; ++j) {
                s[j] += p[j];
            }
            ++counts[assign[i]];
        }
        // empty clusters are reseeded from the farthest member of the largest one
        for (ClusterId c = 0; c < k; ++c) {
            if (counts[c] != 0) {
                continue;
            }
            const auto largest = static_cast<ClusterId>(
                    std::max_element(counts.begin(), counts.end()) - counts.begin());
            if (counts[largest] < 2) {
                break;
            }
            std::size_t far = m;
            float far_d = -1.0f;
            for (std::size_t i = 0; i < m; ++i) {
                if (assign[i] != largest) {
                    continue;
                }
                const float dd = l2_sqr(point(i), cent.data() + largest * d, d);
                if (dd > far_d) {
                    far_d = dd;
                    far = i;
                }
            }
            const float* p = point(far);
            for (std::size_t j = 0; j < d; ++j) {
                sums[largest * d + j] -= p[j];
                sums[c * d + j] = p[j];
            }
            --counts[largest];
            counts[c] = 1;
            assign[far] = c;
        }
        double moved = 0, norm = 0;
        for (ClusterId c = 0; c < k; ++c) {
            if (counts[c] == 0) {
                continue;
            }
            for (std::size_t j = 0; j < d; ++j) {
                const auto v = static_cast<float>(sums[c * d + j] / double(counts[c]));
                const double delta = double(v) - cent[c * d + j];
                moved += delta * delta;
                norm += double(cent[c * d + j]) * cent[c * d + j];
                cent[c * d + j] = v;
            }
        }
        if (std::sqrt(moved) <= opts.tolerance * std::max(std::sqrt(norm), 1e-12)) {
            break;
        }
    }

    // trained on a subsample: one last update over the full dataset
    if (m < n) {
        std::fill(sums.begin(), sums.end(), 0.0);
        std::fill(counts.begin(), counts.end(), 0);
        for (std::size_t i = 0; i < n; ++i) {
            const float* p = ds.data.data() + i * d;
            ClusterId best = 0;
            float best_d = dist(metric, p, cent.data(), d);
            for (ClusterId c = 1; c < k; ++c) {
                const float dd = dist(metric, p, cent.data() + c * d, d);
                if (dd < best_d) {
                    best_d = dd;
                    best = c;
                }
            }
            for (std::size_t j = 0; j < d; ++j) {
                sums[best * d + j] += p[j];
            }
            ++counts[best];
        }
        for (ClusterId c = 0; c < k; ++c) {
            for (std::size_t j = 0; counts[c] > 0 && j < d; ++j) {
                cent[c * d + j] = static_cast<float>(sums[c * d + j] / double(counts[c]));
            }
        }
    }
    return cent;
}

IvfIndex train_ivf(
        const VectorDataset& dataset,
        std::size_t n_clusters,
        Quantization quantization,
        std::uint64_t seed,
        Metric metric,
        const KMeansOptions& opts) {
    TIERED_CHECK(!dataset.empty(), ErrorKind::InvalidArgument, "empty dataset");
    TIERED_CHECK(n_clusters >= 1, ErrorKind::InvalidArgument, "n_clusters must be >= 1");
    TIERED_CHECK(
            n_clusters <= dataset.size(),
            ErrorKind::InvalidArgument,
            "n_clusters exceeds dataset size");
    dataset.validate();

    auto centroids = kmeans(dataset, n_clusters, seed, metric, opts);
    ScalarQuantizer sq;
    if (quantization == Quantization::Scalar8) {
        sq = ScalarQuantizer::train(dataset);
    }
    IvfIndex index(dataset.dim, metric, quantization, std::move(centroids), std::move(sq));
    index.add(dataset);
    return index;
}

// ---------------------------------------------------------------- search

void check_query(const IvfIndex& index, std::span<const float> query) {
    TIERED_CHECK(
            query.size() == index.dim(),
            ErrorKind::DimensionMismatch,
            "query dim " + std::to_string(query.size()) + " != index dim " +
                    std::to_string(index.dim()));
    check_finite(query, "query");
}

ClusterShortlist coarse_quantize(
        const IvfIndex& index,
        std::span<const float> query,
        std::size_t nprobe,
        std::uint64_t query_id) {
    check_query(index, query);
    TIERED_CHECK(nprobe >= 1, ErrorKind::InvalidArgument, "nprobe must be >= 1");
    const std::size_t n = index.n_clusters();
    std::vector<std::pair<float, ClusterId>> all(n);
    for (ClusterId c = 0; c < n; ++c) {
        all[c] = {dist(index.metric(), query.data(), index.centroid(c).data(), index.dim()), c};
    }
    const std::size_t take = std::min(nprobe, n);
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(take), all.end());
    ClusterShortlist out;
    out.query_id = query_id;
    out.cluster_ids.reserve(take);
    out.distances.reserve(take);
    for (std::size_t i = 0; i < take; ++i) {
        out.distances.push_back(all[i].first);
        out.cluster_ids.push_back(all[i].second);
    }
    return out;
}

std::vector<ClusterShortlist> coarse_quantize(
        const IvfIndex& index,
        const VectorDataset& queries,
        std::size_t nprobe) {
    TIERED_CHECK(
            queries.dim == index.dim(),
            ErrorKind::DimensionMismatch,
            "query dim != index dim");
    std::vector<ClusterShortlist> out;
    out.reserve(queries.size());
    for (std::size_t i = 0; i < queries.size(); ++i) {
        out.push_back(coarse_quantize(index, queries.row(i), nprobe, queries.ids[i]));
    }
    return out;
}

TopK scan_clusters(
        const IvfIndex& index,
        std::span<const float> query,
        std::span<const ClusterId> cluster_ids,
        std::size_t k,
        std::uint64_t query_id) {
    check_query(index, query);
    const std::size_t d = index.dim();
    TopKCollector top(k);
    std::vector<float> buf(d);
    for (ClusterId c : cluster_ids) {
        TIERED_CHECK(
                c < index.n_clusters(),
                ErrorKind::UnknownCluster,
                "unknown cluster id " + std::to_string(c));
        const auto& l = index.list(c);
        if (index.quantization() == Quantization::Scalar8) {
            for (std::size_t i = 0; i < l.size(); ++i) {
                index.scalar_quantizer().decode(std::span(l.codes).subspan(i * d, d), buf);
                top.push(l.ids[i], dist(index.metric(), query.data(), buf.data(), d));
            }
        } else {
            const float* v = l.vectors.data();
            for (std::size_t i = 0; i < l.size(); ++i, v += d) {
                top.push(l.ids[i], dist(index.metric(), query.data(), v, d));
            }
        }
    }
    return TopK{query_id, top.take_sorted()};
}

std::vector<TopK> search(
        const IvfIndex& index,
        const VectorDataset& queries,
        std::size_t nprobe,
        std::size_t k) {
    auto shortlists = coarse_quantize(index, queries, nprobe);
    std::vector<TopK> out;
    out.reserve(queries.size());
    for (std::size_t i = 0; i < queries.size(); ++i) {
        out.push_back(scan_clusters(
                index, queries.row(i), shortlists[i].cluster_ids, k, queries.ids[i]));
    }
    return out;
}

// ---------------------------------------------------------------- serialization

std::vector<std::uint8_t> serialize_index(const IvfIndex& index) {
    ByteWriter w;
    w.put_magic("TIVF");
    w.put<std::uint16_t>(kIndexFormatVersion);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(index.metric()));
    w.put<std::uint8_t>(static_cast<std::uint8_t>(index.quantization()));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(index.dim()));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(index.n_clusters()));
    w.put_span(index.centroids());
    if (index.quantization() == Quantization::Scalar8) {
        w.put_span(std::span<const float>(index.scalar_quantizer().vmin));
        w.put_span(std::span<const float>(index.scalar_quantizer().vdiff));
    }
    for (ClusterId c = 0; c < index.n_clusters(); ++c) {
        const auto& l = index.list(c);
        w.put<std::uint32_t>(c);
        w.put<std::uint64_t>(l.size());
        w.put_span(std::span<const VectorId>(l.ids));
        if (index.quantization() == Quantization::Scalar8) {
            w.put_span(std::span<const std::uint8_t>(l.codes));
        } else {
            w.put_span(std::span<const float>(l.vectors));
        }
    }
    return w.take();
}

IvfIndex deserialize_index(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes);
    r.expect_magic("TIVF");
    const auto version = r.get<std::uint16_t>();
    TIERED_CHECK(
            version == kIndexFormatVersion,
            ErrorKind::Format,
            "unsupported index format version " + std::to_string(version));
    const auto metric = r.get<std::uint8_t>();
    const auto quant = r.get<std::uint8_t>();
    TIERED_CHECK(metric <= 1 && quant <= 1, ErrorKind::Format, "bad metric/quantization tag");
    const auto dim = r.get<std::uint32_t>();
    const auto n = r.get<std::uint32_t>();
    TIERED_CHECK(dim >= 1, ErrorKind::Format, "zero dim");
    TIERED_CHECK(
            std::uint64_t(n) * dim * sizeof(float) <= r.remaining(),
            ErrorKind::Format,
            "truncated centroid block");
    std::vector<float> centroids(std::size_t(n) * dim);
    r.get_into(std::span(centroids));
    ScalarQuantizer sq;
    if (static_cast<Quantization>(quant) == Quantization::Scalar8) {
        sq.vmin.resize(dim);
        sq.vdiff.resize(dim);
        r.get_into(std::span(sq.vmin));
        r.get_into(std::span(sq.vdiff));
    }
    IvfIndex index(
            dim,
            static_cast<Metric>(metric),
            static_cast<Quantization>(quant),
            std::move(centroids),
            std::move(sq));
    const std::size_t per_vec =
            index.quantization() == Quantization::Scalar8 ? dim : dim * sizeof(float);
    for (std::uint32_t i = 0; i < n; ++i) {
        const auto c = r.get<std::uint32_t>();
        TIERED_CHECK(c < n, ErrorKind::Format, "cluster id out of range");
        const auto count = r.get<std::uint64_t>();
        TIERED_CHECK(
                count <= r.remaining() / (sizeof(VectorId) + per_vec),
                ErrorKind::Format,
                "truncated inverted list");
        InvertedList l;
        l.ids.resize(count);
        r.get_into(std::span(l.ids));
        if (index.quantization() == Quantization::Scalar8) {
            l.codes.resize(count * dim);
            r.get_into(std::span(l.codes));
        } else {
            l.vectors.resize(count * dim);
            r.get_into(std::span(l.vectors));
        }
        index.append_list(c, l);
    }
    TIERED_CHECK(r.remaining() == 0, ErrorKind::Format, "trailing bytes after index");
    return index;
}

void save_index(const IvfIndex& index, const std::filesystem::path& path) {
    write_file(path, serialize_index(index));
}

IvfIndex load_index(const std::filesystem::path& path) {
    return deserialize_index(read_file(path));
}

std::vector<std::uint8_t> serialize_dataset(const VectorDataset& data) {
    ByteWriter w;
    w.put_magic("TVEC");
    w.put<std::uint16_t>(1);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(data.dim));
    w.put<std::uint64_t>(data.size());
    w.put_span(std::span<const VectorId>(data.ids));
    w.put_span(std::span<const float>(data.data));
    return w.take();
}

VectorDataset deserialize_dataset(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes);
    r.expect_magic("TVEC");
    const auto version = r.get<std::uint16_t>();
    TIERED_CHECK(version == 1, ErrorKind::Format, "unsupported dataset version");
    VectorDataset ds;
    ds.dim = r.get<std::uint32_t>();
    const auto n = r.get<std::uint64_t>();
    TIERED_CHECK(ds.dim >= 1, ErrorKind::Format, "zero dim");
    TIERED_CHECK(
            n <= r.remaining() / (sizeof(VectorId) + ds.dim * sizeof(float)),
            ErrorKind::Format,
            "truncated dataset");
    ds.ids.resize(n);
    ds.data.resize(n * ds.dim);
    r.get_into(std::span(ds.ids));
    r.get_into(std::span(ds.data));
    TIERED_CHECK(r.remaining() == 0, ErrorKind::Format, "trailing bytes after dataset");
    return ds;
}

void save_dataset(const VectorDataset& data, const std::filesystem::path& path) {
    write_file(path, serialize_dataset(data));
}

VectorDataset load_dataset(const std::filesystem::path& path) {
    return deserialize_dataset(read_file(path));
}

} // namespace tiered
