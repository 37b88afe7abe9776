#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <numeric>
#include <random>
#include <set>

#include "tiered/bytes.hpp"
#include "tiered/random.hpp"
#include "tiered/synth.hpp"
#include "tiered/vecstore.hpp"

using namespace tiered;

namespace {

VectorDataset random_dataset(std::size_t n, std::size_t dim, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    NormalSampler normal;
    VectorDataset ds;
    ds.dim = dim;
    std::vector<float> v(dim);
    for (std::size_t i = 0; i < n; ++i) {
        for (auto& x : v) {
            x = static_cast<float>(normal(rng));
        }
        ds.push_back(1000 + i, v);
    }
    return ds;
}

std::vector<Hit> brute_force(const VectorDataset& data, Metric metric, std::span<const float> q, std::size_t k) {
    std::vector<Hit> all;
    for (std::size_t i = 0; i < data.size(); ++i) {
        all.push_back({data.ids[i], distance(metric, q, data.row(i))});
    }
    std::sort(all.begin(), all.end(), hit_less);
    all.resize(std::min(k, all.size()));
    return all;
}

} // namespace

TEST_CASE("distance kernels") {
    const std::vector<float> a{1, 2, 3, 4, 5};
    const std::vector<float> b{2, 0, 3, 1, -1};
    CHECK(distance(Metric::L2, a, b) == doctest::Approx(1 + 4 + 0 + 9 + 36));
    CHECK(distance(Metric::InnerProduct, a, b) == doctest::Approx(-(2 + 0 + 9 + 4 - 5)));
}

TEST_CASE("train_ivf on unit-square corners keeps one point per cluster") {
    VectorDataset ds;
    ds.dim = 2;
    const float pts[4][2] = {{0, 0}, {1, 0}, {0, 1}, {1, 1}};
    for (int i = 0; i < 4; ++i) {
        ds.push_back(i, pts[i]);
    }
    const auto index = train_ivf(ds, 4, Quantization::None, 3);
    std::multiset<std::pair<float, float>> cents;
    for (ClusterId c = 0; c < 4; ++c) {
        CHECK(index.list(c).size() == 1);
        cents.insert({index.centroid(c)[0], index.centroid(c)[1]});
    }
    CHECK(cents == std::multiset<std::pair<float, float>>{{0, 0}, {1, 0}, {0, 1}, {1, 1}});
}

TEST_CASE("single cluster centroid is the dataset mean") {
    const auto ds = random_dataset(300, 6, 5);
    const auto index = train_ivf(ds, 1, Quantization::None, 1);
    CHECK(index.list(0).size() == 300);
    for (std::size_t j = 0; j < 6; ++j) {
        double m = 0;
        for (std::size_t i = 0; i < ds.size(); ++i) {
            m += ds.row(i)[j];
        }
        CHECK(index.centroid(0)[j] == doctest::Approx(m / 300).epsilon(1e-5));
    }
}

TEST_CASE("well separated modes are recovered") {
    MixtureSpec spec;
    spec.dim = 8;
    spec.n_modes = 8;
    spec.center_scale = 20.0;
    spec.point_scale = 0.3;
    spec.seed = 11;
    const auto mix = make_mixture(spec);
    const auto ds = sample_vectors(mix, 1000, 2);
    const auto index = train_ivf(ds, 8, Quantization::None, 9);

    // oracle: nearest true mode per point, then every cluster must be pure
    std::vector<std::set<std::size_t>> modes_in_cluster(8);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        std::size_t best = 0;
        float bd = INFINITY;
        for (std::size_t m = 0; m < 8; ++m) {
            const float d = distance(
                    Metric::L2, ds.row(i), std::span<const float>(mix.centers.data() + m * 8, 8));
            if (d < bd) {
                bd = d;
                best = m;
            }
        }
        modes_in_cluster[index.assign(ds.row(i))].insert(best);
    }
    for (const auto& s : modes_in_cluster) {
        CHECK(s.size() == 1);
    }
}

TEST_CASE("every stored vector sits in its nearest centroid's list") {
    const auto ds = random_dataset(2000, 8, 21);
    for (Metric metric : {Metric::L2, Metric::InnerProduct}) {
        const auto index = train_ivf(ds, 32, Quantization::None, 4, metric);
        CHECK(index.total_size() == ds.size());
        std::vector<float> v(8);
        for (ClusterId c = 0; c < index.n_clusters(); ++c) {
            for (std::size_t i = 0; i < index.list(c).size(); ++i) {
                index.reconstruct(c, i, v);
                float best = INFINITY;
                ClusterId arg = 0;
                for (ClusterId o = 0; o < index.n_clusters(); ++o) {
                    const float d = distance(metric, v, index.centroid(o));
                    if (d < best) {
                        best = d;
                        arg = o;
                    }
                }
                CHECK(arg == c);
            }
        }
    }
}

TEST_CASE("training is deterministic") {
    const auto ds = random_dataset(1500, 8, 3);
    CHECK(train_ivf(ds, 20, Quantization::Scalar8, 42) == train_ivf(ds, 20, Quantization::Scalar8, 42));
    CHECK(serialize_index(train_ivf(ds, 20, Quantization::None, 7)) ==
          serialize_index(train_ivf(ds, 20, Quantization::None, 7)));
}

TEST_CASE("training errors") {
    VectorDataset empty;
    empty.dim = 4;
    CHECK_THROWS_AS(train_ivf(empty, 1, Quantization::None, 1), Error);
    const auto ds = random_dataset(5, 4, 1);
    CHECK_THROWS_AS(train_ivf(ds, 6, Quantization::None, 1), Error);
    auto bad = ds;
    bad.data[3] = NAN;
    CHECK_THROWS_AS(train_ivf(bad, 2, Quantization::None, 1), Error);
}

TEST_CASE("coarse quantization") {
    const auto ds = random_dataset(4000, 8, 8);
    const auto index = train_ivf(ds, 256, Quantization::None, 1);

    SUBCASE("query at a centroid") {
        const auto sl = coarse_quantize(index, index.centroid(5), 1);
        REQUIRE(sl.cluster_ids.size() == 1);
        CHECK(sl.cluster_ids[0] == 5);
    }
    SUBCASE("full probe is a sorted permutation") {
        const auto sl = coarse_quantize(index, ds.row(0), 256);
        std::vector<ClusterId> ids = sl.cluster_ids;
        std::sort(ids.begin(), ids.end());
        for (ClusterId c = 0; c < 256; ++c) {
            CHECK(ids[c] == c);
        }
        CHECK(std::is_sorted(sl.distances.begin(), sl.distances.end()));
    }
    SUBCASE("matches brute-force nearest centroids") {
        const auto qs = random_dataset(20, 8, 99);
        for (std::size_t q = 0; q < qs.size(); ++q) {
            std::vector<std::pair<float, ClusterId>> all;
            for (ClusterId c = 0; c < 256; ++c) {
                all.push_back({distance(Metric::L2, qs.row(q), index.centroid(c)), c});
            }
            std::sort(all.begin(), all.end());
            const auto sl = coarse_quantize(index, qs.row(q), 16);
            REQUIRE(sl.cluster_ids.size() == 16);
            for (std::size_t i = 0; i < 16; ++i) {
                CHECK(sl.cluster_ids[i] == all[i].second);
            }
        }
    }
    SUBCASE("errors") {
        std::vector<float> wrong(7, 0.0f);
        CHECK_THROWS_AS(coarse_quantize(index, wrong, 4), Error);
        std::vector<float> nan(8, NAN);
        CHECK_THROWS_AS(coarse_quantize(index, nan, 4), Error);
    }
}

TEST_CASE("scan_clusters") {
    const auto ds = random_dataset(3000, 8, 12);
    const auto index = train_ivf(ds, 16, Quantization::None, 2);
    const auto qs = random_dataset(1, 8, 77);

    CHECK(scan_clusters(index, qs.row(0), {}, 10).hits.empty());

    const std::vector<ClusterId> three{1, 4, 9};
    VectorDataset members;
    members.dim = 8;
    std::vector<float> v(8);
    for (ClusterId c : three) {
        for (std::size_t i = 0; i < index.list(c).size(); ++i) {
            index.reconstruct(c, i, v);
            members.push_back(index.list(c).ids[i], v);
        }
    }
    const auto top = scan_clusters(index, qs.row(0), three, 10);
    CHECK(top.hits == brute_force(members, Metric::L2, qs.row(0), 10));

    const auto all = scan_clusters(index, qs.row(0), three, 100000);
    CHECK(all.hits.size() == members.size());
    CHECK(std::is_sorted(all.hits.begin(), all.hits.end(), hit_less));

    const std::vector<ClusterId> unknown{99};
    CHECK_THROWS_AS(scan_clusters(index, qs.row(0), unknown, 5), Error);
}

TEST_CASE("full-probe search equals exact k-NN") {
    const auto ds = random_dataset(2000, 12, 31);
    const auto qs = random_dataset(50, 12, 32);
    for (Metric metric : {Metric::L2, Metric::InnerProduct}) {
        const auto index = train_ivf(ds, 24, Quantization::None, 3, metric);
        const auto res = search(index, qs, 24, 10);
        for (std::size_t q = 0; q < qs.size(); ++q) {
            CHECK(res[q].hits == brute_force(ds, metric, qs.row(q), 10));
        }
        CHECK(search(index, qs, 24, 10) == res);
    }
}

TEST_CASE("stored vector is found at distance zero") {
    const auto ds = random_dataset(1000, 8, 1);
    const auto index = train_ivf(ds, 10, Quantization::None, 1);
    VectorDataset q;
    q.dim = 8;
    q.push_back(0, ds.row(17));
    const auto res = search(index, q, 1, 1);
    REQUIRE(res[0].hits.size() == 1);
    CHECK(res[0].hits[0].id == ds.ids[17]);
    CHECK(res[0].hits[0].distance == 0.0f);
}

TEST_CASE("recall on clustered data") {
    MixtureSpec spec;
    spec.dim = 16;
    spec.n_modes = 64;
    const auto mix = make_mixture(spec);
    const auto ds = sample_vectors(mix, 20000, 1);
    const auto qs = sample_queries(mix, QueryWorkload{}, 100, 2);
    const auto index = train_ivf(ds, 128, Quantization::None, 1);
    const auto res = search(index, qs, 8, 10);
    std::size_t found = 0;
    for (std::size_t q = 0; q < qs.size(); ++q) {
        const auto truth = brute_force(ds, Metric::L2, qs.row(q), 10);
        for (const auto& h : res[q].hits) {
            found += std::count_if(truth.begin(), truth.end(), [&](const Hit& t) { return t.id == h.id; });
        }
    }
    CHECK(double(found) / 1000.0 >= 0.7);
}

TEST_CASE("scalar8 round trip stays within one quantization step") {
    const auto ds = random_dataset(500, 8, 4);
    const auto sq = ScalarQuantizer::train(ds);
    std::vector<std::uint8_t> code(8);
    std::vector<float> back(8);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        sq.encode(ds.row(i), code);
        sq.decode(code, back);
        for (std::size_t j = 0; j < 8; ++j) {
            CHECK(std::abs(back[j] - ds.row(i)[j]) <= sq.vdiff[j] / 255.0f * 0.5f + 1e-5f);
        }
    }
}

TEST_CASE("index and dataset serialization") {
    const auto ds = random_dataset(800, 8, 6);
    for (Quantization q : {Quantization::None, Quantization::Scalar8}) {
        const auto index = train_ivf(ds, 10, q, 5, Metric::InnerProduct);
        CHECK(deserialize_index(serialize_index(index)) == index);
    }
    const auto back = deserialize_dataset(serialize_dataset(ds));
    CHECK(back.ids == ds.ids);
    CHECK(back.data == ds.data);

    auto bytes = serialize_index(train_ivf(ds, 4, Quantization::None, 1));
    auto bad_magic = bytes;
    bad_magic[0] = 'X';
    CHECK_THROWS_AS(deserialize_index(bad_magic), Error);
    auto bad_version = bytes;
    bad_version[4] = 99;
    CHECK_THROWS_AS(deserialize_index(bad_version), Error);
    bytes.resize(bytes.size() - 3);
    CHECK_THROWS_AS(deserialize_index(bytes), Error);

    const auto path = std::filesystem::temp_directory_path() / "tiered_test_index.tivf";
    const auto index = train_ivf(ds, 4, Quantization::None, 1);
    save_index(index, path);
    CHECK(load_index(path) == index);
    std::filesystem::remove(path);
}
