#include <doctest.h>

#include <filesystem>

#include "tiered/bytes.hpp"
#include "tiered/io.hpp"

using namespace tiered;

namespace {

template <class T>
T round_trip(const T& value) {
    const Json j = value;
    return Json::parse(j.dump()).get<T>();
}

std::filesystem::path scratch(const char* name) {
    auto dir = std::filesystem::temp_directory_path() / "tiered_io_test";
    std::filesystem::create_directories(dir);
    return dir / name;
}

} // namespace

TEST_CASE("profile, curve and models round-trip") {
    const auto profile = make_access_profile({5, 0, 9, 9}, {100, 200, 300, 400}, 2, 8);
    const auto back = round_trip(profile);
    CHECK(back.counts == profile.counts);
    CHECK(back.ranking == profile.ranking);
    CHECK(back.cluster_bytes == profile.cluster_bytes);
    CHECK(back.total_accesses == profile.total_accesses);

    const auto curve = coverage_curve(profile);
    const auto c2 = round_trip(curve);
    REQUIRE(c2.points.size() == curve.points.size());
    for (std::size_t k = 0; k < curve.points.size(); ++k) {
        CHECK(c2.points[k].mean_hitrate == curve.points[k].mean_hitrate);
        CHECK(c2.points[k].hot_bytes == curve.points[k].hot_bytes);
    }

    const PiecewiseLinear f({1, 4}, {2.0, 0.5}, {1.0, 7.0}, 0.125);
    CHECK(round_trip(f) == f);
    const LatencyModel lm{PiecewiseLinear::linear(0.3, 0.01), f};
    const auto lm2 = round_trip(lm);
    CHECK(lm2.cq == lm.cq);
    CHECK(lm2.lut == lm.lut);

    // ranking is rebuilt from counts, so a tampered ranking is caught
    Json bad = profile;
    bad["ranking"] = std::vector<ClusterId>{0, 1, 2, 3};
    CHECK_THROWS_AS(bad.get<AccessProfile>(), Error);
}

TEST_CASE("doubles survive text exactly") {
    Scenario sc;
    sc.lambda_rps = 0.1 + 0.2;
    sc.latency = {PiecewiseLinear::linear(1.0 / 3.0, 2.0 / 7.0), PiecewiseLinear::linear(1e-300, 123456.789)};
    sc.memory.kv_bytes = 3.7e10;
    sc.memory.index_bytes = {0, 1.5e9, 3.8e9};
    sc.hits = {0.6180339887, 0.0612, {0.1, 0.2}};
    sc.mode = SimMode::DedicatedGpu;
    sc.seed = 0xFFFFFFFFFFFFFFFFull;
    const Json j = sc;
    const auto back = Json::parse(dump_json(j)).get<Scenario>();
    CHECK(back.lambda_rps == sc.lambda_rps);
    CHECK(back.latency.cq == sc.latency.cq);
    CHECK(back.latency.lut == sc.latency.lut);
    CHECK(back.memory.index_bytes == sc.memory.index_bytes);
    CHECK(back.hits.trace == sc.hits.trace);
    CHECK(back.mode == SimMode::DedicatedGpu);
    CHECK(back.seed == sc.seed);
    CHECK(dump_json(Json(back)) == dump_json(j));
}

TEST_CASE("plan and shard map") {
    PartitionPlan p;
    p.rho = 0.5;
    p.n_clusters = 4;
    p.n_hot = 2;
    p.hot_cluster_ids = {3, 1};
    p.trace.push_back({0, 1, 0.5, 12.5, 0.4, false});
    const auto p2 = round_trip(p);
    CHECK(p2.hot_cluster_ids == p.hot_cluster_ids);
    REQUIRE(p2.trace.size() == 1);
    CHECK(p2.trace[0].mu_rps == 12.5);

    Json wrong = p;
    wrong["n_hot"] = 3;
    CHECK_THROWS_AS(wrong.get<PartitionPlan>(), Error);

    const std::vector<std::uint64_t> bytes{10, 20, 30, 40};
    const ClusterId hot[] = {3, 1};
    const auto map = plan_shards(bytes, hot, 2);
    CHECK(round_trip(map) == map);
    Json broken = map;
    broken["shard_of"][3] = -1;
    CHECK_THROWS_AS(broken.get<ShardMap>(), Error);
}

TEST_CASE("documents") {
    auto doc = make_document("plan", {{"profile", "00000000000000aa"}});
    CHECK(doc["format"] == "tieredrag.plan");
    CHECK(doc["version"] == kDocumentVersion);
    CHECK_NOTHROW(check_document(doc, "plan"));
    CHECK_THROWS_AS(check_document(doc, "profile"), Error);
    doc["version"] = 99;
    CHECK_THROWS_AS(check_document(doc, "plan"), Error);
    CHECK_THROWS_AS(check_document(Json::array(), "plan"), Error);

    SUBCASE("missing fields are Format errors") {
        try {
            Json{{"rho", 0.1}}.get<PartitionPlan>();
            FAIL("no throw");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::Format);
        }
    }
}

TEST_CASE("stale inputs are refused") {
    const auto input = scratch("input.bin");
    write_text_file(input, "first");
    auto doc = make_document("profile", {{"index", file_digest(input)}});
    const auto path = scratch("doc.json");
    write_json(path, doc);
    const auto loaded = read_json(path);
    CHECK(loaded == doc);
    CHECK_NOTHROW(require_input(loaded, "index", input));
    write_text_file(input, "second");
    try {
        require_input(loaded, "index", input);
        FAIL("no throw");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::StaleInput);
    }
    CHECK_THROWS_AS(require_input(loaded, "dataset", input), Error);

    write_text_file(path, "{not json");
    CHECK_THROWS_AS(read_json(path), Error);
    std::filesystem::remove_all(input.parent_path());
}
