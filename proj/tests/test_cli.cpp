#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <string>

#include "tiered/bytes.hpp"
#include "tiered/io.hpp"

namespace fs = std::filesystem;
using namespace tiered;

namespace {

const std::string kTool = TIERED_CLI_PATH;

fs::path fresh(const std::string& name) {
    const auto d = fs::temp_directory_path() / ("tiered_cli_" + name);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

struct Run {
    int code = -1;
    std::string out;
    std::string err;
};

Run run(const fs::path& dir, const std::string& args, const std::string& stdin_file = "") {
    const auto out = dir / "stdout.txt";
    const auto err = dir / "stderr.txt";
    std::string cmd = kTool + " --out-dir " + dir.string() + " " + args;
    if (!stdin_file.empty()) {
        cmd += " < " + stdin_file;
    }
    cmd += " > " + out.string() + " 2> " + err.string();
    const int status = std::system(cmd.c_str());
    Run r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = read_text_file(out);
    r.err = read_text_file(err);
    fs::remove(out);
    fs::remove(err);
    return r;
}

// log lines may come first; the error object is always the last line
Json error_line(const Run& r) {
    auto text = r.err;
    while (!text.empty() && text.back() == '\n') {
        text.pop_back();
    }
    return Json::parse(text.substr(text.rfind('\n') == std::string::npos ? 0 : text.rfind('\n') + 1));
}

// A small corpus keeps the multi-command cases quick.
void small_chain(const fs::path& d) {
    REQUIRE(run(d, "gen-data --n-vectors 4000 --n-modes 32 --n-calibration 400 --n-queries 40").code == 0);
    REQUIRE(run(d, "build-index --n-clusters 32").code == 0);
    REQUIRE(run(d, "profile --nprobe 4").code == 0);
}

} // namespace

TEST_CASE("default pipeline end to end") {
    const auto d = fresh("full");
    for (const char* step : {"gen-data", "build-index", "profile", "plan", "split"}) {
        const auto r = run(d, step);
        INFO(step << ": " << r.err);
        REQUIRE(r.code == 0);
    }
    const auto served = run(d, "serve --input " + (d / "queries.jsonl").string());
    REQUIRE(served.code == 0);
    std::istringstream lines(served.out);
    std::string line;
    std::size_t n = 0;
    while (std::getline(lines, line)) {
        const auto j = Json::parse(line);
        CHECK(j["hits"].size() == 10);
        CHECK(j["t_search_ms"].get<double>() > 0);
        ++n;
    }
    CHECK(n == 1000);
    REQUIRE(run(d, "simulate --mode cpu_only --mode tiered").code == 0);
    REQUIRE(run(d, "report").code == 0);
    for (const char* f : {"sweep.csv", "attainment.svg", "breakdown.svg", "report.json", "shards/shard_000.tshd"}) {
        CHECK(fs::is_regular_file(d / f));
    }

    // paired runs share arrivals, so tiered never trails cpu_only here
    const auto sweep = read_json(d / "sweep.json");
    const auto& rows = sweep["rows"];
    REQUIRE(rows.size() == 20);
    for (std::size_t i = 0; i < rows.size(); i += 2) {
        REQUIRE(rows[i]["mode"] == "cpu_only");
        REQUIRE(rows[i + 1]["mode"] == "tiered");
        CHECK(rows[i + 1]["slo_attainment"].get<double>() >= rows[i]["slo_attainment"].get<double>());
    }
    fs::remove_all(d);
}

TEST_CASE("very loose SLO plans no hot tier") {
    const auto d = fresh("loose");
    small_chain(d);
    const auto r = run(d, "plan --slo-search-ms 100000");
    REQUIRE(r.code == 0);
    const auto plan = read_json(d / "plan.json");
    CHECK(plan["plan"]["rho"] == 0.0);
    CHECK(plan["plan"]["hot_cluster_ids"].empty());
    CHECK(Json::parse(r.out)["rho"] == 0.0);
    fs::remove_all(d);
}

TEST_CASE("stale chains are refused") {
    const auto d = fresh("stale");
    small_chain(d);
    REQUIRE(run(d, "plan").code == 0);
    REQUIRE(run(d, "split").code == 0);
    // a rebuilt index invalidates the plan and the shards made from it
    REQUIRE(run(d, "build-index --n-clusters 32 --seed 99").code == 0);
    auto r = run(d, "split");
    CHECK(r.code == 1);
    CHECK(error_line(r)["kind"] == "stale_input");
    r = run(d, "serve --input /dev/null");
    CHECK(r.code == 1);
    CHECK(error_line(r)["kind"] == "stale_input");
    fs::remove_all(d);
}

TEST_CASE("machine-readable errors") {
    const auto d = fresh("errors");
    auto r = run(d, "plan");
    CHECK(r.code == 1);
    CHECK(error_line(r)["kind"] == "io");
    CHECK(error_line(r)["error"].get<std::string>().find("profile.json") != std::string::npos);

    r = run(d, "plan --no-such-flag");
    CHECK(r.code == 2);
    CHECK(error_line(r).contains("error"));

    r = run(d, "");
    CHECK(r.code == 2);

    write_text_file(d / "profile.json", R"({"format": "tieredrag.profile", "version": 7})");
    r = run(d, "plan");
    CHECK(r.code == 1);
    CHECK(error_line(r)["kind"] == "format");

    write_text_file(d / "profile.json", R"({"format": "tieredrag.sweep", "version": 1})");
    r = run(d, "plan");
    CHECK(error_line(r)["kind"] == "format");
    fs::remove_all(d);
}

TEST_CASE("infeasible plans propagate") {
    const auto d = fresh("infeasible");
    small_chain(d);
    // no hot tier fits in one byte, and the cold path alone misses a 1 ms SLO
    auto r = run(d, "plan --kv-bytes 1 --slo-search-ms 1");
    CHECK(r.code == 1);
    CHECK(error_line(r)["kind"] == "infeasible");
    CHECK_FALSE(fs::exists(d / "plan.json"));
    r = run(d, "plan --kv-bytes 1 --slo-search-ms 1 --allow-unmet");
    CHECK(r.code == 0);
    CHECK(read_json(d / "plan.json")["plan"]["meets_bound"] == false);
    fs::remove_all(d);
}

TEST_CASE("serve answers bad lines in place") {
    const auto d = fresh("serve");
    small_chain(d);
    REQUIRE(run(d, "plan").code == 0);
    REQUIRE(run(d, "split").code == 0);
    const auto first = read_text_file(d / "queries.jsonl").substr(0, read_text_file(d / "queries.jsonl").find('\n') + 1);
    write_text_file(
            d / "requests.jsonl",
            first + "not json\n" + R"({"id": 5, "query": [1, 2], "k": 3})" + "\n\n" + first);
    const auto r = run(d, "serve --max-batch 4 --input " + (d / "requests.jsonl").string());
    REQUIRE(r.code == 0);
    std::istringstream lines(r.out);
    std::string line;
    std::vector<Json> out;
    while (std::getline(lines, line)) {
        out.push_back(Json::parse(line));
    }
    REQUIRE(out.size() == 4);
    CHECK(out[0].contains("hits"));
    CHECK(out[1]["kind"] == "format");
    CHECK(out[1]["id"].is_null());
    CHECK(out[2]["id"] == 5);
    CHECK(out[2]["kind"] == "dimension_mismatch");
    CHECK(out[3]["hits"] == out[0]["hits"]);
    fs::remove_all(d);
}

TEST_CASE("output directory from the environment") {
    const auto d = fresh("env");
    const auto cmd = "TIERED_OUTPUT_DIR=" + d.string() + " " + kTool +
                     " gen-data --n-vectors 100 --n-modes 4 --n-calibration 10 --n-queries 5 > /dev/null 2>&1";
    REQUIRE(std::system(cmd.c_str()) == 0);
    CHECK(fs::is_regular_file(d / "data.tvec"));
    const auto doc = read_json(d / "dataset.json");
    CHECK(doc["files"]["data.tvec"] == file_digest(d / "data.tvec"));
    fs::remove_all(d);
}
