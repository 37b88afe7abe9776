// tieredrag: one pipeline stage per subcommand. Artifacts land in the output
// directory (--out-dir, else $TIERED_OUTPUT_DIR, else the working directory)
// and every input defaults to the file an upstream stage writes there.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tiered/bytes.hpp"
#include "tiered/desk.hpp"
#include "tiered/error.hpp"
#include "tiered/io.hpp"
#include "tiered/log.hpp"
#include "tiered/pipeline.hpp"
#include "tiered/splitter.hpp"

namespace fs = std::filesystem;
using namespace tiered;

namespace {

struct Common {
    std::string out_dir;
    std::string log_level = "warn";

    fs::path dir() const {
        if (!out_dir.empty()) {
            return out_dir;
        }
        if (const char* env = std::getenv("TIERED_OUTPUT_DIR"); env != nullptr && *env != '\0') {
            return env;
        }
        return ".";
    }
    fs::path out(const std::string& name) const {
        return dir() / name;
    }
    fs::path in(const std::string& given, const std::string& fallback) const {
        return given.empty() ? out(fallback) : fs::path(given);
    }
};

void require_file(const fs::path& p) {
    TIERED_CHECK(fs::is_regular_file(p), ErrorKind::Io, "missing input file " + p.string());
}

fs::path prepare_dir(const Common& c) {
    const auto d = c.dir();
    std::error_code ec;
    fs::create_directories(d, ec);
    TIERED_CHECK(!ec && fs::is_directory(d), ErrorKind::Io, "cannot create output directory " + d.string());
    return d;
}

Json read_doc(const fs::path& p, const std::string& kind) {
    require_file(p);
    auto doc = read_json(p);
    check_document(doc, kind);
    return doc;
}

template <class T>
T doc_field(const Json& doc, const char* key) {
    TIERED_CHECK(doc.contains(key), ErrorKind::Format, std::string("document lacks '") + key + "'");
    try {
        return doc.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw_error(ErrorKind::Format, std::string("bad '") + key + "': " + e.what());
    }
}

// ---------------------------------------------------------------- gen-data

struct GenData {
    DeskConfig desk;
    std::uint64_t query_seed = 24;
    std::size_t n_queries = 1000;
    std::size_t nprobe = 16;
    std::size_t k = 10;
};

void run_gen_data(const Common& c, const GenData& g) {
    prepare_dir(c);
    const auto mix = make_mixture(g.desk.mixture);
    const auto data = sample_vectors(mix, g.desk.n_vectors, g.desk.data_seed);
    const auto calib = sample_queries(
            mix, g.desk.workload, g.desk.n_calibration, g.desk.calibration_seed, g.desk.n_vectors);
    const auto queries = sample_queries(
            mix, g.desk.workload, g.n_queries, g.query_seed, g.desk.n_vectors + g.desk.n_calibration);
    save_dataset(data, c.out("data.tvec"));
    save_dataset(calib, c.out("calibration.tvec"));
    save_dataset(queries, c.out("queries.tvec"));

    std::string lines;
    for (std::size_t i = 0; i < queries.size(); ++i) {
        const auto row = queries.row(i);
        Json req{{"id", queries.ids[i]},
                 {"query", std::vector<float>(row.begin(), row.end())},
                 {"nprobe", g.nprobe},
                 {"k", g.k}};
        lines += req.dump() + "\n";
    }
    write_text_file(c.out("queries.jsonl"), lines);

    auto doc = make_document("dataset", {});
    const auto& m = g.desk.mixture;
    doc["mixture"] = {{"dim", m.dim},
                      {"n_modes", m.n_modes},
                      {"center_scale", m.center_scale},
                      {"point_scale", m.point_scale},
                      {"seed", m.seed}};
    doc["workload"] = {{"zipf_s", g.desk.workload.zipf_s},
                       {"popularity_seed", g.desk.workload.popularity_seed},
                       {"query_scale", g.desk.workload.query_scale}};
    doc["seeds"] = {{"data", g.desk.data_seed}, {"calibration", g.desk.calibration_seed}, {"queries", g.query_seed}};
    doc["files"] = Json::object();
    for (const char* f : {"data.tvec", "calibration.tvec", "queries.tvec", "queries.jsonl"}) {
        doc["files"][f] = file_digest(c.out(f));
    }
    write_json(c.out("dataset.json"), doc);
    log_info("wrote " + std::to_string(data.size()) + " vectors to " + c.dir().string());
}

// ---------------------------------------------------------------- build-index

struct BuildIndex {
    std::string data;
    std::size_t n_clusters = 256;
    std::string quantization = "none";
    std::uint64_t seed = 23;
    int kmeans_iterations = 25;
};

void run_build_index(const Common& c, const BuildIndex& b) {
    const auto data_path = c.in(b.data, "data.tvec");
    require_file(data_path);
    TIERED_CHECK(
            b.quantization == "none" || b.quantization == "sq8",
            ErrorKind::InvalidArgument,
            "quantization must be none or sq8");
    prepare_dir(c);
    const auto data = load_dataset(data_path);
    KMeansOptions opts;
    opts.max_iterations = b.kmeans_iterations;
    const auto index = train_ivf(
            data,
            b.n_clusters,
            b.quantization == "sq8" ? Quantization::Scalar8 : Quantization::None,
            b.seed,
            Metric::L2,
            opts);
    save_index(index, c.out("index.tivf"));
    auto doc = make_document("index", {{"data", file_digest(data_path)}});
    doc["n_clusters"] = index.n_clusters();
    doc["n_vectors"] = index.total_size();
    doc["dim"] = index.dim();
    doc["quantization"] = b.quantization;
    doc["seed"] = b.seed;
    doc["files"] = {{"index.tivf", file_digest(c.out("index.tivf"))}};
    write_json(c.out("index.json"), doc);
}

// ---------------------------------------------------------------- profile

struct Profile {
    std::string index;
    std::string queries;
    std::size_t nprobe = 16;
    std::string latency = "counted";
    std::vector<std::size_t> batch_sizes{1, 2, 4, 8, 16, 32, 64, 128};
    CountedCostModel cost = DeskConfig{}.cost;
    std::size_t repetitions = 5;
    std::size_t max_segments = 3;
};

void run_profile(const Common& c, const Profile& p) {
    const auto index_path = c.in(p.index, "index.tivf");
    const auto queries_path = c.in(p.queries, "calibration.tvec");
    require_file(index_path);
    require_file(queries_path);
    TIERED_CHECK(
            p.latency == "counted" || p.latency == "wall",
            ErrorKind::InvalidArgument,
            "latency source must be counted or wall");
    prepare_dir(c);
    const auto index = load_index(index_path);
    const auto queries = load_dataset(queries_path);
    TIERED_CHECK(!queries.empty(), ErrorKind::InvalidArgument, "no calibration queries");
    const auto shortlists = coarse_quantize(index, queries, p.nprobe);
    std::vector<std::uint64_t> counts(index.n_clusters(), 0);
    for (const auto& s : shortlists) {
        for (auto cl : s.cluster_ids) {
            ++counts[cl];
        }
    }
    const auto profile = make_access_profile(std::move(counts), index.all_cluster_bytes(), p.nprobe, queries.size());
    const auto curve = coverage_curve(profile);
    const auto sigma = sigma_max_from_shortlists(shortlists, profile, curve);
    std::vector<LatencySample> samples;
    if (p.latency == "counted") {
        samples = counted_latency(index, p.batch_sizes, p.nprobe, p.cost);
    } else {
        LatencyProfileOptions opts;
        opts.repetitions = p.repetitions;
        samples = profile_latency(index, queries, p.batch_sizes, p.nprobe, opts);
    }
    const auto model = fit_latency_model(samples, p.max_segments);

    auto doc = make_document("profile", {{"index", file_digest(index_path)}, {"queries", file_digest(queries_path)}});
    doc["latency_source"] = p.latency;
    if (p.latency == "counted") {
        doc["cost_model"] = {{"cq_ns_per_op", p.cost.cq_ns_per_op},
                             {"lut_ns_per_op", p.cost.lut_ns_per_op},
                             {"cq_fixed_ms", p.cost.cq_fixed_ms},
                             {"lut_fixed_ms", p.cost.lut_fixed_ms},
                             {"lanes", p.cost.lanes},
                             {"single_query_speedup", p.cost.single_query_speedup}};
    }
    doc["access_profile"] = profile;
    doc["coverage_curve"] = curve;
    doc["sigma"] = sigma;
    doc["latency_samples"] = samples;
    doc["latency_model"] = model;
    write_json(c.out("profile.json"), doc);
    write_text_file(c.out("latency.csv"), latency_csv(samples));
}

// ---------------------------------------------------------------- plan

struct Plan {
    std::string profile;
    SloConfig slo;
    LlmModel llm = DeskConfig{}.llm;
    double kv_bytes = 0;
    double full_index_share = DeskConfig{}.full_index_share;
    double param_bytes = 0;
    double index_scale = 1;
    double gpu_speedup = DeskConfig{}.gpu_speedup;
    std::size_t n_shards = DeskConfig{}.n_shards;
    std::string rule = "midpoint";
    bool allow_unmet = false;
};

void run_plan(const Common& c, const Plan& p) {
    const auto profile_path = c.in(p.profile, "profile.json");
    const auto prof_doc = read_doc(profile_path, "profile");
    TIERED_CHECK(
            p.rule == "midpoint" || p.rule == "verbatim",
            ErrorKind::InvalidArgument,
            "bisection rule must be midpoint or verbatim");
    const auto profile = doc_field<AccessProfile>(prof_doc, "access_profile");
    const auto curve = doc_field<CoverageCurve>(prof_doc, "coverage_curve");
    const auto sigma = doc_field<SigmaMax>(prof_doc, "sigma");
    const auto latency = doc_field<LatencyModel>(prof_doc, "latency_model");
    prepare_dir(c);

    double kv = p.kv_bytes;
    if (kv <= 0) {
        TIERED_CHECK(
                p.full_index_share > 0 && p.full_index_share < 1,
                ErrorKind::InvalidArgument,
                "full index share must be in (0, 1)");
        kv = double(curve.points.back().hot_bytes) * p.index_scale / p.full_index_share;
    }
    const auto memory = make_memory_model(curve, kv, p.param_bytes, p.index_scale);
    const CoverageInverter inverter(curve, sigma.sigma2_max);
    PartitionOptions opts;
    opts.rule = p.rule == "verbatim" ? BisectionRule::Verbatim : BisectionRule::Midpoint;
    const auto plan = partition(p.slo, memory, p.llm, latency, profile, inverter, opts);
    TIERED_CHECK(
            plan.meets_bound || p.allow_unmet,
            ErrorKind::Infeasible,
            "no coverage meets the search SLO within the memory budget (best rho " + std::to_string(plan.rho) +
                    "); pass --allow-unmet to write it anyway");
    auto scenario = scenario_from_plan(plan, curve, sigma.sigma2_max, p.slo, latency, p.llm, memory);
    scenario.gpu_speedup = p.gpu_speedup;
    scenario.n_shards = p.n_shards;

    auto inputs = document_inputs(prof_doc);
    InputDigests rec{{"profile", file_digest(profile_path)}};
    if (inputs.count("index")) {
        rec["index"] = inputs["index"];
    }
    auto doc = make_document("plan", rec);
    doc["plan"] = plan;
    doc["slo"] = p.slo;
    doc["llm"] = p.llm;
    doc["memory"] = memory;
    doc["latency_model"] = latency;
    doc["expected_hitrate"] = curve.points[plan.n_hot].mean_hitrate;
    doc["sigma2_max"] = sigma.sigma2_max;
    doc["n_shards"] = p.n_shards;
    doc["scenario"] = scenario;
    write_json(c.out("plan.json"), doc);
    std::cout << Json{{"rho", plan.rho},
                      {"n_hot", plan.n_hot},
                      {"predicted_batch", plan.predicted_batch},
                      {"predicted_mu_rps", plan.predicted_mu_rps},
                      {"meets_bound", plan.meets_bound}}
                         .dump()
              << "\n";
}

// ---------------------------------------------------------------- split

struct Split {
    std::string plan;
    std::string index;
    std::size_t n_shards = 0;  // 0: as planned
};

std::string shard_name(std::size_t s) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "shard_%03zu.tshd", s);
    return buf;
}

void run_split(const Common& c, const Split& s) {
    const auto plan_path = c.in(s.plan, "plan.json");
    const auto index_path = c.in(s.index, "index.tivf");
    const auto plan_doc = read_doc(plan_path, "plan");
    require_file(index_path);
    require_input(plan_doc, "index", index_path);
    const auto plan = doc_field<PartitionPlan>(plan_doc, "plan");
    const std::size_t n_shards = s.n_shards > 0 ? s.n_shards : doc_field<std::size_t>(plan_doc, "n_shards");
    const auto index = load_index(index_path);
    TIERED_CHECK(
            plan.n_clusters == index.n_clusters(),
            ErrorKind::StaleInput,
            "plan covers " + std::to_string(plan.n_clusters) + " clusters, index has " +
                    std::to_string(index.n_clusters()));
    prepare_dir(c);
    const auto split = split_index(index, plan.hot_cluster_ids, n_shards);
    const auto shard_dir = c.out("shards");
    fs::create_directories(shard_dir);
    Json files = Json::array();
    for (std::size_t i = 0; i < split.shards.size(); ++i) {
        const auto name = shard_name(i);
        save_shard(split.shards[i], shard_dir / name);
        files.push_back({{"shard_id", i}, {"path", "shards/" + name}, {"digest", file_digest(shard_dir / name)}});
    }
    auto doc = make_document("shards", {{"plan", file_digest(plan_path)}, {"index", file_digest(index_path)}});
    doc["shard_map"] = split.map;
    doc["files"] = files;
    doc["latency_model"] = plan_doc.at("latency_model");
    doc["expected_hitrate"] = plan_doc.at("expected_hitrate");
    doc["slo"] = plan_doc.at("slo");
    doc["gpu_speedup"] = doc_field<Scenario>(plan_doc, "scenario").gpu_speedup;
    write_json(c.out("shards.json"), doc);
}

// ---------------------------------------------------------------- serve

struct Serve {
    std::string index;
    std::string shards;
    std::string input = "-";
    std::string output = "-";
    std::size_t max_batch = 16;
    bool no_dispatcher = false;
};

void run_serve(const Common& c, const Serve& s) {
    const auto index_path = c.in(s.index, "index.tivf");
    const auto shards_path = c.in(s.shards, "shards.json");
    const auto doc = read_doc(shards_path, "shards");
    require_file(index_path);
    require_input(doc, "index", index_path);
    TIERED_CHECK(s.max_batch >= 1, ErrorKind::InvalidArgument, "max batch must be >= 1");
    const auto map = doc_field<ShardMap>(doc, "shard_map");
    auto host = std::make_shared<const IvfIndex>(load_index(index_path));

    EngineConfig cfg;
    cfg.n_shards = map.n_shards;
    cfg.timing.cpu = doc_field<LatencyModel>(doc, "latency_model");
    cfg.timing.gpu_speedup = doc_field<double>(doc, "gpu_speedup");
    cfg.dispatcher = !s.no_dispatcher;
    cfg.slo_search_ms = doc_field<SloConfig>(doc, "slo").slo_search_ms;
    Engine engine(host, cfg);

    std::vector<ClusterId> hot;
    for (const auto& list : map.shard_clusters) {
        hot.insert(hot.end(), list.begin(), list.end());
    }
    const auto built = engine.install_plan(hot, doc_field<double>(doc, "expected_hitrate"));
    TIERED_CHECK(built == map, ErrorKind::StaleInput, "shard map does not match the index");
    const auto files = doc.at("files");
    TIERED_CHECK(files.size() == map.n_shards, ErrorKind::Format, "shard file list does not match the map");
    for (const auto& f : files) {
        const auto path = shards_path.parent_path() / f.at("path").get<std::string>();
        require_file(path);
        TIERED_CHECK(
                file_digest(path) == f.at("digest").get<std::string>(),
                ErrorKind::StaleInput,
                "shard file " + path.string() + " changed since split");
        const auto id = f.at("shard_id").get<std::size_t>();
        engine.begin_shard_swap(id);
        engine.install_shard(id, load_shard(path));
    }

    std::ifstream fin;
    std::istream* in = &std::cin;
    if (s.input != "-") {
        require_file(s.input);
        fin.open(s.input);
        in = &fin;
    }
    std::string out;
    std::vector<RetrievalRequest> batch;
    auto flush = [&] {
        if (batch.empty()) {
            return;
        }
        const auto r = engine.search_batch(batch);
        for (std::size_t q = 0; q < batch.size(); ++q) {
            Json hits = Json::array();
            for (const auto& h : r.results[q].hits) {
                hits.push_back(Json::array({h.id, h.distance}));
            }
            const auto& t = r.timing[q];
            out += Json{{"id", batch[q].request_id},
                        {"hits", hits},
                        {"t_search_ms", cfg.dispatcher ? t.release_on_ms : t.release_off_ms}}
                           .dump() +
                   "\n";
        }
        batch.clear();
        if (s.output == "-") {
            std::cout << out << std::flush;
            out.clear();
        }
    };
    std::string line;
    while (std::getline(*in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        Json id = nullptr;
        try {
            const auto req = Json::parse(line);
            if (req.contains("id")) {
                id = req.at("id");
            }
            RetrievalRequest r;
            r.request_id = req.at("id").get<std::uint64_t>();
            r.query = req.at("query").get<std::vector<float>>();
            r.nprobe = req.value("nprobe", std::size_t{16});
            r.k = req.value("k", std::size_t{10});
            TIERED_CHECK(r.query.size() == host->dim(), ErrorKind::DimensionMismatch, "query has the wrong dimension");
            TIERED_CHECK(r.nprobe >= 1 && r.k >= 1, ErrorKind::InvalidArgument, "nprobe and k must be >= 1");
            batch.push_back(std::move(r));
        } catch (const std::exception& e) {
            // a bad line is answered in place, after the queries before it
            flush();
            const auto* te = dynamic_cast<const Error*>(&e);
            out += Json{{"id", id},
                        {"error", e.what()},
                        {"kind", std::string(to_string(te ? te->kind() : ErrorKind::Format))}}
                           .dump() +
                   "\n";
            if (s.output == "-") {
                std::cout << out << std::flush;
                out.clear();
            }
            continue;
        }
        if (batch.size() >= s.max_batch) {
            flush();
        }
    }
    flush();
    if (s.output != "-") {
        write_text_file(s.output, out);
    }
}

// ---------------------------------------------------------------- simulate

struct Simulate {
    std::string plan;
    std::string scenario;
    std::vector<std::string> modes;
    std::vector<double> lambdas;
    std::size_t n_lambdas = 10;
    double duration_s = 200;
    std::uint64_t seed = 1;
    bool no_dispatcher = false;
    std::size_t max_batch = 0;
    double merge_ms = 0;
    bool requests_csv = false;
};

void run_simulate(const Common& c, const Simulate& s) {
    Scenario base;
    InputDigests inputs;
    if (!s.scenario.empty()) {
        const auto doc = read_doc(s.scenario, "scenario");
        base = doc_field<Scenario>(doc, "scenario");
        inputs["scenario"] = file_digest(s.scenario);
    } else {
        const auto plan_path = c.in(s.plan, "plan.json");
        const auto doc = read_doc(plan_path, "plan");
        base = doc_field<Scenario>(doc, "scenario");
        inputs["plan"] = file_digest(plan_path);
    }
    base.duration_s = s.duration_s;
    base.seed = s.seed;
    base.dispatcher = !s.no_dispatcher;
    base.max_batch = s.max_batch;
    base.merge_ms = s.merge_ms;

    std::vector<SimMode> modes;
    for (const auto& m : s.modes) {
        modes.push_back(parse_sim_mode(m));
    }
    if (modes.empty()) {
        modes = {SimMode::CpuOnly, SimMode::AllGpu, SimMode::DedicatedGpu, SimMode::Tiered};
    }
    std::vector<double> lambdas = s.lambdas;
    if (lambdas.empty()) {
        // evenly spaced strictly below the planned throughput, where the
        // LLM queue would sit at utilization 1
        TIERED_CHECK(s.n_lambdas >= 1, ErrorKind::InvalidArgument, "need at least one arrival rate");
        for (std::size_t i = 1; i <= s.n_lambdas; ++i) {
            lambdas.push_back(base.lambda_rps * double(i) / double(s.n_lambdas + 1));
        }
    }
    prepare_dir(c);
    std::vector<SweepRow> rows;
    for (std::size_t li = 0; li < lambdas.size(); ++li) {
        const auto wl = generate_workload(lambdas[li], base.duration_s, base.seed);
        for (auto mode : modes) {
            auto sc = base;
            sc.lambda_rps = lambdas[li];
            sc.mode = mode;
            const auto m = simulate(sc, wl);
            rows.push_back(summarize(m));
            if (s.requests_csv && m.feasible) {
                write_text_file(
                        c.out("requests_" + to_string(mode) + "_" + std::to_string(li) + ".csv"), requests_csv(m));
            }
        }
    }
    auto doc = make_document("sweep", inputs);
    doc["scenario"] = base;
    doc["lambdas"] = lambdas;
    doc["rows"] = rows;
    write_json(c.out("sweep.json"), doc);
    write_text_file(c.out("sweep.csv"), sweep_csv(rows));
}

// ---------------------------------------------------------------- report

void run_report(const Common& c, const std::string& sweep) {
    const auto path = c.in(sweep, "sweep.json");
    const auto doc = read_doc(path, "sweep");
    const auto rows = doc_field<std::vector<SweepRow>>(doc, "rows");
    TIERED_CHECK(!rows.empty(), ErrorKind::InvalidArgument, "sweep has no rows");
    const auto dir = prepare_dir(c);
    write_report(dir, rows);
    auto manifest = make_document("report", {{"sweep", file_digest(path)}});
    manifest["files"] = Json::object();
    for (const char* f : {"sweep.csv", "attainment.svg", "breakdown.svg"}) {
        manifest["files"][f] = file_digest(dir / f);
    }
    write_json(dir / "report.json", manifest);
}

int fail(ErrorKind kind, const std::string& msg, int code) {
    std::cerr << Json{{"error", msg}, {"kind", std::string(to_string(kind))}}.dump() << "\n";
    return code;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Tiered vector search for retrieval-augmented generation: data, index, plan, serve, simulate"};
    app.set_version_flag("--version", "tieredrag 0.1.0");
    app.require_subcommand(1);
    Common common;
    app.add_option("--out-dir", common.out_dir, "Output directory (default: $TIERED_OUTPUT_DIR, else .)");
    app.add_option("--log-level", common.log_level, "debug, info, warn, error or off")->capture_default_str();

    GenData gen;
    auto* g = app.add_subcommand("gen-data", "Synthesize a Gaussian-mixture corpus and Zipf query sets");
    g->add_option("--n-vectors", gen.desk.n_vectors)->capture_default_str();
    g->add_option("--dim", gen.desk.mixture.dim)->capture_default_str();
    g->add_option("--n-modes", gen.desk.mixture.n_modes)->capture_default_str();
    g->add_option("--center-scale", gen.desk.mixture.center_scale)->capture_default_str();
    g->add_option("--point-scale", gen.desk.mixture.point_scale)->capture_default_str();
    g->add_option("--mixture-seed", gen.desk.mixture.seed)->capture_default_str();
    g->add_option("--data-seed", gen.desk.data_seed)->capture_default_str();
    g->add_option("--n-calibration", gen.desk.n_calibration, "Profiling queries")->capture_default_str();
    g->add_option("--calibration-seed", gen.desk.calibration_seed)->capture_default_str();
    g->add_option("--n-queries", gen.n_queries, "Test queries, disjoint from calibration")->capture_default_str();
    g->add_option("--query-seed", gen.query_seed)->capture_default_str();
    g->add_option("--zipf-s", gen.desk.workload.zipf_s, "0 = follow data mass")->capture_default_str();
    g->add_option("--popularity-seed", gen.desk.workload.popularity_seed)->capture_default_str();
    g->add_option("--query-scale", gen.desk.workload.query_scale)->capture_default_str();
    g->add_option("--nprobe", gen.nprobe, "nprobe written into queries.jsonl")->capture_default_str();
    g->add_option("--k", gen.k, "k written into queries.jsonl")->capture_default_str();

    BuildIndex bi;
    auto* b = app.add_subcommand("build-index", "Train the IVF index");
    b->add_option("--data", bi.data, "Dataset (default: <out>/data.tvec)");
    b->add_option("--n-clusters", bi.n_clusters)->capture_default_str();
    b->add_option("--quantization", bi.quantization, "none or sq8")->capture_default_str();
    b->add_option("--seed", bi.seed)->capture_default_str();
    b->add_option("--kmeans-iterations", bi.kmeans_iterations)->capture_default_str();

    Profile pr;
    auto* p = app.add_subcommand("profile", "Access skew, hit-rate variance and latency curves");
    p->add_option("--index", pr.index, "Index (default: <out>/index.tivf)");
    p->add_option("--queries", pr.queries, "Calibration queries (default: <out>/calibration.tvec)");
    p->add_option("--nprobe", pr.nprobe)->capture_default_str();
    p->add_option("--latency", pr.latency, "counted (deterministic) or wall (this machine)")->capture_default_str();
    p->add_option("--batch-sizes", pr.batch_sizes)->capture_default_str()->delimiter(',');
    p->add_option("--cq-ns-per-op", pr.cost.cq_ns_per_op)->capture_default_str();
    p->add_option("--lut-ns-per-op", pr.cost.lut_ns_per_op)->capture_default_str();
    p->add_option("--cq-fixed-ms", pr.cost.cq_fixed_ms)->capture_default_str();
    p->add_option("--lut-fixed-ms", pr.cost.lut_fixed_ms)->capture_default_str();
    p->add_option("--lanes", pr.cost.lanes)->capture_default_str();
    p->add_option("--single-query-speedup", pr.cost.single_query_speedup)->capture_default_str();
    p->add_option("--repetitions", pr.repetitions, "Wall-clock repetitions per batch size")->capture_default_str();
    p->add_option("--max-segments", pr.max_segments)->capture_default_str();

    Plan pl;
    auto* pp = app.add_subcommand("plan", "Choose the hot-tier coverage for the SLO");
    pp->add_option("--profile", pl.profile, "Profile (default: <out>/profile.json)");
    pp->add_option("--slo-search-ms", pl.slo.slo_search_ms)->capture_default_str();
    pp->add_option("--slo-llm-ms", pl.slo.slo_llm_ms)->capture_default_str();
    pp->add_option("--epsilon", pl.slo.epsilon, "Queuing reserve, in batch latencies")->capture_default_str();
    pp->add_option("--delta", pl.slo.delta, "Bisection tolerance on coverage")->capture_default_str();
    pp->add_option("--mu-llm0-rps", pl.llm.mu_llm0_rps)->capture_default_str();
    pp->add_option("--prefill-base-ms", pl.llm.prefill_base_ms)->capture_default_str();
    pp->add_option("--prefill-per-req-ms", pl.llm.prefill_per_req_ms)->capture_default_str();
    pp->add_option("--kv-bytes", pl.kv_bytes, "KV budget; 0 derives it from --full-index-share")->capture_default_str();
    pp->add_option("--full-index-share", pl.full_index_share)->capture_default_str();
    pp->add_option("--param-bytes", pl.param_bytes)->capture_default_str();
    pp->add_option("--index-scale", pl.index_scale, "Bytes multiplier onto the modeled device")->capture_default_str();
    pp->add_option("--gpu-speedup", pl.gpu_speedup)->capture_default_str();
    pp->add_option("--n-shards", pl.n_shards)->capture_default_str();
    pp->add_option("--rule", pl.rule, "midpoint or verbatim")->capture_default_str();
    pp->add_flag("--allow-unmet", pl.allow_unmet, "Write a plan even if it misses the latency bound");

    Split sp;
    auto* s = app.add_subcommand("split", "Write shard files for the planned hot set");
    s->add_option("--plan", sp.plan, "Plan (default: <out>/plan.json)");
    s->add_option("--index", sp.index, "Index (default: <out>/index.tivf)");
    s->add_option("--n-shards", sp.n_shards, "0 = as planned")->capture_default_str();

    Serve sv;
    auto* v = app.add_subcommand("serve", "Answer line-delimited JSON queries through the tiered engine");
    v->add_option("--index", sv.index, "Index (default: <out>/index.tivf)");
    v->add_option("--shards", sv.shards, "Shard manifest (default: <out>/shards.json)");
    v->add_option("--input", sv.input, "Requests, - for stdin")->capture_default_str();
    v->add_option("--output", sv.output, "Responses, - for stdout")->capture_default_str();
    v->add_option("--max-batch", sv.max_batch)->capture_default_str();
    v->add_flag("--no-dispatcher", sv.no_dispatcher, "Release a batch only when all of it is done");

    Simulate si;
    auto* m = app.add_subcommand("simulate", "Sweep arrival rates over serving modes");
    m->add_option("--plan", si.plan, "Plan (default: <out>/plan.json)");
    m->add_option("--scenario", si.scenario, "Scenario document instead of a plan");
    m->add_option("--mode", si.modes, "cpu_only, all_gpu, dedicated_gpu, tiered; repeatable (default: all)");
    m->add_option("--lambda-rps", si.lambdas, "Arrival rates; repeatable")->delimiter(',');
    m->add_option("--n-lambdas", si.n_lambdas, "Default grid size below the planned rate")->capture_default_str();
    m->add_option("--duration-s", si.duration_s)->capture_default_str();
    m->add_option("--seed", si.seed)->capture_default_str();
    m->add_option("--max-batch", si.max_batch, "0 = uncapped")->capture_default_str();
    m->add_option("--merge-ms", si.merge_ms)->capture_default_str();
    m->add_flag("--no-dispatcher", si.no_dispatcher);
    m->add_flag("--requests-csv", si.requests_csv, "Also write per-request CSVs");

    std::string sweep_path;
    auto* r = app.add_subcommand("report", "CSV and SVG plots from a sweep");
    r->add_option("--sweep", sweep_path, "Sweep (default: <out>/sweep.json)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return fail(ErrorKind::InvalidArgument, e.what(), 2);
    }

    try {
        set_log_level(parse_log_level(common.log_level));
        if (g->parsed()) {
            run_gen_data(common, gen);
        } else if (b->parsed()) {
            run_build_index(common, bi);
        } else if (p->parsed()) {
            run_profile(common, pr);
        } else if (pp->parsed()) {
            run_plan(common, pl);
        } else if (s->parsed()) {
            run_split(common, sp);
        } else if (v->parsed()) {
            run_serve(common, sv);
        } else if (m->parsed()) {
            run_simulate(common, si);
        } else if (r->parsed()) {
            run_report(common, sweep_path);
        }
    } catch (const Error& e) {
        return fail(e.kind(), e.what(), 1);
    } catch (const std::exception& e) {
        return fail(ErrorKind::Internal, e.what(), 1);
    }
    return 0;
}
