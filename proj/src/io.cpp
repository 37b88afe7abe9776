#include "tiered/io.hpp"

#include "tiered/bytes.hpp"
#include "tiered/error.hpp"

namespace tiered {

namespace {

const std::string kFormatPrefix = "tieredrag.";

template <class T>
T field(const Json& j, const char* key) {
    TIERED_CHECK(j.is_object() && j.contains(key), ErrorKind::Format, std::string("missing field '") + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw_error(ErrorKind::Format, std::string("bad field '") + key + "': " + e.what());
    }
}

template <class T>
void optional_field(const Json& j, const char* key, T& out) {
    if (j.contains(key)) {
        out = field<T>(j, key);
    }
}

} // namespace

Json make_document(const std::string& kind, const InputDigests& inputs) {
    Json doc;
    doc["format"] = kFormatPrefix + kind;
    doc["version"] = kDocumentVersion;
    doc["inputs"] = Json::object();
    for (const auto& [name, digest] : inputs) {
        doc["inputs"][name] = digest;
    }
    return doc;
}

void check_document(const Json& doc, const std::string& kind) {
    TIERED_CHECK(doc.is_object(), ErrorKind::Format, "document is not a JSON object");
    const auto format = field<std::string>(doc, "format");
    TIERED_CHECK(
            format == kFormatPrefix + kind,
            ErrorKind::Format,
            "expected a " + kFormatPrefix + kind + " document, found " + format);
    const auto version = field<int>(doc, "version");
    TIERED_CHECK(
            version == kDocumentVersion,
            ErrorKind::Format,
            "unsupported " + kind + " version " + std::to_string(version));
}

InputDigests document_inputs(const Json& doc) {
    InputDigests out;
    if (doc.contains("inputs")) {
        for (const auto& [name, digest] : doc.at("inputs").items()) {
            out[name] = digest.get<std::string>();
        }
    }
    return out;
}

void require_input(const Json& doc, const std::string& name, const std::filesystem::path& path) {
    const auto inputs = document_inputs(doc);
    const auto it = inputs.find(name);
    TIERED_CHECK(it != inputs.end(), ErrorKind::StaleInput, "document does not record input '" + name + "'");
    const auto actual = file_digest(path);
    TIERED_CHECK(
            it->second == actual,
            ErrorKind::StaleInput,
            "input '" + name + "' changed since this artifact was made (" + path.string() + ": recorded " +
                    it->second + ", now " + actual + ")");
}

std::string dump_json(const Json& doc) {
    return doc.dump(2) + "\n";
}

void write_json(const std::filesystem::path& path, const Json& doc) {
    write_text_file(path, dump_json(doc));
}

Json read_json(const std::filesystem::path& path) {
    const auto text = read_text_file(path);
    try {
        return Json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw_error(ErrorKind::Format, path.string() + ": " + e.what());
    }
}

// ---------------------------------------------------------------- profiler

void to_json(Json& j, const AccessProfile& p) {
    j = Json{{"n_clusters", p.n_clusters},
             {"nprobe", p.nprobe},
             {"n_queries", p.n_queries},
             {"total_accesses", p.total_accesses},
             {"counts", p.counts},
             {"ranking", p.ranking},
             {"cluster_bytes", p.cluster_bytes}};
}

void from_json(const Json& j, AccessProfile& p) {
    // rebuilt through the constructor so ranking and totals stay consistent
    p = make_access_profile(
            field<std::vector<std::uint64_t>>(j, "counts"),
            field<std::vector<std::uint64_t>>(j, "cluster_bytes"),
            field<std::size_t>(j, "nprobe"),
            field<std::size_t>(j, "n_queries"));
    TIERED_CHECK(
            p.ranking == field<std::vector<ClusterId>>(j, "ranking"),
            ErrorKind::Format,
            "profile ranking does not match its counts");
}

void to_json(Json& j, const CoveragePoint& p) {
    j = Json{{"rho", p.rho}, {"mean_hitrate", p.mean_hitrate}, {"hot_bytes", p.hot_bytes}, {"n_hot", p.n_hot}};
}

void from_json(const Json& j, CoveragePoint& p) {
    p.rho = field<double>(j, "rho");
    p.mean_hitrate = field<double>(j, "mean_hitrate");
    p.hot_bytes = field<std::uint64_t>(j, "hot_bytes");
    p.n_hot = field<std::size_t>(j, "n_hot");
}

void to_json(Json& j, const CoverageCurve& c) {
    j = Json{{"points", c.points}};
}

void from_json(const Json& j, CoverageCurve& c) {
    c.points = field<std::vector<CoveragePoint>>(j, "points");
    TIERED_CHECK(!c.points.empty(), ErrorKind::Format, "coverage curve has no points");
    for (std::size_t k = 0; k < c.points.size(); ++k) {
        TIERED_CHECK(c.points[k].n_hot == k, ErrorKind::Format, "coverage points out of order");
    }
}

void to_json(Json& j, const SigmaMax& s) {
    j = Json{{"sigma2_max", s.sigma2_max},
             {"coverage_at_half", s.coverage_at_half},
             {"mean_at_half", s.mean_at_half},
             {"n_hot", s.n_hot}};
}

void from_json(const Json& j, SigmaMax& s) {
    s.sigma2_max = field<double>(j, "sigma2_max");
    TIERED_CHECK(s.sigma2_max >= 0 && s.sigma2_max <= 0.25, ErrorKind::Format, "sigma2_max outside [0, 0.25]");
    s.coverage_at_half = field<double>(j, "coverage_at_half");
    s.mean_at_half = field<double>(j, "mean_at_half");
    s.n_hot = field<std::size_t>(j, "n_hot");
}

void to_json(Json& j, const LatencySample& s) {
    j = Json{{"b", s.batch}, {"t_cq_ms", s.t_cq_ms}, {"t_lut_ms", s.t_lut_ms}};
}

void from_json(const Json& j, LatencySample& s) {
    s.batch = field<std::size_t>(j, "b");
    s.t_cq_ms = field<double>(j, "t_cq_ms");
    s.t_lut_ms = field<double>(j, "t_lut_ms");
}

void to_json(Json& j, const PiecewiseLinear& f) {
    j = Json{{"breakpoints", f.breakpoints()},
             {"slopes", f.slopes()},
             {"intercepts", f.intercepts()},
             {"residual_rms", f.residual_rms()}};
}

void from_json(const Json& j, PiecewiseLinear& f) {
    try {
        f = PiecewiseLinear(
                field<std::vector<double>>(j, "breakpoints"),
                field<std::vector<double>>(j, "slopes"),
                field<std::vector<double>>(j, "intercepts"),
                field<double>(j, "residual_rms"));
    } catch (const Error& e) {
        throw_error(ErrorKind::Format, e.what());
    }
}

void to_json(Json& j, const LatencyModel& m) {
    j = Json{{"t_cq", m.cq}, {"t_lut", m.lut}};
}

void from_json(const Json& j, LatencyModel& m) {
    m.cq = field<PiecewiseLinear>(j, "t_cq");
    m.lut = field<PiecewiseLinear>(j, "t_lut");
}

// ---------------------------------------------------------------- partitioner

void to_json(Json& j, const SloConfig& s) {
    j = Json{{"slo_search_ms", s.slo_search_ms},
             {"slo_llm_ms", s.slo_llm_ms},
             {"epsilon", s.epsilon},
             {"delta", s.delta}};
}

void from_json(const Json& j, SloConfig& s) {
    s.slo_search_ms = field<double>(j, "slo_search_ms");
    s.slo_llm_ms = field<double>(j, "slo_llm_ms");
    s.epsilon = field<double>(j, "epsilon");
    s.delta = field<double>(j, "delta");
}

void to_json(Json& j, const LlmModel& m) {
    j = Json{{"mu_llm0_rps", m.mu_llm0_rps},
             {"prefill_base_ms", m.prefill_base_ms},
             {"prefill_per_req_ms", m.prefill_per_req_ms}};
}

void from_json(const Json& j, LlmModel& m) {
    m.mu_llm0_rps = field<double>(j, "mu_llm0_rps");
    m.prefill_base_ms = field<double>(j, "prefill_base_ms");
    m.prefill_per_req_ms = field<double>(j, "prefill_per_req_ms");
}

void to_json(Json& j, const MemoryModel& m) {
    j = Json{{"mem_kvcache_bytes", m.kv_bytes}, {"mem_param_bytes", m.param_bytes}, {"index_bytes", m.index_bytes}};
}

void from_json(const Json& j, MemoryModel& m) {
    m.kv_bytes = field<double>(j, "mem_kvcache_bytes");
    m.param_bytes = field<double>(j, "mem_param_bytes");
    m.index_bytes = field<std::vector<double>>(j, "index_bytes");
}

void to_json(Json& j, const PartitionStep& s) {
    j = Json{{"rho_low", s.rho_low},
             {"rho_high", s.rho_high},
             {"rho_m", s.rho_m},
             {"mu_rps", s.mu_rps},
             {"rho", s.rho},
             {"memory_infeasible", s.memory_infeasible}};
}

void from_json(const Json& j, PartitionStep& s) {
    s.rho_low = field<double>(j, "rho_low");
    s.rho_high = field<double>(j, "rho_high");
    s.rho_m = field<double>(j, "rho_m");
    s.mu_rps = field<double>(j, "mu_rps");
    s.rho = field<double>(j, "rho");
    s.memory_infeasible = field<bool>(j, "memory_infeasible");
}

void to_json(Json& j, const PartitionPlan& p) {
    j = Json{{"rho", p.rho},
             {"n_clusters", p.n_clusters},
             {"n_hot", p.n_hot},
             {"hot_cluster_ids", p.hot_cluster_ids},
             {"predicted_batch", p.predicted_batch},
             {"predicted_tau_s_ms", p.predicted_tau_s_ms},
             {"predicted_mu_rps", p.predicted_mu_rps},
             {"predicted_eta_min", p.predicted_eta_min},
             {"tau_budget_ms", p.tau_budget_ms},
             {"index_bytes", p.index_bytes},
             {"meets_bound", p.meets_bound},
             {"saturated", p.saturated},
             {"iterations", p.iterations},
             {"polish_steps", p.polish_steps},
             {"trace", p.trace}};
}

void from_json(const Json& j, PartitionPlan& p) {
    p.rho = field<double>(j, "rho");
    p.n_clusters = field<std::size_t>(j, "n_clusters");
    p.n_hot = field<std::size_t>(j, "n_hot");
    p.hot_cluster_ids = field<std::vector<ClusterId>>(j, "hot_cluster_ids");
    TIERED_CHECK(p.hot_cluster_ids.size() == p.n_hot, ErrorKind::Format, "plan hot set size disagrees with n_hot");
    TIERED_CHECK(p.rho >= 0 && p.rho <= 1, ErrorKind::Format, "plan rho outside [0, 1]");
    p.predicted_batch = field<std::size_t>(j, "predicted_batch");
    p.predicted_tau_s_ms = field<double>(j, "predicted_tau_s_ms");
    p.predicted_mu_rps = field<double>(j, "predicted_mu_rps");
    p.predicted_eta_min = field<double>(j, "predicted_eta_min");
    p.tau_budget_ms = field<double>(j, "tau_budget_ms");
    p.index_bytes = field<double>(j, "index_bytes");
    p.meets_bound = field<bool>(j, "meets_bound");
    p.saturated = field<bool>(j, "saturated");
    p.iterations = field<int>(j, "iterations");
    p.polish_steps = field<int>(j, "polish_steps");
    p.trace = field<std::vector<PartitionStep>>(j, "trace");
}

void to_json(Json& j, const ShardMap& m) {
    j = Json{{"n_shards", m.n_shards},
             {"shard_of", m.shard_of},
             {"local_of", m.local_of},
             {"shard_clusters", m.shard_clusters},
             {"cold", m.cold},
             {"shard_bytes", m.shard_bytes}};
}

void from_json(const Json& j, ShardMap& m) {
    m.n_shards = field<std::size_t>(j, "n_shards");
    m.shard_of = field<std::vector<std::int32_t>>(j, "shard_of");
    m.local_of = field<std::vector<ClusterId>>(j, "local_of");
    m.shard_clusters = field<std::vector<std::vector<ClusterId>>>(j, "shard_clusters");
    m.cold = field<std::vector<ClusterId>>(j, "cold");
    m.shard_bytes = field<std::vector<std::uint64_t>>(j, "shard_bytes");
    try {
        m.validate();
    } catch (const Error& e) {
        throw_error(ErrorKind::Format, std::string("inconsistent shard map: ") + e.what());
    }
}

// ---------------------------------------------------------------- simulator

void to_json(Json& j, const HitRateModel& h) {
    j = Json{{"mean", h.mean}, {"sigma2_max", h.sigma2_max}, {"trace", h.trace}};
}

void from_json(const Json& j, HitRateModel& h) {
    h.mean = field<double>(j, "mean");
    h.sigma2_max = field<double>(j, "sigma2_max");
    h.trace.clear();
    optional_field(j, "trace", h.trace);
}

void to_json(Json& j, const Scenario& s) {
    j = Json{{"lambda_rps", s.lambda_rps},
             {"duration_s", s.duration_s},
             {"seed", s.seed},
             {"mode", to_string(s.mode)},
             {"slo", s.slo},
             {"latency", s.latency},
             {"llm", s.llm},
             {"memory", s.memory},
             {"rho", s.rho},
             {"hits", s.hits},
             {"gpu_speedup", s.gpu_speedup},
             {"n_shards", s.n_shards},
             {"n_accelerators", s.n_accelerators},
             {"dedicated_accelerators", s.dedicated_accelerators},
             {"dispatcher", s.dispatcher},
             {"merge_ms", s.merge_ms},
             {"max_batch", s.max_batch},
             {"output_tokens", s.output_tokens},
             {"decode_ms_per_token", s.decode_ms_per_token}};
}

void from_json(const Json& j, Scenario& s) {
    s.lambda_rps = field<double>(j, "lambda_rps");
    s.duration_s = field<double>(j, "duration_s");
    s.seed = field<std::uint64_t>(j, "seed");
    try {
        s.mode = parse_sim_mode(field<std::string>(j, "mode"));
    } catch (const Error& e) {
        throw_error(ErrorKind::Format, e.what());
    }
    s.slo = field<SloConfig>(j, "slo");
    s.latency = field<LatencyModel>(j, "latency");
    s.llm = field<LlmModel>(j, "llm");
    s.memory = field<MemoryModel>(j, "memory");
    s.rho = field<double>(j, "rho");
    s.hits = field<HitRateModel>(j, "hits");
    s.gpu_speedup = field<double>(j, "gpu_speedup");
    s.n_shards = field<std::size_t>(j, "n_shards");
    s.n_accelerators = field<std::size_t>(j, "n_accelerators");
    s.dedicated_accelerators = field<std::size_t>(j, "dedicated_accelerators");
    s.dispatcher = field<bool>(j, "dispatcher");
    s.merge_ms = field<double>(j, "merge_ms");
    s.max_batch = field<std::size_t>(j, "max_batch");
    s.output_tokens = field<std::size_t>(j, "output_tokens");
    s.decode_ms_per_token = field<double>(j, "decode_ms_per_token");
}

void to_json(Json& j, const SweepRow& r) {
    j = Json{{"lambda_rps", r.lambda_rps},
             {"mode", to_string(r.mode)},
             {"p50_ttft", r.p50_ttft_ms},
             {"p90_ttft", r.p90_ttft_ms},
             {"p95_ttft", r.p95_ttft_ms},
             {"slo_attainment", r.slo_attainment},
             {"mean_batch", r.mean_batch},
             {"saturated", r.saturated},
             {"queue_ms", r.queue_ms},
             {"search_ms", r.search_ms},
             {"prefill_ms", r.prefill_ms}};
}

void from_json(const Json& j, SweepRow& r) {
    r.lambda_rps = field<double>(j, "lambda_rps");
    try {
        r.mode = parse_sim_mode(field<std::string>(j, "mode"));
    } catch (const Error& e) {
        throw_error(ErrorKind::Format, e.what());
    }
    r.p50_ttft_ms = field<double>(j, "p50_ttft");
    r.p90_ttft_ms = field<double>(j, "p90_ttft");
    r.p95_ttft_ms = field<double>(j, "p95_ttft");
    r.slo_attainment = field<double>(j, "slo_attainment");
    r.mean_batch = field<double>(j, "mean_batch");
    r.saturated = field<bool>(j, "saturated");
    r.queue_ms = field<double>(j, "queue_ms");
    r.search_ms = field<double>(j, "search_ms");
    r.prefill_ms = field<double>(j, "prefill_ms");
}

} // namespace tiered
