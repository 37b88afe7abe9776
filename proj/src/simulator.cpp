#include "tiered/simulator.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include "tiered/bytes.hpp"
#include "tiered/hitrate.hpp"
#include "tiered/random.hpp"

namespace tiered {

std::string to_string(SimMode m) {
    switch (m) {
    case SimMode::CpuOnly:
        return "cpu_only";
    case SimMode::AllGpu:
        return "all_gpu";
    case SimMode::DedicatedGpu:
        return "dedicated_gpu";
    case SimMode::Tiered:
        return "tiered";
    }
    return "unknown";
}

SimMode parse_sim_mode(const std::string& name) {
    for (auto m : {SimMode::CpuOnly, SimMode::AllGpu, SimMode::DedicatedGpu, SimMode::Tiered}) {
        if (to_string(m) == name) {
            return m;
        }
    }
    throw_error(ErrorKind::InvalidArgument, "unknown simulation mode '" + name + "'");
}

Workload generate_workload(double lambda_rps, double duration_s, std::uint64_t seed) {
    TIERED_CHECK(lambda_rps > 0 && std::isfinite(lambda_rps), ErrorKind::InvalidArgument, "lambda must be positive");
    TIERED_CHECK(duration_s > 0, ErrorKind::InvalidArgument, "duration must be positive");
    Workload w;
    std::mt19937_64 rng(seed);
    w.hit_seed = rng();
    const double end_ms = duration_s * 1000.0;
    double t = 0;
    while (true) {
        t += exponential(rng, lambda_rps / 1000.0);
        if (t >= end_ms) {
            break;
        }
        w.arrivals.push_back(ms_to_ticks(t));
    }
    return w;
}

double percentile(std::vector<double> values, double q) {
    TIERED_CHECK(!values.empty(), ErrorKind::InvalidArgument, "percentile of an empty set");
    TIERED_CHECK(q > 0 && q <= 100, ErrorKind::InvalidArgument, "percentile rank must be in (0, 100]");
    std::sort(values.begin(), values.end());
    const auto rank = static_cast<std::size_t>(std::ceil(q / 100.0 * double(values.size())));
    return values[std::max<std::size_t>(rank, 1) - 1];
}

LatencyModel scale_latency(const LatencyModel& m, double factor) {
    TIERED_CHECK(factor > 0, ErrorKind::InvalidArgument, "scale factor must be positive");
    auto scale = [&](const PiecewiseLinear& p) {
        auto slopes = p.slopes();
        auto icpts = p.intercepts();
        for (auto& v : slopes) {
            v /= factor;
        }
        for (auto& v : icpts) {
            v /= factor;
        }
        return PiecewiseLinear(p.breakpoints(), slopes, icpts, p.residual_rms() / factor);
    };
    return {scale(m.cq), scale(m.lut)};
}

namespace {

class HitSampler {
  public:
    HitSampler(const HitRateModel& model, std::uint64_t seed) : model_(model), rng_(seed) {
        if (!model.trace.empty()) {
            return;
        }
        const double m = model.mean;
        TIERED_CHECK(m >= 0 && m <= 1, ErrorKind::InvalidArgument, "mean hit rate must be in [0, 1]");
        double var = variance_at(m, model.sigma2_max);
        if (m < 1e-4 || m > 1 - 1e-4 || var <= 0) {
            point_ = true;
            return;
        }
        var = std::min(var, 0.999 * m * (1 - m));
        beta_ = beta_from_moments(m, var);
    }

    double operator()() {
        if (!model_.trace.empty()) {
            return model_.trace[uniform_index(rng_, model_.trace.size())];
        }
        if (point_) {
            return model_.mean;
        }
        return sample_beta(beta_, rng_, normal_);
    }

  private:
    const HitRateModel& model_;
    std::mt19937_64 rng_;
    NormalSampler normal_;
    BetaParams beta_;
    bool point_ = false;
};

} // namespace

SimMetrics simulate(const Scenario& sc) {
    TIERED_CHECK(
            sc.lambda_rps * sc.duration_s >= 1000,
            ErrorKind::InvalidArgument,
            "duration must cover at least 1000 expected arrivals");
    return simulate(sc, generate_workload(sc.lambda_rps, sc.duration_s, sc.seed));
}

SimMetrics simulate(const Scenario& sc, const Workload& wl) {
    TIERED_CHECK(sc.gpu_speedup > 0, ErrorKind::InvalidArgument, "gpu speedup must be positive");
    TIERED_CHECK(sc.n_shards >= 1, ErrorKind::InvalidArgument, "need at least one shard");
    TIERED_CHECK(!sc.latency.cq.empty() && !sc.latency.lut.empty(), ErrorKind::InvalidArgument, "scenario has no latency model");
    SimMetrics out;
    out.mode = sc.mode;
    out.lambda_rps = sc.lambda_rps;

    TimingModel tm;
    tm.gpu_speedup = sc.gpu_speedup;
    tm.merge_ms = sc.merge_ms;
    tm.cpu = sc.latency;
    double mu = sc.llm.mu_llm0_rps;
    switch (sc.mode) {
    case SimMode::CpuOnly:
        break;
    case SimMode::AllGpu:
        if (sc.memory.index_bytes.empty() || sc.memory.index_bytes.back() > sc.memory.kv_bytes) {
            out.feasible = false;
        } else {
            mu = llm_throughput_at(sc.memory, sc.llm, 1.0);
        }
        tm.cpu = scale_latency(sc.latency, sc.gpu_speedup);
        break;
    case SimMode::DedicatedGpu:
        TIERED_CHECK(
                sc.dedicated_accelerators < sc.n_accelerators,
                ErrorKind::InvalidArgument,
                "dedicated accelerators must leave at least one for the LLM");
        mu *= double(sc.n_accelerators - sc.dedicated_accelerators) / double(sc.n_accelerators);
        tm.cpu = scale_latency(sc.latency, sc.gpu_speedup);
        break;
    case SimMode::Tiered:
        if (sc.memory.index_bytes.empty()) {
            TIERED_CHECK(sc.rho == 0, ErrorKind::InvalidArgument, "tiered mode with rho > 0 needs a memory model");
        } else if (sc.memory.index_bytes_at(sc.rho) > sc.memory.kv_bytes) {
            out.feasible = false;
        } else {
            mu = llm_throughput_at(sc.memory, sc.llm, sc.rho);
        }
        break;
    }
    out.mu_llm_rps = mu;
    if (mu <= 0) {
        out.feasible = false;  // the index leaves no KV room
    }
    if (!out.feasible) {
        return out;
    }
    TIERED_CHECK(mu > 0, ErrorKind::InvalidArgument, "LLM throughput must be positive");

    const std::size_t n = wl.arrivals.size();
    TIERED_CHECK(n > 0, ErrorKind::InvalidArgument, "empty workload");
    TIERED_CHECK(std::is_sorted(wl.arrivals.begin(), wl.arrivals.end()), ErrorKind::InvalidArgument, "arrivals out of order");
    out.requests.resize(n);
    std::vector<Tick> release(n);
    HitSampler sampler(sc.hits, wl.hit_seed);

    // retrieval server: serve everything that has arrived once free
    std::size_t i = 0;
    Tick free_at = 0;
    std::vector<QueryWork> work;
    while (i < n) {
        const Tick start = std::max(free_at, wl.arrivals[i]);
        std::size_t j = i;
        while (j < n && wl.arrivals[j] <= start && (sc.max_batch == 0 || j - i < sc.max_batch)) {
            ++j;
        }
        const std::size_t b = j - i;
        work.assign(b, QueryWork{});
        for (std::size_t q = 0; q < b; ++q) {
            auto& rec = out.requests[i + q];
            rec.request_id = i + q;
            double eta = 0;
            if (sc.mode == SimMode::Tiered) {
                eta = std::clamp(sampler(), 0.0, 1.0);
            }
            rec.hit_rate = eta;
            work[q].cold_fraction = 1 - eta;
            if (eta > 0) {
                work[q].shard_fraction.assign(sc.n_shards, eta / double(sc.n_shards));
            }
        }
        const auto timing = model_batch_timing(tm, work);
        Tick service = 0;
        BatchRecord br;
        br.start = start;
        br.size = b;
        for (std::size_t q = 0; q < b; ++q) {
            service = std::max(service, ms_to_ticks(timing[q].ready_ms));
            br.mean_release_on_ms += timing[q].release_on_ms / double(b);
            br.mean_release_off_ms += timing[q].release_off_ms / double(b);
            auto& rec = out.requests[i + q];
            rec.arrival = wl.arrivals[i + q];
            rec.batch_size = b;
            rec.search_queue = start - rec.arrival;
            rec.search = ms_to_ticks(sc.dispatcher ? timing[q].release_on_ms : timing[q].release_off_ms);
            release[i + q] = start + rec.search;
        }
        br.service = service;
        out.batches.push_back(br);
        free_at = start + service;
        i = j;
    }

    // LLM stage: one admission every 1/mu, in release order
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return release[a] < release[b]; });
    const Tick gap = std::max<Tick>(1, ms_to_ticks(1000.0 / mu));
    const Tick prefill = ms_to_ticks(sc.llm.prefill_ms(1));
    const Tick decode = ms_to_ticks(double(sc.output_tokens) * sc.decode_ms_per_token);
    Tick next_slot = 0;
    for (std::size_t r : order) {
        const Tick admit = std::max(release[r], next_slot);
        next_slot = admit + gap;
        auto& rec = out.requests[r];
        rec.llm_queue = admit - release[r];
        rec.prefill = prefill;
        rec.decode = decode;
    }

    // aggregates
    const Tick slo_total = ms_to_ticks(sc.slo.slo_search_ms + sc.slo.slo_llm_ms);
    std::vector<double> ttft(n), e2e(n), search(n);
    std::size_t met = 0;
    double search_sum = 0;
    for (std::size_t r = 0; r < n; ++r) {
        const auto& rec = out.requests[r];
        ttft[r] = ticks_to_ms(rec.ttft());
        e2e[r] = ticks_to_ms(rec.e2e());
        search[r] = ticks_to_ms(rec.search_queue + rec.search);
        search_sum += ticks_to_ms(rec.search);
        met += rec.ttft() <= slo_total ? 1 : 0;
    }
    out.p50_ttft_ms = percentile(ttft, 50);
    out.p90_ttft_ms = percentile(ttft, 90);
    out.p95_ttft_ms = percentile(ttft, 95);
    out.p50_e2e_ms = percentile(e2e, 50);
    out.p90_e2e_ms = percentile(e2e, 90);
    out.p95_e2e_ms = percentile(e2e, 95);
    out.p90_search_ms = percentile(search, 90);
    out.mean_search_ms = search_sum / double(n);
    out.slo_attainment = double(met) / double(n);
    out.mean_batch = double(n) / double(out.batches.size());

    // a queue that keeps growing: late arrivals wait far longer than early ones
    auto mean_queue = [&](std::size_t from, std::size_t to) {
        double s = 0;
        for (std::size_t r = from; r < to; ++r) {
            s += ticks_to_ms(out.requests[r].queue());
        }
        return to > from ? s / double(to - from) : 0.0;
    };
    const double early = mean_queue(0, n / 2);
    const double late = mean_queue(n - n / 4, n);
    out.saturated = sc.lambda_rps >= mu || late > 2 * early + ticks_to_ms(slo_total);
    return out;
}

SweepRow summarize(const SimMetrics& m) {
    SweepRow r;
    r.lambda_rps = m.lambda_rps;
    r.mode = m.mode;
    if (!m.feasible) {
        r.saturated = true;
        return r;
    }
    r.p50_ttft_ms = m.p50_ttft_ms;
    r.p90_ttft_ms = m.p90_ttft_ms;
    r.p95_ttft_ms = m.p95_ttft_ms;
    r.slo_attainment = m.slo_attainment;
    r.mean_batch = m.mean_batch;
    r.saturated = m.saturated;
    for (const auto& rec : m.requests) {
        r.queue_ms += ticks_to_ms(rec.queue());
        r.search_ms += ticks_to_ms(rec.search);
        r.prefill_ms += ticks_to_ms(rec.prefill);
    }
    const double n = double(m.requests.size());
    r.queue_ms /= n;
    r.search_ms /= n;
    r.prefill_ms /= n;
    return r;
}

std::vector<SweepRow> sweep(const Scenario& base, std::span<const double> lambdas, std::span<const SimMode> modes) {
    TIERED_CHECK(!lambdas.empty() && !modes.empty(), ErrorKind::InvalidArgument, "empty sweep");
    std::vector<SweepRow> rows;
    for (double lambda : lambdas) {
        auto sc = base;
        sc.lambda_rps = lambda;
        TIERED_CHECK(
                lambda * sc.duration_s >= 1000,
                ErrorKind::InvalidArgument,
                "duration must cover at least 1000 expected arrivals");
        const auto wl = generate_workload(lambda, sc.duration_s, sc.seed);
        for (auto mode : modes) {
            sc.mode = mode;
            rows.push_back(summarize(simulate(sc, wl)));
        }
    }
    return rows;
}

MaxLambda max_compliant_lambda(const Scenario& base, double target, double lo, double rel_tol) {
    TIERED_CHECK(lo > 0 && rel_tol > 0, ErrorKind::InvalidArgument, "bad search bounds");
    MaxLambda out;
    auto ok = [&](double lambda) {
        auto sc = base;
        sc.lambda_rps = lambda;
        sc.duration_s = std::max(base.duration_s, 2000.0 / lambda);
        ++out.evaluations;
        const auto m = simulate(sc);
        return m.feasible && m.slo_attainment >= target;
    };
    if (!ok(lo)) {
        return out;
    }
    double hi = 2 * lo;
    while (ok(hi)) {
        lo = hi;
        hi *= 2;
        TIERED_CHECK(hi < 1e7, ErrorKind::NoConvergence, "attainment never drops; check the scenario");
    }
    while ((hi - lo) / lo > rel_tol) {
        const double mid = 0.5 * (lo + hi);
        (ok(mid) ? lo : hi) = mid;
    }
    out.lambda_rps = lo;
    return out;
}

// ---------------------------------------------------------------- reports

namespace {

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), f, v);
    return buf;
}

std::string num(double v) {
    return fmt("%.6f", v);
}

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd"};

} // namespace

std::string requests_csv(const SimMetrics& m) {
    std::string s = std::string(kRequestCsvHeader) + "\n";
    for (const auto& r : m.requests) {
        s += std::to_string(r.request_id) + "," + num(ticks_to_ms(r.arrival)) + "," + num(ticks_to_ms(r.queue())) +
                "," + num(ticks_to_ms(r.search)) + "," + num(ticks_to_ms(r.prefill)) + "," + num(ticks_to_ms(r.ttft())) +
                "," + num(ticks_to_ms(r.e2e())) + "," + std::to_string(r.batch_size) + "," + num(r.hit_rate) + "\n";
    }
    return s;
}

std::string sweep_csv(std::span<const SweepRow> rows) {
    std::string s = std::string(kSweepCsvHeader) + "\n";
    for (const auto& r : rows) {
        s += num(r.lambda_rps) + "," + to_string(r.mode) + "," + num(r.p50_ttft_ms) + "," + num(r.p90_ttft_ms) + "," +
                num(r.p95_ttft_ms) + "," + num(r.slo_attainment) + "," + num(r.mean_batch) + "," +
                (r.saturated ? "1" : "0") + "\n";
    }
    return s;
}

std::string attainment_svg(std::span<const SweepRow> rows, const std::string& title) {
    TIERED_CHECK(!rows.empty(), ErrorKind::InvalidArgument, "nothing to plot");
    const double w = 640, h = 400, left = 60, right = 150, top = 40, bottom = 50;
    double xmax = 0;
    for (const auto& r : rows) {
        xmax = std::max(xmax, r.lambda_rps);
    }
    xmax = xmax > 0 ? xmax : 1;
    auto px = [&](double x) { return left + x / xmax * (w - left - right); };
    auto py = [&](double y) { return h - bottom - y * (h - top - bottom); };

    std::map<int, std::vector<const SweepRow*>> by_mode;
    for (const auto& r : rows) {
        by_mode[int(r.mode)].push_back(&r);
    }
    std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"400\" font-family=\"sans-serif\" font-size=\"12\">\n";
    s += "<rect width=\"640\" height=\"400\" fill=\"white\"/>\n";
    s += "<text x=\"" + num(left) + "\" y=\"24\" font-size=\"14\">" + title + "</text>\n";
    s += "<line x1=\"" + num(left) + "\" y1=\"" + num(py(0)) + "\" x2=\"" + num(w - right) + "\" y2=\"" + num(py(0)) + "\" stroke=\"black\"/>\n";
    s += "<line x1=\"" + num(left) + "\" y1=\"" + num(py(0)) + "\" x2=\"" + num(left) + "\" y2=\"" + num(py(1)) + "\" stroke=\"black\"/>\n";
    for (double y : {0.0, 0.5, 0.9, 1.0}) {
        s += "<text x=\"" + num(left - 8) + "\" y=\"" + num(py(y) + 4) + "\" text-anchor=\"end\">" + fmt("%.1f", y) + "</text>\n";
    }
    s += "<line x1=\"" + num(left) + "\" y1=\"" + num(py(0.9)) + "\" x2=\"" + num(w - right) + "\" y2=\"" + num(py(0.9)) +
            "\" stroke=\"gray\" stroke-dasharray=\"4 4\"/>\n";
    s += "<text x=\"" + num((left + w - right) / 2) + "\" y=\"" + num(h - 12) + "\" text-anchor=\"middle\">arrival rate (req/s), max " +
            fmt("%.1f", xmax) + "</text>\n";
    std::size_t li = 0;
    for (const auto& [mode, pts] : by_mode) {
        auto sorted = pts;
        std::stable_sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->lambda_rps < b->lambda_rps; });
        const char* color = kPalette[li % 4];
        std::string path;
        for (auto* r : sorted) {
            path += (path.empty() ? "M" : " L") + num(px(r->lambda_rps)) + " " + num(py(r->slo_attainment));
        }
        s += "<path d=\"" + path + "\" fill=\"none\" stroke=\"" + color + "\" stroke-width=\"2\"/>\n";
        const double ly = top + 20 * double(li);
        s += "<rect x=\"" + num(w - right + 12) + "\" y=\"" + num(ly) + "\" width=\"12\" height=\"12\" fill=\"" + color + "\"/>\n";
        s += "<text x=\"" + num(w - right + 30) + "\" y=\"" + num(ly + 10) + "\">" + to_string(SimMode(mode)) + "</text>\n";
        ++li;
    }
    s += "</svg>\n";
    return s;
}

std::string breakdown_svg(std::span<const SweepRow> rows, const std::string& title) {
    TIERED_CHECK(!rows.empty(), ErrorKind::InvalidArgument, "nothing to plot");
    const double h = 400, left = 60, top = 40, bottom = 90, bar = 18, pitch = 26;
    const double w = std::max(640.0, left + 150 + pitch * double(rows.size()));
    double ymax = 0;
    for (const auto& r : rows) {
        ymax = std::max(ymax, r.queue_ms + r.search_ms + r.prefill_ms);
    }
    ymax = ymax > 0 ? ymax : 1;
    auto scale = [&](double v) { return v / ymax * (h - top - bottom); };
    std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(w) +
            "\" height=\"400\" font-family=\"sans-serif\" font-size=\"11\">\n";
    s += "<rect width=\"" + num(w) + "\" height=\"400\" fill=\"white\"/>\n";
    s += "<text x=\"" + num(left) + "\" y=\"24\" font-size=\"14\">" + title + "</text>\n";
    s += "<text x=\"" + num(left - 8) + "\" y=\"" + num(top + 4) + "\" text-anchor=\"end\">" + fmt("%.0f", ymax) + " ms</text>\n";
    const char* colors[] = {"#ff7f0e", "#1f77b4", "#2ca02c"};
    const char* names[] = {"queue", "search", "prefill"};
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        const double x = left + pitch * double(i);
        double base = h - bottom;
        const double parts[] = {r.queue_ms, r.search_ms, r.prefill_ms};
        for (int p = 0; p < 3; ++p) {
            const double hh = scale(parts[p]);
            s += "<rect x=\"" + num(x) + "\" y=\"" + num(base - hh) + "\" width=\"" + num(bar) + "\" height=\"" + num(hh) +
                    "\" fill=\"" + colors[p] + "\"/>\n";
            base -= hh;
        }
        s += "<text transform=\"translate(" + num(x + 12) + " " + num(h - bottom + 8) + ") rotate(60)\">" +
                to_string(r.mode) + " " + fmt("%.1f", r.lambda_rps) + "</text>\n";
    }
    for (int p = 0; p < 3; ++p) {
        const double ly = top + 20 * p;
        s += "<rect x=\"" + num(w - 110) + "\" y=\"" + num(ly) + "\" width=\"12\" height=\"12\" fill=\"" + colors[p] + "\"/>\n";
        s += "<text x=\"" + num(w - 92) + "\" y=\"" + num(ly + 10) + "\">" + names[p] + "</text>\n";
    }
    s += "</svg>\n";
    return s;
}

void write_report(const std::filesystem::path& dir, std::span<const SweepRow> rows) {
    TIERED_CHECK(!rows.empty(), ErrorKind::InvalidArgument, "empty sweep, no report written");
    // render everything before touching the directory
    const auto csv = sweep_csv(rows);
    const auto att = attainment_svg(rows, "SLO attainment");
    const auto brk = breakdown_svg(rows, "TTFT breakdown");
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    TIERED_CHECK(!ec, ErrorKind::Io, "cannot create " + dir.string() + ": " + ec.message());
    write_text_file(dir / "sweep.csv", csv);
    write_text_file(dir / "attainment.svg", att);
    write_text_file(dir / "breakdown.svg", brk);
}

} // namespace tiered
