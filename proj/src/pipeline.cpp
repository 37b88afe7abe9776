#include "tiered/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "tiered/log.hpp"
#include "tiered/queue.hpp"

namespace tiered {

TopK merge_rerank(std::span<const TopK> partials, std::size_t k) {
    TopK out;
    if (partials.empty()) {
        return out;
    }
    out.query_id = partials.front().query_id;
    std::size_t total = 0;
    for (const auto& p : partials) {
        TIERED_CHECK(
                p.query_id == out.query_id,
                ErrorKind::InvalidArgument,
                "merge_rerank given partials for different queries");
        total += p.hits.size();
    }
    out.hits.reserve(total);
    for (const auto& p : partials) {
        out.hits.insert(out.hits.end(), p.hits.begin(), p.hits.end());
    }
    std::sort(out.hits.begin(), out.hits.end(), hit_less);
    for (std::size_t i = 1; i < out.hits.size(); ++i) {
        TIERED_CHECK(
                out.hits[i].id != out.hits[i - 1].id || out.hits[i].distance != out.hits[i - 1].distance,
                ErrorKind::Internal,
                "vector " + std::to_string(out.hits[i].id) + " returned by two tiers");
    }
    if (out.hits.size() > k) {
        out.hits.resize(k);
    }
    return out;
}

std::vector<QueryTiming> model_batch_timing(const TimingModel& model, std::span<const QueryWork> work) {
    TIERED_CHECK(model.gpu_speedup > 0, ErrorKind::InvalidArgument, "gpu speedup must be positive");
    const std::size_t b = work.size();
    std::vector<QueryTiming> out(b);
    if (b == 0) {
        return out;
    }
    const double t_cq = model.cpu.cq(double(b));
    const double t_lut = model.cpu.lut(double(b));
    std::size_t n_shards = 0;
    for (const auto& w : work) {
        n_shards = std::max(n_shards, w.shard_fraction.size());
    }
    std::vector<double> shard_load(n_shards, 0.0);
    for (const auto& w : work) {
        for (std::size_t s = 0; s < w.shard_fraction.size(); ++s) {
            shard_load[s] = std::max(shard_load[s], w.shard_fraction[s]);
        }
    }
    double batch_end = 0;
    for (std::size_t q = 0; q < b; ++q) {
        const auto& w = work[q];
        double ready = t_cq + w.cold_fraction * t_lut;
        for (std::size_t s = 0; s < w.shard_fraction.size(); ++s) {
            if (w.shard_fraction[s] > 0) {
                ready = std::max(ready, t_cq + shard_load[s] * t_lut / model.gpu_speedup);
            }
        }
        out[q].ready_ms = ready;
        batch_end = std::max(batch_end, ready);
    }
    std::vector<std::size_t> order(b);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
        return out[x].ready_ms < out[y].ready_ms;
    });
    double t = 0;
    for (std::size_t q : order) {
        t = std::max(t, out[q].ready_ms) + model.merge_ms;
        out[q].release_on_ms = t;
    }
    for (auto& qt : out) {
        qt.release_off_ms = batch_end + double(b) * model.merge_ms;
    }
    return out;
}

RoutingSnapshot RoutingSnapshot::build(
        std::uint64_t version,
        std::size_t n_clusters,
        std::vector<std::shared_ptr<const ShardIndex>> shards) {
    RoutingSnapshot s;
    s.version = version;
    s.shard_of.assign(n_clusters, kColdTier);
    s.local_of.assign(n_clusters, 0);
    for (std::size_t i = 0; i < shards.size(); ++i) {
        if (!shards[i]) {
            continue;
        }
        const auto& ids = shards[i]->global_ids;
        for (std::size_t l = 0; l < ids.size(); ++l) {
            TIERED_CHECK(
                    ids[l] < n_clusters,
                    ErrorKind::UnknownCluster,
                    "shard holds unknown cluster " + std::to_string(ids[l]));
            if (s.shard_of[ids[l]] == kColdTier) {
                s.shard_of[ids[l]] = std::int32_t(i);
                s.local_of[ids[l]] = ClusterId(l);
            }
        }
    }
    s.shards = std::move(shards);
    return s;
}

RoutedBatch route_batch(
        const IvfIndex& host,
        const RoutingSnapshot& snapshot,
        std::span<const RetrievalRequest> batch) {
    TIERED_CHECK(
            snapshot.shard_of.size() == host.n_clusters(),
            ErrorKind::StaleInput,
            "routing snapshot was built for a different index");
    const std::size_t n_shards = snapshot.shards.size();
    RoutedBatch r;
    r.version = snapshot.version;
    r.shortlists.reserve(batch.size());
    for (const auto& req : batch) {
        TIERED_CHECK(req.k >= 1, ErrorKind::InvalidArgument, "k must be >= 1");
        r.shortlists.push_back(coarse_quantize(host, req.query, req.nprobe, req.request_id));
    }

    std::vector<TierTask> per_tier(n_shards + 1);
    for (std::size_t s = 0; s < n_shards; ++s) {
        per_tier[s].tier = std::int32_t(s);
    }
    per_tier[n_shards].tier = kColdTier;
    r.work.resize(batch.size());
    r.tiers_per_query.assign(batch.size(), 0);
    for (std::size_t q = 0; q < batch.size(); ++q) {
        const auto& ids = r.shortlists[q].cluster_ids;
        std::vector<std::vector<ClusterId>> buckets(n_shards + 1);
        for (ClusterId g : ids) {
            const auto s = snapshot.shard_of[g];
            if (s == kColdTier) {
                buckets[n_shards].push_back(g);
            } else {
                buckets[std::size_t(s)].push_back(snapshot.local_of[g]);
            }
        }
        auto& w = r.work[q];
        w.shard_fraction.assign(n_shards, 0.0);
        const double n = double(ids.size());
        for (std::size_t t = 0; t <= n_shards; ++t) {
            if (buckets[t].empty()) {
                continue;
            }
            (t < n_shards ? w.shard_fraction[t] : w.cold_fraction) = double(buckets[t].size()) / n;
            per_tier[t].queries.push_back(q);
            per_tier[t].clusters.push_back(std::move(buckets[t]));
            ++r.tiers_per_query[q];
        }
    }
    for (auto& t : per_tier) {
        if (!t.queries.empty()) {
            r.tasks.push_back(std::move(t));
        }
    }
    return r;
}

bool check_drift(double attainment, double observed_hitrate, double expected_hitrate, const DriftThresholds& t) {
    return attainment < t.min_attainment && std::abs(observed_hitrate - expected_hitrate) > t.max_hitrate_gap;
}

// ---------------------------------------------------------------- engine

struct Engine::Worker {
    BlockingQueue<std::function<void()>> jobs;
    std::thread thread;

    Worker()
            : thread([this] {
                  while (auto job = jobs.pop()) {
                      (*job)();
                  }
              }) {}
    ~Worker() {
        jobs.close();
        thread.join();
    }
};

namespace {

struct Completion {
    std::int32_t tier = kColdTier;
    std::size_t query = 0;
    TopK partial;
    // shard failure: the whole task comes back for the host to rerun
    bool failed = false;
    std::vector<std::size_t> failed_queries;
    std::vector<std::vector<ClusterId>> failed_clusters;  // global ids
    std::string error;
};

using CompletionQueue = BlockingQueue<Completion>;

struct BatchInput {
    VectorDataset queries;
    std::vector<std::size_t> k;
};

// Host scans go query by query and report each query as soon as its
// cluster group is done.
void run_host_task(
        const IvfIndex& host,
        const BatchInput& in,
        const std::vector<std::size_t>& queries,
        const std::vector<std::vector<ClusterId>>& clusters,
        CompletionQueue& out) {
    for (std::size_t j = 0; j < queries.size(); ++j) {
        const std::size_t q = queries[j];
        Completion c;
        c.query = q;
        try {
            c.partial = scan_clusters(host, in.queries.row(q), clusters[j], in.k[q], in.queries.ids[q]);
        } catch (const std::exception& e) {
            c.error = e.what();
        }
        out.push(std::move(c));
    }
}

} // namespace

Engine::Engine(std::shared_ptr<const IvfIndex> host, EngineConfig config)
        : host_(std::move(host)), config_(std::move(config)) {
    TIERED_CHECK(host_ != nullptr, ErrorKind::InvalidArgument, "engine needs a host index");
    TIERED_CHECK(config_.n_shards >= 1, ErrorKind::InvalidArgument, "need at least one shard");
    TIERED_CHECK(config_.window >= 1, ErrorKind::InvalidArgument, "window must be >= 1");
    TIERED_CHECK(
            !config_.timing.cpu.cq.empty() && !config_.timing.cpu.lut.empty(),
            ErrorKind::InvalidArgument,
            "engine needs a latency model");
    faults_ = std::make_unique<std::atomic<bool>[]>(config_.n_shards);
    for (std::size_t s = 0; s < config_.n_shards; ++s) {
        faults_[s] = false;
        shard_workers_.push_back(std::make_unique<Worker>());
    }
    host_worker_ = std::make_unique<Worker>();
    stats_.window_size = config_.window;
    stats_.cluster_counts.assign(host_->n_clusters(), 0);
    install_plan({}, 0.0);
}

Engine::~Engine() {
    std::lock_guard lock(launch_mu_);
    if (update_thread_.joinable()) {
        update_thread_.join();
    }
}

void Engine::publish(std::vector<std::shared_ptr<const ShardIndex>> shards) {
    // callers hold snap_mu_
    snap_ = std::make_shared<const RoutingSnapshot>(
            RoutingSnapshot::build(next_version_++, host_->n_clusters(), std::move(shards)));
}

std::shared_ptr<const RoutingSnapshot> Engine::snapshot() const {
    std::lock_guard lock(snap_mu_);
    return snap_;
}

ShardMap Engine::install_plan(std::span<const ClusterId> hot, double expected_hitrate) {
    auto map = plan_shards(host_->all_cluster_bytes(), hot, config_.n_shards);
    std::vector<std::shared_ptr<const ShardIndex>> shards;
    for (std::size_t s = 0; s < config_.n_shards; ++s) {
        shards.push_back(std::make_shared<const ShardIndex>(
                extract_shard(*host_, std::uint16_t(s), map.shard_clusters[s])));
    }
    {
        std::lock_guard lock(snap_mu_);
        publish(std::move(shards));
    }
    std::lock_guard lock(stats_mu_);
    expected_hitrate_ = expected_hitrate;
    return map;
}

void Engine::begin_shard_swap(std::size_t s) {
    TIERED_CHECK(s < config_.n_shards, ErrorKind::InvalidArgument, "no such shard");
    std::lock_guard lock(snap_mu_);
    auto shards = snap_->shards;
    shards[s] = nullptr;
    publish(std::move(shards));
}

void Engine::install_shard(std::size_t s, ShardIndex shard) {
    TIERED_CHECK(s < config_.n_shards, ErrorKind::InvalidArgument, "no such shard");
    TIERED_CHECK(
            shard.index.dim() == host_->dim() && shard.index.metric() == host_->metric() &&
                    shard.index.quantization() == host_->quantization() &&
                    shard.index.n_clusters() == shard.global_ids.size(),
            ErrorKind::InvalidArgument,
            "shard does not match the host index");
    shard.shard_id = std::uint16_t(s);
    auto ptr = std::make_shared<const ShardIndex>(std::move(shard));
    std::lock_guard lock(snap_mu_);
    auto shards = snap_->shards;
    shards[s] = std::move(ptr);
    publish(std::move(shards));
}

void Engine::set_shard_fault(std::size_t s, bool failing) {
    TIERED_CHECK(s < config_.n_shards, ErrorKind::InvalidArgument, "no such shard");
    faults_[s] = failing;
}

void Engine::set_swap_hook(std::function<void(std::size_t, SwapPhase)> hook) {
    std::lock_guard lock(hook_mu_);
    swap_hook_ = std::move(hook);
}

RuntimeStats Engine::stats() const {
    std::lock_guard lock(stats_mu_);
    return stats_;
}

double Engine::expected_hitrate() const {
    std::lock_guard lock(stats_mu_);
    return expected_hitrate_;
}

std::vector<UpdateReport> Engine::updates() const {
    std::lock_guard lock(stats_mu_);
    return updates_;
}

void Engine::wait_for_update() {
    std::lock_guard lock(launch_mu_);
    if (update_thread_.joinable()) {
        update_thread_.join();
    }
}

BatchResult Engine::search_batch(std::span<const RetrievalRequest> batch) {
    BatchResult result;
    if (batch.empty()) {
        return result;
    }
    const auto snap = snapshot();
    auto routed = route_batch(*host_, *snap, batch);
    result.map_version = routed.version;

    auto input = std::make_shared<BatchInput>();
    input->queries.dim = host_->dim();
    for (const auto& req : batch) {
        input->queries.push_back(req.request_id, req.query);
        input->k.push_back(req.k);
    }
    auto done = std::make_shared<CompletionQueue>();

    for (auto& task : routed.tasks) {
        auto t = std::make_shared<const TierTask>(task);
        if (task.tier == kColdTier) {
            host_worker_->jobs.push([host = host_, input, t, done] {
                run_host_task(*host, *input, t->queries, t->clusters, *done);
            });
            continue;
        }
        const auto s = std::size_t(task.tier);
        auto shard = snap->shards[s];
        shard_workers_[s]->jobs.push([this, s, shard, input, t, done] {
            std::vector<Completion> out;
            std::string error;
            try {
                TIERED_CHECK(!faults_[s].load(), ErrorKind::Internal, "injected shard fault");
                for (std::size_t j = 0; j < t->queries.size(); ++j) {
                    const std::size_t q = t->queries[j];
                    Completion c;
                    c.tier = std::int32_t(s);
                    c.query = q;
                    c.partial = scan_clusters(
                            shard->index, input->queries.row(q), t->clusters[j], input->k[q], input->queries.ids[q]);
                    out.push_back(std::move(c));
                }
            } catch (const std::exception& e) {
                error = e.what();
            }
            if (error.empty()) {
                for (auto& c : out) {
                    done->push(std::move(c));
                }
                return;
            }
            Completion f;
            f.tier = std::int32_t(s);
            f.failed = true;
            f.error = error;
            f.failed_queries = t->queries;
            for (const auto& locals : t->clusters) {
                std::vector<ClusterId> globals;
                for (ClusterId l : locals) {
                    globals.push_back(shard->global_ids[l]);
                }
                f.failed_clusters.push_back(std::move(globals));
            }
            done->push(std::move(f));
        });
    }

    // dispatcher: release each query as soon as all of its tiers reported
    const std::size_t b = batch.size();
    std::vector<std::vector<TopK>> partials(b);
    std::size_t outstanding = std::accumulate(routed.tiers_per_query.begin(), routed.tiers_per_query.end(), std::size_t(0));
    result.results.resize(b);
    std::string host_error;
    while (outstanding > 0) {
        auto ev = done->pop();
        if (ev->failed) {
            ++result.fallbacks;
            log_warn("shard " + std::to_string(ev->tier) + " failed (" + ev->error + "), rerunning on host");
            const auto s = std::size_t(ev->tier);
            for (std::size_t q : ev->failed_queries) {
                auto& w = routed.work[q];
                w.cold_fraction += w.shard_fraction[s];
                w.shard_fraction[s] = 0;
            }
            host_worker_->jobs.push([host = host_,
                                     input,
                                     qs = std::move(ev->failed_queries),
                                     cl = std::move(ev->failed_clusters),
                                     done] { run_host_task(*host, *input, qs, cl, *done); });
            continue;
        }
        --outstanding;
        if (!ev->error.empty()) {
            host_error = ev->error;
        }
        auto& mine = partials[ev->query];
        mine.push_back(std::move(ev->partial));
        if (mine.size() == routed.tiers_per_query[ev->query]) {
            result.results[ev->query] = merge_rerank(mine, batch[ev->query].k);
            result.release_order.push_back(ev->query);
        }
    }
    TIERED_CHECK(host_error.empty(), ErrorKind::Internal, "host scan failed: " + host_error);

    result.timing = model_batch_timing(config_.timing, routed.work);
    result.hitrate.resize(b);
    for (std::size_t q = 0; q < b; ++q) {
        const auto& f = routed.work[q].shard_fraction;
        result.hitrate[q] = std::accumulate(f.begin(), f.end(), 0.0);
    }
    record(routed, result, batch);
    return result;
}

void Engine::record(const RoutedBatch& routed, const BatchResult& r, std::span<const RetrievalRequest> batch) {
    std::vector<std::function<void()>> deferred;
    {
        std::lock_guard lock(stats_mu_);
        for (std::size_t q = 0; q < batch.size(); ++q) {
            for (ClusterId c : routed.shortlists[q].cluster_ids) {
                ++stats_.cluster_counts[c];
            }
            stats_.probes += routed.shortlists[q].cluster_ids.size();
            stats_.hitrate_sum += r.hitrate[q];
            const double t = config_.dispatcher ? r.timing[q].release_on_ms : r.timing[q].release_off_ms;
            stats_.slo_met += t <= config_.slo_search_ms ? 1 : 0;
            ++stats_.requests;
            window_nprobe_ = batch[q].nprobe;
            window_shortlists_.push_back(routed.shortlists[q]);
            if (stats_.requests == stats_.window_size) {
                close_window(deferred);
            }
        }
    }
    for (auto& f : deferred) {
        f();
    }
}

void Engine::close_window(std::vector<std::function<void()>>& deferred) {
    // caller holds stats_mu_
    WindowSummary w;
    w.index = window_index_;
    w.requests = stats_.requests;
    w.probes = stats_.probes;
    w.mean_hitrate = stats_.mean_hitrate();
    w.expected_hitrate = expected_hitrate_;
    w.attainment = stats_.attainment();
    w.drift = check_drift(w.attainment, w.mean_hitrate, w.expected_hitrate, config_.drift);
    w.map_version = snapshot()->version;
    stats_.windows.push_back(w);

    if (w.drift && config_.update.enabled && window_index_ >= retry_after_window_ &&
        !update_running_.exchange(true)) {
        deferred.push_back([this,
                            counts = stats_.cluster_counts,
                            shortlists = std::move(window_shortlists_),
                            n = stats_.requests,
                            nprobe = window_nprobe_,
                            idx = window_index_]() mutable {
            if (!config_.update.background) {
                adaptive_update(std::move(counts), std::move(shortlists), n, nprobe, idx);
                update_running_ = false;
                return;
            }
            std::lock_guard lock(launch_mu_);
            if (update_thread_.joinable()) {
                update_thread_.join();
            }
            update_thread_ = std::thread([this, counts = std::move(counts), shortlists = std::move(shortlists), n, nprobe, idx]() mutable {
                adaptive_update(std::move(counts), std::move(shortlists), n, nprobe, idx);
                update_running_ = false;
            });
        });
    }
    ++window_index_;
    stats_.requests = 0;
    stats_.probes = 0;
    stats_.hitrate_sum = 0;
    stats_.slo_met = 0;
    std::fill(stats_.cluster_counts.begin(), stats_.cluster_counts.end(), 0);
    window_shortlists_.clear();
}

UpdateReport Engine::adaptive_update(
        std::vector<std::uint64_t> counts,
        std::vector<ClusterShortlist> shortlists,
        std::size_t n_requests,
        std::size_t nprobe,
        std::uint64_t window_index) {
    std::lock_guard guard(update_mu_);
    const auto& pol = config_.update;
    UpdateReport rep;
    rep.window_index = window_index;
    const auto before = snapshot()->shards;
    try {
        const auto bytes = host_->all_cluster_bytes();
        const auto profile = make_access_profile(std::move(counts), bytes, nprobe, n_requests);
        const auto curve = coverage_curve(profile);
        const auto sigma = sigma_max_from_shortlists(shortlists, profile, curve);
        CoverageInverter inverter(curve, sigma.sigma2_max);
        const auto mem = make_memory_model(curve, pol.kv_bytes, 0, pol.index_scale);
        rep.plan = partition(pol.slo, mem, pol.llm, pol.latency, profile, inverter);
        rep.map = plan_shards(bytes, rep.plan.hot_cluster_ids, config_.n_shards);
        rep.expected_hitrate = curve.points[rep.plan.n_hot].mean_hitrate;

        std::function<void(std::size_t, SwapPhase)> hook;
        {
            std::lock_guard lock(hook_mu_);
            hook = swap_hook_;
        }
        for (std::size_t s = 0; s < config_.n_shards; ++s) {
            begin_shard_swap(s);
            if (hook) {
                hook(s, SwapPhase::Offline);
            }
            // round-trip through the shard file format, as a reload would
            auto shard = deserialize_shard(
                    serialize_shard(extract_shard(*host_, std::uint16_t(s), rep.map.shard_clusters[s])));
            install_shard(s, std::move(shard));
            if (hook) {
                hook(s, SwapPhase::Online);
            }
        }
        rep.ok = true;
        log_info(
                "adaptive update installed " + std::to_string(rep.plan.n_hot) + " hot clusters, expected hit rate " +
                std::to_string(rep.expected_hitrate));
    } catch (const std::exception& e) {
        rep.ok = false;
        rep.error = e.what();
        {
            std::lock_guard lock(snap_mu_);
            if (snap_->shards != before) {
                publish(before);
            }
        }
        log_warn(std::string("adaptive update failed, keeping the current map: ") + e.what());
    }
    std::lock_guard lock(stats_mu_);
    if (rep.ok) {
        expected_hitrate_ = rep.expected_hitrate;
    } else {
        retry_after_window_ = window_index + 1 + pol.backoff_windows;
    }
    updates_.push_back(rep);
    return rep;
}

} // namespace tiered
