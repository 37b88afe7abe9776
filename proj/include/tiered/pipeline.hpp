#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "tiered/partitioner.hpp"
#include "tiered/splitter.hpp"

namespace tiered {

struct RetrievalRequest {
    std::uint64_t request_id = 0;
    std::vector<float> query;
    std::size_t nprobe = 1;
    std::size_t k = 10;
    double arrival_ms = 0;
};

/// Global top-k of the union of partial results for one query.
TopK merge_rerank(std::span<const TopK> partials, std::size_t k);

// ---------------------------------------------------------------- timing

/// Share of one query's probes handled by each tier, as fractions of nprobe.
struct QueryWork {
    double cold_fraction = 0;
    std::vector<double> shard_fraction;
};

/**
 * Modeled service time of one batch. The host scans every query's cold
 * probes in parallel lanes, so a query's cold work ends at
 * T_CQ(B) + cold_fraction * T_LUT(B). An accelerator shard scans its whole
 * sub-batch at once and finishes after its most loaded query, at
 * `gpu_speedup` times the host rate.
 */
struct TimingModel {
    LatencyModel cpu;
    double gpu_speedup = 10;
    double merge_ms = 0;  // per-query merge cost on the dispatcher
};

struct QueryTiming {
    double ready_ms = 0;        // all tiers done
    double release_on_ms = 0;   // dynamic dispatcher
    double release_off_ms = 0;  // release at batch end
};

std::vector<QueryTiming> model_batch_timing(const TimingModel& model, std::span<const QueryWork> work);

// ---------------------------------------------------------------- routing

/**
 * One published routing epoch. A null shard is offline (being swapped) and
 * its clusters route to the host. When two online shards hold the same
 * cluster, the lower shard index serves it.
 */
struct RoutingSnapshot {
    std::uint64_t version = 0;
    std::vector<std::shared_ptr<const ShardIndex>> shards;
    std::vector<std::int32_t> shard_of;  // per global cluster, kColdTier if host
    std::vector<ClusterId> local_of;

    static RoutingSnapshot build(
            std::uint64_t version,
            std::size_t n_clusters,
            std::vector<std::shared_ptr<const ShardIndex>> shards);
};

struct TierTask {
    std::int32_t tier = kColdTier;  // shard index or kColdTier
    std::vector<std::size_t> queries;  // positions in the batch
    std::vector<std::vector<ClusterId>> clusters;  // local ids on shards, global on the host
};

struct RoutedBatch {
    std::uint64_t version = 0;
    std::vector<ClusterShortlist> shortlists;
    std::vector<TierTask> tasks;
    std::vector<QueryWork> work;
    std::vector<std::size_t> tiers_per_query;
};

/// Coarse quantization on the host, then one task per tier with work.
RoutedBatch route_batch(
        const IvfIndex& host,
        const RoutingSnapshot& snapshot,
        std::span<const RetrievalRequest> batch);

// ---------------------------------------------------------------- stats

struct DriftThresholds {
    double min_attainment = 0.9;
    double max_hitrate_gap = 0.05;
};

/// Both conditions must hold: attainment below its floor and the observed
/// mean hit rate off its expectation by more than the gap.
bool check_drift(double attainment, double observed_hitrate, double expected_hitrate, const DriftThresholds& t);

struct WindowSummary {
    std::uint64_t index = 0;
    std::size_t requests = 0;
    std::uint64_t probes = 0;
    double mean_hitrate = 0;
    double expected_hitrate = 0;
    double attainment = 0;
    bool drift = false;
    std::uint64_t map_version = 0;
};

struct RuntimeStats {
    std::size_t window_size = 2000;
    std::size_t requests = 0;  // in the open window
    std::uint64_t probes = 0;
    double hitrate_sum = 0;
    std::size_t slo_met = 0;
    std::vector<std::uint64_t> cluster_counts;
    std::vector<WindowSummary> windows;  // closed windows, oldest first

    double mean_hitrate() const {
        return requests ? hitrate_sum / double(requests) : 0.0;
    }
    double attainment() const {
        return requests ? double(slo_met) / double(requests) : 1.0;
    }
};

// ---------------------------------------------------------------- engine

/// Inputs for re-planning from runtime counters.
struct UpdatePolicy {
    bool enabled = false;
    bool background = true;
    SloConfig slo;
    LlmModel llm;
    LatencyModel latency;
    double kv_bytes = 0;
    double index_scale = 1;
    std::size_t backoff_windows = 1;  // windows to wait after a failed update
};

struct EngineConfig {
    std::size_t n_shards = 1;
    TimingModel timing;
    bool dispatcher = true;
    double slo_search_ms = 150;
    std::size_t window = 2000;
    DriftThresholds drift;
    UpdatePolicy update;
};

struct BatchResult {
    std::uint64_t map_version = 0;
    std::vector<TopK> results;  // batch order
    std::vector<QueryTiming> timing;
    std::vector<double> hitrate;  // share of probes served by shards
    std::vector<std::size_t> release_order;  // order the dispatcher released queries
    std::size_t fallbacks = 0;  // shard tasks rerun on the host
};

struct UpdateReport {
    bool ok = false;
    std::string error;
    std::uint64_t window_index = 0;
    PartitionPlan plan;
    ShardMap map;
    double expected_hitrate = 0;
};

enum class SwapPhase { Offline, Online };

/**
 * Hybrid retrieval service. One worker thread per shard plus one host
 * worker; the calling thread merges results as completions arrive.
 * search_batch may be called from several threads.
 */
class Engine {
  public:
    Engine(std::shared_ptr<const IvfIndex> host, EngineConfig config);
    ~Engine();
    Engine(const Engine&) = delete;
    Engine& operator=(const Engine&) = delete;

    const EngineConfig& config() const {
        return config_;
    }
    const IvfIndex& host() const {
        return *host_;
    }

    /// Splits and loads every shard at once; `expected_hitrate` feeds drift checks.
    ShardMap install_plan(std::span<const ClusterId> hot, double expected_hitrate);

    std::shared_ptr<const RoutingSnapshot> snapshot() const;

    BatchResult search_batch(std::span<const RetrievalRequest> batch);

    /// Takes shard `s` offline; its clusters are served by the host.
    void begin_shard_swap(std::size_t s);
    void install_shard(std::size_t s, ShardIndex shard);

    /// While set, shard `s` fails every task (its work reruns on the host).
    void set_shard_fault(std::size_t s, bool failing);

    /// Runs between swap phases of an adaptive update; for tests.
    void set_swap_hook(std::function<void(std::size_t, SwapPhase)> hook);

    RuntimeStats stats() const;
    double expected_hitrate() const;

    /// Re-plans from the given counters and swaps shards one at a time.
    UpdateReport adaptive_update(
            std::vector<std::uint64_t> counts,
            std::vector<ClusterShortlist> shortlists,
            std::size_t n_requests,
            std::size_t nprobe,
            std::uint64_t window_index);

    bool update_running() const {
        return update_running_.load();
    }
    void wait_for_update();
    std::vector<UpdateReport> updates() const;

  private:
    struct Worker;

    void publish(std::vector<std::shared_ptr<const ShardIndex>> shards);
    void record(const RoutedBatch& routed, const BatchResult& r, std::span<const RetrievalRequest> batch);
    void close_window(std::vector<std::function<void()>>& deferred);

    std::shared_ptr<const IvfIndex> host_;
    EngineConfig config_;
    std::vector<std::unique_ptr<Worker>> shard_workers_;
    std::unique_ptr<Worker> host_worker_;
    std::unique_ptr<std::atomic<bool>[]> faults_;

    mutable std::mutex snap_mu_;
    std::shared_ptr<const RoutingSnapshot> snap_;
    std::uint64_t next_version_ = 1;

    mutable std::mutex stats_mu_;
    RuntimeStats stats_;
    double expected_hitrate_ = 0;
    std::vector<ClusterShortlist> window_shortlists_;
    std::size_t window_nprobe_ = 0;
    std::uint64_t window_index_ = 0;
    std::uint64_t retry_after_window_ = 0;
    std::vector<UpdateReport> updates_;

    std::mutex hook_mu_;
    std::function<void(std::size_t, SwapPhase)> swap_hook_;

    std::mutex update_mu_;  // one adaptive update at a time
    std::mutex launch_mu_;
    std::atomic<bool> update_running_{false};
    std::thread update_thread_;
};

} // namespace tiered
