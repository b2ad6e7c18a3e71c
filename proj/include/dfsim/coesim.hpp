#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dfsim/arch.hpp"
#include "dfsim/perf.hpp"

namespace dfsim::coesim {

using arch::PlatformConfig;
using opgraph::Infeasible;

struct ExpertModel {
    std::string id;
    std::int64_t param_count = 7'000'000'000;
    int dtype_bytes = 2;
    double read_only_fraction = 1.0;
    // Per-token decode traffic; kv covers one token of context growth.
    std::int64_t kv_bytes_per_token = 524288;

    std::int64_t bytes() const { return param_count * dtype_bytes; }
    // HBM-resident segment when active; the full model by default.
    std::int64_t hbm_segment_bytes = 0;
    std::int64_t resolved_hbm_segment() const {
        return hbm_segment_bytes > 0 ? hbm_segment_bytes : bytes();
    }
};

enum class RouterPolicy { FixedMap, SeededCategorical };

struct CoEConfig {
    std::vector<ExpertModel> experts;  // empty → default 150 × 7B BF16
    RouterPolicy policy = RouterPolicy::SeededCategorical;
    std::map<std::string, std::string> fixed_map;  // prompt tag → expert id
    std::vector<double> categorical_weights;       // empty → uniform
    int batch_size = 1;
    std::int64_t output_tokens = 20;
    std::int64_t prompt_tokens = 5120;
    int tensor_parallel = 8;
    double hbm_reserve_per_socket = 10e9;  // router + KV cache
    // Router modeled as one decode pass of a 7B specialist.
    std::int64_t router_param_count = 7'000'000'000;

    static CoEConfig defaults();
};

// JSON config, schema coe_v1.
CoEConfig config_from_json(const std::string& json_text);
CoEConfig load_config_file(const std::string& path);

struct TraceRequest {
    std::string request_id;
    std::string tag;                      // prompt tag for fixed_map routing
    std::optional<std::string> expert_id; // pre-routed request
};

struct ServingTrace {
    std::vector<TraceRequest> requests;
    std::uint64_t seed = 0;
};

struct RequestLatency {
    std::string request_id;
    std::string expert_id;
    double router_time = 0;
    double switch_time = 0;
    double execute_time = 0;
    double total = 0;
    bool hit = false;
};

struct LatencyBreakdown {
    std::vector<RequestLatency> requests;
    std::int64_t hits = 0;
    std::int64_t misses = 0;
    std::int64_t evictions = 0;
    std::int64_t copyback_bytes = 0;
    double total_time = 0;
    double router_total = 0;
    double switch_total = 0;
    double execute_total = 0;
};

std::string route_request(const TraceRequest& req, const CoEConfig& cfg, std::uint64_t& rng_state);

// DDR (or host) → HBM copy time for a cold expert.
double switch_time(const ExpertModel& e, const PlatformConfig& platform);

// Prefill + memory-bound decode for one (prompt, expert) pair.
double execute_time(const ExpertModel& e, const CoEConfig& cfg, const PlatformConfig& platform);

double router_time(const CoEConfig& cfg, const PlatformConfig& platform);

LatencyBreakdown serve_trace(const ServingTrace& trace, const CoEConfig& cfg,
                             const PlatformConfig& platform);

struct CurvePoint {
    int expert_count = 0;
    double mean_latency = 0;
};

struct LatencyCurve {
    std::vector<CurvePoint> points;
    // First count whose mean latency exceeds its predecessor's by the knee
    // factor; nullopt for a smooth curve.
    std::optional<int> knee;
};

LatencyCurve latency_curve(const std::vector<int>& expert_counts, const CoEConfig& cfg,
                           const PlatformConfig& platform, int requests_per_point = 256,
                           double knee_factor = 1.25);

// Machines needed to hold num_experts at TP-8-without-copies latency:
// HBM-resident for GPU-like platforms, capacity-tier-resident for
// dataflow platforms (switching stays inside the latency target).
int footprint(int num_experts, const ExpertModel& e, const PlatformConfig& platform);

std::int64_t usable_hbm(const CoEConfig& cfg, const PlatformConfig& platform);

ServingTrace trace_from_jsonl(const std::string& path);
std::string trace_to_jsonl(const ServingTrace& trace);
ServingTrace uniform_trace(int num_requests, int num_experts, std::uint64_t seed);

std::string breakdown_to_csv(const LatencyBreakdown& b);
std::string summary_to_csv(const LatencyBreakdown& b);
std::string curve_to_csv(const LatencyCurve& c);

}  // namespace dfsim::coesim
