#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dfsim/arch.hpp"
#include "dfsim/fabric.hpp"
#include "dfsim/fusion.hpp"

namespace dfsim::perf {

using arch::PlatformConfig;
using opgraph::Infeasible;

enum class BoundKind { Compute, Memory, PipelineBottleneck };

struct KernelCost {
    std::string kernel_id;
    std::int64_t flops = 0;
    std::int64_t hbm_bytes = 0;
    std::int64_t ddr_bytes = 0;
    std::vector<double> stage_throughputs;  // tiles/s
    std::int64_t tiles = 0;
    double fill_drain_latency = 0;  // seconds
    double est_time = 0;            // seconds
    BoundKind bound = BoundKind::Memory;
    int bottleneck_stage = -1;
};

// Pipeline closed form shared by the estimator: steady state at the slowest
// stage plus one-tile fill/drain per stage.
double pipeline_time(const std::vector<double>& stage_rates, std::int64_t tiles);

KernelCost estimate_kernel_time(const fusion::FusedKernel& k, const opgraph::OpGraph& g,
                                const PlatformConfig& platform,
                                const fabric::Placement* placement = nullptr);

struct Event {
    double time = 0;
    int stage = 0;          // entity index; 0 is the feeder
    std::int64_t tile = 0;  // sequence number
};

struct EventTrace {
    std::vector<Event> events;
    double completion_time = 0;
};

// Tile-granular discrete-event simulation of a linear pipeline with
// double-buffered stage handoff and backpressure. Deterministic per seed.
EventTrace simulate_pipeline(const std::vector<double>& stage_rates, std::int64_t tiles,
                             std::uint64_t seed = 0);

EventTrace simulate_kernel(const fusion::FusedKernel& k, const opgraph::OpGraph& g,
                           const PlatformConfig& platform, std::uint64_t seed = 0);

enum class Orchestration { SO, HO };

struct RunSchedule {
    std::vector<std::string> kernel_ids;
    Orchestration orchestration = Orchestration::SO;
};

struct RunBreakdownEntry {
    std::string kernel_id;
    double launch_overhead = 0;
    double exec_time = 0;
};

struct RunEstimate {
    double total_time = 0;
    std::vector<RunBreakdownEntry> breakdown;
};

RunEstimate estimate_run(const RunSchedule& s, const std::vector<KernelCost>& costs,
                         const PlatformConfig& platform);

double kernel_call_ratio(const fusion::FusionPlan& unfused, const fusion::FusionPlan& fused);

// Memory-bound autoregressive decode upper bound in tokens/s.
double decode_throughput_bound(double model_bytes_per_token, double kv_bytes_per_token,
                               const PlatformConfig& platform, double hbm_utilization);

std::string costs_to_csv(const std::vector<KernelCost>& costs,
                         const std::vector<double>& des_times);

}  // namespace dfsim::perf
