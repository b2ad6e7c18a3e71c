#include "dfsim/perf.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>

namespace dfsim::perf {

double pipeline_time(const std::vector<double>& stage_rates, std::int64_t tiles) {
    if (stage_rates.empty() || tiles <= 0) return 0;
    double min_rate = std::numeric_limits<double>::infinity();
    double fill = 0;
    for (double r : stage_rates) {
        if (r <= 0) throw Infeasible("zero-throughput stage in pipeline");
        if (std::isfinite(r)) {
            min_rate = std::min(min_rate, r);
            fill += 1.0 / r;
        }
    }
    if (!std::isfinite(min_rate)) return 0;
    return static_cast<double>(tiles) / min_rate + fill;
}

namespace {

// Effective per-stage rates including routed link bandwidth when a placement
// is available.
std::vector<double> effective_rates(const fusion::FusedKernel& k, const opgraph::OpGraph& g,
                                    const PlatformConfig& platform,
                                    const fabric::Placement* placement) {
    std::vector<double> rates;
    for (const auto& s : k.stages) {
        double r = s.stage_throughput;
        if (placement) {
            // Tile stream between adjacent stages traverses wirelength hops on
            // the vector fabric; each hop runs at link_bw.
            const auto& op = g.op(s.op_id);
            double tile_elem_bytes = 0;
            if (!op.outputs.empty()) {
                const auto& t = g.tensor(op.outputs[0]);
                tile_elem_bytes = static_cast<double>(
                    std::min(t.elements(), platform.tile.stream_tile_elems) *
                    opgraph::dtype_bytes(t.dtype));
            }
            if (tile_elem_bytes > 0)
                r = std::min(r, platform.tile.link_bw / tile_elem_bytes);
        }
        rates.push_back(r);
    }
    return rates;
}

}  // namespace

KernelCost estimate_kernel_time(const fusion::FusedKernel& k, const opgraph::OpGraph& g,
                                const PlatformConfig& platform,
                                const fabric::Placement* placement) {
    KernelCost c;
    c.kernel_id = k.id;
    c.flops = k.flops;
    c.tiles = k.tiles;
    c.hbm_bytes = k.boundary_bytes;  // boundary tensors default to HBM residency

    auto rates = effective_rates(k, g, platform, placement);
    c.stage_throughputs = rates;

    double pipe = 0;
    double min_rate = std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < rates.size(); ++i) {
        if (rates[i] <= 0)
            throw Infeasible("kernel " + k.id + ": stage " + k.stages[i].op_id +
                             " has zero throughput");
        if (rates[i] < min_rate) {
            min_rate = rates[i];
            c.bottleneck_stage = static_cast<int>(i);
        }
        if (std::isfinite(rates[i])) c.fill_drain_latency += 1.0 / rates[i];
    }
    if (!rates.empty()) pipe = pipeline_time(rates, k.tiles);

    const auto* hbm = platform.tier(arch::TierName::HBM);
    double hbm_bound = hbm ? c.hbm_bytes / hbm->bandwidth_bytes_per_s : 0;
    const auto* ddr = platform.tier(arch::TierName::DDR);
    double ddr_bound = (ddr && c.ddr_bytes) ? c.ddr_bytes / ddr->bandwidth_bytes_per_s : 0;

    c.est_time = std::max({pipe, hbm_bound, ddr_bound});
    if (c.est_time == hbm_bound || c.est_time == ddr_bound) {
        c.bound = BoundKind::Memory;
    } else if (c.bottleneck_stage >= 0) {
        // Compute-bound when the slowest stage is limited by its PCU rate
        // rather than a buffer or link.
        const auto& s = k.stages[c.bottleneck_stage];
        c.bound = (rates[c.bottleneck_stage] >= s.stage_throughput - 1e-9 &&
                   rates[c.bottleneck_stage] <= s.stage_throughput + 1e-9)
                      ? BoundKind::Compute
                      : BoundKind::PipelineBottleneck;
    }
    return c;
}

EventTrace simulate_pipeline(const std::vector<double>& stage_rates, std::int64_t tiles,
                             std::uint64_t seed) {
    (void)seed;  // the pipeline is deterministic; seed kept for interface parity
    EventTrace trace;
    const int n = static_cast<int>(stage_rates.size());
    if (n == 0 || tiles <= 0) return trace;
    for (double r : stage_rates)
        if (r <= 0) throw Infeasible("zero-throughput stage in pipeline");

    // finish[i][t]: time stage i completes tile t. Stage 0 is an input feeder
    // running at the first stage's rate. Double-buffered handoff: stage i may
    // start tile t only once stage i+1 consumed tile t-2.
    constexpr int kBufferDepth = 2;
    std::vector<std::vector<double>> finish(n + 1, std::vector<double>(tiles, 0));
    std::vector<std::vector<double>> start(n + 1, std::vector<double>(tiles, 0));
    double feed_rate = std::isfinite(stage_rates[0]) ? stage_rates[0] : 1e30;
    for (std::int64_t t = 0; t < tiles; ++t) {
        start[0][t] = t / feed_rate;
        finish[0][t] = (t + 1) / feed_rate;
    }
    for (std::int64_t t = 0; t < tiles; ++t) {
        for (int i = 1; i <= n; ++i) {
            double service = std::isfinite(stage_rates[i - 1]) ? 1.0 / stage_rates[i - 1] : 0;
            double ready = std::max(finish[i][std::max<std::int64_t>(t - 1, 0)] * (t > 0 ? 1 : 0),
                                    finish[i - 1][t]);
            start[i][t] = ready;
            finish[i][t] = ready + service;
        }
        // Backpressure pass: a producer cannot finish tile t before its
        // consumer freed slot t - kBufferDepth.
        if (t >= kBufferDepth) {
            for (int i = n - 1; i >= 1; --i) {
                double slot_free = start[i + 1][t - kBufferDepth];
                if (finish[i][t] < slot_free) finish[i][t] = slot_free;
            }
        }
    }
    for (int i = 1; i <= n; ++i)
        for (std::int64_t t = 0; t < tiles; ++t)
            trace.events.push_back({finish[i][t], i, t});
    std::sort(trace.events.begin(), trace.events.end(), [](const Event& a, const Event& b) {
        return std::tie(a.time, a.stage, a.tile) < std::tie(b.time, b.stage, b.tile);
    });
    trace.completion_time = finish[n][tiles - 1];
    return trace;
}

EventTrace simulate_kernel(const fusion::FusedKernel& k, const opgraph::OpGraph& g,
                           const PlatformConfig& platform, std::uint64_t seed) {
    auto rates = effective_rates(k, g, platform, nullptr);
    std::vector<double> finite;
    for (double r : rates) finite.push_back(std::isfinite(r) ? r : 1e30);
    auto trace = simulate_pipeline(finite, k.tiles, seed);
    // The DES covers on-chip pipelining; off-chip traffic keeps its roofline floor.
    const auto* hbm = platform.tier(arch::TierName::HBM);
    if (hbm)
        trace.completion_time =
            std::max(trace.completion_time, k.boundary_bytes / hbm->bandwidth_bytes_per_s);
    return trace;
}

RunEstimate estimate_run(const RunSchedule& s, const std::vector<KernelCost>& costs,
                         const PlatformConfig& platform) {
    if (s.kernel_ids.empty()) throw std::invalid_argument("empty run schedule");
    std::map<std::string, const KernelCost*> by_id;
    for (const auto& c : costs) by_id[c.kernel_id] = &c;
    double overhead = s.orchestration == Orchestration::SO ? platform.launch_overhead_so
                                                           : platform.launch_overhead_ho;
    RunEstimate r;
    for (const auto& id : s.kernel_ids) {
        auto it = by_id.find(id);
        if (it == by_id.end()) throw std::invalid_argument("no cost for kernel " + id);
        r.breakdown.push_back({id, overhead, it->second->est_time});
        r.total_time += overhead + it->second->est_time;
    }
    return r;
}

double kernel_call_ratio(const fusion::FusionPlan& unfused, const fusion::FusionPlan& fused) {
    if (fused.kernels.empty()) throw std::invalid_argument("fused plan has no kernels");
    return static_cast<double>(unfused.kernels.size()) / fused.kernels.size();
}

double decode_throughput_bound(double model_bytes_per_token, double kv_bytes_per_token,
                               const PlatformConfig& platform, double hbm_utilization) {
    if (hbm_utilization <= 0 || hbm_utilization > 1)
        throw std::invalid_argument("hbm utilization must be in (0, 1]");
    double bytes = model_bytes_per_token + kv_bytes_per_token;
    if (bytes <= 0) throw std::invalid_argument("bytes per token must be positive");
    return platform.hbm_bandwidth_aggregate() * hbm_utilization / bytes;
}

std::string costs_to_csv(const std::vector<KernelCost>& costs,
                         const std::vector<double>& des_times) {
    std::ostringstream out;
    out << "kernel,flops,bytes,bound,est_time,des_time,delta_pct\n";
    for (size_t i = 0; i < costs.size(); ++i) {
        const auto& c = costs[i];
        double des = i < des_times.size() ? des_times[i] : 0;
        double delta = des > 0 ? (c.est_time - des) / des * 100.0 : 0;
        out << c.kernel_id << "," << c.flops << "," << (c.hbm_bytes + c.ddr_bytes) << ","
            << (c.bound == BoundKind::Compute  ? "compute"
                : c.bound == BoundKind::Memory ? "memory"
                                               : "pipeline")
            << "," << c.est_time << "," << des << "," << delta << "\n";
    }
    return out.str();
}

}  // namespace dfsim::perf
