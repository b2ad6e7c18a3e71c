// Acceptance gate: each check prints one PASS/FAIL line; exit is nonzero if
// any check fails. Tolerances are pinned here, not configurable.
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <list>
#include <random>
#include <sstream>

#include "dfsim/arch.hpp"
#include "dfsim/coesim.hpp"
#include "dfsim/fabric.hpp"
#include "dfsim/fusion.hpp"
#include "dfsim/memplan.hpp"
#include "dfsim/opgraph.hpp"
#include "dfsim/perf.hpp"

using namespace dfsim;

namespace {

int failures = 0;

void report(const std::string& name, bool ok, const std::string& detail) {
    std::cout << (ok ? "PASS" : "FAIL") << ": " << name << " (" << detail << ")\n";
    if (!ok) failures++;
}

opgraph::OpGraph load_fixture(const std::string& name) {
    std::ifstream in(std::string(FIXTURES_DIR) + "/" + name);
    std::stringstream ss;
    ss << in.rdbuf();
    return opgraph::graph_from_json(ss.str());
}

coesim::CoEConfig coe150() {
    std::ifstream in(std::string(FIXTURES_DIR) + "/coe150.json");
    std::stringstream ss;
    ss << in.rdbuf();
    return coesim::config_from_json(ss.str());
}

// 1. Cold-expert switch time ratios between machines.
void check_switch_ratios() {
    coesim::ExpertModel e;  // 7B BF16 = 14 GB
    auto sn = arch::builtin_platform("sn40l_node");
    double vs_a100 = coesim::switch_time(e, arch::builtin_platform("dgx_a100")) /
                     coesim::switch_time(e, sn);
    double vs_h100 = coesim::switch_time(e, arch::builtin_platform("dgx_h100")) /
                     coesim::switch_time(e, sn);
    std::ostringstream d;
    d << "vs dgx_a100 " << vs_a100 << " in [30,32]; vs dgx_h100 " << vs_h100 << " in [15,16.5]";
    report("switch-time ratios", vs_a100 >= 30 && vs_a100 <= 32 && vs_h100 >= 15 &&
                                     vs_h100 <= 16.5,
           d.str());
}

// 2. Machines required to hold 850 experts.
void check_footprint() {
    coesim::ExpertModel e;
    int dgx = coesim::footprint(850, e, arch::builtin_platform("dgx_a100"));
    int sn = coesim::footprint(850, e, arch::builtin_platform("sn40l_node"));
    std::ostringstream d;
    d << "850 experts: dgx_a100 " << dgx << " == 19, sn40l_node " << sn << " == 1";
    report("fleet footprint", dgx == 19 && sn == 1, d.str());
}

// 3. Latency-curve knee location.
void check_latency_knee() {
    auto cfg = coe150();
    cfg.batch_size = 1;
    std::vector<int> ladder = {10, 20, 30, 35, 40, 45, 50, 60, 80,
                               120, 150, 250, 400, 600, 850};
    auto dgx = coesim::latency_curve(ladder, cfg, arch::builtin_platform("dgx_a100"));
    auto sn = coesim::latency_curve(ladder, cfg, arch::builtin_platform("sn40l_node"));
    bool dgx_ok = dgx.knee && *dgx.knee >= 40 && *dgx.knee <= 50;
    bool sn_ok = !sn.knee;
    std::ostringstream d;
    d << "dgx_a100 knee at " << (dgx.knee ? std::to_string(*dgx.knee) : "none")
      << " in [40,50]; sn40l_node knee " << (sn.knee ? std::to_string(*sn.knee) : "none")
      << " through 850";
    report("latency-curve knee", dgx_ok && sn_ok, d.str());
}

// 4. Overall serving speedup at batch 8 / 20 output tokens, plus the
//    qualitative breakdown: switch-dominated on DGX, execute-dominated on
//    the dataflow node.
void check_overall_speedup() {
    auto cfg = coe150();
    auto trace = coesim::uniform_trace(400, 150, 42);
    auto sn = coesim::serve_trace(trace, cfg, arch::builtin_platform("sn40l_node"));
    auto a100 = coesim::serve_trace(trace, cfg, arch::builtin_platform("dgx_a100"));
    auto h100 = coesim::serve_trace(trace, cfg, arch::builtin_platform("dgx_h100"));
    double s_a = a100.total_time / sn.total_time;
    double s_h = h100.total_time / sn.total_time;
    bool shape = a100.switch_total > a100.execute_total &&
                 h100.switch_total > h100.execute_total &&
                 sn.execute_total > sn.switch_total;
    std::ostringstream d;
    d << "vs dgx_a100 " << s_a << " in [5,8]; vs dgx_h100 " << s_h
      << " in [2.8,4.6]; breakdown shape " << (shape ? "ok" : "violated");
    report("overall serving speedup", s_a >= 5.0 && s_a <= 8.0 && s_h >= 2.8 && s_h <= 4.6 &&
                                          shape,
           d.str());
}

// 5. Operational intensity: byte-exact against a brute-force crossing count
//    on random graphs, and fusion-level monotonicity on the shipped fixture
//    with roofline classes (memory, memory, compute) at balance 150.
void check_operational_intensity() {
    std::mt19937 rng(555);
    bool exact = true;
    int checked = 0;
    for (int trial = 0; trial < 100; ++trial) {
        // Random elementwise chains with random fan-in.
        opgraph::OpGraph g;
        int n_ops = 2 + rng() % 8;
        auto add_tensor = [&](const std::string& id) {
            opgraph::TensorSpec t;
            t.id = id;
            t.shape = {static_cast<std::int64_t>(1 + rng() % 64),
                       static_cast<std::int64_t>(1 + rng() % 64)};
            g.tensors[id] = t;
        };
        add_tensor("t0");
        for (int i = 0; i < n_ops; ++i) {
            opgraph::Operator op;
            op.id = "op" + std::to_string(i);
            op.kind = opgraph::OpKind::Elementwise;
            op.inputs.push_back("t" + std::to_string(rng() % (i + 1)));
            add_tensor("t" + std::to_string(i + 1));
            op.outputs.push_back("t" + std::to_string(i + 1));
            g.operators[op.id] = op;
        }
        for (const auto& [id, op] : g.operators) {
            for (const auto& o : op.outputs) g.tensors[o].producer = id;
            for (const auto& in : op.inputs) g.tensors[in].consumers.insert(id);
        }
        opgraph::Partition p;
        std::set<std::string> cur;
        for (const auto& id : g.topo_order()) {
            cur.insert(id);
            if (rng() % 3 == 0) {
                p.kernels.push_back(cur);
                cur.clear();
            }
        }
        if (!cur.empty()) p.kernels.push_back(cur);
        if (!opgraph::validate_partition(g, p).ok()) continue;
        auto rep = opgraph::operational_intensity(g, p);
        checked++;
        for (size_t k = 0; k < p.kernels.size(); ++k) {
            std::int64_t oracle = 0;
            for (const auto& [tid, t] : g.tensors) {
                bool read = false;
                for (const auto& c : t.consumers)
                    if (p.kernels[k].count(c)) read = true;
                bool inside = !t.producer.empty() && p.kernels[k].count(t.producer);
                if (read && !inside) oracle += t.bytes();
                if (inside) {
                    bool escapes = t.consumers.empty();
                    for (const auto& c : t.consumers)
                        if (!p.kernels[k].count(c)) escapes = true;
                    if (escapes) oracle += t.bytes();
                }
            }
            if (rep.per_kernel[k].boundary_bytes != oracle) exact = false;
        }
    }

    auto g = load_fixture("monarch.json");
    auto tile = arch::builtin_platform("sn40l_node").tile;
    auto unfused = opgraph::operational_intensity(g, opgraph::unfused_partition(g));
    fusion::FusionOptions hinted{fusion::FusionPolicy::Hinted, {"bt"}};
    auto mid = opgraph::operational_intensity(g, fusion::plan_fusion(g, tile, hinted).partition());
    auto fused = opgraph::operational_intensity(g, opgraph::single_kernel_partition(g));
    bool increasing = unfused.aggregate_oi < mid.aggregate_oi &&
                      mid.aggregate_oi < fused.aggregate_oi;
    const double balance = 150.0;
    bool classes =
        opgraph::classify_roofline(unfused.aggregate_oi, balance) ==
            opgraph::RooflineClass::MemoryBound &&
        opgraph::classify_roofline(mid.aggregate_oi, balance) ==
            opgraph::RooflineClass::MemoryBound &&
        opgraph::classify_roofline(fused.aggregate_oi, balance) ==
            opgraph::RooflineClass::ComputeBound;
    std::ostringstream d;
    d << checked << " random graphs byte-exact " << (exact ? "yes" : "NO") << "; fixture OI "
      << unfused.aggregate_oi << " < " << mid.aggregate_oi << " < " << fused.aggregate_oi
      << ", classes (memory,memory,compute) at balance 150 " << (classes ? "ok" : "violated");
    report("operational intensity", exact && checked >= 50 && increasing && classes, d.str());
}

// 6. Analytical pipeline estimate vs the event-driven simulation.
void check_estimator_fidelity() {
    std::mt19937 rng(2024);
    std::uniform_int_distribution<int> n_stages(1, 6);
    std::uniform_int_distribution<std::int64_t> n_tiles(100, 1000);
    std::uniform_real_distribution<double> rate(0.5, 50.0);
    double worst = 0;
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> rates;
        int n = n_stages(rng);
        for (int i = 0; i < n; ++i) rates.push_back(rate(rng));
        auto tiles = n_tiles(rng);
        double analytical = perf::pipeline_time(rates, tiles);
        double sim = perf::simulate_pipeline(rates, tiles).completion_time;
        worst = std::max(worst, std::abs(analytical - sim) / sim);
    }
    std::ostringstream d;
    d << "20 seeded pipelines, worst deviation " << worst * 100 << "% < 10%";
    report("estimator fidelity", worst < 0.10, d.str());
}

// 7. Launch-orchestration speedup trend across fixture workloads.
void check_orchestration_trend() {
    auto platform = arch::builtin_platform("sn40l_node");
    auto run_ratio = [&](const opgraph::OpGraph& g, const fusion::FusionOptions& opts,
                         double* so_minus_ho = nullptr) {
        auto plan = fusion::plan_fusion(g, platform.tile, opts);
        std::vector<perf::KernelCost> costs;
        perf::RunSchedule sched;
        for (const auto& k : plan.kernels) {
            costs.push_back(perf::estimate_kernel_time(k, g, platform));
            sched.kernel_ids.push_back(k.id);
        }
        sched.orchestration = perf::Orchestration::SO;
        double so = perf::estimate_run(sched, costs, platform).total_time;
        sched.orchestration = perf::Orchestration::HO;
        double ho = perf::estimate_run(sched, costs, platform).total_time;
        if (so_minus_ho) *so_minus_ho = so - ho;
        return so / ho;
    };
    fusion::FusionOptions layers{fusion::FusionPolicy::Hinted, {"x_1", "x_2"}};
    double decode = run_ratio(load_fixture("decoder_decode.json"), layers);
    double prefill = run_ratio(load_fixture("decoder_prefill.json"), layers);
    double delta = 0;
    run_ratio(load_fixture("monarch.json"), {fusion::FusionPolicy::Maximal, {}}, &delta);
    double overhead_gap = platform.launch_overhead_so - platform.launch_overhead_ho;
    bool single_ok = std::abs(delta - overhead_gap) < 1e-12;
    std::ostringstream d;
    d << "decode " << decode << " >= 1.4; prefill " << prefill
      << " <= 1.1; single-kernel SO-HO gap " << delta * 1e6 << "us == "
      << overhead_gap * 1e6 << "us";
    report("orchestration trend", decode >= 1.4 && prefill <= 1.1 && single_ok, d.str());
}

// 8. Autoregressive decode bound on a 16-socket machine.
void check_decode_bound() {
    auto p = arch::builtin_platform("sn40l_node");
    p.sockets = 16;
    double bound = perf::decode_throughput_bound(16e9, 0, p, 0.85);
    bool linear = std::abs(perf::decode_throughput_bound(32e9, 0, p, 0.85) - bound / 2) < 1e-9 &&
                  std::abs(perf::decode_throughput_bound(16e9, 16e9, p, 0.85) - bound / 2) < 1e-9;
    std::ostringstream d;
    d << "8B params, 16 sockets, 0.85 util: " << bound
      << " tokens/s == 1530 and >= measured 1042; linearity " << (linear ? "exact" : "violated");
    report("decode throughput bound", std::abs(bound - 1530.0) < 0.5 && bound >= 1042 && linear,
           d.str());
}

// 9. Property suites: LRU oracle, allocator non-overlap, diagonal banking,
//    stream reordering, multicast trees.
void check_property_suites() {
    std::mt19937 rng(4242);
    bool lru_ok = true;
    for (int trial = 0; trial < 1000 && lru_ok; ++trial) {
        int n_experts = 2 + rng() % 8;
        int capacity = 1 + rng() % n_experts;
        int len = 1 + rng() % 40;
        std::vector<int> ids;
        for (int i = 0; i < len; ++i) ids.push_back(rng() % n_experts);

        std::list<int> order;  // reference LRU
        std::vector<bool> expect;
        for (int e : ids) {
            auto it = std::find(order.begin(), order.end(), e);
            if (it != order.end()) {
                order.erase(it);
                order.push_front(e);
                expect.push_back(true);
            } else {
                if (static_cast<int>(order.size()) == capacity) order.pop_back();
                order.push_front(e);
                expect.push_back(false);
            }
        }
        std::int64_t B = 1'000'000;
        coesim::CoEConfig cfg;
        for (int i = 0; i < n_experts; ++i) {
            coesim::ExpertModel e;
            e.id = "expert_" + std::to_string(i);
            e.param_count = B / 2;
            cfg.experts.push_back(e);
        }
        auto platform = arch::builtin_platform("sn40l_node");
        platform.sockets = 1;
        for (auto& t : platform.tiers)
            if (t.name == arch::TierName::HBM)
                t.capacity_bytes =
                    capacity * B + static_cast<std::int64_t>(cfg.hbm_reserve_per_socket);
        coesim::ServingTrace trace;
        for (size_t i = 0; i < ids.size(); ++i)
            trace.requests.push_back({"r" + std::to_string(i), "",
                                      "expert_" + std::to_string(ids[i])});
        auto b = coesim::serve_trace(trace, cfg, platform);
        for (size_t i = 0; i < expect.size(); ++i)
            if (b.requests[i].hit != expect[i]) lru_ok = false;
    }

    bool alloc_ok = true;
    for (int trial = 0; trial < 100 && alloc_ok; ++trial) {
        int n_kernels = 4 + rng() % 12;
        int n_syms = 2 + rng() % 20;
        std::vector<memplan::Symbol> syms;
        std::int64_t total = 0;
        for (int i = 0; i < n_syms; ++i) {
            memplan::Symbol s;
            s.id = "s" + std::to_string(i);
            s.size = 1 + rng() % 10000;
            int def = rng() % n_kernels;
            int use = def + rng() % (n_kernels - def);
            s.accesses = {{def, s.size, true}, {use, s.size, false}};
            total += s.size;
            syms.push_back(s);
        }
        auto plan = memplan::assign_addresses(memplan::lifetimes(syms, n_kernels), total);
        if (plan.peak_hbm > total) alloc_ok = false;
        for (size_t i = 0; i < plan.placements.size() && alloc_ok; ++i)
            for (size_t j = i + 1; j < plan.placements.size(); ++j) {
                const auto& a = plan.placements[i];
                const auto& b = plan.placements[j];
                bool lives = a.first_def <= b.last_use && b.first_def <= a.last_use;
                bool bytes = a.offset < b.offset + static_cast<std::uint64_t>(b.size) &&
                             b.offset < a.offset + static_cast<std::uint64_t>(a.size);
                if (a.tier == b.tier && lives && bytes) alloc_ok = false;
            }
    }

    bool bank_ok = true;
    for (int banks : {2, 4, 8, 16}) {
        for (int dim = banks; dim <= 64 && bank_ok; dim *= 2) {
            for (int r = 0; r < dim && bank_ok; ++r)
                for (int c0 = 0; c0 + banks <= dim; ++c0) {
                    std::set<int> row_banks, col_banks;
                    for (int i = 0; i < banks; ++i) {
                        row_banks.insert(
                            fabric::diagonal_bank_address(r, c0 + i, banks, dim).bank);
                        col_banks.insert(
                            fabric::diagonal_bank_address(c0 + i, r, banks, dim).bank);
                    }
                    if (row_banks.size() != static_cast<size_t>(banks) ||
                        col_banks.size() != static_cast<size_t>(banks))
                        bank_ok = false;
                }
        }
    }

    bool reorder_ok = true;
    for (int trial = 0; trial < 1000 && reorder_ok; ++trial) {
        int n = 1 + rng() % 64;
        std::vector<fabric::Packet> packets;
        for (int i = 0; i < n; ++i) packets.push_back({"f", i, i});
        std::shuffle(packets.begin(), packets.end(), rng);
        auto out = fabric::reorder_stream(packets);
        for (int i = 0; i < n; ++i)
            if (out[i] != i) reorder_ok = false;
    }

    bool multicast_ok = true;
    auto mesh = fabric::MeshTopology::checkerboard(8, 8, 1.0);
    for (int trial = 0; trial < 100 && multicast_ok; ++trial) {
        fabric::FlowSpec fs;
        fs.id = "f";
        fs.source = {static_cast<int>(rng() % 8), static_cast<int>(rng() % 8)};
        int dests = 1 + rng() % 6;
        size_t unicast = 0;
        for (int d = 0; d < dests; ++d) {
            fabric::Coord c{static_cast<int>(rng() % 8), static_cast<int>(rng() % 8)};
            fs.destinations.push_back(c);
            unicast += fabric::dimension_order_path(fs.source, c).size();
        }
        auto routes = fabric::route({fs}, mesh);
        if (routes[0].links.size() > unicast) multicast_ok = false;
    }

    std::ostringstream d;
    d << "lru " << (lru_ok ? "ok" : "FAIL") << ", allocator " << (alloc_ok ? "ok" : "FAIL")
      << ", banking " << (bank_ok ? "ok" : "FAIL") << ", reorder "
      << (reorder_ok ? "ok" : "FAIL") << ", multicast " << (multicast_ok ? "ok" : "FAIL");
    report("property suites", lru_ok && alloc_ok && bank_ok && reorder_ok && multicast_ok,
           d.str());
}

}  // namespace

int main() {
    check_switch_ratios();
    check_footprint();
    check_latency_knee();
    check_overall_speedup();
    check_operational_intensity();
    check_estimator_fidelity();
    check_orchestration_trend();
    check_decode_bound();
    check_property_suites();
    std::cout << (failures == 0 ? "all acceptance checks passed"
                                : std::to_string(failures) + " acceptance check(s) failed")
              << "\n";
    return failures == 0 ? 0 : 1;
}
