#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>

#include "CLI11.hpp"
#include "dfsim/arch.hpp"
#include "dfsim/coesim.hpp"
#include "dfsim/fabric.hpp"
#include "dfsim/fusion.hpp"
#include "dfsim/memplan.hpp"
#include "dfsim/opgraph.hpp"
#include "dfsim/perf.hpp"

namespace {

constexpr const char* kVersion = "0.1.0";
constexpr int kExitBadInput = 2;
constexpr int kExitInfeasible = 3;

namespace fs = std::filesystem;
using namespace dfsim;

struct GlobalOpts {
    std::string platform = "sn40l_node";
    std::uint64_t seed = 0;
    std::string out_dir = ".";
    int jobs = 1;
};

void write_file(const GlobalOpts& g, const std::string& name, const std::string& content) {
    fs::create_directories(g.out_dir);
    std::ofstream out(fs::path(g.out_dir) / name);
    out << content;
    std::cout << "wrote " << (fs::path(g.out_dir) / name).string() << "\n";
}

std::string manifest(const GlobalOpts& g, const std::string& command,
                     const std::vector<std::string>& inputs) {
    std::ostringstream m;
    m << "# command: " << command << "\n# version: " << kVersion << "\n# platform: " << g.platform
      << "\n# seed: " << g.seed << "\n";
    for (const auto& i : inputs) m << "# input: " << i << "\n";
    return m.str();
}

fusion::FusionOptions fusion_opts(const std::string& partition,
                                  const std::vector<std::string>& hints) {
    fusion::FusionOptions o;
    if (partition == "unfused")
        o.policy = fusion::FusionPolicy::Unfused;
    else if (partition == "maximal")
        o.policy = fusion::FusionPolicy::Maximal;
    else if (partition == "hinted") {
        o.policy = fusion::FusionPolicy::Hinted;
        o.boundaries = hints;
    } else
        throw std::invalid_argument("unknown partition policy: " + partition);
    return o;
}

int cmd_analyze(const GlobalOpts& g, const std::string& graph_file, const std::string& partition,
                const std::vector<std::string>& hints) {
    auto graph = opgraph::load_graph_file(graph_file);
    auto platform = arch::resolve_platform(g.platform);
    opgraph::Partition part;
    if (partition == "unfused") {
        part = opgraph::unfused_partition(graph);
    } else {
        auto plan = fusion::plan_fusion(graph, platform.tile, fusion_opts(partition, hints));
        part = plan.partition();
    }
    auto rep = opgraph::operational_intensity(graph, part);
    std::ostringstream out;
    out << manifest(g, "analyze", {graph_file});
    out << "kernel,flops,boundary_bytes,oi,class\n";
    for (size_t i = 0; i < rep.per_kernel.size(); ++i) {
        const auto& k = rep.per_kernel[i];
        out << "k" << i << "," << k.flops << "," << k.boundary_bytes << "," << k.oi << ","
            << (opgraph::classify_roofline(k.oi, platform.machine_balance) ==
                        opgraph::RooflineClass::ComputeBound
                    ? "ComputeBound"
                    : "MemoryBound")
            << "\n";
    }
    out << "aggregate," << rep.total_flops << "," << rep.total_boundary_bytes << ","
        << rep.aggregate_oi << ","
        << (opgraph::classify_roofline(rep.aggregate_oi, platform.machine_balance) ==
                    opgraph::RooflineClass::ComputeBound
                ? "ComputeBound"
                : "MemoryBound")
        << "\n";
    std::cout << out.str();
    write_file(g, "analyze.csv", out.str());
    return 0;
}

int cmd_fuse(const GlobalOpts& g, const std::string& graph_file, const std::string& partition,
             const std::vector<std::string>& hints) {
    auto graph = opgraph::load_graph_file(graph_file);
    auto platform = arch::resolve_platform(g.platform);
    auto plan = fusion::plan_fusion(graph, platform.tile, fusion_opts(partition, hints));
    auto vr = fusion::validate_plan(graph, platform.tile, plan);
    if (!vr.ok()) {
        for (const auto& e : vr.errors) std::cerr << "error: " << e << "\n";
        return kExitInfeasible;
    }
    write_file(g, "fusionplan.json", fusion::plan_to_json(plan));
    std::cout << plan.kernels.size() << " kernels\n";
    return 0;
}

int cmd_pnr(const GlobalOpts& g, const std::string& graph_file, const std::string& partition,
            const std::vector<std::string>& hints) {
    auto graph = opgraph::load_graph_file(graph_file);
    auto platform = arch::resolve_platform(g.platform);
    auto plan = fusion::plan_fusion(graph, platform.tile, fusion_opts(partition, hints));
    auto mesh = fabric::MeshTopology::checkerboard(platform.tile.mesh_rows,
                                                   platform.tile.mesh_cols,
                                                   platform.tile.link_bw);
    std::ostringstream out;
    out << manifest(g, "pnr", {graph_file});
    out << "kernel,entities,wirelength\n";
    for (const auto& k : plan.kernels) {
        fusion::FusionPlan single;
        single.kernels.push_back(k);
        auto placement = fabric::place(single, graph, mesh, g.seed);
        out << k.id << "," << placement.site_of.size() << "," << placement.total_wirelength
            << "\n";
    }
    std::cout << out.str();
    write_file(g, "pnr.csv", out.str());
    return 0;
}

int cmd_estimate(const GlobalOpts& g, const std::string& graph_file,
                 const std::vector<std::string>& hints) {
    auto graph = opgraph::load_graph_file(graph_file);
    auto platform = arch::resolve_platform(g.platform);

    struct Variant {
        std::string name;
        fusion::FusionPlan plan;
    };
    std::vector<Variant> variants;
    variants.push_back({"unfused", fusion::plan_fusion(graph, platform.tile,
                                                       fusion_opts("unfused", {}))});
    variants.push_back(
        {hints.empty() ? "maximal" : "hinted",
         fusion::plan_fusion(graph, platform.tile,
                             fusion_opts(hints.empty() ? "maximal" : "hinted", hints))});

    std::ostringstream out;
    out << manifest(g, "estimate", {graph_file});
    out << "variant,kernels,total_SO_s,total_HO_s,HO_speedup\n";
    for (const auto& v : variants) {
        std::vector<perf::KernelCost> costs;
        perf::RunSchedule sched;
        for (const auto& k : v.plan.kernels) {
            costs.push_back(perf::estimate_kernel_time(k, graph, platform));
            sched.kernel_ids.push_back(k.id);
        }
        sched.orchestration = perf::Orchestration::SO;
        auto so = perf::estimate_run(sched, costs, platform);
        sched.orchestration = perf::Orchestration::HO;
        auto ho = perf::estimate_run(sched, costs, platform);
        out << v.name << "," << v.plan.kernels.size() << "," << so.total_time << ","
            << ho.total_time << "," << so.total_time / ho.total_time << "\n";
    }
    out << "# kernel_call_ratio: "
        << perf::kernel_call_ratio(variants[0].plan, variants[1].plan) << "\n";
    std::cout << out.str();
    write_file(g, "estimate.csv", out.str());
    return 0;
}

int cmd_memplan(const GlobalOpts& g, const std::string& graph_file, const std::string& partition,
                const std::vector<std::string>& hints) {
    auto graph = opgraph::load_graph_file(graph_file);
    auto platform = arch::resolve_platform(g.platform);
    auto plan = fusion::plan_fusion(graph, platform.tile, fusion_opts(partition, hints));

    // Symbols from the kernel schedule: one per boundary tensor.
    std::map<std::string, memplan::Symbol> symbols;
    for (size_t pos = 0; pos < plan.kernels.size(); ++pos) {
        const auto& k = plan.kernels[pos];
        for (const auto& tid : k.boundary_inputs) {
            const auto& t = graph.tensor(tid);
            auto& s = symbols[tid];
            s.id = tid;
            s.size = t.bytes();
            s.kind = t.role == opgraph::TensorRole::Weight ? memplan::SymbolKind::Weight
                                                           : memplan::SymbolKind::Activation;
            s.read_only = t.role == opgraph::TensorRole::Weight;
            s.accesses.push_back({static_cast<int>(pos), t.bytes(), false});
        }
        for (const auto& tid : k.boundary_outputs) {
            const auto& t = graph.tensor(tid);
            auto& s = symbols[tid];
            s.id = tid;
            s.size = t.bytes();
            s.accesses.push_back({static_cast<int>(pos), t.bytes(), true});
        }
    }
    std::vector<memplan::Symbol> list;
    for (auto& [id, s] : symbols) {
        // Graph inputs have no writer; treat their first read as the def.
        if (graph.tensor(id).is_external_input() && !s.read_only && !s.accesses.empty())
            s.accesses.front().is_write = true;
        list.push_back(s);
    }
    list = memplan::lifetimes(list, static_cast<int>(plan.kernels.size()));
    const auto* hbm = platform.tier(arch::TierName::HBM);
    auto result = memplan::select_spills(list, hbm ? hbm->capacity_bytes * platform.sockets : 0);
    write_file(g, "memplan.json", memplan::plan_to_json(result));
    std::cout << "peak_hbm " << result.peak_hbm << " spill_bytes " << result.spill_bytes << "\n";
    return 0;
}

int cmd_serve(const GlobalOpts& g, const std::string& trace_file, const std::string& config_file) {
    auto platform = arch::resolve_platform(g.platform);
    auto cfg = config_file.empty() ? coesim::CoEConfig::defaults()
                                   : coesim::load_config_file(config_file);
    auto trace = coesim::trace_from_jsonl(trace_file);
    if (g.seed) trace.seed = g.seed;
    auto b = coesim::serve_trace(trace, cfg, platform);
    write_file(g, "serve_requests.csv", coesim::breakdown_to_csv(b));
    write_file(g, "serve_summary.csv", coesim::summary_to_csv(b));
    std::cout << "hits " << b.hits << " misses " << b.misses << " total " << b.total_time
              << " s\n";
    return 0;
}

int cmd_footprint(const GlobalOpts& g, int experts, const std::vector<std::string>& platforms) {
    coesim::ExpertModel proto;
    std::ostringstream out;
    out << manifest(g, "footprint", {});
    out << "platform,experts,machines\n";
    for (const auto& name : platforms) {
        auto p = arch::resolve_platform(name);
        out << name << "," << experts << "," << coesim::footprint(experts, proto, p) << "\n";
    }
    std::cout << out.str();
    write_file(g, "footprint.csv", out.str());
    return 0;
}

int cmd_sweep(const GlobalOpts& g, const std::vector<int>& counts,
              const std::vector<std::string>& platforms, const std::string& config_file) {
    auto cfg = config_file.empty() ? coesim::CoEConfig::defaults()
                                   : coesim::load_config_file(config_file);
    std::ostringstream out;
    out << manifest(g, "sweep", {});
    out << "platform,expert_count,mean_latency_s,machines,knee\n";
    for (const auto& name : platforms) {
        auto platform = arch::resolve_platform(name);
        // Independent simulations per expert count, bounded by --jobs.
        std::vector<std::future<coesim::LatencyCurve>> futs;
        std::vector<coesim::CurvePoint> points;
        std::optional<int> knee;
        for (size_t base = 0; base < counts.size(); base += std::max(g.jobs, 1)) {
            futs.clear();
            size_t end = std::min(counts.size(), base + std::max(g.jobs, 1));
            for (size_t i = base; i < end; ++i)
                futs.push_back(std::async(std::launch::async, [&, i] {
                    return coesim::latency_curve({counts[i]}, cfg, platform);
                }));
            for (auto& f : futs) {
                auto c = f.get();
                points.push_back(c.points.front());
            }
        }
        // Knee detection over the assembled ladder.
        for (size_t i = 1; i < points.size(); ++i)
            if (!knee && points[i].mean_latency > points[i - 1].mean_latency * 1.25)
                knee = points[i].expert_count;
        coesim::ExpertModel proto = cfg.experts.empty() ? coesim::ExpertModel{}
                                                        : cfg.experts.front();
        for (const auto& pt : points)
            out << name << "," << pt.expert_count << "," << pt.mean_latency << ","
                << coesim::footprint(pt.expert_count, proto, platform) << ","
                << (knee && *knee == pt.expert_count ? "1" : "0") << "\n";
    }
    std::cout << out.str();
    write_file(g, "sweep.csv", out.str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"streaming-dataflow accelerator modeling toolkit"};
    app.require_subcommand(1);
    GlobalOpts g;
    app.add_option("--platform", g.platform, "builtin platform name or platform file");
    app.add_option("--seed", g.seed, "random seed");
    app.add_option("--out", g.out_dir, "output directory");
    app.add_option("--jobs", g.jobs, "max concurrent simulations in sweeps");

    std::string graph_file, partition = "maximal", trace_file, config_file;
    std::vector<std::string> hints, platforms = {"sn40l_node", "dgx_a100"};
    int experts = 150;
    std::vector<int> counts = {50, 150, 850};

    auto add_globals = [&](CLI::App* sub) {
        sub->add_option("--platform", g.platform, "builtin platform name or platform file");
        sub->add_option("--seed", g.seed, "random seed");
        sub->add_option("--out", g.out_dir, "output directory");
        sub->add_option("--jobs", g.jobs, "max concurrent simulations in sweeps");
        return sub;
    };

    auto* analyze = add_globals(app.add_subcommand("analyze", "operational intensity and roofline class"));
    analyze->add_option("--graph", graph_file)->required();
    analyze->add_option("--partition", partition);
    analyze->add_option("--hint", hints);

    auto* fuse = add_globals(app.add_subcommand("fuse", "plan kernel fusion"));
    fuse->add_option("--graph", graph_file)->required();
    fuse->add_option("--partition", partition);
    fuse->add_option("--hint", hints);

    auto* pnr = add_globals(app.add_subcommand("pnr", "place and route fused kernels"));
    pnr->add_option("--graph", graph_file)->required();
    pnr->add_option("--partition", partition);
    pnr->add_option("--hint", hints);

    auto* estimate = add_globals(app.add_subcommand("estimate", "fused vs unfused, SO vs HO timing"));
    estimate->add_option("--graph", graph_file)->required();
    estimate->add_option("--hint", hints);

    auto* memplan_cmd = add_globals(app.add_subcommand("memplan", "static memory plan for a graph"));
    memplan_cmd->add_option("--graph", graph_file)->required();
    memplan_cmd->add_option("--partition", partition);
    memplan_cmd->add_option("--hint", hints);

    auto* serve = add_globals(app.add_subcommand("serve", "simulate expert serving over a trace"));
    serve->add_option("--trace", trace_file)->required();
    serve->add_option("--config", config_file);

    auto* footprint = add_globals(app.add_subcommand("footprint", "machines needed to hold an expert set"));
    footprint->add_option("--experts", experts);
    footprint->add_option("--platforms", platforms);

    auto* sweep = add_globals(app.add_subcommand("sweep", "latency and footprint over expert counts"));
    sweep->add_option("--counts", counts);
    sweep->add_option("--platforms", platforms);
    sweep->add_option("--config", config_file);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : kExitBadInput;
    }

    try {
        if (app.got_subcommand(analyze)) return cmd_analyze(g, graph_file, partition, hints);
        if (app.got_subcommand(fuse)) return cmd_fuse(g, graph_file, partition, hints);
        if (app.got_subcommand(pnr)) return cmd_pnr(g, graph_file, partition, hints);
        if (app.got_subcommand(estimate)) return cmd_estimate(g, graph_file, hints);
        if (app.got_subcommand(memplan_cmd)) return cmd_memplan(g, graph_file, partition, hints);
        if (app.got_subcommand(serve)) return cmd_serve(g, trace_file, config_file);
        if (app.got_subcommand(footprint)) return cmd_footprint(g, experts, platforms);
        if (app.got_subcommand(sweep)) return cmd_sweep(g, counts, platforms, config_file);
    } catch (const opgraph::Infeasible& e) {
        std::cerr << "infeasible: " << e.what() << "\n";
        return kExitInfeasible;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitBadInput;
    }
    return 0;
}
