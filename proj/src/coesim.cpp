#include "dfsim/coesim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <list>
#include <set>
#include <sstream>

#include "json.hpp"

namespace dfsim::coesim {

using nlohmann::json;

namespace {

// Capacity-tier headroom kept for runtime state on dataflow nodes.
constexpr std::int64_t kCapacityTierReserve = 100'000'000'000ll;

std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

double uniform01(std::uint64_t& state) {
    return (splitmix64(state) >> 11) * (1.0 / 9007199254740992.0);
}

}  // namespace

CoEConfig CoEConfig::defaults() {
    CoEConfig c;
    c.experts.reserve(150);
    for (int i = 0; i < 150; ++i) {
        ExpertModel e;
        e.id = "expert_" + std::to_string(i);
        c.experts.push_back(e);
    }
    return c;
}

CoEConfig config_from_json(const std::string& json_text) {
    json j = json::parse(json_text);
    if (j.value("schema", "") != "coe_v1")
        throw std::invalid_argument("expected schema coe_v1");
    CoEConfig c;
    const auto& e = j.at("experts");
    if (e.is_array()) {
        for (const auto& je : e) {
            ExpertModel m;
            m.id = je.at("id").get<std::string>();
            m.param_count = je.value("param_count", m.param_count);
            m.dtype_bytes = je.value("dtype_bytes", m.dtype_bytes);
            m.read_only_fraction = je.value("read_only_fraction", m.read_only_fraction);
            m.kv_bytes_per_token = je.value("kv_bytes_per_token", m.kv_bytes_per_token);
            m.hbm_segment_bytes = je.value("hbm_segment_bytes", m.hbm_segment_bytes);
            c.experts.push_back(m);
        }
    } else {
        int count = e.at("count").get<int>();
        ExpertModel proto;
        proto.param_count = e.value("param_count", proto.param_count);
        proto.dtype_bytes = e.value("dtype_bytes", proto.dtype_bytes);
        proto.read_only_fraction = e.value("read_only_fraction", proto.read_only_fraction);
        proto.kv_bytes_per_token = e.value("kv_bytes_per_token", proto.kv_bytes_per_token);
        for (int i = 0; i < count; ++i) {
            ExpertModel m = proto;
            m.id = "expert_" + std::to_string(i);
            c.experts.push_back(m);
        }
    }
    c.batch_size = j.value("batch_size", c.batch_size);
    c.output_tokens = j.value("output_tokens", c.output_tokens);
    c.prompt_tokens = j.value("prompt_tokens", c.prompt_tokens);
    c.tensor_parallel = j.value("tensor_parallel", c.tensor_parallel);
    c.hbm_reserve_per_socket = j.value("hbm_reserve_per_socket", c.hbm_reserve_per_socket);
    c.router_param_count = j.value("router_param_count", c.router_param_count);
    if (j.contains("fixed_map")) {
        c.policy = RouterPolicy::FixedMap;
        c.fixed_map = j["fixed_map"].get<std::map<std::string, std::string>>();
    }
    if (j.contains("categorical_weights"))
        c.categorical_weights = j["categorical_weights"].get<std::vector<double>>();
    if (c.batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    return c;
}

CoEConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open config file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return config_from_json(ss.str());
}

std::string route_request(const TraceRequest& req, const CoEConfig& cfg,
                          std::uint64_t& rng_state) {
    auto known = [&](const std::string& id) {
        for (const auto& e : cfg.experts)
            if (e.id == id) return true;
        return false;
    };
    if (req.expert_id) {
        if (!known(*req.expert_id))
            throw std::invalid_argument("unknown expert id: " + *req.expert_id);
        return *req.expert_id;
    }
    if (cfg.policy == RouterPolicy::FixedMap) {
        auto it = cfg.fixed_map.find(req.tag);
        if (it == cfg.fixed_map.end())
            throw std::invalid_argument("no expert mapping for tag: " + req.tag);
        if (!known(it->second))
            throw std::invalid_argument("unknown expert id: " + it->second);
        return it->second;
    }
    std::vector<double> w = cfg.categorical_weights;
    if (w.empty()) w.assign(cfg.experts.size(), 1.0);
    if (w.size() != cfg.experts.size())
        throw std::invalid_argument("categorical weight count != expert count");
    double total = 0;
    for (double x : w) total += x;
    double u = uniform01(rng_state) * total;
    for (size_t i = 0; i < w.size(); ++i) {
        u -= w[i];
        if (u <= 0) return cfg.experts[i].id;
    }
    return cfg.experts.back().id;
}

double switch_time(const ExpertModel& e, const PlatformConfig& platform) {
    return e.resolved_hbm_segment() / platform.model_ingress_bw;
}

double execute_time(const ExpertModel& e, const CoEConfig& cfg, const PlatformConfig& platform) {
    double prompt_flops = 2.0 * e.param_count * cfg.prompt_tokens;
    double prefill = prompt_flops /
                     (platform.sockets * platform.socket_peak_flops * platform.execute_efficiency);
    double kv = static_cast<double>(cfg.prompt_tokens) * e.kv_bytes_per_token;
    double bound = perf::decode_throughput_bound(static_cast<double>(e.bytes()), kv, platform,
                                                 platform.decode_hbm_utilization);
    return prefill + cfg.output_tokens / bound;
}

double router_time(const CoEConfig& cfg, const PlatformConfig& platform) {
    double router_bytes = 2.0 * cfg.router_param_count;
    return router_bytes /
           (platform.hbm_bandwidth_aggregate() * platform.decode_hbm_utilization);
}

std::int64_t usable_hbm(const CoEConfig& cfg, const PlatformConfig& platform) {
    return platform.hbm_capacity_aggregate() -
           static_cast<std::int64_t>(cfg.hbm_reserve_per_socket * platform.sockets);
}

LatencyBreakdown serve_trace(const ServingTrace& trace, const CoEConfig& cfg,
                             const PlatformConfig& platform) {
    if (trace.requests.empty()) throw std::invalid_argument("empty serving trace");
    std::map<std::string, const ExpertModel*> experts;
    std::int64_t total_expert_bytes = 0;
    for (const auto& e : cfg.experts) {
        experts[e.id] = &e;
        total_expert_bytes += e.bytes();
    }
    const std::int64_t hbm_budget = usable_hbm(cfg, platform);
    if (platform.has_tier(arch::TierName::DDR)) {
        std::int64_t usable_ddr = platform.capacity_tier_bytes() - kCapacityTierReserve;
        if (total_expert_bytes > usable_ddr)
            throw Infeasible("expert set exceeds capacity tier: " +
                             std::to_string(total_expert_bytes) + " > " +
                             std::to_string(usable_ddr) + " bytes");
    } else if (!platform.has_tier(arch::TierName::HOST)) {
        if (total_expert_bytes > hbm_budget)
            throw Infeasible("expert set exceeds HBM and the platform has no spill tier");
    }

    LatencyBreakdown out;
    std::list<std::string> lru;  // front = most recent
    std::map<std::string, std::list<std::string>::iterator> where;
    std::int64_t resident_bytes = 0;
    const double rt = router_time(cfg, platform);

    auto touch = [&](const std::string& id) {
        lru.erase(where[id]);
        lru.push_front(id);
        where[id] = lru.begin();
    };

    for (size_t base = 0; base < trace.requests.size();
         base += static_cast<size_t>(cfg.batch_size)) {
        size_t end = std::min(trace.requests.size(), base + cfg.batch_size);

        std::uint64_t rng = trace.seed + base;  // router state advances per batch
        std::vector<std::string> routed;
        for (size_t i = base; i < end; ++i)
            routed.push_back(route_request(trace.requests[i], cfg, rng));

        std::set<std::string> pinned(routed.begin(), routed.end());

        for (size_t i = base; i < end; ++i) {
            const auto& e = *experts.at(routed[i - base]);
            RequestLatency rl;
            rl.request_id = trace.requests[i].request_id;
            rl.expert_id = e.id;
            if (i == base) rl.router_time = rt;  // router runs once per batch

            if (where.count(e.id)) {
                rl.hit = true;
                out.hits++;
                touch(e.id);
            } else {
                out.misses++;
                std::int64_t need = e.resolved_hbm_segment();
                if (need > hbm_budget)
                    throw Infeasible("expert " + e.id + " larger than usable HBM");
                while (resident_bytes + need > hbm_budget) {
                    // Evict least-recent unpinned expert.
                    auto victim = lru.end();
                    for (auto it = lru.rbegin(); it != lru.rend(); ++it)
                        if (!pinned.count(*it)) {
                            victim = std::prev(it.base());
                            break;
                        }
                    if (victim == lru.end())
                        throw Infeasible("batch working set exceeds usable HBM");
                    const auto& v = *experts.at(*victim);
                    out.evictions++;
                    out.copyback_bytes += static_cast<std::int64_t>(
                        v.bytes() * (1.0 - v.read_only_fraction));
                    resident_bytes -= v.resolved_hbm_segment();
                    where.erase(*victim);
                    lru.erase(victim);
                }
                lru.push_front(e.id);
                where[e.id] = lru.begin();
                resident_bytes += need;
                rl.switch_time = switch_time(e, platform);
            }
            rl.execute_time = execute_time(e, cfg, platform);
            rl.total = rl.router_time + rl.switch_time + rl.execute_time;
            out.router_total += rl.router_time;
            out.switch_total += rl.switch_time;
            out.execute_total += rl.execute_time;
            out.total_time += rl.total;
            out.requests.push_back(rl);
        }
    }
    return out;
}

LatencyCurve latency_curve(const std::vector<int>& expert_counts, const CoEConfig& cfg,
                           const PlatformConfig& platform, int requests_per_point,
                           double knee_factor) {
    LatencyCurve curve;
    double prev = -1;
    for (int count : expert_counts) {
        CoEConfig c = cfg;
        c.experts.clear();
        ExpertModel proto = cfg.experts.empty() ? ExpertModel{} : cfg.experts.front();
        for (int i = 0; i < count; ++i) {
            ExpertModel e = proto;
            e.id = "expert_" + std::to_string(i);
            c.experts.push_back(e);
        }
        // Warm the cache with one sequential pass so the ladder compares
        // steady-state behavior, not cold starts.
        ServingTrace warm;
        warm.seed = 1;
        for (int i = 0; i < count; ++i)
            warm.requests.push_back({"warm_" + std::to_string(i), "",
                                     "expert_" + std::to_string(i)});
        auto trace = uniform_trace(requests_per_point, count, 1234 + count);
        trace.requests.insert(trace.requests.begin(), warm.requests.begin(),
                              warm.requests.end());
        auto b = serve_trace(trace, c, platform);
        double measured = 0;
        for (size_t i = count; i < b.requests.size(); ++i) measured += b.requests[i].total;
        double mean = measured / requests_per_point;
        curve.points.push_back({count, mean});
        if (prev > 0 && !curve.knee && mean > prev * knee_factor) curve.knee = count;
        prev = mean;
    }
    return curve;
}

int footprint(int num_experts, const ExpertModel& e, const PlatformConfig& platform) {
    if (num_experts < 1) throw std::invalid_argument("num_experts must be >= 1");
    double total = static_cast<double>(num_experts) * e.bytes();
    double per_machine;
    if (platform.has_tier(arch::TierName::DDR))
        per_machine = static_cast<double>(platform.capacity_tier_bytes() - kCapacityTierReserve);
    else
        per_machine = static_cast<double>(platform.hbm_capacity_aggregate());
    if (per_machine <= 0) throw Infeasible("platform has no tier that can hold experts");
    return static_cast<int>(std::ceil(total / per_machine));
}

ServingTrace trace_from_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open trace file: " + path);
    ServingTrace t;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json j = json::parse(line);
        if (j.contains("seed")) t.seed = j["seed"].get<std::uint64_t>();
        if (!j.contains("request_id")) continue;  // header record
        TraceRequest r;
        r.request_id = j["request_id"].get<std::string>();
        if (j.contains("tag")) r.tag = j["tag"].get<std::string>();
        if (j.contains("expert_id")) r.expert_id = j["expert_id"].get<std::string>();
        t.requests.push_back(r);
    }
    if (t.requests.empty()) throw std::invalid_argument("trace has no requests: " + path);
    return t;
}

std::string trace_to_jsonl(const ServingTrace& trace) {
    std::ostringstream out;
    out << json{{"seed", trace.seed}}.dump() << "\n";
    for (const auto& r : trace.requests) {
        json j{{"request_id", r.request_id}};
        if (r.expert_id)
            j["expert_id"] = *r.expert_id;
        else
            j["tag"] = r.tag;
        out << j.dump() << "\n";
    }
    return out.str();
}

ServingTrace uniform_trace(int num_requests, int num_experts, std::uint64_t seed) {
    ServingTrace t;
    t.seed = seed;
    std::uint64_t state = seed;
    for (int i = 0; i < num_requests; ++i) {
        TraceRequest r;
        r.request_id = "req_" + std::to_string(i);
        r.expert_id = "expert_" + std::to_string(splitmix64(state) % num_experts);
        t.requests.push_back(r);
    }
    return t;
}

std::string breakdown_to_csv(const LatencyBreakdown& b) {
    std::ostringstream out;
    out << "request_id,expert_id,hit,router_s,switch_s,execute_s,total_s\n";
    for (const auto& r : b.requests)
        out << r.request_id << "," << r.expert_id << "," << (r.hit ? 1 : 0) << ","
            << r.router_time << "," << r.switch_time << "," << r.execute_time << "," << r.total
            << "\n";
    return out.str();
}

std::string summary_to_csv(const LatencyBreakdown& b) {
    std::ostringstream out;
    out << "hits,misses,evictions,copyback_bytes,router_s,switch_s,execute_s,total_s\n";
    out << b.hits << "," << b.misses << "," << b.evictions << "," << b.copyback_bytes << ","
        << b.router_total << "," << b.switch_total << "," << b.execute_total << ","
        << b.total_time << "\n";
    return out.str();
}

std::string curve_to_csv(const LatencyCurve& c) {
    std::ostringstream out;
    out << "expert_count,mean_latency_s\n";
    for (const auto& p : c.points) out << p.expert_count << "," << p.mean_latency << "\n";
    return out.str();
}

}  // namespace dfsim::coesim
