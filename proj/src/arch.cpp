#include "dfsim/arch.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace dfsim::arch {

const MemoryTier* PlatformConfig::tier(TierName t) const {
    for (const auto& m : tiers)
        if (m.name == t) return &m;
    return nullptr;
}

double PlatformConfig::hbm_bandwidth_aggregate() const {
    const auto* t = tier(TierName::HBM);
    return t ? t->bandwidth_bytes_per_s * sockets : 0.0;
}

std::int64_t PlatformConfig::hbm_capacity_aggregate() const {
    const auto* t = tier(TierName::HBM);
    return t ? t->capacity_bytes * sockets : 0;
}

std::int64_t PlatformConfig::capacity_tier_bytes() const {
    if (const auto* t = tier(TierName::DDR)) return t->capacity_bytes * sockets;
    if (const auto* t = tier(TierName::HOST)) return t->capacity_bytes;  // shared host RAM
    return 0;
}

namespace {

constexpr std::int64_t kGiB = 1024ll * 1024 * 1024;

TileConfig sn40l_tile() {
    TileConfig t;
    t.pcu_count = 1040;
    t.pmu_count = 1040;
    t.pcu_peak_flops = 638e12 / 1040;
    t.pmu_capacity_bytes = 520'000'000 / 1040;  // 500 kB per PMU
    t.pmu_read_bw = 512e9;
    t.pmu_write_bw = 512e9;
    t.mesh_rows = 42;
    t.mesh_cols = 52;
    t.link_bw = 512e9;
    t.sram_total_bytes = 520'000'000;
    return t;
}

PlatformConfig sn40l_node() {
    PlatformConfig p;
    p.name = "sn40l_node";
    p.sockets = 8;
    p.tile = sn40l_tile();
    p.socket_peak_flops = 638e12;
    p.tiers = {
        {TierName::SRAM, 520'000'000, 400e12},
        {TierName::HBM, 64 * kGiB, 1.8e12},
        {TierName::DDR, 1'500'000'000'000ll, 200e9},
    };
    p.model_ingress_bw = 1e12;
    p.machine_balance = 638e12 / 1.8e12;
    p.decode_hbm_utilization = 0.85;
    p.execute_efficiency = 0.85;
    return p;
}

PlatformConfig dgx(const std::string& name, double peak, double hbm_bw, double ingress,
                   double balance) {
    PlatformConfig p;
    p.name = name;
    p.sockets = 8;
    p.socket_peak_flops = peak;
    p.tiers = {
        {TierName::HBM, 80'000'000'000ll, hbm_bw},
        {TierName::HOST, 2'000'000'000'000ll, 200e9},
    };
    p.model_ingress_bw = ingress;
    p.machine_balance = balance;
    p.decode_hbm_utilization = 0.5;
    p.execute_efficiency = 0.5;
    return p;
}

}  // namespace

PlatformConfig builtin_platform(const std::string& name) {
    if (name == "sn40l_node") return sn40l_node();
    if (name == "dgx_a100") return dgx("dgx_a100", 300e12, 2.0e12, 32e9, 150.0);
    if (name == "dgx_h100") return dgx("dgx_h100", 989e12, 3.35e12, 64e9, 989e12 / 3.35e12);
    throw std::invalid_argument("unknown platform: " + name);
}

ValidationReport validate_platform(const PlatformConfig& p) {
    ValidationReport r;
    if (p.sockets <= 0) r.errors.push_back("sockets must be positive");
    if (p.socket_peak_flops <= 0) r.errors.push_back("socket peak flops must be positive");
    if (p.machine_balance <= 0) r.errors.push_back("machine balance must be positive");
    if (p.tiers.empty()) r.errors.push_back("no memory tiers");
    for (const auto& t : p.tiers) {
        if (t.capacity_bytes <= 0) r.errors.push_back("tier with non-positive capacity");
        if (t.bandwidth_bytes_per_s <= 0) r.errors.push_back("tier with non-positive bandwidth");
    }
    if (p.model_ingress_bw <= 0) r.errors.push_back("model ingress bandwidth must be positive");
    if (p.dataflow_tile()) {
        const auto& t = p.tile;
        if (t.sram_total_bytes != std::int64_t(t.pmu_count) * t.pmu_capacity_bytes)
            r.errors.push_back("sram_total != pmu_count * pmu_capacity");
        if (std::int64_t(t.mesh_rows) * t.mesh_cols < t.pcu_count + t.pmu_count)
            r.errors.push_back("mesh too small for PCU+PMU sites");
        if (std::abs(t.peak_flops() - p.socket_peak_flops) > 1e-6 * p.socket_peak_flops)
            r.errors.push_back("pcu_count * pcu_peak_flops != socket peak flops");
    }
    // Ingress cannot exceed the aggregate bandwidth of the tier the models come from.
    double source_bw = 0;
    if (const auto* d = p.tier(TierName::DDR))
        source_bw = d->bandwidth_bytes_per_s * p.sockets;
    else if (const auto* h = p.tier(TierName::HOST))
        source_bw = h->bandwidth_bytes_per_s;
    if (source_bw > 0 && p.model_ingress_bw > source_bw)
        r.warnings.push_back("ingress exceeds source tier aggregate bandwidth");
    return r;
}

namespace {

TierName tier_name_from_string(const std::string& s) {
    if (s == "sram") return TierName::SRAM;
    if (s == "hbm") return TierName::HBM;
    if (s == "ddr") return TierName::DDR;
    if (s == "host") return TierName::HOST;
    throw std::invalid_argument("unknown tier: " + s);
}

std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r\n");
    auto e = s.find_last_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    return s.substr(b, e - b + 1);
}

}  // namespace

PlatformConfig platform_from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open platform file: " + path);
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(in, line)) {
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    if (kv["version"] != "arch_v1" && kv["version"] != "\"arch_v1\"")
        throw std::invalid_argument("platform file must declare version = arch_v1");

    auto str = [&](const std::string& k, const std::string& dflt) {
        auto it = kv.find(k);
        if (it == kv.end()) return dflt;
        std::string v = it->second;
        if (v.size() >= 2 && v.front() == '"' && v.back() == '"') v = v.substr(1, v.size() - 2);
        return v;
    };
    auto num = [&](const std::string& k, double dflt) {
        auto it = kv.find(k);
        return it == kv.end() ? dflt : std::stod(it->second);
    };

    // Start from a builtin base when given, so files can override a few knobs.
    std::string base = str("base", "");
    PlatformConfig p = base.empty() ? PlatformConfig{} : builtin_platform(base);
    p.name = str("name", base.empty() ? "custom" : base);
    p.sockets = static_cast<int>(num("sockets", p.sockets));
    p.socket_peak_flops = num("socket_peak_flops", p.socket_peak_flops);
    p.machine_balance = num("machine_balance", p.machine_balance);
    p.model_ingress_bw = num("model_ingress_bw", p.model_ingress_bw);
    p.launch_overhead_so = num("launch_overhead_so", p.launch_overhead_so);
    p.launch_overhead_ho = num("launch_overhead_ho", p.launch_overhead_ho);
    p.allreduce_alpha = num("allreduce_alpha", p.allreduce_alpha);
    p.allreduce_beta = num("allreduce_beta", p.allreduce_beta);
    p.decode_hbm_utilization = num("decode_hbm_utilization", p.decode_hbm_utilization);
    p.execute_efficiency = num("execute_efficiency", p.execute_efficiency);
    for (const auto& tn : {"sram", "hbm", "ddr", "host"}) {
        std::string cap_key = std::string(tn) + ".capacity_bytes";
        std::string bw_key = std::string(tn) + ".bandwidth_bytes_per_s";
        if (!kv.count(cap_key)) continue;
        MemoryTier t;
        t.name = tier_name_from_string(tn);
        t.capacity_bytes = static_cast<std::int64_t>(num(cap_key, 0));
        t.bandwidth_bytes_per_s = num(bw_key, 0);
        bool replaced = false;
        for (auto& existing : p.tiers)
            if (existing.name == t.name) {
                existing = t;
                replaced = true;
            }
        if (!replaced) p.tiers.push_back(t);
    }
    return p;
}

PlatformConfig resolve_platform(const std::string& name_or_path) {
    try {
        return builtin_platform(name_or_path);
    } catch (const std::invalid_argument&) {
        return platform_from_file(name_or_path);
    }
}

}  // namespace dfsim::arch
