#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dfsim/opgraph.hpp"

namespace dfsim::arch {

using dfsim::opgraph::ValidationReport;

struct TileConfig {
    int pcu_count = 0;
    int pmu_count = 0;
    double pcu_peak_flops = 0;        // per PCU, BF16 FLOPs/s
    std::int64_t pmu_capacity_bytes = 0;
    double pmu_read_bw = 0;           // bytes/s per PMU
    double pmu_write_bw = 0;
    int mesh_rows = 0;
    int mesh_cols = 0;
    double link_bw = 0;               // bytes/s per vector RDN link
    std::int64_t sram_total_bytes = 0;
    // Streaming tile granularity (elements per tile flowing between stages).
    std::int64_t stream_tile_elems = 32 * 32;

    double peak_flops() const { return pcu_count * pcu_peak_flops; }
};

enum class TierName { SRAM, HBM, DDR, HOST };

struct MemoryTier {
    TierName name = TierName::HBM;
    std::int64_t capacity_bytes = 0;  // per socket
    double bandwidth_bytes_per_s = 0; // per socket
};

struct PlatformConfig {
    std::string name;
    int sockets = 0;
    TileConfig tile;                       // meaningful for dataflow platforms
    std::vector<MemoryTier> tiers;         // per-socket figures
    double model_ingress_bw = 0;           // aggregate bytes/s into HBM
    double machine_balance = 0;            // FLOPs/byte roofline ridge
    double socket_peak_flops = 0;          // per socket
    double launch_overhead_so = 100e-6;    // seconds per kernel launch
    double launch_overhead_ho = 5e-6;
    double allreduce_alpha = 2e-6;         // latency = alpha + bytes / beta
    double allreduce_beta = 100e9;
    double decode_hbm_utilization = 0.85;  // achievable fraction of HBM bw in decode
    double execute_efficiency = 0.85;      // achieved fraction of peak in prefill

    bool dataflow_tile() const { return tile.pcu_count > 0; }
    const MemoryTier* tier(TierName t) const;
    bool has_tier(TierName t) const { return tier(t) != nullptr; }
    double hbm_bandwidth_aggregate() const;
    std::int64_t hbm_capacity_aggregate() const;
    std::int64_t capacity_tier_bytes() const;  // DDR if present, else HOST
    double allreduce_latency(std::int64_t bytes) const {
        return allreduce_alpha + bytes / allreduce_beta;
    }
};

// Canonical machine descriptions: "sn40l_node", "dgx_a100", "dgx_h100".
PlatformConfig builtin_platform(const std::string& name);

ValidationReport validate_platform(const PlatformConfig& p);

// TOML-style key/value platform file, version key arch_v1.
PlatformConfig platform_from_file(const std::string& path);
// Resolves a builtin name or, failing that, a file path.
PlatformConfig resolve_platform(const std::string& name_or_path);

}  // namespace dfsim::arch
