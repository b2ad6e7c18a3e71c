#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "dfsim/arch.hpp"
#include "dfsim/opgraph.hpp"

namespace dfsim::memplan {

using opgraph::Infeasible;

enum class SymbolKind { Weight, Activation, Metadata };

struct SymbolAccess {
    int position = 0;  // kernel index in the schedule
    std::int64_t bytes = 0;
    bool is_write = false;
};

struct Symbol {
    std::string id;
    std::int64_t size = 0;
    SymbolKind kind = SymbolKind::Activation;
    bool read_only = false;
    std::vector<SymbolAccess> accesses;
    int first_def = 0;
    int last_use = 0;
    std::int64_t aggregate_transfer = 0;
};

enum class Tier { HBM, DDR };

struct SymbolPlacement {
    std::string id;
    Tier tier = Tier::HBM;
    std::uint64_t offset = 0;
    std::int64_t size = 0;
    int first_def = 0;
    int last_use = 0;
};

struct MemoryPlanResult {
    std::vector<SymbolPlacement> placements;
    std::int64_t peak_hbm = 0;
    std::int64_t deficit = 0;  // bytes over capacity; 0 when the plan fits
    std::int64_t spill_bytes = 0;
    std::vector<std::string> spilled;
    std::vector<std::string> warnings;
};

// Computes [first_def, last_use] per symbol from its access list over a
// schedule of `schedule_len` kernels. Read-only weights live [0, end].
std::vector<Symbol> lifetimes(std::vector<Symbol> symbols, int schedule_len);

// First-fit offset assignment with lifetime-based address reuse. A deficit is
// reported, not thrown; select_spills resolves it.
MemoryPlanResult assign_addresses(std::vector<Symbol> symbols, std::int64_t hbm_capacity);

// Iteratively spills the smallest-aggregate-transfer candidate (weights last)
// until the HBM plan fits. Spilled symbols get bump-allocated DDR offsets.
MemoryPlanResult select_spills(std::vector<Symbol> symbols, std::int64_t hbm_capacity,
                               std::int64_t ddr_capacity = std::numeric_limits<std::int64_t>::max());

std::string plan_to_json(const MemoryPlanResult& plan);
MemoryPlanResult plan_from_json(const std::string& json_text);

}  // namespace dfsim::memplan
