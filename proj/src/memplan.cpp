#include "dfsim/memplan.hpp"

#include <algorithm>
#include <limits>
#include <map>

#include "json.hpp"

namespace dfsim::memplan {

using nlohmann::json;

std::vector<Symbol> lifetimes(std::vector<Symbol> symbols, int schedule_len) {
    for (auto& s : symbols) {
        s.aggregate_transfer = 0;
        int first_write = std::numeric_limits<int>::max();
        int first_read = std::numeric_limits<int>::max();
        int last_read = -1;
        for (const auto& a : s.accesses) {
            if (a.position < 0 || a.position >= schedule_len)
                throw std::invalid_argument("symbol " + s.id + ": access position " +
                                            std::to_string(a.position) + " outside schedule");
            s.aggregate_transfer += a.bytes;
            if (a.is_write)
                first_write = std::min(first_write, a.position);
            else {
                first_read = std::min(first_read, a.position);
                last_read = std::max(last_read, a.position);
            }
        }
        if (s.read_only && s.kind == SymbolKind::Weight) {
            s.first_def = 0;
            s.last_use = schedule_len - 1;
            continue;
        }
        if (first_write == std::numeric_limits<int>::max()) {
            if (last_read >= 0)
                throw std::invalid_argument("symbol " + s.id + " read before any definition");
            s.first_def = 0;
            s.last_use = 0;
            continue;
        }
        if (first_read < first_write)
            throw std::invalid_argument("symbol " + s.id + " read before any definition");
        s.first_def = first_write;
        s.last_use = std::max(last_read, first_write);
    }
    return symbols;
}

namespace {

bool lifetimes_overlap(int a_lo, int a_hi, int b_lo, int b_hi) {
    return a_lo <= b_hi && b_lo <= a_hi;
}

}  // namespace

MemoryPlanResult assign_addresses(std::vector<Symbol> symbols, std::int64_t hbm_capacity) {
    std::stable_sort(symbols.begin(), symbols.end(), [](const Symbol& a, const Symbol& b) {
        if (a.first_def != b.first_def) return a.first_def < b.first_def;
        return a.size > b.size;
    });

    MemoryPlanResult r;
    // For each placed symbol keep (offset range, lifetime); first-fit scans
    // the live-at-overlap placements ordered by offset.
    for (const auto& s : symbols) {
        std::vector<const SymbolPlacement*> conflicting;
        for (const auto& p : r.placements)
            if (p.tier == Tier::HBM &&
                lifetimes_overlap(s.first_def, s.last_use, p.first_def, p.last_use))
                conflicting.push_back(&p);
        std::sort(conflicting.begin(), conflicting.end(),
                  [](const SymbolPlacement* a, const SymbolPlacement* b) {
                      return a->offset < b->offset;
                  });
        std::uint64_t cursor = 0;
        for (const auto* p : conflicting) {
            if (p->offset >= cursor + static_cast<std::uint64_t>(s.size)) break;
            cursor = std::max(cursor, p->offset + static_cast<std::uint64_t>(p->size));
        }
        r.placements.push_back({s.id, Tier::HBM, cursor, s.size, s.first_def, s.last_use});
        r.peak_hbm = std::max(r.peak_hbm,
                              static_cast<std::int64_t>(cursor) + s.size);
    }
    r.deficit = std::max<std::int64_t>(0, r.peak_hbm - hbm_capacity);
    return r;
}

MemoryPlanResult select_spills(std::vector<Symbol> symbols, std::int64_t hbm_capacity,
                               std::int64_t ddr_capacity) {
    auto plan = assign_addresses(symbols, hbm_capacity);
    if (plan.deficit == 0) return plan;

    // Spill order: non-weights ascending by aggregate transfer, then weights.
    std::vector<Symbol> order = symbols;
    std::stable_sort(order.begin(), order.end(), [](const Symbol& a, const Symbol& b) {
        bool aw = a.kind == SymbolKind::Weight, bw = b.kind == SymbolKind::Weight;
        if (aw != bw) return !aw;
        return a.aggregate_transfer < b.aggregate_transfer;
    });

    std::vector<std::string> spilled;
    std::vector<Symbol> resident = symbols;
    std::vector<Symbol> ddr;
    bool weight_spilled = false;
    for (const auto& cand : order) {
        resident.erase(std::remove_if(resident.begin(), resident.end(),
                                      [&](const Symbol& s) { return s.id == cand.id; }),
                       resident.end());
        ddr.push_back(cand);
        spilled.push_back(cand.id);
        if (cand.kind == SymbolKind::Weight) weight_spilled = true;
        plan = assign_addresses(resident, hbm_capacity);
        if (plan.deficit == 0) break;
    }
    if (plan.deficit > 0)
        throw Infeasible("model does not fit in HBM even with every symbol spilled");
    std::int64_t ddr_total = 0;
    for (const auto& s : ddr) ddr_total += s.size;
    if (ddr_total > ddr_capacity)
        throw Infeasible("spill set exceeds DDR capacity: model too large for HBM+DDR");

    std::uint64_t ddr_cursor = 0;
    for (const auto& s : ddr) {
        plan.placements.push_back({s.id, Tier::DDR, ddr_cursor, s.size, s.first_def, s.last_use});
        ddr_cursor += static_cast<std::uint64_t>(s.size);
        plan.spill_bytes += s.size;
    }
    plan.spilled = spilled;
    if (weight_spilled)
        plan.warnings.push_back("weights spilled to DDR: HBM deficit persisted after all "
                                "activations were moved");
    return plan;
}

std::string plan_to_json(const MemoryPlanResult& plan) {
    json j;
    j["schema"] = "memplan_v1";
    j["summary"] = {{"peak_hbm", plan.peak_hbm},
                    {"spill_bytes", plan.spill_bytes},
                    {"spilled", plan.spilled},
                    {"warnings", plan.warnings}};
    j["symbols"] = json::array();
    for (const auto& p : plan.placements)
        j["symbols"].push_back({{"id", p.id},
                                {"tier", p.tier == Tier::HBM ? "HBM" : "DDR"},
                                {"offset", p.offset},
                                {"size", p.size},
                                {"lifetime", {p.first_def, p.last_use}}});
    return j.dump(2);
}

MemoryPlanResult plan_from_json(const std::string& json_text) {
    json j = json::parse(json_text);
    if (j.value("schema", "") != "memplan_v1")
        throw std::invalid_argument("expected schema memplan_v1");
    MemoryPlanResult plan;
    plan.peak_hbm = j["summary"]["peak_hbm"].get<std::int64_t>();
    plan.spill_bytes = j["summary"]["spill_bytes"].get<std::int64_t>();
    plan.spilled = j["summary"]["spilled"].get<std::vector<std::string>>();
    for (const auto& s : j["symbols"]) {
        SymbolPlacement p;
        p.id = s["id"].get<std::string>();
        p.tier = s["tier"].get<std::string>() == "DDR" ? Tier::DDR : Tier::HBM;
        p.offset = s["offset"].get<std::uint64_t>();
        p.size = s["size"].get<std::int64_t>();
        p.first_def = s["lifetime"][0].get<int>();
        p.last_use = s["lifetime"][1].get<int>();
        plan.placements.push_back(p);
    }
    return plan;
}

}  // namespace dfsim::memplan
