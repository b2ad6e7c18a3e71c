#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "dfsim/fusion.hpp"

namespace dfsim::fabric {

using opgraph::Infeasible;

enum class SiteKind { PCU, PMU, AGCU };

struct Coord {
    int row = 0;
    int col = 0;
    auto operator<=>(const Coord&) const = default;
};

inline int manhattan(Coord a, Coord b) {
    return std::abs(a.row - b.row) + std::abs(a.col - b.col);
}

// 2-D mesh of sites joined by non-blocking switches. Only the vector fabric
// carries bandwidth accounting; scalar and control are contention-free.
struct MeshTopology {
    int rows = 0;
    int cols = 0;
    double link_capacity = 1.0;  // bytes/s per directed vector link
    // Site kinds laid out row-major; empty means checkerboard PCU/PMU.
    std::vector<SiteKind> sites;

    SiteKind site_kind(Coord c) const;
    bool in_bounds(Coord c) const {
        return c.row >= 0 && c.row < rows && c.col >= 0 && c.col < cols;
    }
    static MeshTopology checkerboard(int rows, int cols, double link_capacity);
};

// Directed mesh link between adjacent sites.
struct Link {
    Coord from, to;
    auto operator<=>(const Link&) const = default;
};

struct PlacedEntity {
    std::string id;       // "stage:<op>[i]" or "buffer:<tensor>[i]"
    SiteKind kind = SiteKind::PCU;
    std::vector<std::string> neighbors;  // entity ids this one exchanges tiles with
};

struct Placement {
    std::map<std::string, Coord> site_of;
    int total_wirelength = 0;
};

// Greedy BFS placement minimizing summed Manhattan distance to already-placed
// neighbors; deterministic for a given seed.
Placement place_entities(const std::vector<PlacedEntity>& entities, const MeshTopology& mesh,
                         std::uint64_t seed);

// Placement of a fusion plan: one entity per allocated PCU/PMU unit.
Placement place(const fusion::FusionPlan& plan, const opgraph::OpGraph& g,
                const MeshTopology& mesh, std::uint64_t seed);

struct FlowSpec {
    std::string id;
    Coord source;
    std::vector<Coord> destinations;
    double demand = 0;           // bytes/s
    double throttle_weight = 1;  // in (0, 1]
};

struct FlowRoute {
    std::string id;
    Coord source;
    std::vector<Coord> destinations;
    std::set<Link> links;  // multicast tree
    double demand = 0;
    double throttle_weight = 1;
};

// X-then-Y dimension-order path.
std::vector<Link> dimension_order_path(Coord from, Coord to);

std::vector<FlowRoute> route(const std::vector<FlowSpec>& flows, const MeshTopology& mesh);

struct LinkLoad {
    Link link;
    double demand = 0;
    double utilization = 0;
};

struct UtilizationReport {
    std::vector<LinkLoad> loads;
    std::vector<Link> hotspots;  // utilization > 1
};

UtilizationReport link_utilization(const std::vector<FlowRoute>& routes,
                                   const MeshTopology& mesh);

std::string utilization_to_csv(const std::vector<FlowRoute>& routes,
                               const UtilizationReport& rep);

struct Packet {
    std::string flow_id;
    std::int64_t sequence_id = 0;
    std::int64_t payload = 0;
};

// Emits payloads in sequence order as soon as all predecessors arrived.
// Throws on duplicate ids; detects missing ids at end of stream.
class StreamReorderer {
public:
    // Returns payloads released by this arrival, in order.
    std::vector<std::int64_t> push(const Packet& p);
    // All packets seen: verifies the ids formed a contiguous range.
    void finish() const;
    std::int64_t buffered() const { return static_cast<std::int64_t>(pending_.size()); }

private:
    std::map<std::int64_t, std::int64_t> pending_;
    std::int64_t next_ = 0;
};

std::vector<std::int64_t> reorder_stream(const std::vector<Packet>& packets);

struct BankAddress {
    int bank = 0;
    std::int64_t offset = 0;
};

// Diagonal striping: bank = (row + col) mod banks. Any B consecutive elements
// of one row or one column touch B distinct banks.
BankAddress diagonal_bank_address(std::int64_t row, std::int64_t col, int banks,
                                  std::int64_t cols_total);

// Returns the index of the unit whose range contains the address.
// Throws on uncovered or doubly-covered configurations.
int predicate_partition(std::uint64_t address, const std::vector<fusion::AddressRange>& ranges);

}  // namespace dfsim::fabric
