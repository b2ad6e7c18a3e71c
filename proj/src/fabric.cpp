#include "dfsim/fabric.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <random>
#include <sstream>

namespace dfsim::fabric {

SiteKind MeshTopology::site_kind(Coord c) const {
    if (!sites.empty()) return sites[c.row * cols + c.col];
    return ((c.row + c.col) % 2 == 0) ? SiteKind::PCU : SiteKind::PMU;
}

MeshTopology MeshTopology::checkerboard(int rows, int cols, double link_capacity) {
    MeshTopology m;
    m.rows = rows;
    m.cols = cols;
    m.link_capacity = link_capacity;
    return m;
}

Placement place_entities(const std::vector<PlacedEntity>& entities, const MeshTopology& mesh,
                         std::uint64_t seed) {
    // Count feasibility per site kind.
    std::map<SiteKind, int> need, have;
    for (const auto& e : entities) need[e.kind]++;
    for (int r = 0; r < mesh.rows; ++r)
        for (int c = 0; c < mesh.cols; ++c) have[mesh.site_kind({r, c})]++;
    for (const auto& [kind, n] : need)
        if (n > have[kind]) throw Infeasible("not enough mesh sites for entity kind");

    std::mt19937_64 rng(seed);
    std::map<std::string, const PlacedEntity*> by_id;
    for (const auto& e : entities) by_id[e.id] = &e;

    Placement p;
    std::set<Coord> used;

    auto free_sites_of_kind = [&](SiteKind kind) {
        std::vector<Coord> out;
        for (int r = 0; r < mesh.rows; ++r)
            for (int c = 0; c < mesh.cols; ++c) {
                Coord co{r, c};
                if (!used.count(co) && mesh.site_kind(co) == kind) out.push_back(co);
            }
        return out;
    };

    // BFS over the entity connectivity graph starting from the first entity.
    std::vector<std::string> order;
    std::set<std::string> enqueued;
    std::deque<std::string> work;
    for (const auto& e : entities) {
        if (enqueued.count(e.id)) continue;
        work.push_back(e.id);
        enqueued.insert(e.id);
        while (!work.empty()) {
            auto id = work.front();
            work.pop_front();
            order.push_back(id);
            for (const auto& n : by_id.at(id)->neighbors)
                if (by_id.count(n) && !enqueued.count(n)) {
                    work.push_back(n);
                    enqueued.insert(n);
                }
        }
    }

    for (const auto& id : order) {
        const auto& e = *by_id.at(id);
        auto candidates = free_sites_of_kind(e.kind);
        Coord best{};
        long best_cost = -1;
        std::vector<Coord> ties;
        for (auto site : candidates) {
            long cost = 0;
            for (const auto& n : e.neighbors) {
                auto it = p.site_of.find(n);
                if (it != p.site_of.end()) cost += manhattan(site, it->second);
            }
            if (best_cost < 0 || cost < best_cost) {
                best_cost = cost;
                ties = {site};
            } else if (cost == best_cost) {
                ties.push_back(site);
            }
        }
        best = ties[ties.size() == 1 ? 0 : rng() % ties.size()];
        p.site_of[id] = best;
        used.insert(best);
    }

    for (const auto& e : entities)
        for (const auto& n : e.neighbors)
            if (e.id < n && p.site_of.count(n))
                p.total_wirelength += manhattan(p.site_of.at(e.id), p.site_of.at(n));
    return p;
}

Placement place(const fusion::FusionPlan& plan, const opgraph::OpGraph& g,
                const MeshTopology& mesh, std::uint64_t seed) {
    std::vector<PlacedEntity> entities;
    for (const auto& k : plan.kernels) {
        std::map<std::string, std::string> buffer_entity;  // tensor -> first unit id
        for (const auto& b : k.buffers)
            buffer_entity[b.tensor_id] = "buffer:" + b.tensor_id + "[0]";
        for (const auto& b : k.buffers) {
            for (int u = 0; u < b.pmu_alloc; ++u) {
                PlacedEntity e;
                e.id = "buffer:" + b.tensor_id + "[" + std::to_string(u) + "]";
                e.kind = SiteKind::PMU;
                if (u > 0) e.neighbors.push_back(buffer_entity[b.tensor_id]);
                entities.push_back(e);
            }
        }
        for (const auto& s : k.stages) {
            const auto& op = g.op(s.op_id);
            for (int u = 0; u < s.pcu_alloc; ++u) {
                PlacedEntity e;
                e.id = "stage:" + s.op_id + "[" + std::to_string(u) + "]";
                e.kind = SiteKind::PCU;
                for (const auto& in : op.inputs)
                    if (buffer_entity.count(in)) e.neighbors.push_back(buffer_entity[in]);
                for (const auto& out : op.outputs)
                    if (buffer_entity.count(out)) e.neighbors.push_back(buffer_entity[out]);
                entities.push_back(e);
            }
        }
    }
    // Symmetrize so BFS reaches buffers from stages and vice versa.
    std::map<std::string, std::set<std::string>> adj;
    for (const auto& e : entities)
        for (const auto& n : e.neighbors) {
            adj[e.id].insert(n);
            adj[n].insert(e.id);
        }
    for (auto& e : entities)
        e.neighbors.assign(adj[e.id].begin(), adj[e.id].end());
    return place_entities(entities, mesh, seed);
}

std::vector<Link> dimension_order_path(Coord from, Coord to) {
    std::vector<Link> links;
    Coord cur = from;
    while (cur.col != to.col) {
        Coord next{cur.row, cur.col + (to.col > cur.col ? 1 : -1)};
        links.push_back({cur, next});
        cur = next;
    }
    while (cur.row != to.row) {
        Coord next{cur.row + (to.row > cur.row ? 1 : -1), cur.col};
        links.push_back({cur, next});
        cur = next;
    }
    return links;
}

std::vector<FlowRoute> route(const std::vector<FlowSpec>& flows, const MeshTopology& mesh) {
    std::vector<FlowRoute> routes;
    for (const auto& f : flows) {
        FlowRoute r;
        r.id = f.id;
        r.source = f.source;
        r.destinations = f.destinations;
        r.demand = f.demand;
        r.throttle_weight = f.throttle_weight;
        for (const auto& d : f.destinations) {
            if (!mesh.in_bounds(f.source) || !mesh.in_bounds(d))
                throw std::invalid_argument("flow endpoint outside mesh");
            for (const auto& l : dimension_order_path(f.source, d)) r.links.insert(l);
        }
        routes.push_back(std::move(r));
    }
    return routes;
}

UtilizationReport link_utilization(const std::vector<FlowRoute>& routes,
                                   const MeshTopology& mesh) {
    std::map<Link, double> demand;
    for (const auto& r : routes)
        for (const auto& l : r.links) demand[l] += r.demand * r.throttle_weight;
    UtilizationReport rep;
    for (const auto& [link, d] : demand) {
        LinkLoad load{link, d, d / mesh.link_capacity};
        if (load.utilization > 1.0) rep.hotspots.push_back(link);
        rep.loads.push_back(load);
    }
    return rep;
}

std::string utilization_to_csv(const std::vector<FlowRoute>& routes,
                               const UtilizationReport& rep) {
    std::ostringstream out;
    out << "flow_id,link,demand,utilization\n";
    std::map<Link, double> util;
    for (const auto& l : rep.loads) util[l.link] = l.utilization;
    for (const auto& r : routes)
        for (const auto& l : r.links)
            out << r.id << ",(" << l.from.row << " " << l.from.col << ")->(" << l.to.row << " "
                << l.to.col << ")," << r.demand * r.throttle_weight << "," << util[l] << "\n";
    return out.str();
}

std::vector<std::int64_t> StreamReorderer::push(const Packet& p) {
    if (p.sequence_id < next_ || pending_.count(p.sequence_id))
        throw std::runtime_error("duplicate sequence id " + std::to_string(p.sequence_id));
    pending_[p.sequence_id] = p.payload;
    std::vector<std::int64_t> out;
    while (!pending_.empty() && pending_.begin()->first == next_) {
        out.push_back(pending_.begin()->second);
        pending_.erase(pending_.begin());
        next_++;
    }
    return out;
}

void StreamReorderer::finish() const {
    if (!pending_.empty())
        throw std::runtime_error("missing sequence id " + std::to_string(next_));
}

std::vector<std::int64_t> reorder_stream(const std::vector<Packet>& packets) {
    StreamReorderer r;
    std::vector<std::int64_t> out;
    for (const auto& p : packets) {
        auto released = r.push(p);
        out.insert(out.end(), released.begin(), released.end());
    }
    r.finish();
    return out;
}

BankAddress diagonal_bank_address(std::int64_t row, std::int64_t col, int banks,
                                  std::int64_t cols_total) {
    if (banks < 1) throw std::invalid_argument("banks must be >= 1");
    BankAddress a;
    a.bank = static_cast<int>((row + col) % banks);
    std::int64_t cols_per_bank = (cols_total + banks - 1) / banks;
    a.offset = row * cols_per_bank + col / banks;
    return a;
}

int predicate_partition(std::uint64_t address, const std::vector<fusion::AddressRange>& ranges) {
    int owner = -1;
    for (size_t i = 0; i < ranges.size(); ++i) {
        if (address >= ranges[i].lo && address < ranges[i].hi) {
            if (owner >= 0)
                throw std::runtime_error("address doubly covered at " + std::to_string(address));
            owner = static_cast<int>(i);
        }
    }
    if (owner < 0) throw std::runtime_error("address uncovered at " + std::to_string(address));
    return owner;
}

}  // namespace dfsim::fabric
