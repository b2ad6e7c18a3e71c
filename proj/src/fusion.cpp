#include "dfsim/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "json.hpp"

namespace dfsim::fusion {

using opgraph::OpKind;
using opgraph::TensorRole;
using opgraph::TensorSpec;

bool AccessPattern::transposed() const {
    for (size_t i = 0; i < perm.size(); ++i)
        if (perm[i] != static_cast<int>(i)) return true;
    return false;
}

AccessPattern compose(const AccessPattern& a, const AccessPattern& b) {
    if (a.perm.empty()) return b;
    if (b.perm.empty()) return a;
    if (a.perm.size() != b.perm.size())
        throw std::invalid_argument("access pattern rank mismatch");
    AccessPattern out;
    out.perm.resize(a.perm.size());
    for (size_t i = 0; i < a.perm.size(); ++i) out.perm[i] = a.perm[b.perm[i]];
    AccessPattern identity;
    bool is_id = true;
    for (size_t i = 0; i < out.perm.size(); ++i)
        if (out.perm[i] != static_cast<int>(i)) is_id = false;
    if (is_id) return identity;
    return out;
}

Partition FusionPlan::partition() const {
    Partition p;
    for (const auto& k : kernels) p.kernels.push_back(k.ops);
    return p;
}

std::vector<int> allocate_stage_compute(const std::vector<std::int64_t>& stage_flops,
                                        int pcu_budget) {
    const int n = static_cast<int>(stage_flops.size());
    if (n == 0) return {};
    if (pcu_budget < n)
        throw Infeasible("pcu budget " + std::to_string(pcu_budget) + " < stage count " +
                         std::to_string(n));
    double total = 0;
    for (auto f : stage_flops) total += static_cast<double>(f);
    std::vector<int> alloc(n, 1);
    if (total <= 0) return alloc;

    std::vector<double> quota(n);
    for (int i = 0; i < n; ++i) quota[i] = stage_flops[i] / total * pcu_budget;
    int assigned = 0;
    for (int i = 0; i < n; ++i) {
        alloc[i] = std::max(1, static_cast<int>(std::floor(quota[i])));
        assigned += alloc[i];
    }
    // Shrink (from the largest allocations, later stage loses first on ties)
    // if minimums pushed us over budget.
    while (assigned > pcu_budget) {
        int victim = -1;
        for (int i = 0; i < n; ++i)
            if (alloc[i] > 1 && (victim < 0 || alloc[i] >= alloc[victim])) victim = i;
        if (victim < 0) break;
        alloc[victim]--;
        assigned--;
    }
    // Largest-remainder distribution of the leftover; earlier stage wins ties.
    int leftover = pcu_budget - assigned;
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return quota[a] - alloc[a] > quota[b] - alloc[b];
    });
    for (int i = 0; leftover > 0; i = (i + 1) % n, --leftover) alloc[order[i]]++;
    return alloc;
}

BufferPlan partition_stage_buffer(const TensorSpec& t, double required_bw,
                                  const TileConfig& tile) {
    BufferPlan b;
    b.tensor_id = t.id;
    auto bytes = t.bytes();
    int by_cap = static_cast<int>((bytes + tile.pmu_capacity_bytes - 1) / tile.pmu_capacity_bytes);
    int by_bw = static_cast<int>(std::ceil(required_bw / tile.pmu_read_bw));
    b.pmu_alloc = std::max({by_cap, by_bw, 1});
    if (by_cap > 1 && by_bw > 1)
        b.reason = AllocReason::Both;
    else if (by_bw > by_cap)
        b.reason = AllocReason::Bandwidth;
    else
        b.reason = AllocReason::Capacity;
    // Range-partition the logical byte address space across the units.
    std::uint64_t chunk = (bytes + b.pmu_alloc - 1) / b.pmu_alloc;
    for (int u = 0; u < b.pmu_alloc; ++u) {
        std::uint64_t lo = u * chunk;
        std::uint64_t hi = std::min<std::uint64_t>(bytes, lo + chunk);
        b.interleave.push_back({lo, hi});
    }
    return b;
}

namespace {

std::int64_t tile_bytes(const TensorSpec& t, const TileConfig& tile) {
    auto per_tile = std::min(t.elements(), tile.stream_tile_elems);
    return per_tile * opgraph::dtype_bytes(t.dtype);
}

// Weight bytes that must persist in SRAM plus double-buffered streaming tiles
// for every other tensor touched by the kernel.
std::int64_t kernel_sram_bytes(const OpGraph& g, const std::set<std::string>& ops,
                               const TileConfig& tile) {
    std::set<std::string> touched;
    for (const auto& id : ops) {
        const auto& op = g.op(id);
        for (const auto& t : op.inputs) touched.insert(t);
        for (const auto& t : op.outputs) touched.insert(t);
    }
    std::int64_t total = 0;
    for (const auto& tid : touched) {
        const auto& t = g.tensor(tid);
        if (t.role == TensorRole::Weight)
            total += t.bytes();
        else
            total += 2 * tile_bytes(t, tile);
    }
    return total;
}

int kernel_stage_count(const OpGraph& g, const std::set<std::string>& ops) {
    int n = 0;
    for (const auto& id : ops)
        if (g.op(id).kind != OpKind::Transpose) n++;
    return n;
}

bool shares_tensor(const OpGraph& g, const std::set<std::string>& ops, const std::string& opid) {
    if (ops.empty()) return true;
    const auto& op = g.op(opid);
    for (const auto& tid : op.inputs) {
        const auto& t = g.tensor(tid);
        if (!t.producer.empty() && ops.count(t.producer)) return true;
        for (const auto& c : t.consumers)
            if (c != opid && ops.count(c)) return true;
    }
    for (const auto& tid : op.outputs)
        for (const auto& c : g.tensor(tid).consumers)
            if (ops.count(c)) return true;
    return false;
}

std::vector<std::set<std::string>> group_ops(const OpGraph& g, const TileConfig& tile,
                                             const FusionOptions& opts) {
    auto order = g.topo_order();
    std::vector<std::set<std::string>> groups;
    if (opts.policy == FusionPolicy::Unfused) {
        for (const auto& id : order) groups.push_back({id});
        return groups;
    }
    std::set<std::string> hint_tensors(opts.boundaries.begin(), opts.boundaries.end());
    std::set<std::string> cur;
    for (const auto& id : order) {
        // Single-operator feasibility is a hard requirement either way.
        std::set<std::string> alone{id};
        if (kernel_sram_bytes(g, alone, tile) > tile.sram_total_bytes)
            throw Infeasible("operator " + id + " alone exceeds tile SRAM capacity");
        if (kernel_stage_count(g, alone) > tile.pcu_count)
            throw Infeasible("operator " + id + " alone exceeds tile PCU count");

        bool start_new = false;
        if (!cur.empty()) {
            std::set<std::string> candidate = cur;
            candidate.insert(id);
            if (!shares_tensor(g, cur, id))
                start_new = true;
            else if (kernel_sram_bytes(g, candidate, tile) > tile.sram_total_bytes)
                start_new = true;
            else if (kernel_stage_count(g, candidate) > tile.pcu_count)
                start_new = true;
        }
        if (start_new) {
            groups.push_back(cur);
            cur.clear();
        }
        cur.insert(id);
        if (opts.policy == FusionPolicy::Hinted) {
            for (const auto& out : g.op(id).outputs)
                if (hint_tensors.count(out)) {
                    groups.push_back(cur);
                    cur.clear();
                    break;
                }
        }
    }
    if (!cur.empty()) groups.push_back(cur);
    return groups;
}

}  // namespace

FusedKernel fold_transpose(const OpGraph& g, FusedKernel kernel) {
    // alias: tensor id -> (base tensor id, pattern to read the base with)
    std::map<std::string, std::pair<std::string, AccessPattern>> alias;

    auto resolve = [&](const std::string& tid) {
        std::string base = tid;
        AccessPattern pat;
        while (alias.count(base)) {
            pat = compose(alias[base].second, pat);
            base = alias[base].first;
        }
        return std::make_pair(base, pat);
    };

    std::vector<StagePlan> stages;
    for (const auto& s : kernel.stages) {
        const auto& op = g.op(s.op_id);
        if (op.kind != OpKind::Transpose) {
            stages.push_back(s);
            continue;
        }
        AccessPattern perm;
        if (!op.perm.empty()) {
            perm.perm = op.perm;
        } else {
            auto rank = g.tensor(op.inputs[0]).shape.size();
            perm.perm.resize(rank);
            for (size_t i = 0; i < rank; ++i) perm.perm[i] = static_cast<int>(rank - 1 - i);
        }
        alias[op.outputs[0]] = {op.inputs[0], perm};
    }
    kernel.stages = std::move(stages);

    std::set<std::string> boundary_out(kernel.boundary_outputs.begin(),
                                       kernel.boundary_outputs.end());
    std::vector<BufferPlan> buffers;
    for (auto& b : kernel.buffers) {
        if (alias.count(b.tensor_id)) {
            if (boundary_out.count(b.tensor_id)) {
                // Transposed tensor leaves the kernel: keep the buffer, express
                // the permutation as the write access pattern.
                auto [base, pat] = resolve(b.tensor_id);
                b.write_pattern = pat;
                buffers.push_back(b);
            }
            // Internal aliased tensor: buffer disappears, consumers read the base.
            continue;
        }
        buffers.push_back(b);
    }
    // Consumers of aliased tensors read the base buffer with the composed pattern.
    for (auto& b : buffers) {
        for (const auto& [aliased, link] : alias) {
            auto [base, pat] = resolve(aliased);
            if (base == b.tensor_id) {
                bool still_read = false;
                for (const auto& c : g.tensor(aliased).consumers)
                    if (kernel.ops.count(c)) still_read = true;
                if (still_read) b.read_pattern = compose(b.read_pattern, pat);
            }
        }
    }
    kernel.buffers = std::move(buffers);
    return kernel;
}

FusionPlan plan_fusion(const OpGraph& g, const TileConfig& tile, const FusionOptions& opts) {
    auto vr = opgraph::validate_graph(g);
    if (!vr.ok()) throw std::invalid_argument("invalid graph: " + vr.errors.front());

    auto groups = group_ops(g, tile, opts);
    FusionPlan plan;
    int idx = 0;
    for (const auto& ops : groups) {
        FusedKernel k;
        k.id = "k" + std::to_string(idx++);
        k.ops = ops;

        // Boundary tensors.
        std::set<std::string> reads, writes, touched;
        for (const auto& opid : ops) {
            const auto& op = g.op(opid);
            k.flops += opgraph::op_flops(op, g);
            for (const auto& in : op.inputs) {
                touched.insert(in);
                const auto& t = g.tensor(in);
                if (t.producer.empty() || !ops.count(t.producer)) reads.insert(in);
            }
            for (const auto& out : op.outputs) {
                touched.insert(out);
                const auto& t = g.tensor(out);
                bool escapes = t.consumers.empty();
                for (const auto& c : t.consumers)
                    if (!ops.count(c)) escapes = true;
                if (escapes) writes.insert(out);
            }
        }
        k.boundary_inputs.assign(reads.begin(), reads.end());
        k.boundary_outputs.assign(writes.begin(), writes.end());
        for (const auto& t : reads) k.boundary_bytes += g.tensor(t).bytes();
        for (const auto& t : writes) k.boundary_bytes += g.tensor(t).bytes();

        // Streaming tiles through the pipeline: widest stage output decides.
        for (const auto& opid : ops) {
            const auto& op = g.op(opid);
            if (op.kind == OpKind::Transpose) continue;
            auto elems = g.tensor(op.outputs[0]).elements();
            k.tiles = std::max(k.tiles,
                               (elems + tile.stream_tile_elems - 1) / tile.stream_tile_elems);
        }
        if (k.tiles == 0) k.tiles = 1;

        // Stages in topological order, transposes included for now.
        std::vector<std::string> stage_ops;
        for (const auto& id : g.topo_order())
            if (ops.count(id)) stage_ops.push_back(id);
        std::vector<std::int64_t> flops_per_stage;
        for (const auto& id : stage_ops) {
            StagePlan s;
            s.op_id = id;
            s.parallelism = g.op(id).kind == OpKind::Gemm ? ParallelismKind::Tensor
                                                          : ParallelismKind::PipelineStage;
            k.stages.push_back(s);
        }

        // Buffers: one per touched tensor.
        for (const auto& tid : touched) {
            BufferPlan b;
            b.tensor_id = tid;
            k.buffers.push_back(b);
        }

        k = fold_transpose(g, k);

        // Compute allocation over the surviving stages.
        for (const auto& s : k.stages) flops_per_stage.push_back(opgraph::op_flops(g.op(s.op_id), g));
        auto alloc = allocate_stage_compute(flops_per_stage, tile.pcu_count);
        std::map<std::string, double> stage_rate;  // tiles/s
        for (size_t i = 0; i < k.stages.size(); ++i) {
            k.stages[i].pcu_alloc = alloc[i];
            double flops_per_tile =
                static_cast<double>(flops_per_stage[i]) / static_cast<double>(k.tiles);
            double rate = flops_per_tile > 0
                              ? alloc[i] * tile.pcu_peak_flops / flops_per_tile
                              : std::numeric_limits<double>::infinity();
            k.stages[i].stage_throughput = rate;
            stage_rate[k.stages[i].op_id] = rate;
        }

        // Size each buffer for the bandwidth its consumers demand.
        std::vector<BufferPlan> sized;
        for (const auto& b : k.buffers) {
            const auto& t = g.tensor(b.tensor_id);
            double required_bw = 0;
            for (const auto& c : t.consumers) {
                auto it = stage_rate.find(c);
                if (it != stage_rate.end() && std::isfinite(it->second))
                    required_bw = std::max(required_bw, it->second * tile_bytes(t, tile));
            }
            BufferPlan nb = partition_stage_buffer(t, required_bw, tile);
            nb.read_pattern = b.read_pattern;
            nb.write_pattern = b.write_pattern;
            nb.persistent = t.role == TensorRole::Weight;
            nb.sram_bytes = nb.persistent ? t.bytes() : 2 * tile_bytes(t, tile);
            sized.push_back(nb);
        }
        k.buffers = std::move(sized);
        k.sram_bytes = 0;
        for (const auto& b : k.buffers) k.sram_bytes += b.sram_bytes;

        // Cap stage throughput by the bandwidth of the buffers it touches.
        std::map<std::string, const BufferPlan*> buf_by_tensor;
        for (const auto& b : k.buffers) buf_by_tensor[b.tensor_id] = &b;
        for (auto& s : k.stages) {
            const auto& op = g.op(s.op_id);
            double cap = s.stage_throughput;
            auto buffer_rate = [&](const std::string& tid) {
                auto it = buf_by_tensor.find(tid);
                if (it == buf_by_tensor.end()) return std::numeric_limits<double>::infinity();
                const auto& t = g.tensor(tid);
                return it->second->pmu_alloc * tile.pmu_read_bw / tile_bytes(t, tile);
            };
            for (const auto& in : op.inputs) cap = std::min(cap, buffer_rate(in));
            for (const auto& out : op.outputs) cap = std::min(cap, buffer_rate(out));
            s.stage_throughput = cap;
        }

        plan.kernels.push_back(std::move(k));
    }
    return plan;
}

opgraph::ValidationReport validate_plan(const OpGraph& g, const TileConfig& tile,
                                        const FusionPlan& plan) {
    auto r = opgraph::validate_partition(g, plan.partition());
    for (const auto& k : plan.kernels) {
        if (k.sram_bytes > tile.sram_total_bytes)
            r.errors.push_back("kernel " + k.id + ": SRAM footprint exceeds tile capacity");
        int pcus = 0;
        for (const auto& s : k.stages) {
            pcus += s.pcu_alloc;
            if (g.op(s.op_id).kind == OpKind::Transpose)
                r.errors.push_back("kernel " + k.id + ": transpose survives as a stage");
        }
        if (pcus > tile.pcu_count)
            r.errors.push_back("kernel " + k.id + ": PCU allocation exceeds tile");
        // Stage order must be topological.
        std::map<std::string, size_t> pos;
        for (size_t i = 0; i < k.stages.size(); ++i) pos[k.stages[i].op_id] = i;
        for (const auto& s : k.stages) {
            const auto& op = g.op(s.op_id);
            for (const auto& in : op.inputs) {
                const auto& t = g.tensor(in);
                if (!t.producer.empty() && pos.count(t.producer) &&
                    pos[t.producer] > pos[s.op_id])
                    r.errors.push_back("kernel " + k.id + ": stage order not topological");
            }
        }
    }
    return r;
}

std::string plan_to_json(const FusionPlan& plan) {
    nlohmann::json j;
    j["schema"] = "fusionplan_v1";
    j["kernels"] = nlohmann::json::array();
    for (const auto& k : plan.kernels) {
        nlohmann::json jk;
        jk["id"] = k.id;
        jk["ops"] = k.ops;
        jk["flops"] = k.flops;
        jk["boundary_bytes"] = k.boundary_bytes;
        jk["tiles"] = k.tiles;
        jk["sram_bytes"] = k.sram_bytes;
        jk["boundary_inputs"] = k.boundary_inputs;
        jk["boundary_outputs"] = k.boundary_outputs;
        jk["stages"] = nlohmann::json::array();
        for (const auto& s : k.stages)
            jk["stages"].push_back({{"op", s.op_id},
                                    {"pcu_alloc", s.pcu_alloc},
                                    {"throughput_tiles_per_s", s.stage_throughput}});
        jk["buffers"] = nlohmann::json::array();
        for (const auto& b : k.buffers) {
            nlohmann::json jb{{"tensor", b.tensor_id},
                              {"pmu_alloc", b.pmu_alloc},
                              {"persistent", b.persistent},
                              {"sram_bytes", b.sram_bytes}};
            jb["reason"] = b.reason == AllocReason::Bandwidth  ? "bandwidth"
                           : b.reason == AllocReason::Capacity ? "capacity"
                                                               : "both";
            if (!b.read_pattern.perm.empty()) jb["read_perm"] = b.read_pattern.perm;
            if (!b.write_pattern.perm.empty()) jb["write_perm"] = b.write_pattern.perm;
            jk["buffers"].push_back(jb);
        }
        j["kernels"].push_back(jk);
    }
    return j.dump(2);
}

}  // namespace dfsim::fusion
