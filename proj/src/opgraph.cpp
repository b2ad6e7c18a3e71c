#include "dfsim/opgraph.hpp"

#include <algorithm>
#include <deque>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"

namespace dfsim::opgraph {

using nlohmann::json;

DType dtype_from_string(const std::string& s) {
    if (s == "bf16" || s == "BF16") return DType::BF16;
    if (s == "fp32" || s == "FP32") return DType::FP32;
    if (s == "int32" || s == "INT32") return DType::INT32;
    throw std::invalid_argument("unknown dtype: " + s);
}

std::string dtype_to_string(DType d) {
    switch (d) {
        case DType::BF16: return "bf16";
        case DType::FP32: return "fp32";
        case DType::INT32: return "int32";
    }
    return "?";
}

OpKind op_kind_from_string(const std::string& s) {
    if (s == "gemm") return OpKind::Gemm;
    if (s == "elementwise") return OpKind::Elementwise;
    if (s == "transpose") return OpKind::Transpose;
    if (s == "reduce") return OpKind::Reduce;
    if (s == "softmax") return OpKind::Softmax;
    if (s == "other") return OpKind::Other;
    throw std::invalid_argument("unknown op kind: " + s);
}

std::string op_kind_to_string(OpKind k) {
    switch (k) {
        case OpKind::Gemm: return "gemm";
        case OpKind::Elementwise: return "elementwise";
        case OpKind::Transpose: return "transpose";
        case OpKind::Reduce: return "reduce";
        case OpKind::Softmax: return "softmax";
        case OpKind::Other: return "other";
    }
    return "?";
}

std::int64_t TensorSpec::elements() const {
    std::int64_t n = 1;
    for (auto e : shape) n *= e;
    return n;
}

const TensorSpec& OpGraph::tensor(const std::string& id) const {
    auto it = tensors.find(id);
    if (it == tensors.end()) throw std::out_of_range("no tensor: " + id);
    return it->second;
}

const Operator& OpGraph::op(const std::string& id) const {
    auto it = operators.find(id);
    if (it == operators.end()) throw std::out_of_range("no operator: " + id);
    return it->second;
}

std::vector<std::string> OpGraph::topo_order() const {
    // Kahn's algorithm over op->op edges induced by tensors.
    std::map<std::string, int> indeg;
    std::map<std::string, std::vector<std::string>> succ;
    for (const auto& [id, op] : operators) indeg[id] = 0;
    for (const auto& [id, op] : operators) {
        for (const auto& out : op.outputs) {
            const auto& t = tensor(out);
            for (const auto& c : t.consumers) {
                succ[id].push_back(c);
                indeg[c]++;
            }
        }
    }
    std::deque<std::string> ready;
    for (const auto& [id, d] : indeg)
        if (d == 0) ready.push_back(id);
    std::vector<std::string> order;
    while (!ready.empty()) {
        // Deterministic: pick smallest id among ready.
        auto it = std::min_element(ready.begin(), ready.end());
        std::string id = *it;
        ready.erase(it);
        order.push_back(id);
        for (const auto& s : succ[id])
            if (--indeg[s] == 0) ready.push_back(s);
    }
    if (order.size() != operators.size()) throw std::runtime_error("graph is cyclic");
    return order;
}

std::vector<std::string> OpGraph::external_inputs() const {
    std::vector<std::string> out;
    for (const auto& [id, t] : tensors)
        if (t.is_external_input()) out.push_back(id);
    return out;
}

std::vector<std::string> OpGraph::external_outputs() const {
    std::vector<std::string> out;
    for (const auto& [id, t] : tensors)
        if (!t.is_external_input() && t.consumers.empty()) out.push_back(id);
    return out;
}

namespace {

bool gemm_shapes_conform(const OpGraph& g, const Operator& op) {
    const auto& a = g.tensor(op.inputs[0]).shape;
    const auto& b = g.tensor(op.inputs[1]).shape;
    const auto& c = g.tensor(op.outputs[0]).shape;
    if (a.size() != 2 || b.size() != 2 || c.size() != 2) return false;
    return a[1] == b[0] && c[0] == a[0] && c[1] == b[1];
}

}  // namespace

ValidationReport validate_graph(const OpGraph& g) {
    ValidationReport r;
    for (const auto& [id, t] : g.tensors) {
        if (t.shape.empty()) r.errors.push_back("tensor " + id + ": empty shape");
        for (auto e : t.shape)
            if (e < 1) r.errors.push_back("tensor " + id + ": non-positive extent");
        if (!t.producer.empty() && !g.operators.count(t.producer))
            r.errors.push_back("tensor " + id + ": unknown producer " + t.producer);
        for (const auto& c : t.consumers)
            if (!g.operators.count(c))
                r.errors.push_back("tensor " + id + ": unknown consumer " + c);
    }
    for (const auto& [id, op] : g.operators) {
        for (const auto& in : op.inputs)
            if (!g.tensors.count(in))
                r.errors.push_back("op " + id + ": unresolved input " + in);
        for (const auto& out : op.outputs) {
            auto it = g.tensors.find(out);
            if (it == g.tensors.end()) {
                r.errors.push_back("op " + id + ": unresolved output " + out);
            } else if (it->second.producer != id) {
                r.errors.push_back("op " + id + ": output " + out +
                                   " does not name it as producer");
            }
        }
        if (op.kind == OpKind::Gemm) {
            if (op.inputs.size() != 2 || op.outputs.size() != 1) {
                r.errors.push_back("op " + id + ": arity (gemm needs 2 inputs, 1 output)");
            } else {
                bool resolved = g.tensors.count(op.inputs[0]) && g.tensors.count(op.inputs[1]) &&
                                g.tensors.count(op.outputs[0]);
                if (resolved && !gemm_shapes_conform(g, op))
                    r.errors.push_back("op " + id + ": gemm shapes do not conform");
            }
        }
        if (op.kind == OpKind::Transpose && (op.inputs.size() != 1 || op.outputs.size() != 1))
            r.errors.push_back("op " + id + ": arity (transpose needs 1 input, 1 output)");
    }
    // Single-producer rule is structural in TensorSpec; cross-check consumer lists.
    for (const auto& [id, op] : g.operators) {
        for (const auto& in : op.inputs) {
            auto it = g.tensors.find(in);
            if (it != g.tensors.end() && !it->second.consumers.count(id))
                r.errors.push_back("tensor " + in + ": missing consumer entry for op " + id);
        }
    }
    if (r.ok()) {
        try {
            (void)g.topo_order();
        } catch (const std::exception& e) {
            r.errors.push_back(e.what());
        }
    }
    return r;
}

ValidationReport validate_partition(const OpGraph& g, const Partition& p) {
    ValidationReport r;
    std::map<std::string, int> owner;
    for (size_t k = 0; k < p.kernels.size(); ++k) {
        for (const auto& id : p.kernels[k]) {
            if (!g.operators.count(id)) {
                r.errors.push_back("kernel " + std::to_string(k) + ": unknown op " + id);
                continue;
            }
            if (owner.count(id))
                r.errors.push_back("op " + id + " assigned to multiple kernels");
            owner[id] = static_cast<int>(k);
        }
    }
    for (const auto& [id, op] : g.operators)
        if (!owner.count(id)) r.errors.push_back("op " + id + " not covered by any kernel");
    if (!r.ok()) return r;

    // Convexity: no path leaving a kernel and re-entering it.
    // DFS from each op through ops outside its own kernel.
    std::map<std::string, std::vector<std::string>> succ;
    for (const auto& [id, op] : g.operators)
        for (const auto& out : op.outputs)
            for (const auto& c : g.tensor(out).consumers) succ[id].push_back(c);

    for (size_t k = 0; k < p.kernels.size(); ++k) {
        // Reachable-outside set seeded by successors of kernel ops that are outside.
        std::set<std::string> visited;
        std::deque<std::string> work;
        for (const auto& id : p.kernels[k])
            for (const auto& s : succ[id])
                if (owner[s] != static_cast<int>(k)) work.push_back(s);
        bool violation = false;
        while (!work.empty() && !violation) {
            auto cur = work.front();
            work.pop_front();
            if (visited.count(cur)) continue;
            visited.insert(cur);
            if (owner[cur] == static_cast<int>(k)) {
                violation = true;
                break;
            }
            for (const auto& s : succ[cur]) work.push_back(s);
        }
        if (violation)
            r.errors.push_back("kernel " + std::to_string(k) + " is not convex");
    }

    // Connectedness via shared tensors (undirected).
    for (size_t k = 0; k < p.kernels.size(); ++k) {
        const auto& ops = p.kernels[k];
        if (ops.size() <= 1) continue;
        std::set<std::string> seen;
        std::deque<std::string> work{*ops.begin()};
        while (!work.empty()) {
            auto cur = work.front();
            work.pop_front();
            if (seen.count(cur)) continue;
            seen.insert(cur);
            const auto& op = g.op(cur);
            std::vector<std::string> touched = op.inputs;
            touched.insert(touched.end(), op.outputs.begin(), op.outputs.end());
            for (const auto& tid : touched) {
                const auto& t = g.tensor(tid);
                if (!t.producer.empty() && ops.count(t.producer)) work.push_back(t.producer);
                for (const auto& c : t.consumers)
                    if (ops.count(c)) work.push_back(c);
            }
        }
        if (seen.size() != ops.size())
            r.errors.push_back("kernel " + std::to_string(k) + " is not connected");
    }
    return r;
}

std::int64_t op_flops(const Operator& op, const OpGraph& g) {
    switch (op.kind) {
        case OpKind::Gemm: {
            const auto& a = g.tensor(op.inputs[0]).shape;
            const auto& b = g.tensor(op.inputs[1]).shape;
            return 2 * a[0] * a[1] * b[1];
        }
        case OpKind::Elementwise:
        case OpKind::Other: {
            auto n = g.tensor(op.outputs[0]).elements();
            return static_cast<std::int64_t>(n * op.flops_per_element);
        }
        case OpKind::Transpose:
            return 0;
        case OpKind::Reduce: {
            // (n - 1) adds per output element.
            auto in = g.tensor(op.inputs[0]).elements();
            auto out = g.tensor(op.outputs[0]).elements();
            auto per_output = in / std::max<std::int64_t>(out, 1);
            return (per_output - 1) * out;
        }
        case OpKind::Softmax: {
            // Fixed convention: 5 flops per element (max, subtract, exp, sum, divide).
            return 5 * g.tensor(op.outputs[0]).elements();
        }
    }
    throw std::invalid_argument("unknown op kind");
}

std::int64_t graph_flops(const OpGraph& g) {
    std::int64_t sum = 0;
    for (const auto& [id, op] : g.operators) sum += op_flops(op, g);
    return sum;
}

IntensityReport operational_intensity(const OpGraph& g, const Partition& p) {
    auto vr = validate_partition(g, p);
    if (!vr.ok()) throw std::invalid_argument("invalid partition: " + vr.errors.front());

    IntensityReport rep;
    for (const auto& kernel : p.kernels) {
        KernelIntensity ki;
        std::set<std::string> reads, writes;
        for (const auto& opid : kernel) {
            const auto& op = g.op(opid);
            ki.flops += op_flops(op, g);
            for (const auto& in : op.inputs) {
                const auto& t = g.tensor(in);
                if (t.producer.empty() || !kernel.count(t.producer)) reads.insert(in);
            }
            for (const auto& out : op.outputs) {
                const auto& t = g.tensor(out);
                bool escapes = t.consumers.empty();
                for (const auto& c : t.consumers)
                    if (!kernel.count(c)) escapes = true;
                if (escapes) writes.insert(out);
            }
        }
        for (const auto& id : reads) ki.boundary_bytes += g.tensor(id).bytes();
        for (const auto& id : writes) ki.boundary_bytes += g.tensor(id).bytes();
        ki.oi = ki.boundary_bytes ? static_cast<double>(ki.flops) / ki.boundary_bytes : 0.0;
        rep.total_flops += ki.flops;
        rep.total_boundary_bytes += ki.boundary_bytes;
        rep.per_kernel.push_back(ki);
    }
    rep.aggregate_oi = rep.total_boundary_bytes
                           ? static_cast<double>(rep.total_flops) / rep.total_boundary_bytes
                           : 0.0;
    return rep;
}

RooflineClass classify_roofline(double oi, double machine_balance) {
    if (machine_balance <= 0) throw std::invalid_argument("machine balance must be positive");
    return oi < machine_balance ? RooflineClass::MemoryBound : RooflineClass::ComputeBound;
}

Partition unfused_partition(const OpGraph& g) {
    Partition p;
    for (const auto& id : g.topo_order()) p.kernels.push_back({id});
    return p;
}

Partition single_kernel_partition(const OpGraph& g) {
    Partition p;
    std::set<std::string> all;
    for (const auto& [id, op] : g.operators) all.insert(id);
    if (!all.empty()) p.kernels.push_back(std::move(all));
    return p;
}

OpGraph graph_from_json(const std::string& json_text) {
    json j = json::parse(json_text);
    if (j.value("schema", "") != "opgraph_v1")
        throw std::invalid_argument("expected schema opgraph_v1");
    OpGraph g;
    for (const auto& jt : j.at("tensors")) {
        TensorSpec t;
        t.id = jt.at("id").get<std::string>();
        t.shape = jt.at("shape").get<std::vector<std::int64_t>>();
        t.dtype = dtype_from_string(jt.value("dtype", "bf16"));
        std::string role = jt.value("role", "activation");
        t.role = role == "weight"     ? TensorRole::Weight
                 : role == "metadata" ? TensorRole::Metadata
                                      : TensorRole::Activation;
        g.tensors[t.id] = t;
    }
    for (const auto& jo : j.at("operators")) {
        Operator op;
        op.id = jo.at("id").get<std::string>();
        op.kind = op_kind_from_string(jo.at("kind").get<std::string>());
        op.inputs = jo.at("inputs").get<std::vector<std::string>>();
        op.outputs = jo.at("outputs").get<std::vector<std::string>>();
        if (jo.contains("attrs")) {
            const auto& a = jo["attrs"];
            op.flops_per_element = a.value("flops_per_element", 1.0);
            if (a.contains("perm")) op.perm = a["perm"].get<std::vector<int>>();
        }
        g.operators[op.id] = op;
    }
    // Fill producer/consumer links.
    for (const auto& [id, op] : g.operators) {
        for (const auto& out : op.outputs) {
            auto it = g.tensors.find(out);
            if (it != g.tensors.end()) it->second.producer = id;
        }
        for (const auto& in : op.inputs) {
            auto it = g.tensors.find(in);
            if (it != g.tensors.end()) it->second.consumers.insert(id);
        }
    }
    return g;
}

std::string graph_to_json(const OpGraph& g) {
    json j;
    j["schema"] = "opgraph_v1";
    j["tensors"] = json::array();
    for (const auto& [id, t] : g.tensors) {
        json jt{{"id", id}, {"shape", t.shape}, {"dtype", dtype_to_string(t.dtype)}};
        if (t.role == TensorRole::Weight) jt["role"] = "weight";
        if (t.role == TensorRole::Metadata) jt["role"] = "metadata";
        j["tensors"].push_back(jt);
    }
    j["operators"] = json::array();
    for (const auto& [id, op] : g.operators) {
        json jo{{"id", id},
                {"kind", op_kind_to_string(op.kind)},
                {"inputs", op.inputs},
                {"outputs", op.outputs}};
        json attrs;
        if (op.kind == OpKind::Elementwise || op.kind == OpKind::Other)
            attrs["flops_per_element"] = op.flops_per_element;
        if (!op.perm.empty()) attrs["perm"] = op.perm;
        if (!attrs.empty()) jo["attrs"] = attrs;
        j["operators"].push_back(jo);
    }
    return j.dump(2);
}

OpGraph load_graph_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open graph file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return graph_from_json(ss.str());
}

}  // namespace dfsim::opgraph
