#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace dfsim::opgraph {

// Thrown when a requested mapping/plan cannot satisfy a hard resource limit.
class Infeasible : public std::runtime_error {
public:
    explicit Infeasible(const std::string& what) : std::runtime_error(what) {}
};

enum class DType { BF16, FP32, INT32 };

inline int dtype_bytes(DType d) {
    switch (d) {
        case DType::BF16: return 2;
        case DType::FP32: return 4;
        case DType::INT32: return 4;
    }
    throw std::invalid_argument("unknown dtype");
}

DType dtype_from_string(const std::string& s);
std::string dtype_to_string(DType d);

enum class TensorRole { Activation, Weight, Metadata };

struct TensorSpec {
    std::string id;
    std::vector<std::int64_t> shape;
    DType dtype = DType::BF16;
    // Empty producer means the tensor is a graph-external input.
    std::string producer;
    std::set<std::string> consumers;
    TensorRole role = TensorRole::Activation;

    std::int64_t elements() const;
    std::int64_t bytes() const { return elements() * dtype_bytes(dtype); }
    bool is_external_input() const { return producer.empty(); }
};

enum class OpKind { Gemm, Elementwise, Transpose, Reduce, Softmax, Other };

OpKind op_kind_from_string(const std::string& s);
std::string op_kind_to_string(OpKind k);

struct Operator {
    std::string id;
    OpKind kind = OpKind::Elementwise;
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
    // Elementwise / Other cost per element. Ignored for other kinds.
    double flops_per_element = 1.0;
    // Transpose dimension permutation; empty means reverse of all dims.
    std::vector<int> perm;
};

struct ValidationReport {
    std::vector<std::string> errors;
    std::vector<std::string> warnings;
    bool ok() const { return errors.empty(); }
};

struct OpGraph {
    std::map<std::string, TensorSpec> tensors;
    std::map<std::string, Operator> operators;

    const TensorSpec& tensor(const std::string& id) const;
    const Operator& op(const std::string& id) const;

    // Topological order over operators. Throws if the graph is cyclic or has
    // dangling references; call validate_graph first for a soft report.
    std::vector<std::string> topo_order() const;

    std::vector<std::string> external_inputs() const;
    std::vector<std::string> external_outputs() const;
};

// A partition of the operator set into kernels.
struct Partition {
    std::vector<std::set<std::string>> kernels;
};

ValidationReport validate_graph(const OpGraph& g);

// Checks disjointness, coverage, connectedness and convexity.
ValidationReport validate_partition(const OpGraph& g, const Partition& p);

std::int64_t op_flops(const Operator& op, const OpGraph& g);
std::int64_t graph_flops(const OpGraph& g);

struct KernelIntensity {
    std::int64_t flops = 0;
    std::int64_t boundary_bytes = 0;
    double oi = 0.0;  // flops / boundary bytes
};

struct IntensityReport {
    std::vector<KernelIntensity> per_kernel;
    std::int64_t total_flops = 0;
    std::int64_t total_boundary_bytes = 0;
    double aggregate_oi = 0.0;
};

// Boundary convention: a tensor read by k kernels is counted once per reading
// kernel; a tensor produced by a kernel is written once if any consumer lives
// outside the kernel or it is a graph output.
IntensityReport operational_intensity(const OpGraph& g, const Partition& p);

enum class RooflineClass { MemoryBound, ComputeBound };

// Tie at oi == balance classifies ComputeBound.
RooflineClass classify_roofline(double oi, double machine_balance);

Partition unfused_partition(const OpGraph& g);
Partition single_kernel_partition(const OpGraph& g);

// JSON serialization, schema "opgraph_v1".
OpGraph graph_from_json(const std::string& json_text);
std::string graph_to_json(const OpGraph& g);
OpGraph load_graph_file(const std::string& path);

}  // namespace dfsim::opgraph
