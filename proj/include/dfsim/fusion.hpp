#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dfsim/arch.hpp"
#include "dfsim/opgraph.hpp"

namespace dfsim::fusion {

using arch::TileConfig;
using opgraph::Infeasible;
using opgraph::OpGraph;
using opgraph::Partition;

enum class ParallelismKind { Data, Tensor, PipelineStage };

struct StagePlan {
    std::string op_id;
    int pcu_alloc = 1;
    ParallelismKind parallelism = ParallelismKind::PipelineStage;
    double stage_throughput = 0;  // tiles/s, derived
};

enum class AllocReason { Bandwidth, Capacity, Both };

// Affine access map abstracted to a dimension permutation (identity when empty).
struct AccessPattern {
    std::vector<int> perm;
    bool transposed() const;
};

AccessPattern compose(const AccessPattern& a, const AccessPattern& b);

struct AddressRange {
    std::uint64_t lo = 0;
    std::uint64_t hi = 0;  // half-open
};

struct BufferPlan {
    std::string tensor_id;
    int pmu_alloc = 1;
    AllocReason reason = AllocReason::Capacity;
    bool persistent = false;          // weights held in SRAM for the kernel
    std::int64_t sram_bytes = 0;      // footprint charged against the tile
    std::vector<AddressRange> interleave;  // one range per allocated unit
    AccessPattern read_pattern;
    AccessPattern write_pattern;
};

struct FusedKernel {
    std::string id;
    std::set<std::string> ops;
    std::vector<StagePlan> stages;     // topological, transposes folded away
    std::vector<BufferPlan> buffers;
    std::vector<std::string> boundary_inputs;
    std::vector<std::string> boundary_outputs;
    std::int64_t flops = 0;
    std::int64_t boundary_bytes = 0;
    std::int64_t tiles = 0;            // streaming tiles through the pipeline
    std::int64_t sram_bytes = 0;
};

struct FusionPlan {
    std::vector<FusedKernel> kernels;
    Partition partition() const;
};

enum class FusionPolicy { Maximal, Unfused, Hinted };

struct FusionOptions {
    FusionPolicy policy = FusionPolicy::Maximal;
    // Hinted: start a new kernel after the producer of each listed tensor.
    std::vector<std::string> boundaries;
};

FusionPlan plan_fusion(const OpGraph& g, const TileConfig& tile, const FusionOptions& opts);

// Proportional-to-FLOPs allocation with largest-remainder rounding; every
// stage gets at least one unit; earlier stage wins remainder ties.
std::vector<int> allocate_stage_compute(const std::vector<std::int64_t>& stage_flops,
                                        int pcu_budget);

BufferPlan partition_stage_buffer(const opgraph::TensorSpec& t, double required_bw,
                                  const TileConfig& tile);

// Removes Transpose stages, composing the permutation into the downstream
// buffer's read pattern (or the output write pattern at a kernel boundary).
FusedKernel fold_transpose(const OpGraph& g, FusedKernel kernel);

opgraph::ValidationReport validate_plan(const OpGraph& g, const TileConfig& tile,
                                        const FusionPlan& plan);

// JSON dump, schema fusionplan_v1.
std::string plan_to_json(const FusionPlan& plan);

}  // namespace dfsim::fusion
