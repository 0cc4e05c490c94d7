#pragma once

#include <string>
#include <vector>

#include "fmnet/graph.hpp"

namespace fmnet {

// Static cost analysis over the graph IR.
//
// Conventions (also printed in report headers):
//  - flops: multiply-accumulate ops at MAD = 2, i.e. 2*H*W*K^2*Cin*Cout for
//    conv2d, 2*H*W*K^2*C for dwconv2d, 2*in*out for fc. Elementwise work is
//    tracked separately in elementwise_flops (1 per output element for
//    relu/bias/add/batch_norm, 1 per input element for pooling) because
//    architecture comparisons conventionally count multiply-accumulates.
//  - params: every registered variable, batch-norm statistics included.
//  - mac_bytes: each node output is written once and read once by its
//    consumer, parameters are read once: 4 * (2 * sum(output elements) +
//    sum(param elements)).
//  - num_ops: nodes after canonical decomposition; batch_norm expands to its
//    10 primitive training-form ops, everything else is a single kernel.

struct NodeCost {
    int node = -1;
    std::string scope;
    OpKind kind = OpKind::input;
    Shape out;
    int block_id = -1;
    Phase phase = Phase::none;
    long long params = 0;
    long long flops = 0;             // multiply-accumulate flops (MAD=2)
    long long elementwise_flops = 0;
    long long mac_bytes = 0;
    int canonical_ops = 1;
};

struct PhaseCost {
    long long flops = 0;
    long long elementwise_flops = 0;
    long long mac_bytes = 0;
};

struct CostReport {
    std::vector<NodeCost> rows;
    long long flops = 0;
    long long elementwise_flops = 0;
    long long params = 0;
    long long mac_bytes = 0;
    long long num_ops = 0;    // canonical decomposition
    long long num_nodes = 0;  // raw IR nodes (inputs excluded)

    std::string to_csv() const;
};

CostReport analyze(const Graph& g);

// Totals filtered to scopes outside fusion/head layers; mirrors the
// parameter-count convention used for architecture tables.
long long count_params(const Graph& g, bool exclude_fusion);
long long count_flops(const Graph& g);
long long estimate_mac(const Graph& g);
long long count_ops(const Graph& g);

bool scope_is_fusion(const std::string& scope);

// Upsampled vs bottlenecked aggregation for block subgraphs.
struct PhaseBreakdown {
    PhaseCost upsampled;
    PhaseCost bottleneck;
    long long conv1x1_flops = 0;  // 1x1 convolutions within the blocks
    long long block_flops = 0;    // all block MAD flops
    int upsampled_non_conv_ops = 0;
};

PhaseBreakdown phase_breakdown(const Graph& g);

// Side-by-side architecture comparison table (one row per model).
struct ModelCost {
    std::string name;
    long long flops = 0;
    long long params_backbone = 0;
    long long params_total = 0;
    long long mac_bytes_backbone = 0;
    long long num_ops_backbone = 0;
};

std::string cost_table(const std::vector<ModelCost>& rows);
std::string cost_table_csv(const std::vector<ModelCost>& rows);

}  // namespace fmnet
