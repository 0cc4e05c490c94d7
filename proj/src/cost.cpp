#include "fmnet/cost.hpp"

#include <sstream>

namespace fmnet {

namespace {

// Canonical decomposition sizes: a composite batch_norm lowers to its ten
// training-form primitives (two reductions, squared difference, epsilon add,
// rsqrt, normalize sub/mul, scale, shift, plus the stat update); everything
// else is a single kernel.
int canonical_ops_of(OpKind k) { return k == OpKind::batch_norm ? 10 : 1; }

}  // namespace

CostReport analyze(const Graph& g) {
    CostReport rep;
    std::vector<long long> param_elems(g.params.size());
    for (size_t i = 0; i < g.params.size(); ++i) param_elems[i] = g.params[i].shape.elements();

    for (int ni = 0; ni < g.num_nodes(); ++ni) {
        const Node& n = g.nodes[ni];
        if (n.kind == OpKind::input) continue;
        NodeCost row;
        row.node = ni;
        row.scope = n.scope;
        row.kind = n.kind;
        row.out = n.out;
        row.block_id = n.block_id;
        row.phase = n.phase;
        row.canonical_ops = canonical_ops_of(n.kind);
        for (int p : n.params) row.params += param_elems[p];
        const long long out_elems = n.out.elements();
        const Shape& in0 = g.nodes[n.inputs[0]].out;
        switch (n.kind) {
            case OpKind::conv2d:
                row.flops = 2ll * n.out.d0 * n.out.d1 * n.ksize * n.ksize * in0.d2 * n.out.d2;
                if (n.params.size() > 1) row.elementwise_flops = out_elems;  // fused bias
                break;
            case OpKind::dwconv2d:
                row.flops = 2ll * n.out.d0 * n.out.d1 * n.ksize * n.ksize * n.out.d2;
                break;
            case OpKind::fc:
                row.flops = 2ll * in0.d0 * n.out.d0;
                if (n.params.size() > 1) row.elementwise_flops = out_elems;
                break;
            case OpKind::global_avg_pool:
                row.elementwise_flops = in0.elements();  // one per input element
                break;
            case OpKind::relu:
            case OpKind::bias_add:
            case OpKind::batch_norm:
            case OpKind::add:
            case OpKind::subsample:
                row.elementwise_flops = out_elems;
                break;
            case OpKind::reshape:
            case OpKind::concat:
            case OpKind::input:
                break;
        }
        // write once, read once by the consumer; parameters read once
        row.mac_bytes = 4ll * (2ll * out_elems + row.params);
        rep.rows.push_back(std::move(row));
    }
    for (const auto& r : rep.rows) {
        rep.flops += r.flops;
        rep.elementwise_flops += r.elementwise_flops;
        rep.params += r.params;
        rep.mac_bytes += r.mac_bytes;
        rep.num_ops += r.canonical_ops;
        ++rep.num_nodes;
    }
    return rep;
}

bool scope_is_fusion(const std::string& scope) {
    return scope.rfind("head/", 0) == 0 || scope.rfind("fusion/", 0) == 0;
}

long long count_params(const Graph& g, bool exclude_fusion) {
    CostReport rep = analyze(g);
    long long total = 0;
    for (const auto& r : rep.rows)
        if (!exclude_fusion || !scope_is_fusion(r.scope)) total += r.params;
    return total;
}

long long count_flops(const Graph& g) { return analyze(g).flops; }
long long estimate_mac(const Graph& g) { return analyze(g).mac_bytes; }
long long count_ops(const Graph& g) { return analyze(g).num_ops; }

PhaseBreakdown phase_breakdown(const Graph& g) {
    PhaseBreakdown out;
    const CostReport rep = analyze(g);
    for (const auto& r : rep.rows) {
        if (r.block_id < 0) continue;
        out.block_flops += r.flops;
        PhaseCost& pc = r.phase == Phase::upsampled ? out.upsampled : out.bottleneck;
        pc.flops += r.flops;
        pc.elementwise_flops += r.elementwise_flops;
        pc.mac_bytes += r.mac_bytes;
        if (r.kind == OpKind::conv2d && g.nodes[r.node].ksize == 1)
            out.conv1x1_flops += r.flops;
        if (r.phase == Phase::upsampled && r.kind != OpKind::conv2d)
            ++out.upsampled_non_conv_ops;
    }
    return out;
}

std::string CostReport::to_csv() const {
    std::ostringstream os;
    os << "# flops: multiply-accumulate ops, MAD=2; elementwise tracked separately\n";
    os << "# mac_bytes: 4*(2*output elements + parameter elements) per node\n";
    os << "# num_ops: canonical decomposition (batch_norm = 10 primitives)\n";
    os << "scope,kind,out_shape,params,flops,elementwise_flops,mac_bytes,canonical_ops\n";
    for (const auto& r : rows)
        os << r.scope << ',' << to_string(r.kind) << ',' << r.out.str() << ',' << r.params << ','
           << r.flops << ',' << r.elementwise_flops << ',' << r.mac_bytes << ','
           << r.canonical_ops << '\n';
    os << "total,,," << params << ',' << flops << ',' << elementwise_flops << ',' << mac_bytes
       << ',' << num_ops << '\n';
    return os.str();
}

namespace {

std::string human(long long v) {
    char buf[32];
    if (v >= 1000000000ll)
        std::snprintf(buf, sizeof buf, "%.2fG", v / 1e9);
    else if (v >= 1000000ll)
        std::snprintf(buf, sizeof buf, "%.1fM", v / 1e6);
    else if (v >= 1000ll)
        std::snprintf(buf, sizeof buf, "%.1fK", v / 1e3);
    else
        std::snprintf(buf, sizeof buf, "%lld", v);
    return buf;
}

}  // namespace

std::string cost_table(const std::vector<ModelCost>& rows) {
    std::ostringstream os;
    os << "FLOPS counted as multiply-accumulates at MAD=2 (conv/fc kernels);\n";
    os << "params include batch-norm statistics; backbone columns exclude fusion/head layers.\n\n";
    char line[160];
    std::snprintf(line, sizeof line, "%-24s %10s %14s %14s %12s %10s\n", "Architecture", "FLOPS",
                  "Params(bb)", "Params(all)", "MAC(bb)", "Ops(bb)");
    os << line;
    for (const auto& r : rows) {
        char mac[32];
        std::snprintf(mac, sizeof mac, "%.1f MB", r.mac_bytes_backbone / 1e6);
        std::snprintf(line, sizeof line, "%-24s %10s %14s %14s %12s %10lld\n", r.name.c_str(),
                      human(r.flops).c_str(), human(r.params_backbone).c_str(),
                      human(r.params_total).c_str(), mac, r.num_ops_backbone);
        os << line;
    }
    return os.str();
}

std::string cost_table_csv(const std::vector<ModelCost>& rows) {
    std::ostringstream os;
    os << "architecture,flops,params_backbone,params_total,mac_bytes_backbone,num_ops_backbone\n";
    for (const auto& r : rows)
        os << r.name << ',' << r.flops << ',' << r.params_backbone << ',' << r.params_total << ','
           << r.mac_bytes_backbone << ',' << r.num_ops_backbone << '\n';
    return os.str();
}

}  // namespace fmnet
