#include "fmnet/graph.hpp"

#include <cmath>

namespace fmnet {

std::string Shape::str() const {
    if (rank == 1) return std::to_string(d0);
    return std::to_string(d0) + "x" + std::to_string(d1) + "x" + std::to_string(d2);
}

const char* to_string(OpKind k) {
    switch (k) {
        case OpKind::input: return "input";
        case OpKind::conv2d: return "conv2d";
        case OpKind::dwconv2d: return "dwconv2d";
        case OpKind::fc: return "fc";
        case OpKind::relu: return "relu";
        case OpKind::bias_add: return "bias_add";
        case OpKind::batch_norm: return "batch_norm";
        case OpKind::add: return "add";
        case OpKind::global_avg_pool: return "global_avg_pool";
        case OpKind::reshape: return "reshape";
        case OpKind::concat: return "concat";
        case OpKind::subsample: return "subsample";
    }
    return "?";
}

int Graph::add_node(Node n) {
    nodes.push_back(std::move(n));
    return static_cast<int>(nodes.size()) - 1;
}

int Graph::add_param(ParamSpec p) {
    params.push_back(std::move(p));
    return static_cast<int>(params.size()) - 1;
}

void Graph::check_rank3(int x, const char* what) const {
    if (nodes[x].out.rank != 3)
        throw std::invalid_argument(std::string(what) + ": expected a rank-3 input at node " +
                                    std::to_string(x));
}

Shape Graph::conv_out_shape(Shape in, int out_c, int stride) {
    // 'same' padding with ceiling division on stride
    const int oh = (in.d0 + stride - 1) / stride;
    const int ow = (in.d1 + stride - 1) / stride;
    return Shape::hwc(oh, ow, out_c);
}

int Graph::add_input(Shape s, const std::string& scope) {
    Node n;
    n.kind = OpKind::input;
    n.out = s;
    n.scope = scope;
    const int id = add_node(std::move(n));
    inputs.push_back(id);
    return id;
}

int Graph::conv2d(int x, int out_c, int ksize, int stride, bool bias, const std::string& scope) {
    check_rank3(x, "conv2d");
    if (stride != 1 && stride != 2) throw std::invalid_argument("conv2d: stride must be 1 or 2");
    const Shape in = nodes[x].out;
    Node n;
    n.kind = OpKind::conv2d;
    n.inputs = {x};
    n.ksize = ksize;
    n.stride = stride;
    n.out = conv_out_shape(in, out_c, stride);
    n.scope = scope;
    n.params.push_back(add_param({scope + "/weight", Shape::hwc(ksize * ksize, in.d2, out_c), true,
                                  ParamInit::trunc_normal, ksize * ksize * in.d2}));
    if (bias)
        n.params.push_back(add_param({scope + "/bias", Shape::vec(out_c), true, ParamInit::zeros, 0}));
    return add_node(std::move(n));
}

int Graph::dwconv2d(int x, int stride, const std::string& scope) {
    check_rank3(x, "dwconv2d");
    if (stride != 1 && stride != 2) throw std::invalid_argument("dwconv2d: stride must be 1 or 2");
    const Shape in = nodes[x].out;
    Node n;
    n.kind = OpKind::dwconv2d;
    n.inputs = {x};
    n.ksize = 3;
    n.stride = stride;
    n.out = conv_out_shape(in, in.d2, stride);
    n.scope = scope;
    n.params.push_back(
        add_param({scope + "/weight", Shape::hwc(9, in.d2, 1), true, ParamInit::trunc_normal, 9}));
    return add_node(std::move(n));
}

int Graph::fc(int x, int out_dim, bool bias, const std::string& scope) {
    if (nodes[x].out.rank != 1) throw std::invalid_argument("fc: expected a rank-1 input");
    const int in_dim = nodes[x].out.d0;
    Node n;
    n.kind = OpKind::fc;
    n.inputs = {x};
    n.out = Shape::vec(out_dim);
    n.scope = scope;
    n.params.push_back(add_param({scope + "/weight", Shape::hwc(in_dim, out_dim, 1), true,
                                  ParamInit::trunc_normal, in_dim}));
    if (bias)
        n.params.push_back(
            add_param({scope + "/bias", Shape::vec(out_dim), true, ParamInit::zeros, 0}));
    return add_node(std::move(n));
}

int Graph::relu(int x, const std::string& scope) {
    Node n;
    n.kind = OpKind::relu;
    n.inputs = {x};
    n.out = nodes[x].out;
    n.scope = scope;
    return add_node(std::move(n));
}

int Graph::bias_add(int x, const std::string& scope) {
    Node n;
    n.kind = OpKind::bias_add;
    n.inputs = {x};
    n.out = nodes[x].out;
    n.scope = scope;
    const int c = n.out.c();
    n.params.push_back(add_param({scope + "/bias", Shape::vec(c), true, ParamInit::zeros, 0}));
    return add_node(std::move(n));
}

int Graph::batch_norm(int x, const std::string& scope, double eps) {
    check_rank3(x, "batch_norm");
    Node n;
    n.kind = OpKind::batch_norm;
    n.inputs = {x};
    n.out = nodes[x].out;
    n.scope = scope;
    n.bn_eps = eps;
    const int c = n.out.d2;
    n.params.push_back(add_param({scope + "/gamma", Shape::vec(c), true, ParamInit::ones, 0}));
    n.params.push_back(add_param({scope + "/beta", Shape::vec(c), true, ParamInit::zeros, 0}));
    n.params.push_back(add_param({scope + "/mean", Shape::vec(c), false, ParamInit::zeros, 0}));
    n.params.push_back(add_param({scope + "/var", Shape::vec(c), false, ParamInit::ones, 0}));
    return add_node(std::move(n));
}

int Graph::add(int a, int b, const std::string& scope) {
    if (!(nodes[a].out == nodes[b].out))
        throw std::invalid_argument("add: shape mismatch " + nodes[a].out.str() + " vs " +
                                    nodes[b].out.str() + " at " + scope);
    Node n;
    n.kind = OpKind::add;
    n.inputs = {a, b};
    n.out = nodes[a].out;
    n.scope = scope;
    return add_node(std::move(n));
}

int Graph::global_avg_pool(int x, const std::string& scope) {
    check_rank3(x, "global_avg_pool");
    Node n;
    n.kind = OpKind::global_avg_pool;
    n.inputs = {x};
    n.out = Shape::vec(nodes[x].out.d2);
    n.scope = scope;
    return add_node(std::move(n));
}

int Graph::reshape(int x, Shape out, const std::string& scope) {
    if (nodes[x].out.elements() != out.elements())
        throw std::invalid_argument("reshape: element count mismatch at " + scope);
    Node n;
    n.kind = OpKind::reshape;
    n.inputs = {x};
    n.out = out;
    n.scope = scope;
    return add_node(std::move(n));
}

int Graph::concat(int a, int b, const std::string& scope) {
    if (nodes[a].out.rank != 1 || nodes[b].out.rank != 1)
        throw std::invalid_argument("concat: rank-1 inputs required");
    Node n;
    n.kind = OpKind::concat;
    n.inputs = {a, b};
    n.out = Shape::vec(nodes[a].out.d0 + nodes[b].out.d0);
    n.scope = scope;
    return add_node(std::move(n));
}

int Graph::subsample(int x, int stride, const std::string& scope) {
    check_rank3(x, "subsample");
    const Shape in = nodes[x].out;
    Node n;
    n.kind = OpKind::subsample;
    n.inputs = {x};
    n.stride = stride;
    n.out = conv_out_shape(in, in.d2, stride);
    n.scope = scope;
    return add_node(std::move(n));
}

void Graph::tag_block(int first_node, int block_id) {
    for (int i = first_node; i < num_nodes(); ++i)
        if (nodes[i].block_id < 0) nodes[i].block_id = block_id;
}

uint64_t Graph::fingerprint() const {
    uint64_t h = 0xcbf29ce484222325ull;
    for (const auto& n : nodes) {
        h = fnv1a_mix(static_cast<uint64_t>(n.kind), h);
        h = fnv1a_mix(static_cast<uint64_t>(n.out.rank), h);
        h = fnv1a_mix(static_cast<uint64_t>(n.out.d0), h);
        h = fnv1a_mix(static_cast<uint64_t>(n.out.d1), h);
        h = fnv1a_mix(static_cast<uint64_t>(n.out.d2), h);
        h = fnv1a_mix(static_cast<uint64_t>(n.ksize), h);
        h = fnv1a_mix(static_cast<uint64_t>(n.stride), h);
        for (int i : n.inputs) h = fnv1a_mix(static_cast<uint64_t>(i), h);
    }
    for (const auto& p : params) {
        h = fnv1a(p.name, h);
        h = fnv1a_mix(static_cast<uint64_t>(p.shape.elements()), h);
        h = fnv1a_mix(p.trainable ? 1 : 0, h);
    }
    return h;
}

}  // namespace fmnet
