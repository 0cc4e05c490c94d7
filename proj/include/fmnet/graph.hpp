#pragma once

#include <cassert>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "fmnet/util.hpp"

namespace fmnet {

// Rank-1 vectors and rank-3 (h, w, c) feature maps; channel fastest.
struct Shape {
    int rank = 0;
    int d0 = 0, d1 = 0, d2 = 0;

    static Shape vec(int n) { return {1, n, 0, 0}; }
    static Shape hwc(int h, int w, int c) { return {3, h, w, c}; }
    long long elements() const {
        if (rank == 0) return 0;
        return rank == 1 ? d0 : static_cast<long long>(d0) * d1 * d2;
    }
    int h() const { return d0; }
    int w() const { return d1; }
    int c() const { return rank == 1 ? d0 : d2; }
    bool operator==(const Shape&) const = default;
    std::string str() const;
};

template <typename T>
struct TensorT {
    Shape shape;
    std::vector<T> v;

    static TensorT zeros(Shape s) {
        TensorT t;
        t.shape = s;
        t.v.assign(static_cast<size_t>(s.elements()), T(0));
        return t;
    }
    T& at(int y, int x, int c) {
        return v[(static_cast<size_t>(y) * shape.d1 + x) * shape.d2 + c];
    }
    T at(int y, int x, int c) const {
        return v[(static_cast<size_t>(y) * shape.d1 + x) * shape.d2 + c];
    }
};

using Tensor = TensorT<float>;

enum class OpKind {
    input,
    conv2d,    // 'same' zero padding, stride in {1,2}, optional fused bias
    dwconv2d,  // 3x3, one filter per channel
    fc,        // optional fused bias
    relu,
    bias_add,  // standalone per-channel bias node
    batch_norm,
    add,
    global_avg_pool,
    reshape,
    concat,    // rank-1 concatenation
    subsample, // strided spatial subsampling, parameter-free skip path
};

const char* to_string(OpKind k);

enum class Phase { none, bottleneck, upsampled };

enum class ParamInit { zeros, ones, trunc_normal };

struct ParamSpec {
    std::string name;
    Shape shape;
    bool trainable = true;
    ParamInit init = ParamInit::trunc_normal;
    int fan_in = 0;  // for trunc_normal std = sqrt(2 / fan_in)
};

struct Node {
    OpKind kind = OpKind::input;
    std::vector<int> inputs;  // node indices
    std::vector<int> params;  // param indices (conv: weight[, bias]; bn: gamma,beta,mean,var)
    Shape out;
    int ksize = 1;
    int stride = 1;
    double bn_eps = 1e-3;
    std::string scope;
    int block_id = -1;
    Phase phase = Phase::none;
};

// Untyped IR: structure, shapes, and parameter specs. Numeric state lives in
// an Executor so the same graph serves training, inference with either float
// width, and static cost analysis.
class Graph {
public:
    std::vector<Node> nodes;
    std::vector<ParamSpec> params;
    std::vector<int> inputs;

    int add_input(Shape s, const std::string& scope = "input");
    int conv2d(int x, int out_c, int ksize, int stride, bool bias, const std::string& scope);
    int dwconv2d(int x, int stride, const std::string& scope);
    int fc(int x, int out_dim, bool bias, const std::string& scope);
    int relu(int x, const std::string& scope);
    int bias_add(int x, const std::string& scope);
    int batch_norm(int x, const std::string& scope, double eps = 1e-3);
    int add(int a, int b, const std::string& scope);
    int global_avg_pool(int x, const std::string& scope);
    int reshape(int x, Shape out, const std::string& scope);
    int concat(int a, int b, const std::string& scope);
    int subsample(int x, int stride, const std::string& scope);

    // Tag a contiguous node range with a block id and default phase.
    void tag_block(int first_node, int block_id);

    const Shape& shape(int node) const { return nodes[node].out; }
    int num_nodes() const { return static_cast<int>(nodes.size()); }

    // Structural hash over op kinds, shapes, strides, and parameter specs.
    uint64_t fingerprint() const;

private:
    int add_node(Node n);
    int add_param(ParamSpec p);
    static Shape conv_out_shape(Shape in, int out_c, int stride);
    void check_rank3(int x, const char* what) const;
};

// Runtime state for one forward/backward evaluation. Reused across calls to
// keep allocations off the training hot path.
template <typename T>
struct ExecState {
    std::vector<TensorT<T>> act;   // per-node outputs
    std::vector<TensorT<T>> grad;  // per-node output gradients
    std::vector<std::vector<T>> bn_mean, bn_var;  // train-mode batch statistics
    std::vector<T> scratch, scratch2;             // im2col work buffers
    bool forward_done = false;
};

// Holds parameter values and runs a Graph. Instantiated for float and, as a
// shadow mode for gradient oracles, for double.
template <typename T>
class Executor {
public:
    explicit Executor(const Graph& g) : graph_(&g) {}

    void init_params(uint64_t seed);

    const Graph& graph() const { return *graph_; }
    std::vector<TensorT<T>>& params() { return params_; }
    const std::vector<TensorT<T>>& params() const { return params_; }

    // Evaluates all nodes in topological (declaration) order. With
    // train_mode, batch_norm uses statistics of the current activation.
    void forward(ExecState<T>& st, const std::vector<TensorT<T>>& inputs,
                 bool train_mode = false) const;

    // Accumulates parameter gradients into param_grads (same layout as
    // params()); requires a completed forward pass in `st`.
    void backward(ExecState<T>& st, int output_node, const TensorT<T>& out_grad,
                  std::vector<TensorT<T>>& param_grads, bool train_mode = false) const;

    std::vector<TensorT<T>> zero_param_grads() const;

    // Momentum update of batch-norm running statistics from the batch
    // statistics of the last training-mode forward pass.
    void update_bn_stats(const ExecState<T>& st, double momentum = 0.99);

    template <typename U>
    Executor<U> cast() const {
        Executor<U> e(*graph_);
        e.params().clear();
        for (const auto& p : params_) {
            TensorT<U> q;
            q.shape = p.shape;
            q.v.assign(p.v.begin(), p.v.end());
            e.params().push_back(std::move(q));
        }
        return e;
    }

private:
    const Graph* graph_;
    std::vector<TensorT<T>> params_;
};

extern template class Executor<float>;
extern template class Executor<double>;

}  // namespace fmnet
