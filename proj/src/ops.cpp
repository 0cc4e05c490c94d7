#include <algorithm>
#include <cmath>
#include <cstring>

#include "fmnet/graph.hpp"

namespace fmnet {

namespace {

// C[M,N] = A[M,K] * B[K,N], row-major, axpy inner loop.
template <typename T>
void gemm_nn(int M, int N, int K, const T* A, const T* B, T* C) {
    for (int m = 0; m < M; ++m) {
        T* c = C + static_cast<size_t>(m) * N;
        std::fill(c, c + N, T(0));
        const T* a = A + static_cast<size_t>(m) * K;
        for (int k = 0; k < K; ++k) {
            const T av = a[k];
            if (av == T(0)) continue;
            const T* b = B + static_cast<size_t>(k) * N;
            for (int n = 0; n < N; ++n) c[n] += av * b[n];
        }
    }
}

// C[K,N] += A[M,K]^T * B[M,N]
template <typename T>
void gemm_tn_acc(int M, int N, int K, const T* A, const T* B, T* C) {
    for (int m = 0; m < M; ++m) {
        const T* a = A + static_cast<size_t>(m) * K;
        const T* b = B + static_cast<size_t>(m) * N;
        for (int k = 0; k < K; ++k) {
            const T av = a[k];
            if (av == T(0)) continue;
            T* c = C + static_cast<size_t>(k) * N;
            for (int n = 0; n < N; ++n) c[n] += av * b[n];
        }
    }
}

// C[M,K] = A[M,N] * B[K,N]^T, dot-product inner loop.
template <typename T>
void gemm_nt(int M, int N, int K, const T* A, const T* B, T* C) {
    for (int m = 0; m < M; ++m) {
        const T* a = A + static_cast<size_t>(m) * N;
        T* c = C + static_cast<size_t>(m) * K;
        for (int k = 0; k < K; ++k) {
            const T* b = B + static_cast<size_t>(k) * N;
            T acc = T(0);
            for (int n = 0; n < N; ++n) acc += a[n] * b[n];
            c[k] = acc;
        }
    }
}

struct SamePad {
    int out_h, out_w, pad_top, pad_left;
};

SamePad same_pad(int h, int w, int k, int stride) {
    SamePad p;
    p.out_h = (h + stride - 1) / stride;
    p.out_w = (w + stride - 1) / stride;
    const int pad_h = std::max((p.out_h - 1) * stride + k - h, 0);
    const int pad_w = std::max((p.out_w - 1) * stride + k - w, 0);
    p.pad_top = pad_h / 2;
    p.pad_left = pad_w / 2;
    return p;
}

template <typename T>
void im2col(const TensorT<T>& in, int k, int stride, std::vector<T>& cols) {
    const int H = in.shape.d0, W = in.shape.d1, C = in.shape.d2;
    const SamePad p = same_pad(H, W, k, stride);
    const size_t K = static_cast<size_t>(k) * k * C;
    cols.assign(static_cast<size_t>(p.out_h) * p.out_w * K, T(0));
    for (int oy = 0; oy < p.out_h; ++oy) {
        for (int ox = 0; ox < p.out_w; ++ox) {
            T* col = cols.data() + (static_cast<size_t>(oy) * p.out_w + ox) * K;
            for (int ky = 0; ky < k; ++ky) {
                const int iy = oy * stride + ky - p.pad_top;
                if (iy < 0 || iy >= H) continue;
                for (int kx = 0; kx < k; ++kx) {
                    const int ix = ox * stride + kx - p.pad_left;
                    if (ix < 0 || ix >= W) continue;
                    std::memcpy(col + (static_cast<size_t>(ky) * k + kx) * C,
                                &in.v[(static_cast<size_t>(iy) * W + ix) * C],
                                sizeof(T) * C);
                }
            }
        }
    }
}

template <typename T>
void col2im_acc(const std::vector<T>& cols, int k, int stride, TensorT<T>& din) {
    const int H = din.shape.d0, W = din.shape.d1, C = din.shape.d2;
    const SamePad p = same_pad(H, W, k, stride);
    const size_t K = static_cast<size_t>(k) * k * C;
    for (int oy = 0; oy < p.out_h; ++oy) {
        for (int ox = 0; ox < p.out_w; ++ox) {
            const T* col = cols.data() + (static_cast<size_t>(oy) * p.out_w + ox) * K;
            for (int ky = 0; ky < k; ++ky) {
                const int iy = oy * stride + ky - p.pad_top;
                if (iy < 0 || iy >= H) continue;
                for (int kx = 0; kx < k; ++kx) {
                    const int ix = ox * stride + kx - p.pad_left;
                    if (ix < 0 || ix >= W) continue;
                    T* dst = &din.v[(static_cast<size_t>(iy) * W + ix) * C];
                    const T* src = col + (static_cast<size_t>(ky) * k + kx) * C;
                    for (int c = 0; c < C; ++c) dst[c] += src[c];
                }
            }
        }
    }
}

template <typename T>
void ensure_shape(TensorT<T>& t, Shape s) {
    t.shape = s;
    t.v.assign(static_cast<size_t>(s.elements()), T(0));
}

}  // namespace

template <typename T>
void Executor<T>::init_params(uint64_t seed) {
    params_.clear();
    params_.reserve(graph_->params.size());
    for (const auto& spec : graph_->params) {
        TensorT<T> t = TensorT<T>::zeros(spec.shape);
        switch (spec.init) {
            case ParamInit::zeros:
                break;
            case ParamInit::ones:
                std::fill(t.v.begin(), t.v.end(), T(1));
                break;
            case ParamInit::trunc_normal: {
                Rng rng = make_rng(seed, spec.name);
                std::normal_distribution<double> dist(0.0, 1.0);
                const double std = std::sqrt(2.0 / std::max(1, spec.fan_in));
                for (auto& v : t.v) {
                    double z = dist(rng);
                    while (std::abs(z) > 2.0) z = dist(rng);
                    v = static_cast<T>(z * std);
                }
                break;
            }
        }
        params_.push_back(std::move(t));
    }
}

template <typename T>
std::vector<TensorT<T>> Executor<T>::zero_param_grads() const {
    std::vector<TensorT<T>> g;
    g.reserve(params_.size());
    for (const auto& p : params_) g.push_back(TensorT<T>::zeros(p.shape));
    return g;
}

template <typename T>
void Executor<T>::forward(ExecState<T>& st, const std::vector<TensorT<T>>& inputs,
                          bool train_mode) const {
    const auto& nodes = graph_->nodes;
    st.act.resize(nodes.size());
    st.bn_mean.resize(nodes.size());
    st.bn_var.resize(nodes.size());
    if (inputs.size() != graph_->inputs.size())
        throw std::invalid_argument("forward: expected " + std::to_string(graph_->inputs.size()) +
                                    " inputs, got " + std::to_string(inputs.size()));
    for (size_t i = 0; i < inputs.size(); ++i) {
        const int id = graph_->inputs[i];
        if (!(inputs[i].shape == nodes[id].out))
            throw std::invalid_argument("forward: input " + std::to_string(i) + " shape " +
                                        inputs[i].shape.str() + " != declared " +
                                        nodes[id].out.str());
        st.act[id] = inputs[i];
    }

    for (size_t ni = 0; ni < nodes.size(); ++ni) {
        const Node& n = nodes[ni];
        if (n.kind == OpKind::input) continue;
        TensorT<T>& out = st.act[ni];
        ensure_shape(out, n.out);
        const TensorT<T>& x = st.act[n.inputs[0]];
        switch (n.kind) {
            case OpKind::conv2d: {
                const TensorT<T>& w = params_[n.params[0]];
                const int cout = n.out.d2;
                const int M = n.out.d0 * n.out.d1;
                const int K = n.ksize * n.ksize * x.shape.d2;
                const T* cols;
                if (n.ksize == 1 && n.stride == 1) {
                    cols = x.v.data();
                } else {
                    im2col(x, n.ksize, n.stride, st.scratch);
                    cols = st.scratch.data();
                }
                gemm_nn(M, cout, K, cols, w.v.data(), out.v.data());
                if (n.params.size() > 1) {
                    const TensorT<T>& b = params_[n.params[1]];
                    for (int m = 0; m < M; ++m) {
                        T* o = out.v.data() + static_cast<size_t>(m) * cout;
                        for (int c = 0; c < cout; ++c) o[c] += b.v[c];
                    }
                }
                break;
            }
            case OpKind::dwconv2d: {
                const TensorT<T>& w = params_[n.params[0]];
                const int H = x.shape.d0, W = x.shape.d1, C = x.shape.d2;
                const SamePad p = same_pad(H, W, 3, n.stride);
                for (int oy = 0; oy < p.out_h; ++oy)
                    for (int ox = 0; ox < p.out_w; ++ox) {
                        T* o = &out.v[(static_cast<size_t>(oy) * p.out_w + ox) * C];
                        for (int ky = 0; ky < 3; ++ky) {
                            const int iy = oy * n.stride + ky - p.pad_top;
                            if (iy < 0 || iy >= H) continue;
                            for (int kx = 0; kx < 3; ++kx) {
                                const int ix = ox * n.stride + kx - p.pad_left;
                                if (ix < 0 || ix >= W) continue;
                                const T* in = &x.v[(static_cast<size_t>(iy) * W + ix) * C];
                                const T* wk = &w.v[static_cast<size_t>(ky * 3 + kx) * C];
                                for (int c = 0; c < C; ++c) o[c] += in[c] * wk[c];
                            }
                        }
                    }
                break;
            }
            case OpKind::fc: {
                const TensorT<T>& w = params_[n.params[0]];
                const int in_dim = x.shape.d0, out_dim = n.out.d0;
                gemm_nn(1, out_dim, in_dim, x.v.data(), w.v.data(), out.v.data());
                if (n.params.size() > 1)
                    for (int o = 0; o < out_dim; ++o) out.v[o] += params_[n.params[1]].v[o];
                break;
            }
            case OpKind::relu:
                for (size_t i = 0; i < x.v.size(); ++i) out.v[i] = x.v[i] > T(0) ? x.v[i] : T(0);
                break;
            case OpKind::bias_add: {
                const TensorT<T>& b = params_[n.params[0]];
                const int C = n.out.c();
                const size_t spatial = x.v.size() / C;
                for (size_t s = 0; s < spatial; ++s) {
                    T* o = out.v.data() + s * C;
                    const T* in = x.v.data() + s * C;
                    for (int c = 0; c < C; ++c) o[c] = in[c] + b.v[c];
                }
                break;
            }
            case OpKind::batch_norm: {
                const TensorT<T>& gamma = params_[n.params[0]];
                const TensorT<T>& beta = params_[n.params[1]];
                const int C = n.out.d2;
                const size_t spatial = x.v.size() / C;
                std::vector<T>& mu = st.bn_mean[ni];
                std::vector<T>& var = st.bn_var[ni];
                if (train_mode) {
                    mu.assign(C, T(0));
                    var.assign(C, T(0));
                    for (size_t s = 0; s < spatial; ++s) {
                        const T* in = x.v.data() + s * C;
                        for (int c = 0; c < C; ++c) mu[c] += in[c];
                    }
                    for (int c = 0; c < C; ++c) mu[c] /= static_cast<T>(spatial);
                    for (size_t s = 0; s < spatial; ++s) {
                        const T* in = x.v.data() + s * C;
                        for (int c = 0; c < C; ++c) {
                            const T d = in[c] - mu[c];
                            var[c] += d * d;
                        }
                    }
                    for (int c = 0; c < C; ++c) var[c] /= static_cast<T>(spatial);
                } else {
                    mu.assign(params_[n.params[2]].v.begin(), params_[n.params[2]].v.end());
                    var.assign(params_[n.params[3]].v.begin(), params_[n.params[3]].v.end());
                }
                std::vector<T> scale(C), shift(C);
                for (int c = 0; c < C; ++c) {
                    scale[c] = gamma.v[c] / std::sqrt(var[c] + static_cast<T>(n.bn_eps));
                    shift[c] = beta.v[c] - scale[c] * mu[c];
                }
                for (size_t s = 0; s < spatial; ++s) {
                    T* o = out.v.data() + s * C;
                    const T* in = x.v.data() + s * C;
                    for (int c = 0; c < C; ++c) o[c] = scale[c] * in[c] + shift[c];
                }
                break;
            }
            case OpKind::add: {
                const TensorT<T>& y = st.act[n.inputs[1]];
                for (size_t i = 0; i < x.v.size(); ++i) out.v[i] = x.v[i] + y.v[i];
                break;
            }
            case OpKind::global_avg_pool: {
                const int C = x.shape.d2;
                const size_t spatial = x.v.size() / C;
                for (size_t s = 0; s < spatial; ++s) {
                    const T* in = x.v.data() + s * C;
                    for (int c = 0; c < C; ++c) out.v[c] += in[c];
                }
                for (int c = 0; c < C; ++c) out.v[c] /= static_cast<T>(spatial);
                break;
            }
            case OpKind::reshape:
                out.v = x.v;
                break;
            case OpKind::concat: {
                const TensorT<T>& y = st.act[n.inputs[1]];
                std::copy(x.v.begin(), x.v.end(), out.v.begin());
                std::copy(y.v.begin(), y.v.end(), out.v.begin() + x.v.size());
                break;
            }
            case OpKind::subsample: {
                const int W = x.shape.d1, C = x.shape.d2;
                for (int oy = 0; oy < n.out.d0; ++oy)
                    for (int ox = 0; ox < n.out.d1; ++ox)
                        std::memcpy(
                            &out.v[(static_cast<size_t>(oy) * n.out.d1 + ox) * C],
                            &x.v[(static_cast<size_t>(oy) * n.stride * W + ox * n.stride) * C],
                            sizeof(T) * C);
                break;
            }
            case OpKind::input:
                break;
        }
    }
    st.forward_done = true;
}

template <typename T>
void Executor<T>::backward(ExecState<T>& st, int output_node, const TensorT<T>& out_grad,
                           std::vector<TensorT<T>>& param_grads, bool train_mode) const {
    if (!st.forward_done) throw std::logic_error("backward called before forward");
    const auto& nodes = graph_->nodes;
    st.grad.resize(nodes.size());
    for (size_t i = 0; i < nodes.size(); ++i) ensure_shape(st.grad[i], nodes[i].out);
    if (!(out_grad.shape == nodes[output_node].out))
        throw std::invalid_argument("backward: output gradient shape mismatch");
    st.grad[output_node] = out_grad;

    for (int ni = static_cast<int>(nodes.size()) - 1; ni >= 0; --ni) {
        const Node& n = nodes[ni];
        if (n.kind == OpKind::input) continue;
        const TensorT<T>& gout = st.grad[ni];
        const TensorT<T>& x = st.act[n.inputs[0]];
        TensorT<T>& gx = st.grad[n.inputs[0]];
        switch (n.kind) {
            case OpKind::conv2d: {
                const TensorT<T>& w = params_[n.params[0]];
                TensorT<T>& gw = param_grads[n.params[0]];
                const int cout = n.out.d2;
                const int M = n.out.d0 * n.out.d1;
                const int K = n.ksize * n.ksize * x.shape.d2;
                if (n.params.size() > 1) {
                    TensorT<T>& gb = param_grads[n.params[1]];
                    for (int m = 0; m < M; ++m) {
                        const T* g = gout.v.data() + static_cast<size_t>(m) * cout;
                        for (int c = 0; c < cout; ++c) gb.v[c] += g[c];
                    }
                }
                if (n.ksize == 1 && n.stride == 1) {
                    gemm_tn_acc(M, cout, K, x.v.data(), gout.v.data(), gw.v.data());
                    st.scratch2.resize(static_cast<size_t>(M) * K);
                    gemm_nt(M, cout, K, gout.v.data(), w.v.data(), st.scratch2.data());
                    for (size_t i = 0; i < gx.v.size(); ++i) gx.v[i] += st.scratch2[i];
                } else {
                    im2col(x, n.ksize, n.stride, st.scratch);
                    gemm_tn_acc(M, cout, K, st.scratch.data(), gout.v.data(), gw.v.data());
                    st.scratch2.resize(static_cast<size_t>(M) * K);
                    gemm_nt(M, cout, K, gout.v.data(), w.v.data(), st.scratch2.data());
                    col2im_acc(st.scratch2, n.ksize, n.stride, gx);
                }
                break;
            }
            case OpKind::dwconv2d: {
                const TensorT<T>& w = params_[n.params[0]];
                TensorT<T>& gw = param_grads[n.params[0]];
                const int H = x.shape.d0, W = x.shape.d1, C = x.shape.d2;
                const SamePad p = same_pad(H, W, 3, n.stride);
                for (int oy = 0; oy < p.out_h; ++oy)
                    for (int ox = 0; ox < p.out_w; ++ox) {
                        const T* g = &gout.v[(static_cast<size_t>(oy) * p.out_w + ox) * C];
                        for (int ky = 0; ky < 3; ++ky) {
                            const int iy = oy * n.stride + ky - p.pad_top;
                            if (iy < 0 || iy >= H) continue;
                            for (int kx = 0; kx < 3; ++kx) {
                                const int ix = ox * n.stride + kx - p.pad_left;
                                if (ix < 0 || ix >= W) continue;
                                const size_t off = (static_cast<size_t>(iy) * W + ix) * C;
                                const size_t woff = static_cast<size_t>(ky * 3 + kx) * C;
                                for (int c = 0; c < C; ++c) {
                                    gw.v[woff + c] += x.v[off + c] * g[c];
                                    gx.v[off + c] += w.v[woff + c] * g[c];
                                }
                            }
                        }
                    }
                break;
            }
            case OpKind::fc: {
                const TensorT<T>& w = params_[n.params[0]];
                TensorT<T>& gw = param_grads[n.params[0]];
                const int in_dim = x.shape.d0, out_dim = n.out.d0;
                if (n.params.size() > 1) {
                    TensorT<T>& gb = param_grads[n.params[1]];
                    for (int o = 0; o < out_dim; ++o) gb.v[o] += gout.v[o];
                }
                gemm_tn_acc(1, out_dim, in_dim, x.v.data(), gout.v.data(), gw.v.data());
                for (int i = 0; i < in_dim; ++i) {
                    const T* wr = w.v.data() + static_cast<size_t>(i) * out_dim;
                    T acc = T(0);
                    for (int o = 0; o < out_dim; ++o) acc += wr[o] * gout.v[o];
                    gx.v[i] += acc;
                }
                break;
            }
            case OpKind::relu:
                for (size_t i = 0; i < x.v.size(); ++i)
                    if (x.v[i] > T(0)) gx.v[i] += gout.v[i];
                break;
            case OpKind::bias_add: {
                TensorT<T>& gb = param_grads[n.params[0]];
                const int C = n.out.c();
                const size_t spatial = x.v.size() / C;
                for (size_t s = 0; s < spatial; ++s) {
                    const T* g = gout.v.data() + s * C;
                    T* gxx = gx.v.data() + s * C;
                    for (int c = 0; c < C; ++c) {
                        gb.v[c] += g[c];
                        gxx[c] += g[c];
                    }
                }
                break;
            }
            case OpKind::batch_norm: {
                const TensorT<T>& gamma = params_[n.params[0]];
                TensorT<T>& ggamma = param_grads[n.params[0]];
                TensorT<T>& gbeta = param_grads[n.params[1]];
                const int C = n.out.d2;
                const size_t spatial = x.v.size() / C;
                const std::vector<T>& mu = st.bn_mean[ni];
                const std::vector<T>& var = st.bn_var[ni];
                std::vector<T> inv_std(C);
                for (int c = 0; c < C; ++c)
                    inv_std[c] = T(1) / std::sqrt(var[c] + static_cast<T>(n.bn_eps));
                std::vector<T> sum_g(C, T(0)), sum_gx(C, T(0));
                for (size_t s = 0; s < spatial; ++s) {
                    const T* g = gout.v.data() + s * C;
                    const T* in = x.v.data() + s * C;
                    for (int c = 0; c < C; ++c) {
                        const T xhat = (in[c] - mu[c]) * inv_std[c];
                        sum_g[c] += g[c];
                        sum_gx[c] += g[c] * xhat;
                    }
                }
                for (int c = 0; c < C; ++c) {
                    ggamma.v[c] += sum_gx[c];
                    gbeta.v[c] += sum_g[c];
                }
                const T N = static_cast<T>(spatial);
                for (size_t s = 0; s < spatial; ++s) {
                    const T* g = gout.v.data() + s * C;
                    const T* in = x.v.data() + s * C;
                    T* gxx = gx.v.data() + s * C;
                    for (int c = 0; c < C; ++c) {
                        const T xhat = (in[c] - mu[c]) * inv_std[c];
                        if (train_mode) {
                            gxx[c] += gamma.v[c] * inv_std[c] *
                                      (g[c] - sum_g[c] / N - xhat * sum_gx[c] / N);
                        } else {
                            gxx[c] += gamma.v[c] * inv_std[c] * g[c];
                        }
                    }
                }
                break;
            }
            case OpKind::add: {
                TensorT<T>& gy = st.grad[n.inputs[1]];
                for (size_t i = 0; i < gout.v.size(); ++i) {
                    gx.v[i] += gout.v[i];
                    gy.v[i] += gout.v[i];
                }
                break;
            }
            case OpKind::global_avg_pool: {
                const int C = x.shape.d2;
                const size_t spatial = x.v.size() / C;
                const T inv = T(1) / static_cast<T>(spatial);
                for (size_t s = 0; s < spatial; ++s) {
                    T* gxx = gx.v.data() + s * C;
                    for (int c = 0; c < C; ++c) gxx[c] += gout.v[c] * inv;
                }
                break;
            }
            case OpKind::reshape:
                for (size_t i = 0; i < gout.v.size(); ++i) gx.v[i] += gout.v[i];
                break;
            case OpKind::concat: {
                TensorT<T>& gy = st.grad[n.inputs[1]];
                const size_t na = gx.v.size();
                for (size_t i = 0; i < na; ++i) gx.v[i] += gout.v[i];
                for (size_t i = 0; i < gy.v.size(); ++i) gy.v[i] += gout.v[na + i];
                break;
            }
            case OpKind::subsample: {
                const int W = x.shape.d1, C = x.shape.d2;
                for (int oy = 0; oy < n.out.d0; ++oy)
                    for (int ox = 0; ox < n.out.d1; ++ox) {
                        const T* g = &gout.v[(static_cast<size_t>(oy) * n.out.d1 + ox) * C];
                        T* gxx =
                            &gx.v[(static_cast<size_t>(oy) * n.stride * W + ox * n.stride) * C];
                        for (int c = 0; c < C; ++c) gxx[c] += g[c];
                    }
                break;
            }
            case OpKind::input:
                break;
        }
    }
}

template <typename T>
void Executor<T>::update_bn_stats(const ExecState<T>& st, double momentum) {
    const auto& nodes = graph_->nodes;
    for (size_t ni = 0; ni < nodes.size(); ++ni) {
        const Node& n = nodes[ni];
        if (n.kind != OpKind::batch_norm || st.bn_mean[ni].empty()) continue;
        TensorT<T>& mean = params_[n.params[2]];
        TensorT<T>& var = params_[n.params[3]];
        const T m = static_cast<T>(momentum);
        for (size_t c = 0; c < mean.v.size(); ++c) {
            mean.v[c] = m * mean.v[c] + (T(1) - m) * st.bn_mean[ni][c];
            var.v[c] = m * var.v[c] + (T(1) - m) * st.bn_var[ni][c];
        }
    }
}

template class Executor<float>;
template class Executor<double>;

}  // namespace fmnet
