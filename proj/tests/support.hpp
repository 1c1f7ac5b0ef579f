#pragma once

// Test helpers and independent loop oracles. Oracles only read raw tensor
// data and never call library ops, so they can be compared against them.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "tcagcn/gradcheck.hpp"
#include "tcagcn/ops.hpp"
#include "tcagcn/skeleton_graph.hpp"
#include "tcagcn/tca.hpp"
#include "tcagcn/tf_temporal.hpp"

namespace tcagcn::testing {

using Vec = std::vector<double>;

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0,
                            bool requires_grad = false)
{
    return Tensor::uniform(std::move(shape), lo, hi, rng, requires_grad);
}

/// Owning copy; safe to iterate when the tensor is a temporary.
inline Vec values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

inline double max_abs_diff(std::span<const double> a, std::span<const double> b)
{
    if (a.size() != b.size()) return INFINITY;
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

inline double max_abs_diff(const Tensor& a, const Vec& b) { return max_abs_diff(a.data(), b); }
inline double max_abs_diff(const Tensor& a, const Tensor& b)
{
    if (a.shape() != b.shape()) return INFINITY;
    return max_abs_diff(a.data(), b.data());
}

/// Random tree over n joints: joint i > 0 hangs off a uniformly chosen earlier joint.
inline graph::SkeletonGraph random_tree(std::size_t n, std::mt19937_64& rng)
{
    std::vector<graph::Edge> edges;
    for (std::size_t i = 1; i < n; ++i) edges.emplace_back(rng() % i, i);
    return graph::SkeletonGraph::build(edges, n, rng() % n);
}

inline std::vector<std::size_t> random_permutation(std::size_t n, std::mt19937_64& rng)
{
    std::vector<std::size_t> p(n);
    std::iota(p.begin(), p.end(), 0);
    for (std::size_t i = n; i > 1; --i) std::swap(p[i - 1], p[rng() % i]);
    return p;
}

inline double act(double v, Activation a)
{
    switch (a) {
    case Activation::relu: return v > 0.0 ? v : 0.0;
    case Activation::tanh: return std::tanh(v);
    case Activation::sigmoid: return 1.0 / (1.0 + std::exp(-v));
    }
    return v;
}

inline double sigmoid_ref(double v) { return 1.0 / (1.0 + std::exp(-v)); }

// A_out[b,t,n,o] = sum_c alpha_t[b,t,o] * W0[o,c] * X[b,t,n,c]
inline Vec oracle_temporal_aggregate(const Tensor& x, const Tensor& w0, const Tensor& alpha_t)
{
    const std::size_t B = x.dim(0), T = x.dim(1), N = x.dim(2), C = x.dim(3), O = w0.dim(0);
    Vec out(B * T * N * O, 0.0);
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t t = 0; t < T; ++t) {
            for (std::size_t n = 0; n < N; ++n)
                for (std::size_t o = 0; o < O; ++o) {
                    double acc = 0.0;
                    for (std::size_t c = 0; c < C; ++c) {
                        const double w_t = alpha_t.at({b, t, o}) * w0.at({o, c});
                        acc += w_t * x.at({b, t, n, c});
                    }
                    out[((b * T + t) * N + n) * O + o] = acc;
                }
        }
    return out;
}

// F[b,t,n,c] = sum_m S[b,n,m,c] * A[b,t,m,c]
inline Vec oracle_channel_aggregate(const Tensor& a, const Tensor& s)
{
    const std::size_t B = a.dim(0), T = a.dim(1), N = a.dim(2), C = a.dim(3);
    Vec out(a.numel(), 0.0);
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t t = 0; t < T; ++t)
            for (std::size_t n = 0; n < N; ++n)
                for (std::size_t c = 0; c < C; ++c) {
                    double acc = 0.0;
                    for (std::size_t m = 0; m < N; ++m) acc += s.at({b, n, m, c}) * a.at({b, t, m, c});
                    out[((b * T + t) * N + n) * C + c] = acc;
                }
    return out;
}

// Q[b,n,m,:] = xi(act(phi(p[n]) - psi(p[m]))), p = temporal mean of X
inline Vec oracle_correlation(const Tensor& x, const tca::TcaParams& p)
{
    const std::size_t B = x.dim(0), T = x.dim(1), N = x.dim(2), C = x.dim(3);
    const std::size_t R = p.phi_w.dim(0), O = p.xi_w.dim(0);
    Vec out(B * N * N * O, 0.0);
    for (std::size_t b = 0; b < B; ++b) {
        Vec pooled(N * C, 0.0);
        for (std::size_t n = 0; n < N; ++n)
            for (std::size_t c = 0; c < C; ++c) {
                double s = 0.0;
                for (std::size_t t = 0; t < T; ++t) s += x.at({b, t, n, c});
                pooled[n * C + c] = s / static_cast<double>(T);
            }
        for (std::size_t n = 0; n < N; ++n)
            for (std::size_t m = 0; m < N; ++m) {
                Vec d(R);
                for (std::size_t r = 0; r < R; ++r) {
                    double u = p.phi_b.at({r}), v = p.psi_b.at({r});
                    for (std::size_t c = 0; c < C; ++c) {
                        u += p.phi_w.at({r, c}) * pooled[n * C + c];
                        v += p.psi_w.at({r, c}) * pooled[m * C + c];
                    }
                    d[r] = act(u - v, p.config.corr_activation);
                }
                for (std::size_t o = 0; o < O; ++o) {
                    double acc = 0.0;
                    for (std::size_t r = 0; r < R; ++r) acc += p.xi_w.at({o, r}) * d[r];
                    out[((b * N + n) * N + m) * O + o] = acc;
                }
            }
    }
    return out;
}

// y[t,o] = bias[o] + sum_k sum_c w[k,c,o] * x[t + (k - K/2) * dilation, c], zero outside, on (T, C) rows.
inline Vec oracle_conv_rows(const Vec& x, std::size_t T, std::size_t C, const Tensor& w, const Tensor& bias,
                            std::size_t stride = 1, std::size_t dilation = 1)
{
    const std::size_t K = w.dim(0), O = w.dim(2);
    const std::size_t Tout = (T + stride - 1) / stride;
    const long half = static_cast<long>(K / 2);
    Vec out(Tout * O, 0.0);
    for (std::size_t to = 0; to < Tout; ++to)
        for (std::size_t o = 0; o < O; ++o) {
            double acc = bias.defined() ? bias.at({o}) : 0.0;
            for (std::size_t k = 0; k < K; ++k) {
                const long t = static_cast<long>(to * stride) + (static_cast<long>(k) - half) * static_cast<long>(dilation);
                if (t < 0 || t >= static_cast<long>(T)) continue;
                for (std::size_t c = 0; c < C; ++c) acc += w.at({k, c, o}) * x[static_cast<std::size_t>(t) * C + c];
            }
            out[to * O + o] = acc;
        }
    return out;
}

// alpha_t[b,t,:] = 1 + conv3(act(conv3(mean over joints of X)))
inline Vec oracle_calibration(const Tensor& x, const tca::TcaParams& p)
{
    const std::size_t B = x.dim(0), T = x.dim(1), N = x.dim(2), C = x.dim(3);
    const std::size_t H = p.calib1_w.dim(2), O = p.calib2_w.dim(2);
    Vec out;
    for (std::size_t b = 0; b < B; ++b) {
        Vec frames(T * C, 0.0);
        for (std::size_t t = 0; t < T; ++t)
            for (std::size_t c = 0; c < C; ++c) {
                double s = 0.0;
                for (std::size_t n = 0; n < N; ++n) s += x.at({b, t, n, c});
                frames[t * C + c] = s / static_cast<double>(N);
            }
        Vec h = oracle_conv_rows(frames, T, C, p.calib1_w, p.calib1_b);
        for (auto& v : h) v = act(v, p.config.calib_activation);
        Vec a = oracle_conv_rows(h, T, H, p.calib2_w, p.calib2_b);
        for (auto& v : a) out.push_back(1.0 + v);
    }
    (void)O;
    return out;
}

// Direct-sum temporal convolution over a (B, T, N, C) tensor.
inline Vec oracle_conv_temporal(const Tensor& x, const Tensor& w, const Tensor& bias, std::size_t stride,
                                std::size_t dilation)
{
    const std::size_t B = x.dim(0), T = x.dim(1), N = x.dim(2), C = x.dim(3), O = w.dim(2);
    const std::size_t Tout = (T + stride - 1) / stride;
    Vec out(B * Tout * N * O);
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t n = 0; n < N; ++n) {
            Vec rows(T * C);
            for (std::size_t t = 0; t < T; ++t)
                for (std::size_t c = 0; c < C; ++c) rows[t * C + c] = x.at({b, t, n, c});
            Vec y = oracle_conv_rows(rows, T, C, w, bias, stride, dilation);
            for (std::size_t t = 0; t < Tout; ++t)
                for (std::size_t o = 0; o < O; ++o) out[((b * Tout + t) * N + n) * O + o] = y[t * O + o];
        }
    return out;
}

// Train-mode batch norm of a channel-last array with C channels.
inline Vec oracle_batch_norm_train(const Vec& x, std::size_t C, const BatchNorm& bn)
{
    const std::size_t M = x.size() / C;
    Vec out(x.size());
    for (std::size_t c = 0; c < C; ++c) {
        double mean = 0.0;
        for (std::size_t i = 0; i < M; ++i) mean += x[i * C + c];
        mean /= static_cast<double>(M);
        double var = 0.0;
        for (std::size_t i = 0; i < M; ++i) var += (x[i * C + c] - mean) * (x[i * C + c] - mean);
        var /= static_cast<double>(M);
        for (std::size_t i = 0; i < M; ++i) {
            out[i * C + c] = bn.gamma.at({c}) * (x[i * C + c] - mean) / std::sqrt(var + bn.eps) + bn.beta.at({c});
        }
    }
    return out;
}

// Windowed temporal max, same padding convention as the convolution.
inline Vec oracle_max_pool(const Vec& x, std::size_t B, std::size_t T, std::size_t N, std::size_t C,
                           std::size_t window, std::size_t stride)
{
    const std::size_t Tout = (T + stride - 1) / stride;
    const long half = static_cast<long>(window / 2);
    Vec out(B * Tout * N * C);
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t to = 0; to < Tout; ++to)
            for (std::size_t n = 0; n < N; ++n)
                for (std::size_t c = 0; c < C; ++c) {
                    double best = -INFINITY;
                    for (long k = -half; k <= half; ++k) {
                        const long t = static_cast<long>(to * stride) + k;
                        if (t < 0 || t >= static_cast<long>(T)) continue;
                        best = std::max(best, x[((b * T + static_cast<std::size_t>(t)) * N + n) * C + c]);
                    }
                    out[((b * Tout + to) * N + n) * C + c] = best;
                }
    return out;
}

// One MSCONV branch in train mode, composed from the oracles above.
inline Vec oracle_msconv_branch(const Tensor& x, const tf::MsBranch& br, std::size_t stride)
{
    const std::size_t B = x.dim(0), T = x.dim(1), N = x.dim(2);
    const std::size_t Cb = br.reduce_w.dim(2);
    const std::size_t Tout = (T + stride - 1) / stride;
    if (br.kind == tf::BranchKind::pointwise) {
        return oracle_batch_norm_train(oracle_conv_temporal(x, br.reduce_w, {}, stride, 1), Cb, br.reduce_bn);
    }
    Vec r = oracle_batch_norm_train(oracle_conv_temporal(x, br.reduce_w, {}, 1, 1), Cb, br.reduce_bn);
    for (auto& v : r) v = v > 0.0 ? v : 0.0;
    Vec t;
    if (br.kind == tf::BranchKind::max_pool) {
        t = oracle_max_pool(r, B, T, N, Cb, tf::MsBranch::kPoolWindow, stride);
    } else {
        const Tensor rt({B, T, N, Cb}, r);
        t = oracle_conv_temporal(rt, br.temporal_w, {}, stride, br.kind == tf::BranchKind::conv_d2 ? 2 : 1);
    }
    (void)Tout;
    return oracle_batch_norm_train(t, Cb, br.post_bn);
}

// Z * sigmoid(l(Z) + g(mean over (T, N) of Z)), bottlenecks linear-relu-linear.
inline Vec oracle_aff(const Tensor& z, const tf::TfParams& p)
{
    const std::size_t B = z.dim(0), T = z.dim(1), N = z.dim(2), C = z.dim(3);
    const std::size_t H = p.local_w1.dim(0);
    auto bottleneck = [&](const Vec& v, const Tensor& w1, const Tensor& b1, const Tensor& w2, const Tensor& b2) {
        Vec h(H), out(C);
        for (std::size_t j = 0; j < H; ++j) {
            double acc = b1.at({j});
            for (std::size_t c = 0; c < C; ++c) acc += w1.at({j, c}) * v[c];
            h[j] = acc > 0.0 ? acc : 0.0;
        }
        for (std::size_t c = 0; c < C; ++c) {
            double acc = b2.at({c});
            for (std::size_t j = 0; j < H; ++j) acc += w2.at({c, j}) * h[j];
            out[c] = acc;
        }
        return out;
    };
    Vec out(z.numel());
    for (std::size_t b = 0; b < B; ++b) {
        Vec ctx(C, 0.0);
        for (std::size_t t = 0; t < T; ++t)
            for (std::size_t n = 0; n < N; ++n)
                for (std::size_t c = 0; c < C; ++c) ctx[c] += z.at({b, t, n, c});
        for (auto& v : ctx) v /= static_cast<double>(T * N);
        const Vec g = bottleneck(ctx, p.global_w1, p.global_b1, p.global_w2, p.global_b2);
        for (std::size_t t = 0; t < T; ++t)
            for (std::size_t n = 0; n < N; ++n) {
                Vec v(C);
                for (std::size_t c = 0; c < C; ++c) v[c] = z.at({b, t, n, c});
                const Vec l = bottleneck(v, p.local_w1, p.local_b1, p.local_w2, p.local_b2);
                for (std::size_t c = 0; c < C; ++c) {
                    out[((b * T + t) * N + n) * C + c] = v[c] * sigmoid_ref(l[c] + g[c]);
                }
            }
    }
    return out;
}

/// Randomizes every entry of `t` in place (used to move parameters off their init).
inline void randomize(const Tensor& t, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0)
{
    std::uniform_real_distribution<double> d(lo, hi);
    for (auto& v : t.mutable_data()) v = d(rng);
}

inline void randomize_bn(BatchNorm& bn, std::mt19937_64& rng)
{
    randomize(bn.gamma, rng, 0.5, 1.5);
    randomize(bn.beta, rng, -0.5, 0.5);
}

}  // namespace tcagcn::testing
