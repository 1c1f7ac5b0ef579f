#include "tcagcn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace tcagcn {

namespace {

using detail::NodePtr;

// Offset into an input of shape `in` for every element of `out` (row-major),
// with broadcast axes contributing stride 0. `in` is right-aligned to `out`.
std::vector<std::size_t> broadcast_offsets(const Shape& in, const Shape& out)
{
    const std::size_t rank = out.size();
    std::vector<std::size_t> stride(rank, 0);
    std::size_t s = 1;
    for (std::size_t k = 0; k < in.size(); ++k) {
        std::size_t ax_in = in.size() - 1 - k;
        std::size_t ax_out = rank - 1 - k;
        stride[ax_out] = in[ax_in] == 1 && out[ax_out] != 1 ? 0 : s;
        s *= in[ax_in];
    }
    const std::size_t n = shape_numel(out);
    std::vector<std::size_t> offsets(n);
    if (rank == 0) return offsets;
    // Fill innermost runs directly; carry through the outer axes per run.
    const std::size_t inner = out[rank - 1], inner_stride = stride[rank - 1];
    std::vector<std::size_t> index(rank, 0);
    std::size_t off = 0;
    for (std::size_t base = 0; base < n; base += inner) {
        for (std::size_t j = 0; j < inner; ++j) offsets[base + j] = off + j * inner_stride;
        for (std::size_t ax = rank - 1; ax-- > 0;) {
            ++index[ax];
            off += stride[ax];
            if (index[ax] < out[ax]) break;
            off -= stride[ax] * out[ax];
            index[ax] = 0;
        }
    }
    return offsets;
}

double sigmoid_scalar(double x)
{
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    double e = std::exp(x);
    return e / (1.0 + e);
}

Tensor unary(ElementwiseOp op, const Tensor& x)
{
    auto in = x.data();
    std::vector<double> out(in.size());
    switch (op) {
    case ElementwiseOp::relu:
        for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] > 0.0 ? in[i] : 0.0;
        break;
    case ElementwiseOp::tanh:
        for (std::size_t i = 0; i < in.size(); ++i) out[i] = std::tanh(in[i]);
        break;
    case ElementwiseOp::sigmoid:
        for (std::size_t i = 0; i < in.size(); ++i) out[i] = sigmoid_scalar(in[i]);
        break;
    default:
        throw ValidationError("unary elementwise called with a binary op");
    }
    Tensor y(x.shape(), std::move(out));
    if (auto* tape = detail::recording_tape({&x})) {
        tape->record({x.node()}, y, [op, xn = x.node(), yn = y.node()] {
            const auto& g = yn->grad;
            auto& gx = xn->ensure_grad();
            const auto& xv = xn->data;
            const auto& yv = yn->data;
            for (std::size_t i = 0; i < g.size(); ++i) {
                switch (op) {
                case ElementwiseOp::relu: gx[i] += xv[i] > 0.0 ? g[i] : 0.0; break;
                case ElementwiseOp::tanh: gx[i] += g[i] * (1.0 - yv[i] * yv[i]); break;
                default: gx[i] += g[i] * yv[i] * (1.0 - yv[i]); break;
                }
            }
        });
    }
    return y;
}

Tensor same_shape_binary(ElementwiseOp op, const Tensor& a, const Tensor& b)
{
    auto av = a.data();
    auto bv = b.data();
    std::vector<double> out(av.size());
    switch (op) {
    case ElementwiseOp::add:
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
        break;
    case ElementwiseOp::sub:
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
        break;
    case ElementwiseOp::mul:
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
        break;
    default:
        throw ValidationError("binary elementwise called with a unary op");
    }
    Tensor y(a.shape(), std::move(out));
    if (auto* tape = detail::recording_tape({&a, &b})) {
        tape->record({a.node(), b.node()}, y, [op, an = a.node(), bn = b.node(), yn = y.node()] {
            const auto& g = yn->grad;
            const std::size_t n = g.size();
            if (an->requires_grad) {
                auto& ga = an->ensure_grad();
                if (op == ElementwiseOp::mul) {
                    for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * bn->data[i];
                } else {
                    for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
                }
            }
            if (bn->requires_grad) {
                auto& gb = bn->ensure_grad();
                switch (op) {
                case ElementwiseOp::add: for (std::size_t i = 0; i < n; ++i) gb[i] += g[i]; break;
                case ElementwiseOp::sub: for (std::size_t i = 0; i < n; ++i) gb[i] -= g[i]; break;
                default: for (std::size_t i = 0; i < n; ++i) gb[i] += g[i] * an->data[i]; break;
                }
            }
        });
    }
    return y;
}

Tensor binary(ElementwiseOp op, const Tensor& a, const Tensor& b)
{
    if (!b.defined()) throw ValidationError("binary elementwise op needs two operands");
    if (a.shape() == b.shape()) return same_shape_binary(op, a, b);
    Shape out_shape = broadcast_shape(a.shape(), b.shape());
    auto ao = broadcast_offsets(a.shape(), out_shape);
    auto bo = broadcast_offsets(b.shape(), out_shape);
    auto av = a.data();
    auto bv = b.data();
    std::vector<double> out(ao.size());
    switch (op) {
    case ElementwiseOp::add:
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[ao[i]] + bv[bo[i]];
        break;
    case ElementwiseOp::sub:
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[ao[i]] - bv[bo[i]];
        break;
    case ElementwiseOp::mul:
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[ao[i]] * bv[bo[i]];
        break;
    default:
        throw ValidationError("binary elementwise called with a unary op");
    }
    Tensor y(std::move(out_shape), std::move(out));
    if (auto* tape = detail::recording_tape({&a, &b})) {
        tape->record({a.node(), b.node()}, y,
                     [op, an = a.node(), bn = b.node(), yn = y.node(), ao = std::move(ao),
                      bo = std::move(bo)] {
                         const auto& g = yn->grad;
                         if (an->requires_grad) {
                             auto& ga = an->ensure_grad();
                             for (std::size_t i = 0; i < g.size(); ++i) {
                                 ga[ao[i]] += op == ElementwiseOp::mul ? g[i] * bn->data[bo[i]]
                                                                       : g[i];
                             }
                         }
                         if (bn->requires_grad) {
                             auto& gb = bn->ensure_grad();
                             for (std::size_t i = 0; i < g.size(); ++i) {
                                 switch (op) {
                                 case ElementwiseOp::add: gb[bo[i]] += g[i]; break;
                                 case ElementwiseOp::sub: gb[bo[i]] -= g[i]; break;
                                 default: gb[bo[i]] += g[i] * an->data[ao[i]]; break;
                                 }
                             }
                         }
                     });
    }
    return y;
}

std::vector<NodePtr> grad_inputs(std::initializer_list<const Tensor*> ts)
{
    std::vector<NodePtr> out;
    for (const auto* t : ts) {
        if (t->defined()) out.push_back(t->node());
    }
    return out;
}

}  // namespace

Shape broadcast_shape(const Shape& a, const Shape& b)
{
    const std::size_t rank = std::max(a.size(), b.size());
    Shape out(rank);
    for (std::size_t k = 0; k < rank; ++k) {
        std::size_t ea = k < a.size() ? a[a.size() - 1 - k] : 1;
        std::size_t eb = k < b.size() ? b[b.size() - 1 - k] : 1;
        if (ea != eb && ea != 1 && eb != 1) {
            throw ShapeError("shapes " + shape_str(a) + " and " + shape_str(b) +
                             " are not broadcast-compatible");
        }
        out[rank - 1 - k] = std::max(ea, eb);
    }
    return out;
}

Tensor elementwise(ElementwiseOp op, const Tensor& a, const Tensor& b)
{
    switch (op) {
    case ElementwiseOp::add:
    case ElementwiseOp::sub:
    case ElementwiseOp::mul: return binary(op, a, b);
    default: return unary(op, a);
    }
}

Tensor add(const Tensor& a, const Tensor& b) { return binary(ElementwiseOp::add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(ElementwiseOp::sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(ElementwiseOp::mul, a, b); }
Tensor relu(const Tensor& x) { return unary(ElementwiseOp::relu, x); }
Tensor tanh(const Tensor& x) { return unary(ElementwiseOp::tanh, x); }
Tensor sigmoid(const Tensor& x) { return unary(ElementwiseOp::sigmoid, x); }

Tensor add_scalar(const Tensor& x, double value) { return add(x, Tensor::scalar(value)); }
Tensor scale(const Tensor& x, double factor) { return mul(x, Tensor::scalar(factor)); }

Tensor activate(const Tensor& x, Activation act)
{
    switch (act) {
    case Activation::relu: return relu(x);
    case Activation::tanh: return tanh(x);
    case Activation::sigmoid: return sigmoid(x);
    }
    return relu(x);
}

Tensor matmul(const Tensor& a, const Tensor& b)
{
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
        throw ShapeError("matmul dimension mismatch: " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
    }
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    auto av = a.data();
    auto bv = b.data();
    std::vector<double> out(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = av[i * k + p];
            for (std::size_t j = 0; j < n; ++j) out[i * n + j] += aip * bv[p * n + j];
        }
    }
    Tensor y({m, n}, std::move(out));
    if (auto* tape = detail::recording_tape({&a, &b})) {
        tape->record({a.node(), b.node()}, y, [m, k, n, an = a.node(), bn = b.node(), yn = y.node()] {
            const auto& g = yn->grad;
            if (an->requires_grad) {
                auto& ga = an->ensure_grad();
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t p = 0; p < k; ++p) {
                        double acc = 0.0;
                        for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * bn->data[p * n + j];
                        ga[i * k + p] += acc;
                    }
            }
            if (bn->requires_grad) {
                auto& gb = bn->ensure_grad();
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t p = 0; p < k; ++p) {
                        const double aip = an->data[i * k + p];
                        for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += aip * g[i * n + j];
                    }
            }
        });
    }
    return y;
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias)
{
    if (weight.rank() != 2 || x.shape().back() != weight.dim(1)) {
        throw ShapeError("linear: input " + shape_str(x.shape()) + " vs weight " +
                         shape_str(weight.shape()));
    }
    const std::size_t in = weight.dim(1), outc = weight.dim(0);
    if (bias.defined() && bias.numel() != outc) {
        throw ShapeError("linear: bias " + shape_str(bias.shape()) + " vs " + std::to_string(outc) +
                         " outputs");
    }
    const std::size_t rows = x.numel() / in;
    auto xv = x.data();
    auto wv = weight.data();
    const std::vector<double> bv = bias.defined() ? std::vector<double>(bias.data().begin(), bias.data().end())
                                                  : std::vector<double>(outc, 0.0);
    // Row-times-transposed-weight as a sequence of axpys, which vectorizes.
    std::vector<double> wt(in * outc);
    for (std::size_t o = 0; o < outc; ++o)
        for (std::size_t i = 0; i < in; ++i) wt[i * outc + o] = wv[o * in + i];
    std::vector<double> out(rows * outc);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = xv.data() + r * in;
        double* yr = out.data() + r * outc;
        std::copy(bv.begin(), bv.end(), yr);
        for (std::size_t i = 0; i < in; ++i) {
            const double xi = xr[i];
            const double* wi = wt.data() + i * outc;
            for (std::size_t o = 0; o < outc; ++o) yr[o] += xi * wi[o];
        }
    }
    Shape shape = x.shape();
    shape.back() = outc;
    Tensor y(std::move(shape), std::move(out));
    if (auto* tape = detail::recording_tape({&x, &weight, &bias})) {
        tape->record(grad_inputs({&x, &weight, &bias}), y,
                     [rows, in, outc, xn = x.node(), wn = weight.node(),
                      bn = bias.defined() ? bias.node() : NodePtr{}, yn = y.node()] {
                         const auto& g = yn->grad;
                         if (xn->requires_grad) {
                             auto& gx = xn->ensure_grad();
                             for (std::size_t r = 0; r < rows; ++r)
                                 for (std::size_t o = 0; o < outc; ++o) {
                                     const double go = g[r * outc + o];
                                     if (go == 0.0) continue;
                                     const double* wr = wn->data.data() + o * in;
                                     double* gxr = gx.data() + r * in;
                                     for (std::size_t i = 0; i < in; ++i) gxr[i] += go * wr[i];
                                 }
                         }
                         if (wn->requires_grad) {
                             auto& gw = wn->ensure_grad();
                             const double f = testing_hooks::corrupt_backward() ? 1.001 : 1.0;
                             for (std::size_t r = 0; r < rows; ++r)
                                 for (std::size_t o = 0; o < outc; ++o) {
                                     const double go = f * g[r * outc + o];
                                     if (go == 0.0) continue;
                                     const double* xr = xn->data.data() + r * in;
                                     double* gwr = gw.data() + o * in;
                                     for (std::size_t i = 0; i < in; ++i) gwr[i] += go * xr[i];
                                 }
                         }
                         if (bn && bn->requires_grad) {
                             auto& gb = bn->ensure_grad();
                             for (std::size_t r = 0; r < rows; ++r)
                                 for (std::size_t o = 0; o < outc; ++o) gb[o] += g[r * outc + o];
                         }
                     });
    }
    return y;
}

Tensor conv_temporal(const Tensor& x, const Tensor& kernel, const Tensor& bias, TemporalConv opts)
{
    if (x.rank() < 3) throw ShapeError("conv_temporal expects (..., T, N, C), got " + shape_str(x.shape()));
    if (kernel.rank() != 3) throw ShapeError("conv_temporal kernel must be (K, C_in, C_out)");
    const std::size_t r = x.rank();
    const std::size_t T = x.dim(r - 3), N = x.dim(r - 2), cin = x.dim(r - 1);
    const std::size_t K = kernel.dim(0), cout = kernel.dim(2);
    if (K % 2 == 0) throw ValidationError("conv_temporal kernel size must be odd, got " + std::to_string(K));
    if (kernel.dim(1) != cin) {
        throw ShapeError("conv_temporal: input " + shape_str(x.shape()) + " vs kernel " +
                         shape_str(kernel.shape()));
    }
    if (opts.stride < 1 || opts.dilation < 1) throw ValidationError("conv_temporal stride/dilation must be >= 1");
    if (bias.defined() && bias.numel() != cout) throw ShapeError("conv_temporal bias size mismatch");
    const std::size_t B = x.numel() / (T * N * cin);
    const std::size_t Tout = (T + opts.stride - 1) / opts.stride;
    const long pad = static_cast<long>(opts.dilation * (K - 1) / 2);
    auto xv = x.data();
    auto wv = kernel.data();
    std::vector<double> out(B * Tout * N * cout, 0.0);
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t to = 0; to < Tout; ++to)
            for (std::size_t k = 0; k < K; ++k) {
                long ti = static_cast<long>(to * opts.stride + k * opts.dilation) - pad;
                if (ti < 0 || ti >= static_cast<long>(T)) continue;
                const double* wk = wv.data() + k * cin * cout;
                for (std::size_t n = 0; n < N; ++n) {
                    const double* xr = xv.data() + ((b * T + ti) * N + n) * cin;
                    double* yr = out.data() + ((b * Tout + to) * N + n) * cout;
                    for (std::size_t c = 0; c < cin; ++c) {
                        const double xc = xr[c];
                        const double* wc = wk + c * cout;
                        for (std::size_t o = 0; o < cout; ++o) yr[o] += xc * wc[o];
                    }
                }
            }
    if (bias.defined()) {
        auto bv = bias.data();
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i % cout];
    }
    Shape shape = x.shape();
    shape[r - 3] = Tout;
    shape[r - 1] = cout;
    Tensor y(std::move(shape), std::move(out));
    if (auto* tape = detail::recording_tape({&x, &kernel, &bias})) {
        tape->record(grad_inputs({&x, &kernel, &bias}), y,
                     [=, xn = x.node(), wn = kernel.node(),
                      bn = bias.defined() ? bias.node() : NodePtr{}, yn = y.node()] {
                         const auto& g = yn->grad;
                         const bool want_x = xn->requires_grad, want_w = wn->requires_grad;
                         double* gx = want_x ? xn->ensure_grad().data() : nullptr;
                         double* gw = want_w ? wn->ensure_grad().data() : nullptr;
                         // Kernel transposed to (K, C_out, C_in) so the input gradient is axpys.
                         std::vector<double> wt;
                         if (gx) {
                             wt.resize(K * cout * cin);
                             for (std::size_t k = 0; k < K; ++k)
                                 for (std::size_t c = 0; c < cin; ++c)
                                     for (std::size_t o = 0; o < cout; ++o)
                                         wt[(k * cout + o) * cin + c] = wn->data[(k * cin + c) * cout + o];
                         }
                         for (std::size_t b = 0; b < B; ++b)
                             for (std::size_t to = 0; to < Tout; ++to)
                                 for (std::size_t k = 0; k < K; ++k) {
                                     long ti = static_cast<long>(to * opts.stride + k * opts.dilation) - pad;
                                     if (ti < 0 || ti >= static_cast<long>(T)) continue;
                                     for (std::size_t n = 0; n < N; ++n) {
                                         const std::size_t xoff = ((b * T + ti) * N + n) * cin;
                                         const double* gr = g.data() + ((b * Tout + to) * N + n) * cout;
                                         if (gx) {
                                             double* gxr = gx + xoff;
                                             for (std::size_t o = 0; o < cout; ++o) {
                                                 const double go = gr[o];
                                                 const double* wo = wt.data() + (k * cout + o) * cin;
                                                 for (std::size_t c = 0; c < cin; ++c) gxr[c] += go * wo[c];
                                             }
                                         }
                                         if (gw) {
                                             const double* xr = xn->data.data() + xoff;
                                             for (std::size_t c = 0; c < cin; ++c) {
                                                 const double xc = xr[c];
                                                 double* gwc = gw + (k * cin + c) * cout;
                                                 for (std::size_t o = 0; o < cout; ++o) gwc[o] += xc * gr[o];
                                             }
                                         }
                                     }
                                 }
                         if (bn && bn->requires_grad) {
                             auto& gb = bn->ensure_grad();
                             for (std::size_t i = 0; i < g.size(); ++i) gb[i % cout] += g[i];
                         }
                     });
    }
    return y;
}

Tensor max_pool_temporal(const Tensor& x, std::size_t window, std::size_t stride)
{
    if (x.rank() < 3) throw ShapeError("max_pool_temporal expects (..., T, N, C), got " + shape_str(x.shape()));
    if (window % 2 == 0) throw ValidationError("max_pool_temporal window must be odd");
    if (stride < 1) throw ValidationError("max_pool_temporal stride must be >= 1");
    const std::size_t r = x.rank();
    const std::size_t T = x.dim(r - 3), N = x.dim(r - 2), C = x.dim(r - 1);
    const std::size_t B = x.numel() / (T * N * C);
    const std::size_t Tout = (T + stride - 1) / stride;
    const long pad = static_cast<long>((window - 1) / 2);
    auto xv = x.data();
    std::vector<double> out(B * Tout * N * C);
    std::vector<std::size_t> argmax(out.size());
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t to = 0; to < Tout; ++to)
            for (std::size_t n = 0; n < N; ++n)
                for (std::size_t c = 0; c < C; ++c) {
                    double best = -std::numeric_limits<double>::infinity();
                    std::size_t best_i = 0;
                    for (std::size_t k = 0; k < window; ++k) {
                        long ti = static_cast<long>(to * stride + k) - pad;
                        if (ti < 0 || ti >= static_cast<long>(T)) continue;
                        std::size_t i = ((b * T + ti) * N + n) * C + c;
                        if (xv[i] > best) {
                            best = xv[i];
                            best_i = i;
                        }
                    }
                    std::size_t o = ((b * Tout + to) * N + n) * C + c;
                    out[o] = best;
                    argmax[o] = best_i;
                }
    Shape shape = x.shape();
    shape[r - 3] = Tout;
    Tensor y(std::move(shape), std::move(out));
    if (auto* tape = detail::recording_tape({&x})) {
        tape->record({x.node()}, y, [xn = x.node(), yn = y.node(), argmax = std::move(argmax)] {
            auto& gx = xn->ensure_grad();
            const auto& g = yn->grad;
            for (std::size_t o = 0; o < g.size(); ++o) gx[argmax[o]] += g[o];
        });
    }
    return y;
}

Tensor pool(const Tensor& x, std::vector<std::size_t> axes, PoolMode mode, bool keepdims)
{
    if (axes.empty()) throw ValidationError("pool: empty axis set");
    std::sort(axes.begin(), axes.end());
    if (std::adjacent_find(axes.begin(), axes.end()) != axes.end()) {
        throw ValidationError("pool: repeated axis");
    }
    const Shape& in_shape = x.shape();
    Shape kept = in_shape;
    for (auto ax : axes) {
        if (ax >= in_shape.size()) {
            throw ShapeError("pool: axis " + std::to_string(ax) + " out of range for " + shape_str(in_shape));
        }
        kept[ax] = 1;
    }
    const std::size_t count = x.numel() / shape_numel(kept);
    // offsets[i] maps input element i onto its reduced output slot.
    auto offsets = broadcast_offsets(kept, in_shape);
    auto xv = x.data();
    std::vector<double> out;
    std::vector<std::size_t> argmax;
    if (mode == PoolMode::mean) {
        out.assign(shape_numel(kept), 0.0);
        for (std::size_t i = 0; i < xv.size(); ++i) out[offsets[i]] += xv[i];
        for (auto& v : out) v /= static_cast<double>(count);
    } else {
        out.assign(shape_numel(kept), -std::numeric_limits<double>::infinity());
        argmax.assign(out.size(), 0);
        for (std::size_t i = 0; i < xv.size(); ++i) {
            if (xv[i] > out[offsets[i]]) {
                out[offsets[i]] = xv[i];
                argmax[offsets[i]] = i;
            }
        }
    }
    Shape out_shape;
    if (keepdims) {
        out_shape = kept;
    } else {
        for (std::size_t ax = 0; ax < in_shape.size(); ++ax) {
            if (!std::binary_search(axes.begin(), axes.end(), ax)) out_shape.push_back(in_shape[ax]);
        }
        if (out_shape.empty()) out_shape = {1};
    }
    Tensor y(std::move(out_shape), std::move(out));
    if (auto* tape = detail::recording_tape({&x})) {
        tape->record({x.node()}, y,
                     [mode, count, xn = x.node(), yn = y.node(), offsets = std::move(offsets),
                      argmax = std::move(argmax)] {
                         auto& gx = xn->ensure_grad();
                         const auto& g = yn->grad;
                         if (mode == PoolMode::mean) {
                             const double inv = 1.0 / static_cast<double>(count);
                             for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[offsets[i]] * inv;
                         } else {
                             for (std::size_t o = 0; o < g.size(); ++o) gx[argmax[o]] += g[o];
                         }
                     });
    }
    return y;
}

Tensor sum(const Tensor& x)
{
    auto xv = x.data();
    Tensor y = Tensor::scalar(std::accumulate(xv.begin(), xv.end(), 0.0));
    if (auto* tape = detail::recording_tape({&x})) {
        tape->record({x.node()}, y, [xn = x.node(), yn = y.node()] {
            auto& gx = xn->ensure_grad();
            for (auto& v : gx) v += yn->grad[0];
        });
    }
    return y;
}

Tensor mean(const Tensor& x)
{
    std::vector<std::size_t> axes(x.rank());
    std::iota(axes.begin(), axes.end(), 0);
    return pool(x, axes, PoolMode::mean);
}

Tensor reshape(const Tensor& x, Shape shape)
{
    if (shape_numel(shape) != x.numel()) {
        throw ShapeError("reshape " + shape_str(x.shape()) + " -> " + shape_str(shape));
    }
    auto xv = x.data();
    Tensor y(std::move(shape), std::vector<double>(xv.begin(), xv.end()));
    if (auto* tape = detail::recording_tape({&x})) {
        tape->record({x.node()}, y, [xn = x.node(), yn = y.node()] {
            auto& gx = xn->ensure_grad();
            for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += yn->grad[i];
        });
    }
    return y;
}

Tensor concat(std::span<const Tensor> parts, std::size_t axis)
{
    if (parts.empty()) throw ValidationError("concat of zero tensors");
    const Shape& first = parts[0].shape();
    if (axis >= first.size()) throw ShapeError("concat axis out of range for " + shape_str(first));
    Shape out_shape = first;
    out_shape[axis] = 0;
    for (const auto& p : parts) {
        const Shape& s = p.shape();
        bool ok = s.size() == first.size();
        for (std::size_t ax = 0; ok && ax < s.size(); ++ax) ok = ax == axis || s[ax] == first[ax];
        if (!ok) throw ShapeError("concat: " + shape_str(s) + " vs " + shape_str(first));
        out_shape[axis] += s[axis];
    }
    std::size_t outer = 1, inner = 1;
    for (std::size_t ax = 0; ax < axis; ++ax) outer *= first[ax];
    for (std::size_t ax = axis + 1; ax < first.size(); ++ax) inner *= first[ax];
    const std::size_t row = out_shape[axis] * inner;
    std::vector<double> out(outer * row);
    std::vector<std::size_t> widths;
    std::size_t col = 0;
    for (const auto& p : parts) {
        const std::size_t w = p.shape()[axis] * inner;
        auto pv = p.data();
        for (std::size_t o = 0; o < outer; ++o) {
            std::copy_n(pv.data() + o * w, w, out.data() + o * row + col);
        }
        widths.push_back(w);
        col += w;
    }
    Tensor y(std::move(out_shape), std::move(out));
    bool any = false;
    for (const auto& p : parts) any = any || p.requires_grad();
    if (Tape* tape = any ? active_tape() : nullptr) {
        std::vector<NodePtr> nodes;
        for (const auto& p : parts) nodes.push_back(p.node());
        tape->record(nodes, y, [nodes, widths, outer, row, yn = y.node()] {
            std::size_t c = 0;
            for (std::size_t k = 0; k < nodes.size(); ++k) {
                if (nodes[k]->requires_grad) {
                    auto& gp = nodes[k]->ensure_grad();
                    for (std::size_t o = 0; o < outer; ++o)
                        for (std::size_t i = 0; i < widths[k]; ++i) gp[o * widths[k] + i] += yn->grad[o * row + c + i];
                }
                c += widths[k];
            }
        });
    }
    return y;
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> labels)
{
    if (logits.rank() != 2 || logits.dim(0) != labels.size()) {
        throw ShapeError("cross_entropy: logits " + shape_str(logits.shape()) + " vs " +
                         std::to_string(labels.size()) + " labels");
    }
    const std::size_t B = logits.dim(0), K = logits.dim(1);
    auto z = logits.data();
    std::vector<double> probs(B * K);
    double loss = 0.0;
    for (std::size_t b = 0; b < B; ++b) {
        if (labels[b] < 0 || static_cast<std::size_t>(labels[b]) >= K) {
            throw ValidationError("cross_entropy: label " + std::to_string(labels[b]) + " out of range");
        }
        const double* zr = z.data() + b * K;
        double mx = *std::max_element(zr, zr + K);
        double s = 0.0;
        for (std::size_t k = 0; k < K; ++k) s += std::exp(zr[k] - mx);
        for (std::size_t k = 0; k < K; ++k) probs[b * K + k] = std::exp(zr[k] - mx) / s;
        loss += mx + std::log(s) - zr[labels[b]];
    }
    Tensor y = Tensor::scalar(loss / static_cast<double>(B));
    if (auto* tape = detail::recording_tape({&logits})) {
        std::vector<int> lab(labels.begin(), labels.end());
        tape->record({logits.node()}, y, [B, K, probs = std::move(probs), lab = std::move(lab),
                                          zn = logits.node(), yn = y.node()] {
            auto& gz = zn->ensure_grad();
            const double g = yn->grad[0] / static_cast<double>(B);
            for (std::size_t b = 0; b < B; ++b)
                for (std::size_t k = 0; k < K; ++k) {
                    double onehot = static_cast<int>(k) == lab[b] ? 1.0 : 0.0;
                    gz[b * K + k] += g * (probs[b * K + k] - onehot);
                }
        });
    }
    return y;
}

BatchNorm BatchNorm::make(std::size_t channels)
{
    BatchNorm bn;
    bn.gamma = Tensor::full({channels}, 1.0, true);
    bn.beta = Tensor::zeros({channels}, true);
    bn.running_mean = Tensor::zeros({channels});
    bn.running_var = Tensor::full({channels}, 1.0);
    return bn;
}

void BatchNorm::collect(const std::string& prefix, NamedTensors& params, NamedTensors& buffers) const
{
    params.emplace_back(prefix + ".gamma", gamma);
    params.emplace_back(prefix + ".beta", beta);
    buffers.emplace_back(prefix + ".running_mean", running_mean);
    buffers.emplace_back(prefix + ".running_var", running_var);
}

Tensor batch_norm(const Tensor& x, BatchNorm& bn, Mode mode)
{
    const std::size_t C = bn.channels();
    if (x.shape().back() != C) {
        throw ShapeError("batch_norm: input " + shape_str(x.shape()) + " vs " + std::to_string(C) + " channels");
    }
    const std::size_t M = x.numel() / C;
    if (M == 0) throw ValidationError("batch_norm on an empty batch");
    auto xv = x.data();
    auto gamma = bn.gamma.data();
    auto beta = bn.beta.data();
    std::vector<double> mu(C, 0.0), inv_std(C);
    if (mode == Mode::train) {
        std::vector<double> var(C, 0.0);
        for (std::size_t i = 0; i < xv.size(); ++i) mu[i % C] += xv[i];
        for (auto& m : mu) m /= static_cast<double>(M);
        for (std::size_t i = 0; i < xv.size(); ++i) {
            double d = xv[i] - mu[i % C];
            var[i % C] += d * d;
        }
        for (auto& v : var) v /= static_cast<double>(M);
        auto rm = bn.running_mean.mutable_data();
        auto rv = bn.running_var.mutable_data();
        const double unbias = M > 1 ? static_cast<double>(M) / static_cast<double>(M - 1) : 1.0;
        for (std::size_t c = 0; c < C; ++c) {
            inv_std[c] = 1.0 / std::sqrt(var[c] + bn.eps);
            rm[c] = bn.momentum * rm[c] + (1.0 - bn.momentum) * mu[c];
            rv[c] = bn.momentum * rv[c] + (1.0 - bn.momentum) * var[c] * unbias;
        }
    } else {
        auto rm = bn.running_mean.data();
        auto rv = bn.running_var.data();
        for (std::size_t c = 0; c < C; ++c) {
            mu[c] = rm[c];
            inv_std[c] = 1.0 / std::sqrt(rv[c] + bn.eps);
        }
    }
    std::vector<double> xhat(xv.size()), out(xv.size());
    for (std::size_t i = 0; i < xv.size(); ++i) {
        const std::size_t c = i % C;
        xhat[i] = (xv[i] - mu[c]) * inv_std[c];
        out[i] = gamma[c] * xhat[i] + beta[c];
    }
    Tensor y(x.shape(), std::move(out));
    if (auto* tape = detail::recording_tape({&x, &bn.gamma, &bn.beta})) {
        tape->record({x.node(), bn.gamma.node(), bn.beta.node()}, y,
                     [C, M, mode, xn = x.node(), gn = bn.gamma.node(), bn_ = bn.beta.node(),
                      yn = y.node(), xhat = std::move(xhat), inv_std = std::move(inv_std)] {
                         const auto& g = yn->grad;
                         std::vector<double> sum_g(C, 0.0), sum_gx(C, 0.0);
                         for (std::size_t i = 0; i < g.size(); ++i) {
                             sum_g[i % C] += g[i];
                             sum_gx[i % C] += g[i] * xhat[i];
                         }
                         if (gn->requires_grad) {
                             auto& gg = gn->ensure_grad();
                             for (std::size_t c = 0; c < C; ++c) gg[c] += sum_gx[c];
                         }
                         if (bn_->requires_grad) {
                             auto& gb = bn_->ensure_grad();
                             for (std::size_t c = 0; c < C; ++c) gb[c] += sum_g[c];
                         }
                         if (!xn->requires_grad) return;
                         auto& gx = xn->ensure_grad();
                         const auto& gamma = gn->data;
                         if (mode == Mode::eval) {
                             for (std::size_t i = 0; i < g.size(); ++i) {
                                 gx[i] += g[i] * gamma[i % C] * inv_std[i % C];
                             }
                             return;
                         }
                         // dx = gamma*inv_std/M * (M*g - sum(g) - xhat*sum(g*xhat))
                         const double m = static_cast<double>(M);
                         for (std::size_t i = 0; i < g.size(); ++i) {
                             const std::size_t c = i % C;
                             gx[i] += gamma[c] * inv_std[c] / m *
                                      (m * g[i] - sum_g[c] - xhat[i] * sum_gx[c]);
                         }
                     });
    }
    return y;
}

}  // namespace tcagcn
