#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "tcagcn/tensor.hpp"

namespace tcagcn {

enum class ElementwiseOp { add, sub, mul, relu, tanh, sigmoid };

/// Binary ops broadcast numpy-style (trailing dimensions aligned, extent 1
/// stretches). Unary ops ignore `b`.
Tensor elementwise(ElementwiseOp op, const Tensor& a, const Tensor& b = {});

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
// Subgradient at 0 is 0.
Tensor relu(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor add_scalar(const Tensor& x, double value);
Tensor scale(const Tensor& x, double factor);

enum class Activation { relu, tanh, sigmoid };
Tensor activate(const Tensor& x, Activation act);

Shape broadcast_shape(const Shape& a, const Shape& b);

Tensor matmul(const Tensor& a, const Tensor& b);

/// y[..., o] = sum_i x[..., i] * weight[o, i] + bias[o]. `bias` may be undefined.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias = {});

struct TemporalConv {
    std::size_t stride = 1;
    std::size_t dilation = 1;
};

/// 1-D convolution along T of a (..., T, N, C_in) tensor, independently per
/// joint. `kernel` is (K, C_in, C_out) with K odd; output length ceil(T/stride),
/// zero padding dilation*(K-1)/2 on both ends.
Tensor conv_temporal(const Tensor& x, const Tensor& kernel, const Tensor& bias = {},
                     TemporalConv opts = {});

/// Windowed max over T of a (..., T, N, C) tensor, same centring and output
/// length as conv_temporal. Ties route the adjoint to the lowest index.
Tensor max_pool_temporal(const Tensor& x, std::size_t window, std::size_t stride);

enum class PoolMode { mean, max };

/// Reduces over `axes`. A full reduction without keepdims yields shape (1).
Tensor pool(const Tensor& x, std::vector<std::size_t> axes, PoolMode mode,
            bool keepdims = false);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

Tensor reshape(const Tensor& x, Shape shape);
Tensor concat(std::span<const Tensor> parts, std::size_t axis);

/// Mean softmax cross-entropy of (B, K) logits.
Tensor cross_entropy(const Tensor& logits, std::span<const int> labels);

enum class Mode { train, eval };

/// Per-channel (last axis) normalization over every other axis.
struct BatchNorm {
    Tensor gamma;
    Tensor beta;
    Tensor running_mean;
    Tensor running_var;
    double momentum = 0.9;
    double eps = 1e-5;

    static BatchNorm make(std::size_t channels);
    std::size_t channels() const { return gamma.numel(); }
    void collect(const std::string& prefix, NamedTensors& params, NamedTensors& buffers) const;
};

/// Train mode uses batch statistics and updates the running estimates
/// (running = momentum*running + (1-momentum)*batch, unbiased variance).
Tensor batch_norm(const Tensor& x, BatchNorm& bn, Mode mode);

}  // namespace tcagcn
