#pragma once

#include <array>
#include <cstddef>
#include <random>
#include <string>

#include "tcagcn/ops.hpp"
#include "tcagcn/tensor.hpp"

namespace tcagcn::tf {

enum class BranchKind { conv_d1, conv_d2, max_pool, pointwise };

/// One MSCONV branch: 1x1 reduction to C1/4 channels, then its temporal op.
/// Convolutions feeding a batch norm carry no bias.
struct MsBranch {
    BranchKind kind = BranchKind::pointwise;
    Tensor reduce_w;  // (1, C1, C1/4)
    BatchNorm reduce_bn;
    Tensor temporal_w;  // (5, C1/4, C1/4); conv branches only
    BatchNorm post_bn;              // after the temporal conv or the pooling

    static constexpr std::size_t kKernel = 5;
    static constexpr std::size_t kPoolWindow = 3;
};

struct TfConfig {
    std::size_t channels = 64;
    std::size_t aff_reduction = 4;

    std::size_t branch_width() const { return channels / 4; }
    std::size_t aff_width() const;
};

struct TfParams {
    TfConfig config;
    std::array<MsBranch, 4> branches;
    // Gate bottlenecks C1 -> C1/r_a -> C1, local per position, global on the (T, N) mean.
    Tensor local_w1, local_b1, local_w2, local_b2;
    Tensor global_w1, global_b1, global_w2, global_b2;

    static TfParams init(const TfConfig& config, std::mt19937_64& rng);
    void collect(const std::string& prefix, NamedTensors& params, NamedTensors& buffers) const;
};

/// Single MSCONV branch on a (B, T, N, C1) input; exposed for per-branch checks.
Tensor msconv_branch(const Tensor& x, MsBranch& branch, std::size_t stride, Mode mode);

/// Channel concatenation of the four branches, (B, ceil(T/stride), N, C1).
Tensor msconv(const Tensor& x, TfParams& params, std::size_t stride, Mode mode);

/// Gate M = sigmoid(l(Z) + g(Z)), broadcast over (T, N) for the global term.
Tensor aff_gate(const Tensor& z, const TfParams& params);

/// Z * M(Z).
Tensor aff_fuse(const Tensor& z, const TfParams& params);

Tensor tf_forward(const Tensor& f_out, TfParams& params, std::size_t stride, Mode mode);

}  // namespace tcagcn::tf
