#include "tcagcn/tf_temporal.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace tcagcn::tf {

namespace {

Tensor fan_in_uniform(Shape shape, std::size_t fan_in, std::mt19937_64& rng)
{
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    return Tensor::uniform(std::move(shape), -bound, bound, rng, true);
}

const char* branch_name(BranchKind k)
{
    switch (k) {
    case BranchKind::conv_d1: return "conv_d1";
    case BranchKind::conv_d2: return "conv_d2";
    case BranchKind::max_pool: return "max_pool";
    case BranchKind::pointwise: return "pointwise";
    }
    return "?";
}

Tensor bottleneck(const Tensor& x, const Tensor& w1, const Tensor& b1, const Tensor& w2, const Tensor& b2)
{
    return linear(relu(linear(x, w1, b1)), w2, b2);
}

}  // namespace

std::size_t TfConfig::aff_width() const { return std::max<std::size_t>(1, channels / aff_reduction); }

TfParams TfParams::init(const TfConfig& config, std::mt19937_64& rng)
{
    if (config.channels == 0 || config.channels % 4 != 0) {
        throw ValidationError("TF channels must be a positive multiple of 4, got " +
                              std::to_string(config.channels));
    }
    if (config.aff_reduction == 0) throw ValidationError("AFF reduction must be positive");
    const std::size_t C = config.channels, Cb = config.branch_width(), Ca = config.aff_width();
    TfParams p;
    p.config = config;
    const std::array<BranchKind, 4> kinds{BranchKind::conv_d1, BranchKind::conv_d2, BranchKind::max_pool,
                                          BranchKind::pointwise};
    for (std::size_t i = 0; i < 4; ++i) {
        MsBranch& br = p.branches[i];
        br.kind = kinds[i];
        br.reduce_w = fan_in_uniform({1, C, Cb}, C, rng);
        br.reduce_bn = BatchNorm::make(Cb);
        if (br.kind == BranchKind::conv_d1 || br.kind == BranchKind::conv_d2) {
            br.temporal_w = fan_in_uniform({MsBranch::kKernel, Cb, Cb}, MsBranch::kKernel * Cb, rng);
        }
        if (br.kind != BranchKind::pointwise) br.post_bn = BatchNorm::make(Cb);
    }
    p.local_w1 = fan_in_uniform({Ca, C}, C, rng);
    p.local_b1 = fan_in_uniform({Ca}, C, rng);
    p.local_w2 = fan_in_uniform({C, Ca}, Ca, rng);
    p.local_b2 = fan_in_uniform({C}, Ca, rng);
    p.global_w1 = fan_in_uniform({Ca, C}, C, rng);
    p.global_b1 = fan_in_uniform({Ca}, C, rng);
    p.global_w2 = fan_in_uniform({C, Ca}, Ca, rng);
    p.global_b2 = fan_in_uniform({C}, Ca, rng);
    return p;
}

void TfParams::collect(const std::string& prefix, NamedTensors& params, NamedTensors& buffers) const
{
    for (const auto& br : branches) {
        const std::string bp = prefix + "." + branch_name(br.kind);
        params.emplace_back(bp + ".reduce_w", br.reduce_w);
        br.reduce_bn.collect(bp + ".reduce_bn", params, buffers);
        if (br.temporal_w.defined()) {
            params.emplace_back(bp + ".temporal_w", br.temporal_w);
        }
        if (br.post_bn.gamma.defined()) br.post_bn.collect(bp + ".post_bn", params, buffers);
    }
    params.emplace_back(prefix + ".local_w1", local_w1);
    params.emplace_back(prefix + ".local_b1", local_b1);
    params.emplace_back(prefix + ".local_w2", local_w2);
    params.emplace_back(prefix + ".local_b2", local_b2);
    params.emplace_back(prefix + ".global_w1", global_w1);
    params.emplace_back(prefix + ".global_b1", global_b1);
    params.emplace_back(prefix + ".global_w2", global_w2);
    params.emplace_back(prefix + ".global_b2", global_b2);
}

Tensor msconv_branch(const Tensor& x, MsBranch& br, std::size_t stride, Mode mode)
{
    if (br.kind == BranchKind::pointwise) {
        Tensor r = conv_temporal(x, br.reduce_w, {}, {stride, 1});
        return batch_norm(r, br.reduce_bn, mode);
    }
    Tensor r = relu(batch_norm(conv_temporal(x, br.reduce_w), br.reduce_bn, mode));
    Tensor t;
    switch (br.kind) {
    case BranchKind::conv_d1: t = conv_temporal(r, br.temporal_w, {}, {stride, 1}); break;
    case BranchKind::conv_d2: t = conv_temporal(r, br.temporal_w, {}, {stride, 2}); break;
    default: t = max_pool_temporal(r, MsBranch::kPoolWindow, stride); break;
    }
    return batch_norm(t, br.post_bn, mode);
}

Tensor msconv(const Tensor& x, TfParams& params, std::size_t stride, Mode mode)
{
    if (x.rank() != 4) throw ShapeError("msconv expects (B, T, N, C1), got " + shape_str(x.shape()));
    if (x.dim(3) % 4 != 0) {
        throw ValidationError("msconv: channel count " + std::to_string(x.dim(3)) + " not divisible by 4");
    }
    if (x.dim(3) != params.config.channels) {
        throw ShapeError("msconv: input " + shape_str(x.shape()) + " vs " +
                         std::to_string(params.config.channels) + " channels");
    }
    std::vector<Tensor> parts;
    for (auto& br : params.branches) parts.push_back(msconv_branch(x, br, stride, mode));
    return concat(parts, 3);
}

Tensor aff_gate(const Tensor& z, const TfParams& p)
{
    if (z.rank() != 4) throw ShapeError("aff_fuse expects (B, T, N, C1), got " + shape_str(z.shape()));
    Tensor local = bottleneck(z, p.local_w1, p.local_b1, p.local_w2, p.local_b2);
    Tensor context = pool(z, {1, 2}, PoolMode::mean, true);  // (B, 1, 1, C1)
    Tensor global = bottleneck(context, p.global_w1, p.global_b1, p.global_w2, p.global_b2);
    return sigmoid(add(local, global));
}

Tensor aff_fuse(const Tensor& z, const TfParams& params) { return mul(z, aff_gate(z, params)); }

Tensor tf_forward(const Tensor& f_out, TfParams& params, std::size_t stride, Mode mode)
{
    return aff_fuse(msconv(f_out, params, stride, mode), params);
}

}  // namespace tcagcn::tf
