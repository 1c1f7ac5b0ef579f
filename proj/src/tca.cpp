#include "tcagcn/tca.hpp"

#include <algorithm>
#include <cmath>

namespace tcagcn::tca {

namespace {

void require_btnc(const Tensor& x, const char* what)
{
    if (x.rank() != 4) {
        throw ShapeError(std::string(what) + " expects (B, T, N, C), got " + shape_str(x.shape()));
    }
}

Tensor fan_in_uniform(Shape shape, std::size_t fan_in, std::mt19937_64& rng)
{
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    return Tensor::uniform(std::move(shape), -bound, bound, rng, true);
}

}  // namespace

std::size_t TcaConfig::corr_width() const { return std::max<std::size_t>(1, in_channels / corr_reduction); }

std::size_t TcaConfig::calib_width() const { return std::max<std::size_t>(1, in_channels / calib_reduction); }

TcaParams TcaParams::init(const TcaConfig& config, std::mt19937_64& rng)
{
    if (config.in_channels == 0 || config.out_channels == 0) throw ValidationError("TCA channels must be positive");
    if (config.corr_reduction == 0 || config.calib_reduction == 0) throw ValidationError("TCA reductions must be positive");
    const std::size_t C = config.in_channels, C1 = config.out_channels;
    const std::size_t R = config.corr_width(), Cr = config.calib_width();
    TcaParams p;
    p.config = config;
    p.alpha = Tensor::zeros({1}, true);
    p.phi_w = fan_in_uniform({R, C}, C, rng);
    p.phi_b = fan_in_uniform({R}, C, rng);
    p.psi_w = fan_in_uniform({R, C}, C, rng);
    p.psi_b = fan_in_uniform({R}, C, rng);
    p.xi_w = fan_in_uniform({C1, R}, R, rng);
    p.w0 = fan_in_uniform({C1, C}, C, rng);
    p.calib1_w = fan_in_uniform({3, C, Cr}, 3 * C, rng);
    p.calib1_b = fan_in_uniform({Cr}, 3 * C, rng);
    p.calib2_w = Tensor::zeros({3, Cr, C1}, true);
    p.calib2_b = Tensor::zeros({C1}, true);
    return p;
}

void TcaParams::collect(const std::string& prefix, NamedTensors& out) const
{
    out.emplace_back(prefix + ".alpha", alpha);
    out.emplace_back(prefix + ".phi_w", phi_w);
    out.emplace_back(prefix + ".phi_b", phi_b);
    out.emplace_back(prefix + ".psi_w", psi_w);
    out.emplace_back(prefix + ".psi_b", psi_b);
    out.emplace_back(prefix + ".xi_w", xi_w);
    out.emplace_back(prefix + ".w0", w0);
    out.emplace_back(prefix + ".calib1_w", calib1_w);
    out.emplace_back(prefix + ".calib1_b", calib1_b);
    out.emplace_back(prefix + ".calib2_w", calib2_w);
    out.emplace_back(prefix + ".calib2_b", calib2_b);
}

Tensor correlation_model(const Tensor& x, const TcaParams& params)
{
    require_btnc(x, "correlation_model");
    const std::size_t B = x.dim(0), N = x.dim(2);
    const std::size_t R = params.phi_w.dim(0);
    Tensor pooled = pool(x, {1}, PoolMode::mean);  // (B, N, C)
    Tensor u = linear(pooled, params.phi_w, params.phi_b);
    Tensor v = linear(pooled, params.psi_w, params.psi_b);
    Tensor diff = sub(reshape(u, {B, N, 1, R}), reshape(v, {B, 1, N, R}));  // (B, N, N, R)
    return linear(activate(diff, params.config.corr_activation), params.xi_w);
}

Tensor refine_topology(const Tensor& q, const Tensor& mu, const Tensor& alpha)
{
    if (q.rank() != 4 || mu.rank() != 2 || q.dim(1) != mu.dim(0) || q.dim(2) != mu.dim(1)) {
        throw ShapeError("refine_topology: Q " + shape_str(q.shape()) + " vs mu " + shape_str(mu.shape()));
    }
    Tensor mu_b = reshape(mu, {mu.dim(0), mu.dim(1), 1});
    return add(mul(q, alpha), mu_b);
}

Tensor calibration(const Tensor& x, const TcaParams& params)
{
    require_btnc(x, "calibration");
    const std::size_t B = x.dim(0), T = x.dim(1);
    Tensor frames = pool(x, {2}, PoolMode::mean, true);  // (B, T, 1, C)
    Tensor h = conv_temporal(frames, params.calib1_w, params.calib1_b);
    h = activate(h, params.config.calib_activation);
    Tensor b = conv_temporal(h, params.calib2_w, params.calib2_b);
    return reshape(add_scalar(b, 1.0), {B, T, b.dim(3)});
}

Tensor temporal_aggregate(const Tensor& x, const Tensor& w0, const Tensor& alpha_t)
{
    require_btnc(x, "temporal_aggregate");
    const std::size_t B = x.dim(0), T = x.dim(1);
    if (alpha_t.rank() != 3 || alpha_t.dim(0) != B || alpha_t.dim(1) != T || alpha_t.dim(2) != w0.dim(0)) {
        throw ShapeError("temporal_aggregate: alpha_t " + shape_str(alpha_t.shape()) + " vs X " +
                         shape_str(x.shape()) + ", W0 " + shape_str(w0.shape()));
    }
    // (alpha_t[o] * W0[o, :]) . x == alpha_t[o] * (W0 x)[o]
    Tensor static_part = linear(x, w0);
    return mul(static_part, reshape(alpha_t, {B, T, 1, w0.dim(0)}));
}

Tensor channel_aggregate(const Tensor& a_out, const Tensor& s)
{
    if (a_out.rank() != 4 || s.rank() != 4 || a_out.dim(0) != s.dim(0) || a_out.dim(2) != s.dim(1) ||
        s.dim(1) != s.dim(2) || a_out.dim(3) != s.dim(3)) {
        throw ShapeError("channel_aggregate: A_out " + shape_str(a_out.shape()) + " vs S " +
                         shape_str(s.shape()));
    }
    const std::size_t B = a_out.dim(0), T = a_out.dim(1), N = a_out.dim(2), C = a_out.dim(3);
    auto av = a_out.data();
    auto sv = s.data();
    std::vector<double> out(a_out.numel(), 0.0);
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t t = 0; t < T; ++t)
            for (std::size_t n = 0; n < N; ++n) {
                double* fr = out.data() + ((b * T + t) * N + n) * C;
                for (std::size_t m = 0; m < N; ++m) {
                    const double* sr = sv.data() + ((b * N + n) * N + m) * C;
                    const double* ar = av.data() + ((b * T + t) * N + m) * C;
                    for (std::size_t c = 0; c < C; ++c) fr[c] += sr[c] * ar[c];
                }
            }
    Tensor y(a_out.shape(), std::move(out));
    if (auto* tape = detail::recording_tape({&a_out, &s})) {
        tape->record({a_out.node(), s.node()}, y, [B, T, N, C, an = a_out.node(), sn = s.node(), yn = y.node()] {
            const auto& g = yn->grad;
            double* ga = an->requires_grad ? an->ensure_grad().data() : nullptr;
            double* gs = sn->requires_grad ? sn->ensure_grad().data() : nullptr;
            for (std::size_t b = 0; b < B; ++b)
                for (std::size_t t = 0; t < T; ++t)
                    for (std::size_t n = 0; n < N; ++n) {
                        const double* gr = g.data() + ((b * T + t) * N + n) * C;
                        for (std::size_t m = 0; m < N; ++m) {
                            const std::size_t soff = ((b * N + n) * N + m) * C;
                            const std::size_t aoff = ((b * T + t) * N + m) * C;
                            for (std::size_t c = 0; c < C; ++c) {
                                if (ga) ga[aoff + c] += sn->data[soff + c] * gr[c];
                                if (gs) gs[soff + c] += an->data[aoff + c] * gr[c];
                            }
                        }
                    }
        });
    }
    return y;
}

Tensor tca_forward(const Tensor& x, const Tensor& mu, const TcaParams& params)
{
    Tensor s = refine_topology(correlation_model(x, params), mu, params.alpha);
    Tensor a_out = temporal_aggregate(x, params.w0, calibration(x, params));
    return channel_aggregate(a_out, s);
}

}  // namespace tcagcn::tca
