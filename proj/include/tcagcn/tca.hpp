#pragma once

#include <cstddef>
#include <random>
#include <string>

#include "tcagcn/ops.hpp"
#include "tcagcn/tensor.hpp"

// One TCA module for a single partition subset. Feature tensors are batched
// and channel-last: X is (B, T, N, C), topologies are (B, N, N, C1).
namespace tcagcn::tca {

struct TcaConfig {
    std::size_t in_channels = 3;
    std::size_t out_channels = 64;
    std::size_t corr_reduction = 8;   // phi/psi bottleneck
    std::size_t calib_reduction = 2;  // calibration bottleneck
    Activation corr_activation = Activation::relu;
    Activation calib_activation = Activation::relu;

    std::size_t corr_width() const;
    std::size_t calib_width() const;
};

struct TcaParams {
    TcaConfig config;
    Tensor alpha;            // (1), connection strength of the learned correlations
    Tensor phi_w, phi_b;     // (R, C), (R)
    Tensor psi_w, psi_b;     // (R, C), (R)
    Tensor xi_w;             // (C1, R), no bias
    Tensor w0;               // (C1, C), initial per-frame weight
    Tensor calib1_w, calib1_b;  // (3, C, Cr), (Cr)
    Tensor calib2_w, calib2_b;  // (3, Cr, C1), (C1); zero at init

    /// alpha = 0 and a zero second calibration layer, so a fresh module is
    /// the static graph convolution with weight W0.
    static TcaParams init(const TcaConfig& config, std::mt19937_64& rng);

    void collect(const std::string& prefix, NamedTensors& out) const;
};

/// Q (B, N, N, C1): xi(act(phi(p)[n] - psi(p)[m])) with p the temporal mean of X.
Tensor correlation_model(const Tensor& x, const TcaParams& params);

/// S = alpha * Q + mu, mu (N, N) broadcast over batch and channel.
Tensor refine_topology(const Tensor& q, const Tensor& mu, const Tensor& alpha);

/// alpha_t (B, T, C1) = 1 + conv3(act(conv3(mean over joints of X))).
Tensor calibration(const Tensor& x, const TcaParams& params);

/// A_out[b,t,n,:] = (alpha_t[b,t,:] . W0) X[b,t,n,:], one calibrated weight per frame.
Tensor temporal_aggregate(const Tensor& x, const Tensor& w0, const Tensor& alpha_t);

/// F_out[b,t,n,c] = sum_m S[b,n,m,c] * A_out[b,t,m,c].
Tensor channel_aggregate(const Tensor& a_out, const Tensor& s);

Tensor tca_forward(const Tensor& x, const Tensor& mu, const TcaParams& params);

}  // namespace tcagcn::tca
