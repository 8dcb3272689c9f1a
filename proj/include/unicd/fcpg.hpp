#pragma once

#include <array>

#include "unicd/tensor.hpp"

namespace unicd {

enum class FcpgMode { soft, hard_fixed, hard_single, disabled };

// Frequency change prompt generator, one instance per encoder stage.
struct FcpgParams {
    // Unconstrained threshold parameters; the legal ordering
    // 0 < θ_low ≤ θ_high < 1 comes from the cumulative squashing
    // θ_low = σ(a), θ_high = θ_low + (1-θ_low)·σ(b).
    TensorPtr theta_a, theta_b;
    TensorPtr alpha; // residual fusion coefficient, scalar

    // band index 0 = low, 1 = high
    std::array<TensorPtr, 2> fc1_w, fc1_b; // pooled magnitude -> channel weights, layer 1 [C,C]
    std::array<TensorPtr, 2> fc2_w, fc2_b; // layer 2 [C,C]
    std::array<TensorPtr, 2> spat_w, spat_b; // 3x3 conv C->1 per band

    TensorPtr fuse_w, fuse_b; // 1x1 conv 2C->C across reintegrated bands
    TensorPtr spm_w, spm_b;   // 3x3 conv g->g over group means

    std::int64_t groups = 4;
    double tau = 0.05;
    bool spm_enabled = true;
    FcpgMode mode = FcpgMode::soft;
};

// Normalized radial frequency of each rfft-style bin: signed per-axis
// frequencies in [-0.5, 0.5], radius divided by √2·0.5 so DC -> 0 and the
// Nyquist corner -> 1. Constant (non-differentiable) tensor.
TensorPtr radial_frequency_map(std::int64_t h, std::int64_t w);

// Constraint mapping from the unconstrained parameters to (θ_low, θ_high).
std::pair<TensorPtr, TensorPtr> fcpg_thresholds(const FcpgParams& p);

// (M_low, M_high) over the radial map. Soft masks are differentiable in θ;
// hard modes build indicator masks at the fixed ablation thresholds.
std::pair<TensorPtr, TensorPtr> band_masks(const TensorPtr& radial, const TensorPtr& theta_low,
                                           const TensorPtr& theta_high, double tau, FcpgMode mode);

// Full pipeline: fft -> masked bands -> ifft -> per-band triple-product
// prompts -> fusion conv -> spatial modulator -> x + α·P_modulated.
TensorPtr fcpg_forward(const TensorPtr& x, const FcpgParams& p);

} // namespace unicd
