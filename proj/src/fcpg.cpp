#include "unicd/fcpg.hpp"

#include "unicd/fft.hpp"
#include "unicd/ops.hpp"

#include <cmath>

namespace unicd {

namespace {

double signed_freq(std::int64_t i, std::int64_t n) {
    // fftfreq convention: bins 0..n/2-1 positive, the rest negative
    std::int64_t k = 2 * i < n ? i : i - n;
    return static_cast<double>(k) / static_cast<double>(n);
}

} // namespace

TensorPtr radial_frequency_map(std::int64_t h, std::int64_t w) {
    if (h < 1 || w < 1) throw ShapeError("radial_frequency_map: extents must be >= 1");
    std::vector<double> m(static_cast<std::size_t>(h * w));
    const double norm = 1.0 / (std::sqrt(2.0) * 0.5);
    for (std::int64_t y = 0; y < h; ++y) {
        double fy = signed_freq(y, h);
        for (std::int64_t x = 0; x < w; ++x) {
            double fx = signed_freq(x, w);
            m[static_cast<std::size_t>(y * w + x)] = std::sqrt(fy * fy + fx * fx) * norm;
        }
    }
    return tensor({h, w}, std::move(m));
}

std::pair<TensorPtr, TensorPtr> fcpg_thresholds(const FcpgParams& p) {
    auto lo = sigmoid(p.theta_a);
    auto one_minus = add_const(neg(lo), 1.0);
    auto hi = add(lo, mul(one_minus, sigmoid(p.theta_b)));
    return {lo, hi};
}

std::pair<TensorPtr, TensorPtr> band_masks(const TensorPtr& radial, const TensorPtr& theta_low,
                                           const TensorPtr& theta_high, double tau,
                                           FcpgMode mode) {
    if (radial->rank() != 2) throw ShapeError("band_masks: radial map must be [H,W]");
    if (mode == FcpgMode::hard_fixed || mode == FcpgMode::hard_single) {
        double lo = 0.1;
        double hi = mode == FcpgMode::hard_fixed ? 0.3 : 0.1;
        std::vector<double> ml(radial->data.size()), mh(radial->data.size());
        for (std::size_t i = 0; i < radial->data.size(); ++i) {
            double r = radial->data[i];
            ml[i] = r <= lo ? 1.0 : 0.0;
            // single-threshold mode splits the spectrum into complementary bands
            mh[i] = (mode == FcpgMode::hard_single ? r > hi : r >= hi) ? 1.0 : 0.0;
        }
        return {tensor(radial->shape, std::move(ml)), tensor(radial->shape, std::move(mh))};
    }
    if (tau <= 0) throw ContractError("band_masks: tau must be > 0");
    auto m_low = sigmoid(mul_const(sub(theta_low, radial), 1.0 / tau));
    auto m_high = sigmoid(mul_const(sub(radial, theta_high), 1.0 / tau));
    return {m_low, m_high};
}

TensorPtr fcpg_forward(const TensorPtr& x, const FcpgParams& p) {
    if (p.mode == FcpgMode::disabled) return x;
    if (x->rank() != 3) throw ShapeError("fcpg_forward: need [C,H,W]");
    std::int64_t C = x->extent(0), H = x->extent(1), W = x->extent(2);
    if (C % p.groups != 0)
        throw ConfigError("fcpg: group count " + std::to_string(p.groups) +
                          " does not divide channels " + std::to_string(C));

    auto radial = radial_frequency_map(H, W);
    auto [th_lo, th_hi] = fcpg_thresholds(p);
    auto [m_low, m_high] = band_masks(radial, th_lo, th_hi, p.tau, p.mode);

    auto spectrum = fft2d(x);
    std::array<TensorPtr, 2> band_feat, prompts;
    const std::array<TensorPtr, 2> masks{m_low, m_high};
    for (int b = 0; b < 2; ++b) {
        // masks are symmetric under frequency negation, so the reconstruction
        // is real up to roundoff; ifft2d_real drops the residue.
        ComplexPair masked{scale_map(spectrum.re, masks[static_cast<std::size_t>(b)]),
                           scale_map(spectrum.im, masks[static_cast<std::size_t>(b)])};
        auto xb = ifft2d_real(masked);
        band_feat[static_cast<std::size_t>(b)] = xb;

        // W_b^global: pooled band magnitude through a two-layer projection
        auto pooled = reshape(spatial_mean(abs_t(xb)), {1, C});
        auto hgl = relu(linear(pooled, p.fc1_w[static_cast<std::size_t>(b)],
                               p.fc1_b[static_cast<std::size_t>(b)]));
        auto wg = reshape(sigmoid(linear(hgl, p.fc2_w[static_cast<std::size_t>(b)],
                                         p.fc2_b[static_cast<std::size_t>(b)])),
                          {C});
        // W_b^spatial: per-pixel attention from the band feature
        auto ws = reshape(sigmoid(conv2d(xb, p.spat_w[static_cast<std::size_t>(b)],
                                         p.spat_b[static_cast<std::size_t>(b)], 1, 1)),
                          {H, W});
        // triple product P_b = W_global ⊙ M_b ⊙ W_spatial
        auto pb = outer_cmap(wg, mul(masks[static_cast<std::size_t>(b)], ws));
        prompts[static_cast<std::size_t>(b)] = mul(xb, pb);
    }

    auto fused = conv2d(concat_channel({prompts[0], prompts[1]}), p.fuse_w, p.fuse_b, 1, 0);
    TensorPtr modulated = fused;
    if (p.spm_enabled) {
        auto gate = sigmoid(conv2d(group_mean(fused, p.groups), p.spm_w, p.spm_b, 1, 1));
        modulated = mul(fused, group_broadcast(gate, C));
    }
    return add(x, mul(p.alpha, modulated));
}

} // namespace unicd
