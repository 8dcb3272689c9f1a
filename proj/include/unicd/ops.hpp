#pragma once

#include "unicd/tensor.hpp"

namespace unicd {

// ---- elementwise binary (same shape, or either side broadcast from size 1) ----
TensorPtr add(const TensorPtr& a, const TensorPtr& b);
TensorPtr sub(const TensorPtr& a, const TensorPtr& b);
TensorPtr mul(const TensorPtr& a, const TensorPtr& b);
TensorPtr div(const TensorPtr& a, const TensorPtr& b);

// ---- scalar-constant variants ----
TensorPtr add_const(const TensorPtr& a, double c);
TensorPtr mul_const(const TensorPtr& a, double c);
TensorPtr neg(const TensorPtr& a);

// ---- elementwise unary ----
TensorPtr relu(const TensorPtr& a);
TensorPtr sigmoid(const TensorPtr& a);
TensorPtr silu(const TensorPtr& a);
TensorPtr gelu(const TensorPtr& a);
TensorPtr tanh_t(const TensorPtr& a);
TensorPtr softplus(const TensorPtr& a);
TensorPtr abs_t(const TensorPtr& a);
TensorPtr exp_t(const TensorPtr& a);
TensorPtr sqrt_t(const TensorPtr& a);

// ---- reductions ----
TensorPtr sum_all(const TensorPtr& a);
TensorPtr mean_all(const TensorPtr& a);
// mean over a fixed boolean pixel mask (mask.size() == a.size()); empty mask -> scalar 0
TensorPtr masked_mean(const TensorPtr& a, const std::vector<char>& mask);
// dot with a constant coefficient vector, same length as a; returns scalar
TensorPtr dot_const(const TensorPtr& a, std::vector<double> coef);
// gather of flat elements: out[i] = a.data[idx[i]]
TensorPtr take_indices(const TensorPtr& a, std::vector<std::int64_t> idx);

// ---- linear algebra ----
TensorPtr matmul(const TensorPtr& a, const TensorPtr& b);           // [M,K]x[K,N]
// y = x·Wᵀ + b, x:[L,Din], w:[Dout,Din], b:[Dout] or nullptr
TensorPtr linear(const TensorPtr& x, const TensorPtr& w, const TensorPtr& b);

// ---- convolutions (single sample, CHW) ----
// x:[Cin,H,W], w:[Cout,Cin,kh,kw], b:[Cout] or nullptr
TensorPtr conv2d(const TensorPtr& x, const TensorPtr& w, const TensorPtr& b, int stride, int pad);
// x:[C,H,W], w:[C,kh,kw], b:[C] or nullptr; one filter per channel
TensorPtr depthwise_conv2d(const TensorPtr& x, const TensorPtr& w, const TensorPtr& b, int stride,
                           int pad);

// ---- normalization (current statistics, biased variance) ----
// x:[C,H,W]: per-channel over H·W
TensorPtr batch_norm2d(const TensorPtr& x, const TensorPtr& gamma, const TensorPtr& beta,
                       double eps);
// x:[L,D]: per-row over D; x:[C,H,W]: per-pixel over C
TensorPtr layer_norm(const TensorPtr& x, const TensorPtr& gamma, const TensorPtr& beta,
                     double eps);

// ---- shape / layout ----
TensorPtr reshape(const TensorPtr& a, std::vector<std::int64_t> shape);
TensorPtr concat_channel(const std::vector<TensorPtr>& xs);          // [Ci,H,W] -> [ΣCi,H,W]
TensorPtr concat_width(const TensorPtr& a, const TensorPtr& b);      // -> [C,H,Wa+Wb]
TensorPtr crop_width(const TensorPtr& a, std::int64_t w0, std::int64_t w1);
TensorPtr crop_channel(const TensorPtr& a, std::int64_t c0, std::int64_t c1);
TensorPtr add_n(const std::vector<TensorPtr>& xs);                   // fixed-order elementwise sum

// ---- spatial / channel helpers (x:[C,H,W]) ----
TensorPtr bilinear_upsample(const TensorPtr& x, std::int64_t out_h, std::int64_t out_w);
TensorPtr spatial_mean(const TensorPtr& x);                          // -> [C]
TensorPtr channel_sum(const TensorPtr& x);                           // -> [H,W]
TensorPtr scale_channels(const TensorPtr& x, const TensorPtr& s);    // s:[C]
TensorPtr scale_map(const TensorPtr& x, const TensorPtr& m);         // m:[H,W]
TensorPtr outer_cmap(const TensorPtr& s, const TensorPtr& m);        // s:[C],m:[H,W] -> [C,H,W]
TensorPtr group_mean(const TensorPtr& x, std::int64_t groups);       // -> [g,H,W]
TensorPtr group_broadcast(const TensorPtr& x, std::int64_t channels); // [g,H,W] -> [C,H,W]
TensorPtr add_bias_channels(const TensorPtr& x, const TensorPtr& b); // b:[C]
TensorPtr softmax_channels(const TensorPtr& x);                      // softmax over C per pixel

// ---- stochastic regularizers (counter-based PRNG; deterministic given the key) ----
struct DropKey {
    std::uint64_t seed = 0;
    std::int64_t step = 0;
    std::int64_t layer = 0;
};
TensorPtr dropout(const TensorPtr& x, double p, const DropKey& key, bool training);
TensorPtr drop_path(const TensorPtr& x, double p, const DropKey& key, bool training);

// ---- fused losses ----
// logits:[K,H,W], labels row-major length H·W with values in [0,K) or ignore_index.
// class_weights empty = uniform; otherwise length K, applied per target class.
TensorPtr cross_entropy(const TensorPtr& logits, const std::vector<int>& labels,
                        const std::vector<double>& class_weights, int ignore_index);

} // namespace unicd
