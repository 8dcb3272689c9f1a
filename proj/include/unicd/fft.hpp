#pragma once

#include "unicd/tensor.hpp"

namespace unicd {

// Spectrum of a real [C,H,W] map as two tensors sharing that shape.
struct ComplexPair {
    TensorPtr re;
    TensorPtr im;
};

// Unnormalized forward DFT per channel: F[k] = Σ_n x[n]·e^{-2πi·kn/N} (separable 2D).
ComplexPair fft2d(const TensorPtr& x);

// Inverse DFT with 1/(H·W) normalization, full complex output.
ComplexPair ifft2d(const ComplexPair& X);

// Real part of the inverse DFT — the band-reconstruction path.
TensorPtr ifft2d_real(const ComplexPair& X);

// Raw-buffer 2D transform used by the ops above and by test oracles:
// radix-2 for power-of-two extents, direct DFT otherwise.
void dft2d_raw(std::vector<double>& re, std::vector<double>& im, std::int64_t h, std::int64_t w,
               bool inverse, bool normalize_inverse);

} // namespace unicd
