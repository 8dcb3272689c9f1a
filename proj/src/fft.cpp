#include "unicd/fft.hpp"

#include <cmath>

namespace unicd {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

bool is_pow2(std::int64_t n) { return n > 0 && (n & (n - 1)) == 0; }

// In-place radix-2 Cooley-Tukey over a strided line.
void fft_line_pow2(double* re, double* im, std::int64_t n, std::int64_t stride, bool inverse) {
    // bit reversal
    for (std::int64_t i = 1, j = 0; i < n; ++i) {
        std::int64_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) {
            std::swap(re[i * stride], re[j * stride]);
            std::swap(im[i * stride], im[j * stride]);
        }
    }
    for (std::int64_t len = 2; len <= n; len <<= 1) {
        double ang = kTwoPi / static_cast<double>(len) * (inverse ? 1.0 : -1.0);
        double wr = std::cos(ang), wi = std::sin(ang);
        for (std::int64_t i = 0; i < n; i += len) {
            double cr = 1.0, ci = 0.0;
            for (std::int64_t k = 0; k < len / 2; ++k) {
                std::int64_t a = (i + k) * stride, b = (i + k + len / 2) * stride;
                double ur = re[a], ui = im[a];
                double vr = re[b] * cr - im[b] * ci;
                double vi = re[b] * ci + im[b] * cr;
                re[a] = ur + vr;
                im[a] = ui + vi;
                re[b] = ur - vr;
                im[b] = ui - vi;
                double ncr = cr * wr - ci * wi;
                ci = cr * wi + ci * wr;
                cr = ncr;
            }
        }
    }
}

void dft_line_direct(double* re, double* im, std::int64_t n, std::int64_t stride, bool inverse) {
    std::vector<double> or_(static_cast<std::size_t>(n)), oi(static_cast<std::size_t>(n));
    double sign = inverse ? 1.0 : -1.0;
    for (std::int64_t k = 0; k < n; ++k) {
        double sr = 0, si = 0;
        for (std::int64_t t = 0; t < n; ++t) {
            double ang = sign * kTwoPi * static_cast<double>(k) * static_cast<double>(t) /
                         static_cast<double>(n);
            double c = std::cos(ang), s = std::sin(ang);
            double xr = re[t * stride], xi = im[t * stride];
            sr += xr * c - xi * s;
            si += xr * s + xi * c;
        }
        or_[static_cast<std::size_t>(k)] = sr;
        oi[static_cast<std::size_t>(k)] = si;
    }
    for (std::int64_t k = 0; k < n; ++k) {
        re[k * stride] = or_[static_cast<std::size_t>(k)];
        im[k * stride] = oi[static_cast<std::size_t>(k)];
    }
}

void transform_line(double* re, double* im, std::int64_t n, std::int64_t stride, bool inverse) {
    if (n == 1) return;
    if (is_pow2(n))
        fft_line_pow2(re, im, n, stride, inverse);
    else
        dft_line_direct(re, im, n, stride, inverse);
}

} // namespace

void dft2d_raw(std::vector<double>& re, std::vector<double>& im, std::int64_t h, std::int64_t w,
               bool inverse, bool normalize_inverse) {
    if (static_cast<std::int64_t>(re.size()) != h * w || re.size() != im.size())
        throw ShapeError("dft2d_raw: buffer size mismatch");
    for (std::int64_t y = 0; y < h; ++y) transform_line(&re[static_cast<std::size_t>(y * w)],
                                                        &im[static_cast<std::size_t>(y * w)], w, 1,
                                                        inverse);
    for (std::int64_t x = 0; x < w; ++x)
        transform_line(&re[static_cast<std::size_t>(x)], &im[static_cast<std::size_t>(x)], h, w,
                       inverse);
    if (inverse && normalize_inverse) {
        double inv = 1.0 / static_cast<double>(h * w);
        for (double& v : re) v *= inv;
        for (double& v : im) v *= inv;
    }
}

namespace {

// Per-channel transform of a [C,H,W] buffer pair.
void dft_channels(std::vector<double>& re, std::vector<double>& im, std::int64_t c, std::int64_t h,
                  std::int64_t w, bool inverse, bool normalize) {
    std::int64_t hw = h * w;
    for (std::int64_t ch = 0; ch < c; ++ch) {
        std::vector<double> r(re.begin() + static_cast<std::ptrdiff_t>(ch * hw),
                              re.begin() + static_cast<std::ptrdiff_t>((ch + 1) * hw));
        std::vector<double> i(im.begin() + static_cast<std::ptrdiff_t>(ch * hw),
                              im.begin() + static_cast<std::ptrdiff_t>((ch + 1) * hw));
        dft2d_raw(r, i, h, w, inverse, normalize);
        std::copy(r.begin(), r.end(), re.begin() + static_cast<std::ptrdiff_t>(ch * hw));
        std::copy(i.begin(), i.end(), im.begin() + static_cast<std::ptrdiff_t>(ch * hw));
    }
}

} // namespace

ComplexPair fft2d(const TensorPtr& x) {
    if (x->rank() != 3) throw ShapeError("fft2d: need [C,H,W], got " + shape_str(x->shape));
    std::int64_t C = x->extent(0), H = x->extent(1), W = x->extent(2);
    std::vector<double> re = x->data, im(x->data.size(), 0.0);
    dft_channels(re, im, C, H, W, false, false);

    // Each spectrum node back-propagates its own grad through the adjoint
    // transform: dx = Re(unnormalized inverse DFT of the complex grad).
    auto re_node = make_node("fft2d_re", x->shape, std::move(re), {x}, [C, H, W](Tensor& self) {
        auto& in = *self.inputs[0];
        if (!in.requires_grad) return;
        in.ensure_grad();
        std::vector<double> gr = self.grad, gi(self.grad.size(), 0.0);
        dft_channels(gr, gi, C, H, W, true, false);
        for (std::size_t i = 0; i < gr.size(); ++i) in.grad[i] += gr[i];
    });
    auto im_node = make_node("fft2d_im", x->shape, std::move(im), {x}, [C, H, W](Tensor& self) {
        auto& in = *self.inputs[0];
        if (!in.requires_grad) return;
        in.ensure_grad();
        std::vector<double> gr(self.grad.size(), 0.0), gi = self.grad;
        dft_channels(gr, gi, C, H, W, true, false);
        for (std::size_t i = 0; i < gr.size(); ++i) in.grad[i] += gr[i];
    });
    return {re_node, im_node};
}

namespace {

void check_pair(const ComplexPair& X, const char* who) {
    if (!X.re || !X.im || X.re->rank() != 3 || X.re->shape != X.im->shape)
        throw ShapeError(std::string(who) + ": re/im must be matching [C,H,W] tensors");
}

} // namespace

ComplexPair ifft2d(const ComplexPair& X) {
    check_pair(X, "ifft2d");
    std::int64_t C = X.re->extent(0), H = X.re->extent(1), W = X.re->extent(2);
    std::vector<double> re = X.re->data, im = X.im->data;
    dft_channels(re, im, C, H, W, true, true);
    double invn = 1.0 / static_cast<double>(H * W);

    // y = (1/N)·inv(X): d(re,im) = (1/N)·fwd(grad pair), taken per output node.
    auto re_node = make_node("ifft2d_re", X.re->shape, std::move(re), {X.re, X.im},
                             [C, H, W, invn](Tensor& self) {
                                 std::vector<double> gr = self.grad, gi(self.grad.size(), 0.0);
                                 dft_channels(gr, gi, C, H, W, false, false);
                                 auto& ire = *self.inputs[0];
                                 auto& iim = *self.inputs[1];
                                 if (ire.requires_grad) {
                                     ire.ensure_grad();
                                     for (std::size_t i = 0; i < gr.size(); ++i)
                                         ire.grad[i] += invn * gr[i];
                                 }
                                 if (iim.requires_grad) {
                                     iim.ensure_grad();
                                     for (std::size_t i = 0; i < gi.size(); ++i)
                                         iim.grad[i] += invn * gi[i];
                                 }
                             });
    auto im_node = make_node("ifft2d_im", X.re->shape, std::move(im), {X.re, X.im},
                             [C, H, W, invn](Tensor& self) {
                                 std::vector<double> gr(self.grad.size(), 0.0), gi = self.grad;
                                 dft_channels(gr, gi, C, H, W, false, false);
                                 auto& ire = *self.inputs[0];
                                 auto& iim = *self.inputs[1];
                                 if (ire.requires_grad) {
                                     ire.ensure_grad();
                                     for (std::size_t i = 0; i < gr.size(); ++i)
                                         ire.grad[i] += invn * gr[i];
                                 }
                                 if (iim.requires_grad) {
                                     iim.ensure_grad();
                                     for (std::size_t i = 0; i < gi.size(); ++i)
                                         iim.grad[i] += invn * gi[i];
                                 }
                             });
    return {re_node, im_node};
}

TensorPtr ifft2d_real(const ComplexPair& X) {
    check_pair(X, "ifft2d_real");
    std::int64_t C = X.re->extent(0), H = X.re->extent(1), W = X.re->extent(2);
    std::vector<double> re = X.re->data, im = X.im->data;
    dft_channels(re, im, C, H, W, true, true);
    double invn = 1.0 / static_cast<double>(H * W);
    return make_node("ifft2d_real", X.re->shape, std::move(re), {X.re, X.im},
                     [C, H, W, invn](Tensor& self) {
                         std::vector<double> gr = self.grad, gi(self.grad.size(), 0.0);
                         dft_channels(gr, gi, C, H, W, false, false);
                         auto& ire = *self.inputs[0];
                         auto& iim = *self.inputs[1];
                         if (ire.requires_grad) {
                             ire.ensure_grad();
                             for (std::size_t i = 0; i < gr.size(); ++i)
                                 ire.grad[i] += invn * gr[i];
                         }
                         if (iim.requires_grad) {
                             iim.ensure_grad();
                             for (std::size_t i = 0; i < gi.size(); ++i)
                                 iim.grad[i] += invn * gi[i];
                         }
                     });
}

} // namespace unicd
