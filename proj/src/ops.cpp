#include "unicd/ops.hpp"

#include "unicd/gemm.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>

namespace unicd {

namespace {

constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

void require(bool ok, const std::string& msg) {
    if (!ok) throw ShapeError(msg);
}

double sigmoid_s(double x) {
    return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

double softplus_s(double x) {
    return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

// Elementwise binary with size-1 broadcast on either side.
template <class F, class B>
TensorPtr binary_op(const char* name, const TensorPtr& a, const TensorPtr& b, F fwd, B bwd) {
    const bool a1 = a->size() == 1, b1 = b->size() == 1;
    require(a1 || b1 || a->shape == b->shape,
            std::string(name) + ": incompatible shapes " + shape_str(a->shape) + " vs " +
                shape_str(b->shape));
    const auto& big = (a1 && !b1) ? b : a;
    std::int64_t n = big->size();
    std::vector<double> out(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) {
        double av = a->data[a1 ? 0 : static_cast<std::size_t>(i)];
        double bv = b->data[b1 ? 0 : static_cast<std::size_t>(i)];
        out[static_cast<std::size_t>(i)] = fwd(av, bv);
    }
    return make_node(name, big->shape, std::move(out), {a, b}, [a1, b1, bwd](Tensor& self) {
        auto& ia = *self.inputs[0];
        auto& ib = *self.inputs[1];
        const bool ga = ia.requires_grad, gb = ib.requires_grad;
        if (ga) ia.ensure_grad();
        if (gb) ib.ensure_grad();
        std::int64_t n = self.size();
        for (std::int64_t i = 0; i < n; ++i) {
            std::size_t iA = a1 ? 0 : static_cast<std::size_t>(i);
            std::size_t iB = b1 ? 0 : static_cast<std::size_t>(i);
            double g = self.grad[static_cast<std::size_t>(i)];
            double da = 0, db = 0;
            bwd(ia.data[iA], ib.data[iB], g, da, db);
            if (ga) ia.grad[iA] += da;
            if (gb) ib.grad[iB] += db;
        }
    });
}

template <class F, class D>
TensorPtr unary_op(const char* name, const TensorPtr& a, F fwd, D dfdx) {
    std::vector<double> out(a->data.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(a->data[i]);
    return make_node(name, a->shape, std::move(out), {a}, [dfdx](Tensor& self) {
        auto& in = *self.inputs[0];
        if (!in.requires_grad) return;
        in.ensure_grad();
        for (std::size_t i = 0; i < in.data.size(); ++i)
            in.grad[i] += self.grad[i] * dfdx(in.data[i], self.data[i]);
    });
}

} // namespace

TensorPtr add(const TensorPtr& a, const TensorPtr& b) {
    return binary_op(
        "add", a, b, [](double x, double y) { return x + y; },
        [](double, double, double g, double& da, double& db) {
            da = g;
            db = g;
        });
}

TensorPtr sub(const TensorPtr& a, const TensorPtr& b) {
    return binary_op(
        "sub", a, b, [](double x, double y) { return x - y; },
        [](double, double, double g, double& da, double& db) {
            da = g;
            db = -g;
        });
}

TensorPtr mul(const TensorPtr& a, const TensorPtr& b) {
    return binary_op(
        "mul", a, b, [](double x, double y) { return x * y; },
        [](double x, double y, double g, double& da, double& db) {
            da = g * y;
            db = g * x;
        });
}

TensorPtr div(const TensorPtr& a, const TensorPtr& b) {
    return binary_op(
        "div", a, b, [](double x, double y) { return x / y; },
        [](double x, double y, double g, double& da, double& db) {
            da = g / y;
            db = -g * x / (y * y);
        });
}

TensorPtr add_const(const TensorPtr& a, double c) {
    return unary_op(
        "add_const", a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

TensorPtr mul_const(const TensorPtr& a, double c) {
    return unary_op(
        "mul_const", a, [c](double x) { return x * c; }, [c](double, double) { return c; });
}

TensorPtr neg(const TensorPtr& a) { return mul_const(a, -1.0); }

TensorPtr relu(const TensorPtr& a) {
    return unary_op(
        "relu", a, [](double x) { return x > 0 ? x : 0.0; },
        [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

TensorPtr sigmoid(const TensorPtr& a) {
    return unary_op(
        "sigmoid", a, [](double x) { return sigmoid_s(x); },
        [](double, double y) { return y * (1.0 - y); });
}

TensorPtr silu(const TensorPtr& a) {
    return unary_op(
        "silu", a, [](double x) { return x * sigmoid_s(x); },
        [](double x, double) {
            double s = sigmoid_s(x);
            return s * (1.0 + x * (1.0 - s));
        });
}

TensorPtr gelu(const TensorPtr& a) {
    return unary_op(
        "gelu", a, [](double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); },
        [](double x, double) {
            return 0.5 * (1.0 + std::erf(x * kInvSqrt2)) +
                   x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
        });
}

TensorPtr tanh_t(const TensorPtr& a) {
    return unary_op(
        "tanh", a, [](double x) { return std::tanh(x); },
        [](double, double y) { return 1.0 - y * y; });
}

TensorPtr softplus(const TensorPtr& a) {
    return unary_op(
        "softplus", a, [](double x) { return softplus_s(x); },
        [](double x, double) { return sigmoid_s(x); });
}

TensorPtr abs_t(const TensorPtr& a) {
    return unary_op(
        "abs", a, [](double x) { return std::fabs(x); },
        [](double x, double) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}

TensorPtr exp_t(const TensorPtr& a) {
    return unary_op(
        "exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

TensorPtr sqrt_t(const TensorPtr& a) {
    return unary_op(
        "sqrt", a, [](double x) { return std::sqrt(x); },
        [](double, double y) { return 0.5 / y; });
}

TensorPtr sum_all(const TensorPtr& a) {
    double s = 0;
    for (double v : a->data) s += v;
    return make_node("sum_all", {1}, {s}, {a}, [](Tensor& self) {
        auto& in = *self.inputs[0];
        if (!in.requires_grad) return;
        in.ensure_grad();
        for (double& g : in.grad) g += self.grad[0];
    });
}

TensorPtr mean_all(const TensorPtr& a) {
    double s = 0;
    for (double v : a->data) s += v;
    double inv = 1.0 / static_cast<double>(a->size());
    return make_node("mean_all", {1}, {s * inv}, {a}, [inv](Tensor& self) {
        auto& in = *self.inputs[0];
        if (!in.requires_grad) return;
        in.ensure_grad();
        for (double& g : in.grad) g += self.grad[0] * inv;
    });
}

TensorPtr masked_mean(const TensorPtr& a, const std::vector<char>& mask) {
    require(static_cast<std::int64_t>(mask.size()) == a->size(),
            "masked_mean: mask length mismatch");
    std::int64_t n = 0;
    double s = 0;
    for (std::size_t i = 0; i < mask.size(); ++i)
        if (mask[i]) {
            s += a->data[i];
            ++n;
        }
    if (n == 0) return scalar(0.0);
    double inv = 1.0 / static_cast<double>(n);
    return make_node("masked_mean", {1}, {s * inv}, {a}, [mask, inv](Tensor& self) {
        auto& in = *self.inputs[0];
        if (!in.requires_grad) return;
        in.ensure_grad();
        for (std::size_t i = 0; i < mask.size(); ++i)
            if (mask[i]) in.grad[i] += self.grad[0] * inv;
    });
}

TensorPtr dot_const(const TensorPtr& a, std::vector<double> coef) {
    require(static_cast<std::int64_t>(coef.size()) == a->size(),
            "dot_const: coefficient length mismatch");
    double s = 0;
    for (std::size_t i = 0; i < coef.size(); ++i) s += a->data[i] * coef[i];
    return make_node("dot_const", {1}, {s}, {a}, [coef = std::move(coef)](Tensor& self) {
        auto& in = *self.inputs[0];
        if (!in.requires_grad) return;
        in.ensure_grad();
        for (std::size_t i = 0; i < coef.size(); ++i) in.grad[i] += self.grad[0] * coef[i];
    });
}

TensorPtr take_indices(const TensorPtr& a, std::vector<std::int64_t> idx) {
    std::vector<double> out(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        require(idx[i] >= 0 && idx[i] < a->size(), "take_indices: index out of range");
        out[i] = a->data[static_cast<std::size_t>(idx[i])];
    }
    std::int64_t n = static_cast<std::int64_t>(idx.size());
    return make_node("take_indices", {n}, std::move(out), {a}, [idx = std::move(idx)](Tensor& self) {
        auto& in = *self.inputs[0];
        if (!in.requires_grad) return;
        in.ensure_grad();
        for (std::size_t i = 0; i < idx.size(); ++i)
            in.grad[static_cast<std::size_t>(idx[i])] += self.grad[i];
    });
}

TensorPtr matmul(const TensorPtr& a, const TensorPtr& b) {
    require(a->rank() == 2 && b->rank() == 2 && a->extent(1) == b->extent(0),
            "matmul: need [M,K]x[K,N], got " + shape_str(a->shape) + " x " + shape_str(b->shape));
    std::int64_t m = a->extent(0), k = a->extent(1), n = b->extent(1);
    std::vector<double> out(static_cast<std::size_t>(m * n));
    gemm_nn(m, n, k, a->data.data(), b->data.data(), out.data());
    return make_node("matmul", {m, n}, std::move(out), {a, b}, [m, k, n](Tensor& self) {
        auto& ia = *self.inputs[0];
        auto& ib = *self.inputs[1];
        if (ia.requires_grad) {
            ia.ensure_grad();
            gemm_nt(m, k, n, self.grad.data(), ib.data.data(), ia.grad.data(), true);
        }
        if (ib.requires_grad) {
            ib.ensure_grad();
            gemm_tn(k, n, m, ia.data.data(), self.grad.data(), ib.grad.data(), true);
        }
    });
}

TensorPtr linear(const TensorPtr& x, const TensorPtr& w, const TensorPtr& b) {
    require(x->rank() == 2 && w->rank() == 2 && x->extent(1) == w->extent(1),
            "linear: need x[L,Din], w[Dout,Din], got " + shape_str(x->shape) + ", " +
                shape_str(w->shape));
    std::int64_t L = x->extent(0), din = x->extent(1), dout = w->extent(0);
    if (b) require(b->rank() == 1 && b->extent(0) == dout, "linear: bias shape mismatch");
    std::vector<double> out(static_cast<std::size_t>(L * dout));
    gemm_nt(L, dout, din, x->data.data(), w->data.data(), out.data());
    if (b)
        for (std::int64_t i = 0; i < L; ++i)
            for (std::int64_t j = 0; j < dout; ++j)
                out[static_cast<std::size_t>(i * dout + j)] += b->data[static_cast<std::size_t>(j)];
    std::vector<TensorPtr> ins{x, w};
    if (b) ins.push_back(b);
    return make_node("linear", {L, dout}, std::move(out), std::move(ins),
                     [L, din, dout](Tensor& self) {
                         auto& ix = *self.inputs[0];
                         auto& iw = *self.inputs[1];
                         if (ix.requires_grad) {
                             ix.ensure_grad();
                             gemm_nn(L, din, dout, self.grad.data(), iw.data.data(),
                                     ix.grad.data(), true);
                         }
                         if (iw.requires_grad) {
                             iw.ensure_grad();
                             gemm_tn(dout, din, L, self.grad.data(), ix.data.data(),
                                     iw.grad.data(), true);
                         }
                         if (self.inputs.size() > 2 && self.inputs[2]->requires_grad) {
                             auto& ibias = *self.inputs[2];
                             ibias.ensure_grad();
                             for (std::int64_t i = 0; i < L; ++i)
                                 for (std::int64_t j = 0; j < dout; ++j)
                                     ibias.grad[static_cast<std::size_t>(j)] +=
                                         self.grad[static_cast<std::size_t>(i * dout + j)];
                         }
                     });
}

namespace {

struct ConvDims {
    std::int64_t cin, h, w, cout, kh, kw, ho, wo;
    int stride, pad;
};

// colT layout [K, Ho*Wo], K = Cin*kh*kw: the weight matrix [Cout,K] multiplies it directly.
void im2col(const double* x, const ConvDims& d, double* colT) {
    std::int64_t spatial = d.ho * d.wo;
    for (std::int64_t c = 0; c < d.cin; ++c) {
        for (std::int64_t ki = 0; ki < d.kh; ++ki) {
            for (std::int64_t kj = 0; kj < d.kw; ++kj) {
                double* row = colT + ((c * d.kh + ki) * d.kw + kj) * spatial;
                for (std::int64_t oy = 0; oy < d.ho; ++oy) {
                    std::int64_t iy = oy * d.stride + ki - d.pad;
                    for (std::int64_t ox = 0; ox < d.wo; ++ox) {
                        std::int64_t ix = ox * d.stride + kj - d.pad;
                        row[oy * d.wo + ox] =
                            (iy >= 0 && iy < d.h && ix >= 0 && ix < d.w)
                                ? x[(c * d.h + iy) * d.w + ix]
                                : 0.0;
                    }
                }
            }
        }
    }
}

void col2im_add(const double* colT, const ConvDims& d, double* gx) {
    std::int64_t spatial = d.ho * d.wo;
    for (std::int64_t c = 0; c < d.cin; ++c) {
        for (std::int64_t ki = 0; ki < d.kh; ++ki) {
            for (std::int64_t kj = 0; kj < d.kw; ++kj) {
                const double* row = colT + ((c * d.kh + ki) * d.kw + kj) * spatial;
                for (std::int64_t oy = 0; oy < d.ho; ++oy) {
                    std::int64_t iy = oy * d.stride + ki - d.pad;
                    if (iy < 0 || iy >= d.h) continue;
                    for (std::int64_t ox = 0; ox < d.wo; ++ox) {
                        std::int64_t ix = ox * d.stride + kj - d.pad;
                        if (ix < 0 || ix >= d.w) continue;
                        gx[(c * d.h + iy) * d.w + ix] += row[oy * d.wo + ox];
                    }
                }
            }
        }
    }
}

} // namespace

TensorPtr conv2d(const TensorPtr& x, const TensorPtr& w, const TensorPtr& b, int stride, int pad) {
    require(x->rank() == 3 && w->rank() == 4, "conv2d: need x[C,H,W], w[Cout,Cin,kh,kw]");
    require(x->extent(0) == w->extent(1), "conv2d: channel mismatch " + shape_str(x->shape) +
                                              " vs " + shape_str(w->shape));
    require(stride >= 1 && pad >= 0, "conv2d: bad stride/pad");
    ConvDims d;
    d.cin = x->extent(0);
    d.h = x->extent(1);
    d.w = x->extent(2);
    d.cout = w->extent(0);
    d.kh = w->extent(2);
    d.kw = w->extent(3);
    d.stride = stride;
    d.pad = pad;
    d.ho = (d.h + 2 * pad - d.kh) / stride + 1;
    d.wo = (d.w + 2 * pad - d.kw) / stride + 1;
    require(d.ho >= 1 && d.wo >= 1, "conv2d: output would be empty");
    if (b) require(b->rank() == 1 && b->extent(0) == d.cout, "conv2d: bias shape mismatch");

    std::int64_t K = d.cin * d.kh * d.kw, spatial = d.ho * d.wo;
    std::vector<double> colT(static_cast<std::size_t>(K * spatial));
    im2col(x->data.data(), d, colT.data());
    std::vector<double> out(static_cast<std::size_t>(d.cout * spatial));
    gemm_nn(d.cout, spatial, K, w->data.data(), colT.data(), out.data());
    if (b)
        for (std::int64_t co = 0; co < d.cout; ++co)
            for (std::int64_t o = 0; o < spatial; ++o)
                out[static_cast<std::size_t>(co * spatial + o)] +=
                    b->data[static_cast<std::size_t>(co)];

    std::vector<TensorPtr> ins{x, w};
    if (b) ins.push_back(b);
    return make_node(
        "conv2d", {d.cout, d.ho, d.wo}, std::move(out), std::move(ins), [d, K, spatial](Tensor& self) {
            auto& ix = *self.inputs[0];
            auto& iw = *self.inputs[1];
            // im2col is recomputed here instead of saved: keeps live graphs small.
            std::vector<double> colT(static_cast<std::size_t>(K * spatial));
            im2col(ix.data.data(), d, colT.data());
            if (iw.requires_grad) {
                iw.ensure_grad();
                gemm_nt(d.cout, K, spatial, self.grad.data(), colT.data(), iw.grad.data(), true);
            }
            if (ix.requires_grad) {
                ix.ensure_grad();
                std::vector<double> gcol(static_cast<std::size_t>(K * spatial));
                gemm_tn(K, spatial, d.cout, iw.data.data(), self.grad.data(), gcol.data());
                col2im_add(gcol.data(), d, ix.grad.data());
            }
            if (self.inputs.size() > 2 && self.inputs[2]->requires_grad) {
                auto& ibias = *self.inputs[2];
                ibias.ensure_grad();
                for (std::int64_t co = 0; co < d.cout; ++co) {
                    double s = 0;
                    for (std::int64_t o = 0; o < spatial; ++o)
                        s += self.grad[static_cast<std::size_t>(co * spatial + o)];
                    ibias.grad[static_cast<std::size_t>(co)] += s;
                }
            }
        });
}

TensorPtr depthwise_conv2d(const TensorPtr& x, const TensorPtr& w, const TensorPtr& b, int stride,
                           int pad) {
    require(x->rank() == 3 && w->rank() == 3, "depthwise_conv2d: need x[C,H,W], w[C,kh,kw]");
    require(x->extent(0) == w->extent(0), "depthwise_conv2d: channel mismatch");
    std::int64_t C = x->extent(0), H = x->extent(1), W = x->extent(2);
    std::int64_t kh = w->extent(1), kw = w->extent(2);
    std::int64_t ho = (H + 2 * pad - kh) / stride + 1;
    std::int64_t wo = (W + 2 * pad - kw) / stride + 1;
    require(ho >= 1 && wo >= 1, "depthwise_conv2d: output would be empty");
    if (b) require(b->rank() == 1 && b->extent(0) == C, "depthwise_conv2d: bias shape mismatch");

    std::vector<double> out(static_cast<std::size_t>(C * ho * wo), 0.0);
    for (std::int64_t c = 0; c < C; ++c)
        for (std::int64_t oy = 0; oy < ho; ++oy)
            for (std::int64_t ox = 0; ox < wo; ++ox) {
                double acc = b ? b->data[static_cast<std::size_t>(c)] : 0.0;
                for (std::int64_t ki = 0; ki < kh; ++ki) {
                    std::int64_t iy = oy * stride + ki - pad;
                    if (iy < 0 || iy >= H) continue;
                    for (std::int64_t kj = 0; kj < kw; ++kj) {
                        std::int64_t ix = ox * stride + kj - pad;
                        if (ix < 0 || ix >= W) continue;
                        acc += x->data[static_cast<std::size_t>((c * H + iy) * W + ix)] *
                               w->data[static_cast<std::size_t>((c * kh + ki) * kw + kj)];
                    }
                }
                out[static_cast<std::size_t>((c * ho + oy) * wo + ox)] = acc;
            }

    std::vector<TensorPtr> ins{x, w};
    if (b) ins.push_back(b);
    return make_node("depthwise_conv2d", {C, ho, wo}, std::move(out), std::move(ins),
                     [C, H, W, kh, kw, ho, wo, stride, pad](Tensor& self) {
                         auto& ix = *self.inputs[0];
                         auto& iw = *self.inputs[1];
                         bool gx = ix.requires_grad, gw = iw.requires_grad;
                         bool gb = self.inputs.size() > 2 && self.inputs[2]->requires_grad;
                         if (gx) ix.ensure_grad();
                         if (gw) iw.ensure_grad();
                         if (gb) self.inputs[2]->ensure_grad();
                         for (std::int64_t c = 0; c < C; ++c)
                             for (std::int64_t oy = 0; oy < ho; ++oy)
                                 for (std::int64_t ox = 0; ox < wo; ++ox) {
                                     double g = self.grad[static_cast<std::size_t>(
                                         (c * ho + oy) * wo + ox)];
                                     if (gb) self.inputs[2]->grad[static_cast<std::size_t>(c)] += g;
                                     for (std::int64_t ki = 0; ki < kh; ++ki) {
                                         std::int64_t iy = oy * stride + ki - pad;
                                         if (iy < 0 || iy >= H) continue;
                                         for (std::int64_t kj = 0; kj < kw; ++kj) {
                                             std::int64_t ix2 = ox * stride + kj - pad;
                                             if (ix2 < 0 || ix2 >= W) continue;
                                             std::size_t xi = static_cast<std::size_t>(
                                                 (c * H + iy) * W + ix2);
                                             std::size_t wi = static_cast<std::size_t>(
                                                 (c * kh + ki) * kw + kj);
                                             if (gx) ix.grad[xi] += g * iw.data[wi];
                                             if (gw) iw.grad[wi] += g * ix.data[xi];
                                         }
                                     }
                                 }
                     });
}

namespace {

// Shared normalization backward over index sets: given per-set mean/invstd and
// affine gamma, computes dx, dgamma, dbeta. set(i) enumerates flat indices.
struct NormSet {
    std::vector<std::size_t> idx;
    double mean = 0, inv = 0;
};

TensorPtr norm_impl(const char* name, const TensorPtr& x, const TensorPtr& gamma,
                    const TensorPtr& beta, double eps, std::vector<NormSet> sets,
                    std::vector<std::size_t> affine_of /*flat index -> gamma index*/) {
    if (eps <= 0) throw ContractError(std::string(name) + ": eps must be > 0");
    std::vector<double> out(x->data.size());
    for (auto& s : sets) {
        double m = 0;
        for (auto i : s.idx) m += x->data[i];
        m /= static_cast<double>(s.idx.size());
        double v = 0;
        for (auto i : s.idx) {
            double d = x->data[i] - m;
            v += d * d;
        }
        v /= static_cast<double>(s.idx.size());
        s.mean = m;
        s.inv = 1.0 / std::sqrt(v + eps);
        for (auto i : s.idx) {
            double xh = (x->data[i] - m) * s.inv;
            out[i] = gamma->data[affine_of[i]] * xh + beta->data[affine_of[i]];
        }
    }
    return make_node(name, x->shape, std::move(out), {x, gamma, beta},
                     [sets = std::move(sets), affine_of = std::move(affine_of)](Tensor& self) {
                         auto& ix = *self.inputs[0];
                         auto& ig = *self.inputs[1];
                         auto& ib = *self.inputs[2];
                         bool wx = ix.requires_grad, wg = ig.requires_grad, wb = ib.requires_grad;
                         if (wx) ix.ensure_grad();
                         if (wg) ig.ensure_grad();
                         if (wb) ib.ensure_grad();
                         for (const auto& s : sets) {
                             double n = static_cast<double>(s.idx.size());
                             double mean_dxh = 0, mean_dxh_xh = 0;
                             for (auto i : s.idx) {
                                 double xh = (ix.data[i] - s.mean) * s.inv;
                                 double g = self.grad[i];
                                 if (wb) ib.grad[affine_of[i]] += g;
                                 if (wg) ig.grad[affine_of[i]] += g * xh;
                                 double dxh = g * ig.data[affine_of[i]];
                                 mean_dxh += dxh;
                                 mean_dxh_xh += dxh * xh;
                             }
                             if (!wx) continue;
                             mean_dxh /= n;
                             mean_dxh_xh /= n;
                             for (auto i : s.idx) {
                                 double xh = (ix.data[i] - s.mean) * s.inv;
                                 double dxh = self.grad[i] * ig.data[affine_of[i]];
                                 ix.grad[i] += s.inv * (dxh - mean_dxh - xh * mean_dxh_xh);
                             }
                         }
                     });
}

} // namespace

TensorPtr batch_norm2d(const TensorPtr& x, const TensorPtr& gamma, const TensorPtr& beta,
                       double eps) {
    require(x->rank() == 3, "batch_norm2d: need [C,H,W]");
    std::int64_t C = x->extent(0), hw = x->extent(1) * x->extent(2);
    require(gamma->size() == C && beta->size() == C, "batch_norm2d: affine shape mismatch");
    std::vector<NormSet> sets(static_cast<std::size_t>(C));
    std::vector<std::size_t> aff(x->data.size());
    for (std::int64_t c = 0; c < C; ++c) {
        auto& s = sets[static_cast<std::size_t>(c)];
        s.idx.resize(static_cast<std::size_t>(hw));
        for (std::int64_t i = 0; i < hw; ++i) {
            std::size_t fi = static_cast<std::size_t>(c * hw + i);
            s.idx[static_cast<std::size_t>(i)] = fi;
            aff[fi] = static_cast<std::size_t>(c);
        }
    }
    return norm_impl("batch_norm2d", x, gamma, beta, eps, std::move(sets), std::move(aff));
}

TensorPtr layer_norm(const TensorPtr& x, const TensorPtr& gamma, const TensorPtr& beta,
                     double eps) {
    if (x->rank() == 2) {
        std::int64_t L = x->extent(0), D = x->extent(1);
        require(gamma->size() == D && beta->size() == D, "layer_norm: affine shape mismatch");
        std::vector<NormSet> sets(static_cast<std::size_t>(L));
        std::vector<std::size_t> aff(x->data.size());
        for (std::int64_t l = 0; l < L; ++l) {
            auto& s = sets[static_cast<std::size_t>(l)];
            s.idx.resize(static_cast<std::size_t>(D));
            for (std::int64_t dI = 0; dI < D; ++dI) {
                std::size_t fi = static_cast<std::size_t>(l * D + dI);
                s.idx[static_cast<std::size_t>(dI)] = fi;
                aff[fi] = static_cast<std::size_t>(dI);
            }
        }
        return norm_impl("layer_norm", x, gamma, beta, eps, std::move(sets), std::move(aff));
    }
    require(x->rank() == 3, "layer_norm: need [L,D] or [C,H,W]");
    std::int64_t C = x->extent(0), hw = x->extent(1) * x->extent(2);
    require(gamma->size() == C && beta->size() == C, "layer_norm: affine shape mismatch");
    std::vector<NormSet> sets(static_cast<std::size_t>(hw));
    std::vector<std::size_t> aff(x->data.size());
    for (std::int64_t p = 0; p < hw; ++p) {
        auto& s = sets[static_cast<std::size_t>(p)];
        s.idx.resize(static_cast<std::size_t>(C));
        for (std::int64_t c = 0; c < C; ++c) {
            std::size_t fi = static_cast<std::size_t>(c * hw + p);
            s.idx[static_cast<std::size_t>(c)] = fi;
            aff[fi] = static_cast<std::size_t>(c);
        }
    }
    return norm_impl("layer_norm", x, gamma, beta, eps, std::move(sets), std::move(aff));
}

TensorPtr reshape(const TensorPtr& a, std::vector<std::int64_t> shape) {
    require(shape_numel(shape) == a->size(), "reshape: numel mismatch " + shape_str(a->shape) +
                                                 " -> " + shape_str(shape));
    std::vector<double> out = a->data;
    return make_node("reshape", std::move(shape), std::move(out), {a}, [](Tensor& self) {
        auto& in = *self.inputs[0];
        if (!in.requires_grad) return;
        in.ensure_grad();
        for (std::size_t i = 0; i < in.grad.size(); ++i) in.grad[i] += self.grad[i];
    });
}

TensorPtr concat_channel(const std::vector<TensorPtr>& xs) {
    require(!xs.empty(), "concat_channel: empty input list");
    std::int64_t H = xs[0]->extent(1), W = xs[0]->extent(2), Ct = 0;
    for (const auto& x : xs) {
        require(x->rank() == 3 && x->extent(1) == H && x->extent(2) == W,
                "concat_channel: spatial mismatch");
        Ct += x->extent(0);
    }
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(Ct * H * W));
    for (const auto& x : xs) out.insert(out.end(), x->data.begin(), x->data.end());
    return make_node("concat_channel", {Ct, H, W}, std::move(out), xs, [](Tensor& self) {
        std::size_t off = 0;
        for (auto& inp : self.inputs) {
            if (inp->requires_grad) {
                inp->ensure_grad();
                for (std::size_t i = 0; i < inp->data.size(); ++i)
                    inp->grad[i] += self.grad[off + i];
            }
            off += inp->data.size();
        }
    });
}

TensorPtr concat_width(const TensorPtr& a, const TensorPtr& b) {
    require(a->rank() == 3 && b->rank() == 3 && a->extent(0) == b->extent(0) &&
                a->extent(1) == b->extent(1),
            "concat_width: incompatible shapes " + shape_str(a->shape) + " vs " +
                shape_str(b->shape));
    std::int64_t C = a->extent(0), H = a->extent(1), Wa = a->extent(2), Wb = b->extent(2);
    std::int64_t W = Wa + Wb;
    std::vector<double> out(static_cast<std::size_t>(C * H * W));
    for (std::int64_t c = 0; c < C; ++c)
        for (std::int64_t y = 0; y < H; ++y) {
            std::memcpy(&out[static_cast<std::size_t>((c * H + y) * W)],
                        &a->data[static_cast<std::size_t>((c * H + y) * Wa)],
                        static_cast<std::size_t>(Wa) * sizeof(double));
            std::memcpy(&out[static_cast<std::size_t>((c * H + y) * W + Wa)],
                        &b->data[static_cast<std::size_t>((c * H + y) * Wb)],
                        static_cast<std::size_t>(Wb) * sizeof(double));
        }
    return make_node("concat_width", {C, H, W}, std::move(out), {a, b},
                     [C, H, Wa, Wb, W](Tensor& self) {
                         auto& ia = *self.inputs[0];
                         auto& ib = *self.inputs[1];
                         bool ga = ia.requires_grad, gb = ib.requires_grad;
                         if (ga) ia.ensure_grad();
                         if (gb) ib.ensure_grad();
                         for (std::int64_t c = 0; c < C; ++c)
                             for (std::int64_t y = 0; y < H; ++y) {
                                 if (ga)
                                     for (std::int64_t x2 = 0; x2 < Wa; ++x2)
                                         ia.grad[static_cast<std::size_t>((c * H + y) * Wa + x2)] +=
                                             self.grad[static_cast<std::size_t>((c * H + y) * W +
                                                                                x2)];
                                 if (gb)
                                     for (std::int64_t x2 = 0; x2 < Wb; ++x2)
                                         ib.grad[static_cast<std::size_t>((c * H + y) * Wb + x2)] +=
                                             self.grad[static_cast<std::size_t>((c * H + y) * W +
                                                                                Wa + x2)];
                             }
                     });
}

TensorPtr crop_width(const TensorPtr& a, std::int64_t w0, std::int64_t w1) {
    require(a->rank() == 3 && 0 <= w0 && w0 < w1 && w1 <= a->extent(2),
            "crop_width: bad range [" + std::to_string(w0) + "," + std::to_string(w1) + ") for " +
                shape_str(a->shape));
    std::int64_t C = a->extent(0), H = a->extent(1), W = a->extent(2), Wn = w1 - w0;
    std::vector<double> out(static_cast<std::size_t>(C * H * Wn));
    for (std::int64_t c = 0; c < C; ++c)
        for (std::int64_t y = 0; y < H; ++y)
            std::memcpy(&out[static_cast<std::size_t>((c * H + y) * Wn)],
                        &a->data[static_cast<std::size_t>((c * H + y) * W + w0)],
                        static_cast<std::size_t>(Wn) * sizeof(double));
    return make_node("crop_width", {C, H, Wn}, std::move(out), {a}, [C, H, W, w0, Wn](Tensor& self) {
        auto& in = *self.inputs[0];
        if (!in.requires_grad) return;
        in.ensure_grad();
        for (std::int64_t c = 0; c < C; ++c)
            for (std::int64_t y = 0; y < H; ++y)
                for (std::int64_t x2 = 0; x2 < Wn; ++x2)
                    in.grad[static_cast<std::size_t>((c * H + y) * W + w0 + x2)] +=
                        self.grad[static_cast<std::size_t>((c * H + y) * Wn + x2)];
    });
}

TensorPtr crop_channel(const TensorPtr& a, std::int64_t c0, std::int64_t c1) {
    require(a->rank() == 3 && 0 <= c0 && c0 < c1 && c1 <= a->extent(0),
            "crop_channel: bad range for " + shape_str(a->shape));
    std::int64_t H = a->extent(1), W = a->extent(2), hw = H * W;
    std::vector<double> out(a->data.begin() + static_cast<std::ptrdiff_t>(c0 * hw),
                            a->data.begin() + static_cast<std::ptrdiff_t>(c1 * hw));
    return make_node("crop_channel", {c1 - c0, H, W}, std::move(out), {a}, [c0, hw](Tensor& self) {
        auto& in = *self.inputs[0];
        if (!in.requires_grad) return;
        in.ensure_grad();
        std::size_t base = static_cast<std::size_t>(c0 * hw);
        for (std::size_t i = 0; i < self.data.size(); ++i) in.grad[base + i] += self.grad[i];
    });
}

TensorPtr add_n(const std::vector<TensorPtr>& xs) {
    require(!xs.empty(), "add_n: empty input list");
    for (const auto& x : xs)
        require(x->shape == xs[0]->shape, "add_n: shape mismatch");
    std::vector<double> out(xs[0]->data.size(), 0.0);
    for (const auto& x : xs)
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += x->data[i];
    return make_node("add_n", xs[0]->shape, std::move(out), xs, [](Tensor& self) {
        for (auto& inp : self.inputs) {
            if (!inp->requires_grad) continue;
            inp->ensure_grad();
            for (std::size_t i = 0; i < inp->grad.size(); ++i) inp->grad[i] += self.grad[i];
        }
    });
}

TensorPtr bilinear_upsample(const TensorPtr& x, std::int64_t out_h, std::int64_t out_w) {
    require(x->rank() == 3, "bilinear_upsample: need [C,H,W]");
    require(out_h >= 1 && out_w >= 1, "bilinear_upsample: bad output size");
    std::int64_t C = x->extent(0), H = x->extent(1), W = x->extent(2);
    // align_corners=false source coordinates, clamped into the valid range
    auto coords = [](std::int64_t n_in, std::int64_t n_out) {
        std::vector<std::array<double, 2>> ws(static_cast<std::size_t>(n_out));
        std::vector<std::array<std::int64_t, 2>> ix(static_cast<std::size_t>(n_out));
        double scale = static_cast<double>(n_in) / static_cast<double>(n_out);
        for (std::int64_t o = 0; o < n_out; ++o) {
            double s = (static_cast<double>(o) + 0.5) * scale - 0.5;
            s = std::min(std::max(s, 0.0), static_cast<double>(n_in - 1));
            std::int64_t i0 = static_cast<std::int64_t>(std::floor(s));
            std::int64_t i1 = std::min(i0 + 1, n_in - 1);
            double w1 = s - static_cast<double>(i0);
            ws[static_cast<std::size_t>(o)] = {1.0 - w1, w1};
            ix[static_cast<std::size_t>(o)] = {i0, i1};
        }
        return std::make_pair(ws, ix);
    };
    auto [wy, iy] = coords(H, out_h);
    auto [wx, ixv] = coords(W, out_w);
    std::vector<double> out(static_cast<std::size_t>(C * out_h * out_w));
    for (std::int64_t c = 0; c < C; ++c)
        for (std::int64_t oy = 0; oy < out_h; ++oy)
            for (std::int64_t ox = 0; ox < out_w; ++ox) {
                const auto& ay = iy[static_cast<std::size_t>(oy)];
                const auto& ax = ixv[static_cast<std::size_t>(ox)];
                const auto& by = wy[static_cast<std::size_t>(oy)];
                const auto& bx = wx[static_cast<std::size_t>(ox)];
                double v = 0;
                for (int u = 0; u < 2; ++u)
                    for (int t = 0; t < 2; ++t)
                        v += by[static_cast<std::size_t>(u)] * bx[static_cast<std::size_t>(t)] *
                             x->data[static_cast<std::size_t>((c * H + ay[static_cast<std::size_t>(u)]) * W +
                                                              ax[static_cast<std::size_t>(t)])];
                out[static_cast<std::size_t>((c * out_h + oy) * out_w + ox)] = v;
            }
    return make_node("bilinear_upsample", {C, out_h, out_w}, std::move(out), {x},
                     [C, H, W, out_h, out_w, wy, iy, wx, ixv](Tensor& self) {
                         auto& in = *self.inputs[0];
                         if (!in.requires_grad) return;
                         in.ensure_grad();
                         for (std::int64_t c = 0; c < C; ++c)
                             for (std::int64_t oy = 0; oy < out_h; ++oy)
                                 for (std::int64_t ox = 0; ox < out_w; ++ox) {
                                     double g = self.grad[static_cast<std::size_t>(
                                         (c * out_h + oy) * out_w + ox)];
                                     const auto& ay = iy[static_cast<std::size_t>(oy)];
                                     const auto& ax = ixv[static_cast<std::size_t>(ox)];
                                     const auto& by = wy[static_cast<std::size_t>(oy)];
                                     const auto& bx = wx[static_cast<std::size_t>(ox)];
                                     for (int u = 0; u < 2; ++u)
                                         for (int t = 0; t < 2; ++t)
                                             in.grad[static_cast<std::size_t>(
                                                 (c * H + ay[static_cast<std::size_t>(u)]) * W +
                                                 ax[static_cast<std::size_t>(t)])] +=
                                                 g * by[static_cast<std::size_t>(u)] *
                                                 bx[static_cast<std::size_t>(t)];
                                 }
                     });
}

TensorPtr spatial_mean(const TensorPtr& x) {
    require(x->rank() == 3, "spatial_mean: need [C,H,W]");
    std::int64_t C = x->extent(0), hw = x->extent(1) * x->extent(2);
    double inv = 1.0 / static_cast<double>(hw);
    std::vector<double> out(static_cast<std::size_t>(C), 0.0);
    for (std::int64_t c = 0; c < C; ++c) {
        double s = 0;
        for (std::int64_t i = 0; i < hw; ++i) s += x->data[static_cast<std::size_t>(c * hw + i)];
        out[static_cast<std::size_t>(c)] = s * inv;
    }
    return make_node("spatial_mean", {C}, std::move(out), {x}, [C, hw, inv](Tensor& self) {
        auto& in = *self.inputs[0];
        if (!in.requires_grad) return;
        in.ensure_grad();
        for (std::int64_t c = 0; c < C; ++c)
            for (std::int64_t i = 0; i < hw; ++i)
                in.grad[static_cast<std::size_t>(c * hw + i)] +=
                    self.grad[static_cast<std::size_t>(c)] * inv;
    });
}

TensorPtr channel_sum(const TensorPtr& x) {
    require(x->rank() == 3, "channel_sum: need [C,H,W]");
    std::int64_t C = x->extent(0), H = x->extent(1), W = x->extent(2), hw = H * W;
    std::vector<double> out(static_cast<std::size_t>(hw), 0.0);
    for (std::int64_t c = 0; c < C; ++c)
        for (std::int64_t i = 0; i < hw; ++i)
            out[static_cast<std::size_t>(i)] += x->data[static_cast<std::size_t>(c * hw + i)];
    return make_node("channel_sum", {H, W}, std::move(out), {x}, [C, hw](Tensor& self) {
        auto& in = *self.inputs[0];
        if (!in.requires_grad) return;
        in.ensure_grad();
        for (std::int64_t c = 0; c < C; ++c)
            for (std::int64_t i = 0; i < hw; ++i)
                in.grad[static_cast<std::size_t>(c * hw + i)] +=
                    self.grad[static_cast<std::size_t>(i)];
    });
}

TensorPtr scale_channels(const TensorPtr& x, const TensorPtr& s) {
    require(x->rank() == 3 && s->rank() == 1 && s->extent(0) == x->extent(0),
            "scale_channels: need x[C,H,W], s[C]");
    std::int64_t C = x->extent(0), hw = x->extent(1) * x->extent(2);
    std::vector<double> out(x->data.size());
    for (std::int64_t c = 0; c < C; ++c)
        for (std::int64_t i = 0; i < hw; ++i)
            out[static_cast<std::size_t>(c * hw + i)] =
                x->data[static_cast<std::size_t>(c * hw + i)] * s->data[static_cast<std::size_t>(c)];
    return make_node("scale_channels", x->shape, std::move(out), {x, s}, [C, hw](Tensor& self) {
        auto& ix = *self.inputs[0];
        auto& is = *self.inputs[1];
        bool gx = ix.requires_grad, gs = is.requires_grad;
        if (gx) ix.ensure_grad();
        if (gs) is.ensure_grad();
        for (std::int64_t c = 0; c < C; ++c) {
            double acc = 0;
            for (std::int64_t i = 0; i < hw; ++i) {
                std::size_t fi = static_cast<std::size_t>(c * hw + i);
                double g = self.grad[fi];
                if (gx) ix.grad[fi] += g * is.data[static_cast<std::size_t>(c)];
                acc += g * ix.data[fi];
            }
            if (gs) is.grad[static_cast<std::size_t>(c)] += acc;
        }
    });
}

TensorPtr scale_map(const TensorPtr& x, const TensorPtr& m) {
    require(x->rank() == 3 && m->rank() == 2 && m->extent(0) == x->extent(1) &&
                m->extent(1) == x->extent(2),
            "scale_map: need x[C,H,W], m[H,W]");
    std::int64_t C = x->extent(0), hw = x->extent(1) * x->extent(2);
    std::vector<double> out(x->data.size());
    for (std::int64_t c = 0; c < C; ++c)
        for (std::int64_t i = 0; i < hw; ++i)
            out[static_cast<std::size_t>(c * hw + i)] =
                x->data[static_cast<std::size_t>(c * hw + i)] * m->data[static_cast<std::size_t>(i)];
    return make_node("scale_map", x->shape, std::move(out), {x, m}, [C, hw](Tensor& self) {
        auto& ix = *self.inputs[0];
        auto& im = *self.inputs[1];
        bool gx = ix.requires_grad, gm = im.requires_grad;
        if (gx) ix.ensure_grad();
        if (gm) im.ensure_grad();
        for (std::int64_t c = 0; c < C; ++c)
            for (std::int64_t i = 0; i < hw; ++i) {
                std::size_t fi = static_cast<std::size_t>(c * hw + i);
                double g = self.grad[fi];
                if (gx) ix.grad[fi] += g * im.data[static_cast<std::size_t>(i)];
                if (gm) im.grad[static_cast<std::size_t>(i)] += g * ix.data[fi];
            }
    });
}

TensorPtr outer_cmap(const TensorPtr& s, const TensorPtr& m) {
    require(s->rank() == 1 && m->rank() == 2, "outer_cmap: need s[C], m[H,W]");
    std::int64_t C = s->extent(0), H = m->extent(0), W = m->extent(1), hw = H * W;
    std::vector<double> out(static_cast<std::size_t>(C * hw));
    for (std::int64_t c = 0; c < C; ++c)
        for (std::int64_t i = 0; i < hw; ++i)
            out[static_cast<std::size_t>(c * hw + i)] =
                s->data[static_cast<std::size_t>(c)] * m->data[static_cast<std::size_t>(i)];
    return make_node("outer_cmap", {C, H, W}, std::move(out), {s, m}, [C, hw](Tensor& self) {
        auto& is = *self.inputs[0];
        auto& im = *self.inputs[1];
        bool gs = is.requires_grad, gm = im.requires_grad;
        if (gs) is.ensure_grad();
        if (gm) im.ensure_grad();
        for (std::int64_t c = 0; c < C; ++c) {
            double acc = 0;
            for (std::int64_t i = 0; i < hw; ++i) {
                double g = self.grad[static_cast<std::size_t>(c * hw + i)];
                acc += g * im.data[static_cast<std::size_t>(i)];
                if (gm)
                    im.grad[static_cast<std::size_t>(i)] +=
                        g * is.data[static_cast<std::size_t>(c)];
            }
            if (gs) is.grad[static_cast<std::size_t>(c)] += acc;
        }
    });
}

TensorPtr group_mean(const TensorPtr& x, std::int64_t groups) {
    require(x->rank() == 3, "group_mean: need [C,H,W]");
    std::int64_t C = x->extent(0), H = x->extent(1), W = x->extent(2), hw = H * W;
    if (groups < 1 || C % groups != 0)
        throw ConfigError("group_mean: group count " + std::to_string(groups) +
                          " does not divide channels " + std::to_string(C));
    std::int64_t cg = C / groups;
    double inv = 1.0 / static_cast<double>(cg);
    std::vector<double> out(static_cast<std::size_t>(groups * hw), 0.0);
    for (std::int64_t c = 0; c < C; ++c)
        for (std::int64_t i = 0; i < hw; ++i)
            out[static_cast<std::size_t>((c / cg) * hw + i)] +=
                x->data[static_cast<std::size_t>(c * hw + i)] * inv;
    return make_node("group_mean", {groups, H, W}, std::move(out), {x}, [C, hw, cg, inv](Tensor& self) {
        auto& in = *self.inputs[0];
        if (!in.requires_grad) return;
        in.ensure_grad();
        for (std::int64_t c = 0; c < C; ++c)
            for (std::int64_t i = 0; i < hw; ++i)
                in.grad[static_cast<std::size_t>(c * hw + i)] +=
                    self.grad[static_cast<std::size_t>((c / cg) * hw + i)] * inv;
    });
}

TensorPtr group_broadcast(const TensorPtr& x, std::int64_t channels) {
    require(x->rank() == 3, "group_broadcast: need [g,H,W]");
    std::int64_t g = x->extent(0), H = x->extent(1), W = x->extent(2), hw = H * W;
    if (channels < g || channels % g != 0)
        throw ConfigError("group_broadcast: channels must be a multiple of groups");
    std::int64_t cg = channels / g;
    std::vector<double> out(static_cast<std::size_t>(channels * hw));
    for (std::int64_t c = 0; c < channels; ++c)
        for (std::int64_t i = 0; i < hw; ++i)
            out[static_cast<std::size_t>(c * hw + i)] =
                x->data[static_cast<std::size_t>((c / cg) * hw + i)];
    return make_node("group_broadcast", {channels, H, W}, std::move(out), {x},
                     [channels, hw, cg](Tensor& self) {
                         auto& in = *self.inputs[0];
                         if (!in.requires_grad) return;
                         in.ensure_grad();
                         for (std::int64_t c = 0; c < channels; ++c)
                             for (std::int64_t i = 0; i < hw; ++i)
                                 in.grad[static_cast<std::size_t>((c / cg) * hw + i)] +=
                                     self.grad[static_cast<std::size_t>(c * hw + i)];
                     });
}

TensorPtr add_bias_channels(const TensorPtr& x, const TensorPtr& b) {
    require(x->rank() == 3 && b->rank() == 1 && b->extent(0) == x->extent(0),
            "add_bias_channels: need x[C,H,W], b[C]");
    std::int64_t C = x->extent(0), hw = x->extent(1) * x->extent(2);
    std::vector<double> out(x->data.size());
    for (std::int64_t c = 0; c < C; ++c)
        for (std::int64_t i = 0; i < hw; ++i)
            out[static_cast<std::size_t>(c * hw + i)] =
                x->data[static_cast<std::size_t>(c * hw + i)] + b->data[static_cast<std::size_t>(c)];
    return make_node("add_bias_channels", x->shape, std::move(out), {x, b}, [C, hw](Tensor& self) {
        auto& ix = *self.inputs[0];
        auto& ib = *self.inputs[1];
        bool gx = ix.requires_grad, gb = ib.requires_grad;
        if (gx) ix.ensure_grad();
        if (gb) ib.ensure_grad();
        for (std::int64_t c = 0; c < C; ++c) {
            double acc = 0;
            for (std::int64_t i = 0; i < hw; ++i) {
                std::size_t fi = static_cast<std::size_t>(c * hw + i);
                if (gx) ix.grad[fi] += self.grad[fi];
                acc += self.grad[fi];
            }
            if (gb) ib.grad[static_cast<std::size_t>(c)] += acc;
        }
    });
}

TensorPtr softmax_channels(const TensorPtr& x) {
    require(x->rank() == 3, "softmax_channels: need [C,H,W]");
    std::int64_t C = x->extent(0), hw = x->extent(1) * x->extent(2);
    std::vector<double> out(x->data.size());
    for (std::int64_t i = 0; i < hw; ++i) {
        double m = -1e300;
        for (std::int64_t c = 0; c < C; ++c)
            m = std::max(m, x->data[static_cast<std::size_t>(c * hw + i)]);
        double z = 0;
        for (std::int64_t c = 0; c < C; ++c) {
            double e = std::exp(x->data[static_cast<std::size_t>(c * hw + i)] - m);
            out[static_cast<std::size_t>(c * hw + i)] = e;
            z += e;
        }
        for (std::int64_t c = 0; c < C; ++c) out[static_cast<std::size_t>(c * hw + i)] /= z;
    }
    return make_node("softmax_channels", x->shape, std::move(out), {x}, [C, hw](Tensor& self) {
        auto& in = *self.inputs[0];
        if (!in.requires_grad) return;
        in.ensure_grad();
        for (std::int64_t i = 0; i < hw; ++i) {
            double dot = 0;
            for (std::int64_t c = 0; c < C; ++c) {
                std::size_t fi = static_cast<std::size_t>(c * hw + i);
                dot += self.grad[fi] * self.data[fi];
            }
            for (std::int64_t c = 0; c < C; ++c) {
                std::size_t fi = static_cast<std::size_t>(c * hw + i);
                in.grad[fi] += self.data[fi] * (self.grad[fi] - dot);
            }
        }
    });
}

TensorPtr dropout(const TensorPtr& x, double p, const DropKey& key, bool training) {
    if (p < 0 || p >= 1) throw ContractError("dropout: p must be in [0,1)");
    if (!training || p == 0.0) return x;
    double keep = 1.0 - p, inv = 1.0 / keep;
    std::vector<double> out(x->data.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        double u = keyed_uniform(key.seed, key.step, key.layer, static_cast<std::int64_t>(i));
        out[i] = u >= p ? x->data[i] * inv : 0.0;
    }
    return make_node("dropout", x->shape, std::move(out), {x}, [p, key, inv](Tensor& self) {
        auto& in = *self.inputs[0];
        if (!in.requires_grad) return;
        in.ensure_grad();
        for (std::size_t i = 0; i < in.grad.size(); ++i) {
            double u = keyed_uniform(key.seed, key.step, key.layer, static_cast<std::int64_t>(i));
            if (u >= p) in.grad[i] += self.grad[i] * inv;
        }
    });
}

TensorPtr drop_path(const TensorPtr& x, double p, const DropKey& key, bool training) {
    if (p < 0 || p >= 1) throw ContractError("drop_path: p must be in [0,1)");
    if (!training || p == 0.0) return x;
    double u = keyed_uniform(key.seed, key.step, key.layer, 0);
    bool dropped = u < p;
    double scale = dropped ? 0.0 : 1.0 / (1.0 - p);
    std::vector<double> out(x->data.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x->data[i] * scale;
    return make_node("drop_path", x->shape, std::move(out), {x}, [scale](Tensor& self) {
        auto& in = *self.inputs[0];
        if (!in.requires_grad) return;
        in.ensure_grad();
        for (std::size_t i = 0; i < in.grad.size(); ++i) in.grad[i] += self.grad[i] * scale;
    });
}

TensorPtr cross_entropy(const TensorPtr& logits, const std::vector<int>& labels,
                        const std::vector<double>& class_weights, int ignore_index) {
    require(logits->rank() == 3, "cross_entropy: need logits [K,H,W]");
    std::int64_t K = logits->extent(0), hw = logits->extent(1) * logits->extent(2);
    require(static_cast<std::int64_t>(labels.size()) == hw, "cross_entropy: label count mismatch");
    if (!class_weights.empty() && static_cast<std::int64_t>(class_weights.size()) != K)
        throw ContractError("cross_entropy: class_weights length must equal K");

    double total = 0, wsum = 0;
    for (std::int64_t i = 0; i < hw; ++i) {
        int y = labels[static_cast<std::size_t>(i)];
        if (y == ignore_index) continue;
        if (y < 0 || y >= K)
            throw DataError("cross_entropy: label " + std::to_string(y) + " out of range at pixel " +
                            std::to_string(i));
        double m = -1e300;
        for (std::int64_t c = 0; c < K; ++c)
            m = std::max(m, logits->data[static_cast<std::size_t>(c * hw + i)]);
        double z = 0;
        for (std::int64_t c = 0; c < K; ++c)
            z += std::exp(logits->data[static_cast<std::size_t>(c * hw + i)] - m);
        double lse = m + std::log(z);
        double w = class_weights.empty() ? 1.0 : class_weights[static_cast<std::size_t>(y)];
        total += w * (lse - logits->data[static_cast<std::size_t>(y * hw + i)]);
        wsum += w;
    }
    if (wsum == 0.0) return scalar(0.0);
    double loss = total / wsum;
    return make_node("cross_entropy", {1}, {loss}, {logits},
                     [labels, class_weights, ignore_index, K, hw, wsum](Tensor& self) {
                         auto& in = *self.inputs[0];
                         if (!in.requires_grad) return;
                         in.ensure_grad();
                         double gscale = self.grad[0] / wsum;
                         for (std::int64_t i = 0; i < hw; ++i) {
                             int y = labels[static_cast<std::size_t>(i)];
                             if (y == ignore_index) continue;
                             double w = class_weights.empty()
                                            ? 1.0
                                            : class_weights[static_cast<std::size_t>(y)];
                             double m = -1e300;
                             for (std::int64_t c = 0; c < K; ++c)
                                 m = std::max(m, in.data[static_cast<std::size_t>(c * hw + i)]);
                             double z = 0;
                             for (std::int64_t c = 0; c < K; ++c)
                                 z += std::exp(in.data[static_cast<std::size_t>(c * hw + i)] - m);
                             for (std::int64_t c = 0; c < K; ++c) {
                                 double s =
                                     std::exp(in.data[static_cast<std::size_t>(c * hw + i)] - m) / z;
                                 double d = s - (c == y ? 1.0 : 0.0);
                                 in.grad[static_cast<std::size_t>(c * hw + i)] += gscale * w * d;
                             }
                         }
                     });
}

} // namespace unicd
