#include "unicd/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "unicd/fft.hpp"
#include "unicd/losses.hpp"
#include "unicd/model.hpp"
#include "unicd/ops.hpp"
#include "unicd/scan.hpp"
#include "unicd/ssm.hpp"

namespace unicd {

GradCaseResult run_grad_case(const GradCase& c, double h, double tol) {
    PrecisionGuard prec(Precision::f64);
    if (c.h_override > 0) h = c.h_override;
    GradCaseResult res;
    res.name = c.name;

    for (auto& l : c.leaves) l->zero_grad();
    auto loss = c.forward();
    if (loss->numel() != 1) throw ContractError("grad case " + c.name + ": forward not scalar");
    loss->backward();
    std::vector<std::vector<double>> analytic;
    for (auto& l : c.leaves) {
        l->ensure_grad();
        analytic.push_back(l->grad);
    }

    std::vector<std::pair<std::size_t, std::int64_t>> probes = c.probes;
    if (probes.empty())
        for (std::size_t i = 0; i < c.leaves.size(); ++i)
            for (std::int64_t j = 0; j < c.leaves[i]->numel(); ++j) probes.emplace_back(i, j);

    NoGradGuard ng;
    for (auto [i, j] : probes) {
        auto& x = c.leaves[i]->data[static_cast<std::size_t>(j)];
        const double saved = x;
        x = saved + h;
        const double fp = c.forward()->item();
        x = saved - h;
        const double fm = c.forward()->item();
        x = saved;
        const double numeric = (fp - fm) / (2.0 * h);
        const double a = analytic[i][static_cast<std::size_t>(j)];
        const double rel = std::abs(a - numeric) /
                           std::max({1.0, std::abs(a), std::abs(numeric)});
        ++res.checked;
        if (rel > res.max_rel) {
            res.max_rel = rel;
            std::ostringstream os;
            os << "leaf " << i << " elem " << j << ": analytic=" << a << ", numeric=" << numeric;
            res.worst = os.str();
        }
    }
    res.pass = res.max_rel <= tol;
    return res;
}

std::vector<GradCaseResult> run_grad_suite(const std::vector<GradCase>& cases, double h,
                                           double tol) {
    std::vector<GradCaseResult> out;
    out.reserve(cases.size());
    for (const auto& c : cases) out.push_back(run_grad_case(c, h, tol));
    return out;
}

namespace {

std::vector<double> rand_coef(Rng& r, std::int64_t n) {
    std::vector<double> c(static_cast<std::size_t>(n));
    for (auto& v : c) v = r.uniform(-1.0, 1.0);
    return c;
}

// weighted sum reducer so every output element gets a distinct pull
TensorPtr wsum(const TensorPtr& t, std::vector<double> coef) {
    return dot_const(t, std::move(coef));
}

TensorPtr leaf_uniform(Rng& r, std::vector<std::int64_t> shape, double lo, double hi) {
    return rand_uniform(std::move(shape), r, lo, hi, true);
}

// push every entry at least `margin` away from zero (kink avoidance)
void repel_zero(const TensorPtr& t, double margin) {
    for (auto& v : t->data)
        if (std::abs(v) < margin) v = v < 0.0 ? v - margin : v + margin;
}

} // namespace

std::vector<GradCase> default_grad_cases(std::uint64_t seed) {
    PrecisionGuard prec(Precision::f64);
    std::vector<GradCase> cases;
    std::uint64_t salt = 0;
    auto next_rng = [&]() { return Rng(hash_combine(seed, ++salt)); };

    { // elementwise binary, same shape
        Rng r = next_rng();
        auto a = leaf_uniform(r, {2, 3}, -1, 1);
        auto b = leaf_uniform(r, {2, 3}, 0.4, 1.4);
        auto c1 = rand_coef(r, 6), c2 = rand_coef(r, 6), c3 = rand_coef(r, 6);
        cases.push_back({"add/sub/mul", {a, b}, [=] {
                             return add(add(wsum(add(a, b), c1), wsum(sub(a, b), c2)),
                                        wsum(mul(a, b), c3));
                         }});
    }
    { // div with denominator bounded away from zero + broadcast forms
        Rng r = next_rng();
        auto a = leaf_uniform(r, {3, 2}, -1, 1);
        auto b = leaf_uniform(r, {3, 2}, 0.5, 1.5);
        auto s = leaf_uniform(r, {1}, 0.6, 1.2);
        auto c1 = rand_coef(r, 6), c2 = rand_coef(r, 6), c3 = rand_coef(r, 6);
        cases.push_back({"div/broadcast", {a, b, s}, [=] {
                             return add(add(wsum(div(a, b), c1), wsum(add(a, s), c2)),
                                        wsum(div(a, s), c3));
                         }});
    }
    { // scalar-constant chain
        Rng r = next_rng();
        auto a = leaf_uniform(r, {5}, -1, 1);
        auto c1 = rand_coef(r, 5);
        cases.push_back({"add_const/mul_const/neg", {a}, [=] {
                             return wsum(neg(mul_const(add_const(a, 0.7), 1.3)), c1);
                         }});
    }
    { // smooth unaries
        Rng r = next_rng();
        auto a = leaf_uniform(r, {2, 4}, -1.2, 1.2);
        auto c1 = rand_coef(r, 8), c2 = rand_coef(r, 8), c3 = rand_coef(r, 8), c4 = rand_coef(r, 8),
             c5 = rand_coef(r, 8), c6 = rand_coef(r, 8);
        cases.push_back({"sigmoid/silu/gelu/tanh/softplus/exp", {a}, [=] {
                             auto t = add(wsum(sigmoid(a), c1), wsum(silu(a), c2));
                             t = add(t, add(wsum(gelu(a), c3), wsum(tanh_t(a), c4)));
                             return add(t, add(wsum(softplus(a), c5), wsum(exp_t(a), c6)));
                         }});
    }
    { // kinked unaries, probed away from the kink
        Rng r = next_rng();
        auto a = leaf_uniform(r, {3, 3}, -1, 1);
        repel_zero(a, 0.2);
        auto p = leaf_uniform(r, {6}, 0.3, 1.5);
        auto c1 = rand_coef(r, 9), c2 = rand_coef(r, 9), c3 = rand_coef(r, 6);
        cases.push_back({"relu/abs/sqrt", {a, p}, [=] {
                             return add(add(wsum(relu(a), c1), wsum(abs_t(a), c2)),
                                        wsum(sqrt_t(p), c3));
                         }});
    }
    { // reductions
        Rng r = next_rng();
        auto a = leaf_uniform(r, {3, 4}, -1, 1);
        std::vector<char> mask(12, 0);
        for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = (i % 3 != 1) ? 1 : 0;
        auto coef = rand_coef(r, 12);
        cases.push_back({"sum/mean/masked_mean/dot_const", {a}, [=] {
                             auto t = add(sum_all(a), mul_const(mean_all(a), 1.7));
                             return add(t, add(masked_mean(a, mask), dot_const(a, coef)));
                         }});
    }
    { // gather with repeated indices
        Rng r = next_rng();
        auto a = leaf_uniform(r, {2, 5}, -1, 1);
        std::vector<std::int64_t> idx{0, 3, 3, 7, 9, 1, 3};
        auto c1 = rand_coef(r, static_cast<std::int64_t>(idx.size()));
        cases.push_back(
            {"take_indices", {a}, [=] { return wsum(take_indices(a, idx), c1); }});
    }
    { // matmul / linear
        Rng r = next_rng();
        auto a = leaf_uniform(r, {3, 4}, -1, 1);
        auto b = leaf_uniform(r, {4, 2}, -1, 1);
        auto x = leaf_uniform(r, {5, 3}, -1, 1);
        auto w = leaf_uniform(r, {2, 3}, -1, 1);
        auto bias = leaf_uniform(r, {2}, -0.5, 0.5);
        auto c1 = rand_coef(r, 6), c2 = rand_coef(r, 10);
        cases.push_back({"matmul/linear", {a, b, x, w, bias}, [=] {
                             return add(wsum(matmul(a, b), c1), wsum(linear(x, w, bias), c2));
                         }});
    }
    { // conv2d 3x3 stride 1 pad 1
        Rng r = next_rng();
        auto x = leaf_uniform(r, {2, 5, 6}, -1, 1);
        auto w = leaf_uniform(r, {3, 2, 3, 3}, -0.5, 0.5);
        auto b = leaf_uniform(r, {3}, -0.3, 0.3);
        auto c1 = rand_coef(r, 3 * 5 * 6);
        cases.push_back(
            {"conv2d_k3s1p1", {x, w, b}, [=] { return wsum(conv2d(x, w, b, 1, 1), c1); }});
    }
    { // conv2d 2x2 stride 2 (downsample shape)
        Rng r = next_rng();
        auto x = leaf_uniform(r, {2, 6, 6}, -1, 1);
        auto w = leaf_uniform(r, {3, 2, 2, 2}, -0.5, 0.5);
        auto c1 = rand_coef(r, 3 * 3 * 3);
        cases.push_back(
            {"conv2d_k2s2", {x, w}, [=] { return wsum(conv2d(x, w, nullptr, 2, 0), c1); }});
    }
    { // conv2d 1x1 + stride-2 3x3 with pad
        Rng r = next_rng();
        auto x = leaf_uniform(r, {3, 4, 4}, -1, 1);
        auto w1 = leaf_uniform(r, {2, 3, 1, 1}, -0.7, 0.7);
        auto x2 = leaf_uniform(r, {2, 5, 5}, -1, 1);
        auto w2 = leaf_uniform(r, {2, 2, 3, 3}, -0.5, 0.5);
        auto c1 = rand_coef(r, 2 * 4 * 4), c2 = rand_coef(r, 2 * 3 * 3);
        cases.push_back({"conv2d_k1_and_k3s2", {x, w1, x2, w2}, [=] {
                             return add(wsum(conv2d(x, w1, nullptr, 1, 0), c1),
                                        wsum(conv2d(x2, w2, nullptr, 2, 1), c2));
                         }});
    }
    { // depthwise conv
        Rng r = next_rng();
        auto x = leaf_uniform(r, {3, 5, 5}, -1, 1);
        auto w = leaf_uniform(r, {3, 3, 3}, -0.6, 0.6);
        auto b = leaf_uniform(r, {3}, -0.2, 0.2);
        auto c1 = rand_coef(r, 3 * 5 * 5);
        cases.push_back({"depthwise_conv2d", {x, w, b}, [=] {
                             return wsum(depthwise_conv2d(x, w, b, 1, 1), c1);
                         }});
    }
    { // norms
        Rng r = next_rng();
        auto x = leaf_uniform(r, {3, 4, 4}, -1, 1);
        auto g = leaf_uniform(r, {3}, 0.5, 1.5);
        auto b = leaf_uniform(r, {3}, -0.4, 0.4);
        auto c1 = rand_coef(r, 48);
        cases.push_back({"batch_norm2d", {x, g, b}, [=] {
                             return wsum(batch_norm2d(x, g, b, 1e-5), c1);
                         }});
    }
    {
        Rng r = next_rng();
        auto x = leaf_uniform(r, {6, 5}, -1, 1);
        auto g = leaf_uniform(r, {5}, 0.5, 1.5);
        auto b = leaf_uniform(r, {5}, -0.4, 0.4);
        auto c1 = rand_coef(r, 30);
        cases.push_back(
            {"layer_norm_rank2", {x, g, b}, [=] { return wsum(layer_norm(x, g, b, 1e-5), c1); }});
    }
    {
        Rng r = next_rng();
        auto x = leaf_uniform(r, {4, 3, 3}, -1, 1);
        auto g = leaf_uniform(r, {4}, 0.5, 1.5);
        auto b = leaf_uniform(r, {4}, -0.4, 0.4);
        auto c1 = rand_coef(r, 36);
        cases.push_back(
            {"layer_norm_rank3", {x, g, b}, [=] { return wsum(layer_norm(x, g, b, 1e-5), c1); }});
    }
    { // layout ops
        Rng r = next_rng();
        auto a = leaf_uniform(r, {2, 3, 2}, -1, 1);
        auto b = leaf_uniform(r, {2, 3, 3}, -1, 1);
        auto c = leaf_uniform(r, {1, 3, 2}, -1, 1);
        auto c1 = rand_coef(r, 2 * 3 * 5), c2 = rand_coef(r, 2 * 3 * 1), c3 = rand_coef(r, 5 * 3 * 2),
             c4 = rand_coef(r, 12), c5 = rand_coef(r, 12);
        cases.push_back({"concat/crop/reshape/add_n", {a, b, c}, [=] {
                             auto cw = concat_width(a, b);
                             auto t = wsum(cw, c1);
                             t = add(t, wsum(crop_width(b, 1, 2), c2));
                             t = add(t, wsum(concat_channel({a, a, c}), c3));
                             t = add(t, wsum(reshape(a, {6, 2}), c4));
                             t = add(t, wsum(add_n({a, a, a}), c5));
                             return t;
                         }});
    }
    {
        Rng r = next_rng();
        auto a = leaf_uniform(r, {4, 2, 3}, -1, 1);
        auto c1 = rand_coef(r, 2 * 2 * 3);
        cases.push_back(
            {"crop_channel", {a}, [=] { return wsum(crop_channel(a, 1, 3), c1); }});
    }
    { // bilinear upsample, even and odd targets
        Rng r = next_rng();
        auto a = leaf_uniform(r, {2, 3, 4}, -1, 1);
        auto c1 = rand_coef(r, 2 * 6 * 8), c2 = rand_coef(r, 2 * 5 * 7);
        cases.push_back({"bilinear_upsample", {a}, [=] {
                             return add(wsum(bilinear_upsample(a, 6, 8), c1),
                                        wsum(bilinear_upsample(a, 5, 7), c2));
                         }});
    }
    { // channel/spatial helpers
        Rng r = next_rng();
        auto x = leaf_uniform(r, {4, 3, 3}, -1, 1);
        auto s = leaf_uniform(r, {4}, 0.2, 1.2);
        auto m = leaf_uniform(r, {3, 3}, -1, 1);
        auto c1 = rand_coef(r, 4), c2 = rand_coef(r, 9), c3 = rand_coef(r, 36),
             c4 = rand_coef(r, 36), c5 = rand_coef(r, 36);
        cases.push_back({"spatial_mean/channel_sum/scales/outer", {x, s, m}, [=] {
                             auto t = add(wsum(spatial_mean(x), c1), wsum(channel_sum(x), c2));
                             t = add(t, wsum(scale_channels(x, s), c3));
                             t = add(t, wsum(scale_map(x, m), c4));
                             return add(t, wsum(outer_cmap(s, m), c5));
                         }});
    }
    {
        Rng r = next_rng();
        auto x = leaf_uniform(r, {4, 3, 2}, -1, 1);
        auto g = leaf_uniform(r, {2, 3, 2}, -1, 1);
        auto b = leaf_uniform(r, {4}, -0.5, 0.5);
        auto c1 = rand_coef(r, 2 * 3 * 2), c2 = rand_coef(r, 4 * 3 * 2), c3 = rand_coef(r, 4 * 3 * 2),
             c4 = rand_coef(r, 4 * 3 * 2);
        cases.push_back({"group_mean/group_broadcast/bias/softmax", {x, g, b}, [=] {
                             auto t = wsum(group_mean(x, 2), c1);
                             t = add(t, wsum(group_broadcast(g, 4), c2));
                             t = add(t, wsum(add_bias_channels(x, b), c3));
                             return add(t, wsum(softmax_channels(x), c4));
                         }});
    }
    { // dropout / drop_path with a fixed key (mask is constant w.r.t. data)
        Rng r = next_rng();
        auto x = leaf_uniform(r, {3, 4}, -1, 1);
        DropKey k1{seed, 3, 11}, k2{seed, 4, 12};
        auto c1 = rand_coef(r, 12), c2 = rand_coef(r, 12);
        cases.push_back({"dropout/drop_path", {x}, [=] {
                             return add(wsum(dropout(x, 0.4, k1, true), c1),
                                        wsum(drop_path(x, 0.3, k2, true), c2));
                         }});
    }
    { // fused cross-entropy with weights and ignored pixels
        Rng r = next_rng();
        auto logits = leaf_uniform(r, {3, 3, 4}, -1, 1);
        std::vector<int> labels(12);
        for (std::size_t i = 0; i < labels.size(); ++i)
            labels[i] = static_cast<int>(r.uniform_int(3));
        labels[2] = -1;
        labels[9] = -1;
        std::vector<double> wts{0.7, 1.3, 1.1};
        cases.push_back({"cross_entropy", {logits}, [=] {
                             return cross_entropy(logits, labels, wts, -1);
                         }});
    }
    { // spectral round trip (pow2 and non-pow2 extents)
        Rng r = next_rng();
        auto x = leaf_uniform(r, {1, 4, 4}, -1, 1);
        auto y = leaf_uniform(r, {1, 3, 5}, -1, 1);
        auto c1 = rand_coef(r, 16), c2 = rand_coef(r, 16), c3 = rand_coef(r, 15);
        cases.push_back({"fft2d/ifft2d_real", {x, y}, [=] {
                             auto f = fft2d(x);
                             auto t = add(wsum(f.re, c1), wsum(f.im, c2));
                             auto g = fft2d(y);
                             return add(t, wsum(ifft2d_real(g), c3));
                         }});
    }
    { // ifft2d full complex output
        Rng r = next_rng();
        auto re = leaf_uniform(r, {1, 4, 4}, -1, 1);
        auto im = leaf_uniform(r, {1, 4, 4}, -1, 1);
        auto c1 = rand_coef(r, 16), c2 = rand_coef(r, 16);
        cases.push_back({"ifft2d", {re, im}, [=] {
                             auto g = ifft2d(ComplexPair{re, im});
                             return add(wsum(g.re, c1), wsum(g.im, c2));
                         }});
    }
    { // scan round trips
        Rng r = next_rng();
        auto x = leaf_uniform(r, {3, 2, 4}, -1, 1);
        auto c1 = rand_coef(r, 24), c2 = rand_coef(r, 8 * 3);
        cases.push_back({"scan_to_seq/seq_to_spatial", {x}, [=] {
                             auto t = wsum(seq_to_spatial(scan_to_seq(x, ScanDir::col_rev),
                                                          ScanDir::col_rev, 2, 4),
                                           c1);
                             return add(t, wsum(scan_to_seq(x, ScanDir::row_rev), c2));
                         }});
    }
    { // selective scan recurrence
        Rng r = next_rng();
        const std::int64_t L = 6, D = 3, N = 2;
        auto u = leaf_uniform(r, {L, D}, -1, 1);
        auto delta_raw = leaf_uniform(r, {L, D}, -0.5, 0.8);
        auto a_raw = leaf_uniform(r, {D, N}, -0.5, 0.5);
        auto B = leaf_uniform(r, {L, N}, -1, 1);
        auto C = leaf_uniform(r, {L, N}, -1, 1);
        auto Dk = leaf_uniform(r, {D}, -0.5, 0.5);
        auto c1 = rand_coef(r, L * D);
        cases.push_back({"selective_scan", {u, delta_raw, a_raw, B, C, Dk}, [=] {
                             auto delta = add_const(softplus(delta_raw), 0.01);
                             auto A = neg(add_const(softplus(a_raw), 0.05));
                             return wsum(selective_scan(u, delta, A, B, C, Dk), c1);
                         }});
    }
    { // ssm_apply (projections + scan)
        Rng r = next_rng();
        const std::int64_t L = 5, D = 3, N = 2;
        SSMParams p;
        auto seq = leaf_uniform(r, {L, D}, -1, 1);
        p.A = leaf_uniform(r, {D, N}, -1.2, -0.3);
        p.Dskip = leaf_uniform(r, {D}, -0.5, 0.5);
        p.w_delta = leaf_uniform(r, {D, D}, -0.5, 0.5);
        p.b_delta = leaf_uniform(r, {D}, -0.3, 0.3);
        p.w_b = leaf_uniform(r, {N, D}, -0.5, 0.5);
        p.w_c = leaf_uniform(r, {N, D}, -0.5, 0.5);
        auto c1 = rand_coef(r, L * D);
        cases.push_back({"ssm_apply",
                         {seq, p.A, p.Dskip, p.w_delta, p.b_delta, p.w_b, p.w_c},
                         [=] { return wsum(ssm_apply(seq, p), c1); }});
    }
    { // frequency prompt generator, soft mode
        Rng r = next_rng();
        const std::int64_t C = 4;
        FcpgParams p;
        p.groups = 2;
        p.tau = 0.05;
        p.mode = FcpgMode::soft;
        p.spm_enabled = true;
        auto x = leaf_uniform(r, {C, 4, 4}, -1, 1);
        p.theta_a = leaf_uniform(r, {1}, -1.5, -0.5);
        p.theta_b = leaf_uniform(r, {1}, -1.5, -0.5);
        p.alpha = leaf_uniform(r, {1}, 0.1, 0.4);
        std::vector<TensorPtr> leaves{x, p.theta_a, p.theta_b, p.alpha};
        for (int bnd = 0; bnd < 2; ++bnd) {
            p.fc1_w[bnd] = leaf_uniform(r, {C, C}, -0.5, 0.5);
            p.fc1_b[bnd] = leaf_uniform(r, {C}, -0.2, 0.2);
            p.fc2_w[bnd] = leaf_uniform(r, {C, C}, -0.5, 0.5);
            p.fc2_b[bnd] = leaf_uniform(r, {C}, -0.2, 0.2);
            p.spat_w[bnd] = leaf_uniform(r, {1, C, 3, 3}, -0.4, 0.4);
            p.spat_b[bnd] = leaf_uniform(r, {1}, -0.2, 0.2);
            for (auto t : {p.fc1_w[bnd], p.fc1_b[bnd], p.fc2_w[bnd], p.fc2_b[bnd], p.spat_w[bnd],
                           p.spat_b[bnd]})
                leaves.push_back(t);
        }
        p.fuse_w = leaf_uniform(r, {C, 2 * C, 1, 1}, -0.4, 0.4);
        p.fuse_b = leaf_uniform(r, {C}, -0.2, 0.2);
        p.spm_w = leaf_uniform(r, {2, 2, 3, 3}, -0.4, 0.4);
        p.spm_b = leaf_uniform(r, {2}, -0.2, 0.2);
        for (auto t : {p.fuse_w, p.fuse_b, p.spm_w, p.spm_b}) leaves.push_back(t);
        auto c1 = rand_coef(r, C * 4 * 4);
        cases.push_back({"fcpg_forward", leaves, [=] { return wsum(fcpg_forward(x, p), c1); }});
    }
    { // lovasz variants at points with distinct margins
        Rng r = next_rng();
        auto logits = leaf_uniform(r, {2, 3, 3}, -1.5, 1.5);
        auto hinge_logits = leaf_uniform(r, {7}, -1.5, 1.5);
        std::vector<int> labels(9);
        for (auto& v : labels) v = static_cast<int>(r.uniform_int(2));
        labels[4] = -1;
        std::vector<char> fg(7);
        for (auto& v : fg) v = static_cast<char>(r.uniform_int(2));
        for (std::size_t i = 0; i < fg.size(); ++i) {
            // keep hinge margins away from the relu kink
            const double s = fg[i] ? 1.0 : -1.0;
            if (std::abs(1.0 - hinge_logits->data[i] * s) < 0.15) hinge_logits->data[i] -= 0.3 * s;
        }
        cases.push_back({"lovasz_softmax/hinge", {logits, hinge_logits}, [=] {
                             auto t = lovasz_softmax(softmax_channels(logits), labels, -1);
                             return add(t, lovasz_hinge(hinge_logits, fg));
                         }});
    }
    { // full task losses over synthetic head outputs
        Rng r = next_rng();
        const std::int64_t H = 3, W = 3;
        auto change = leaf_uniform(r, {2, H, W}, -1, 1);
        auto s1 = leaf_uniform(r, {4, H, W}, -1, 1);
        auto s2 = leaf_uniform(r, {4, H, W}, -1, 1);
        auto loc = leaf_uniform(r, {2, H, W}, -1, 1);
        auto dmg = leaf_uniform(r, {5, H, W}, -1, 1);
        std::vector<int> cm(9), t1(9), t2(9), lm(9), dm(9);
        for (std::size_t i = 0; i < 9; ++i) {
            cm[i] = static_cast<int>(r.uniform_int(2));
            t1[i] = static_cast<int>(r.uniform_int(4));
            t2[i] = static_cast<int>(r.uniform_int(4));
            lm[i] = static_cast<int>(r.uniform_int(2));
            dm[i] = lm[i] ? 1 + static_cast<int>(r.uniform_int(4)) : 0;
        }
        std::vector<double> cw2{0.8, 1.2}, cw4{0.9, 1.1, 1.0, 1.0}, cw5{1.0, 0.9, 1.1, 1.0, 1.0};
        cases.push_back({"scd_loss/bda_loss", {change, s1, s2, loc, dmg}, [=] {
                             HeadOutputs o1;
                             o1.change = change;
                             o1.sem_t1 = s1;
                             o1.sem_t2 = s2;
                             HeadOutputs o2;
                             o2.loc = loc;
                             o2.dmg = dmg;
                             auto t = scd_loss(o1, cm, t1, t2, cw2, cw4).total;
                             return add(t, bda_loss(o2, lm, dm, cw2, cw5).total);
                         }});
    }
    { // tiny end-to-end model, probed at representative parameters
        Rng r = next_rng();
        ModelConfig mc;
        mc.task = Task::bcd;
        mc.dims = {4, 8, 16, 32};
        mc.depths = {1, 1, 1, 1};
        mc.state_dim = 2;
        mc.c_dec = 8;
        mc.c_hid = 8;
        mc.fcpg_groups = 2;
        mc.droppath_max = 0.0;
        mc.head_dropout = 0.0;
        mc.init_seed = hash_combine(seed, 99);
        auto model = std::make_shared<Model>(mc);
        auto pre = leaf_uniform(r, {3, 32, 32}, 0, 1);
        auto post = leaf_uniform(r, {3, 32, 32}, 0, 1);
        std::vector<int> labels(32 * 32);
        for (auto& v : labels) v = static_cast<int>(r.uniform_int(2));

        std::vector<TensorPtr> leaves{pre, post};
        std::vector<std::pair<std::size_t, std::int64_t>> probes{{0, 7}, {1, 100}};
        const std::vector<std::string> probe_params{
            "backbone.stem.conv1.w", "backbone.s0.b0.ssm.A", "backbone.s0.b0.ssm.w_delta",
            "fcpg.s1.theta_a",       "fcpg.s1.alpha",        "decoder.lateral2.w",
            "decoder.fuse.w",        "head.conv1.w",         "head.task.change.b"};
        for (const auto& name : probe_params) {
            auto t = model->params().find(name);
            if (!t) throw ContractError("grad case: missing model parameter " + name);
            leaves.push_back(t);
            probes.emplace_back(leaves.size() - 1, 0);
            if (t->numel() > 3) probes.emplace_back(leaves.size() - 1, t->numel() / 2);
        }
        cases.push_back({"model_bcd_end_to_end", leaves,
                         [=] {
                             RunCtx ctx{seed, 0, false, 0};
                             auto out = model->forward(pre, post, ctx);
                             return bcd_loss(out, labels).total;
                         },
                         probes, 1e-6});
    }
    return cases;
}

GradCase sabotaged_case(std::uint64_t seed) {
    PrecisionGuard prec(Precision::f64);
    Rng r(hash_combine(seed, 0xbadULL));
    auto x = rand_uniform({2, 4, 4}, r, -1, 1, true);
    auto w = rand_uniform({2, 2, 3, 3}, r, -0.5, 0.5, true);
    auto coef = rand_coef(r, 2 * 4 * 4);
    return {"conv2d_sabotaged_backward", {x, w}, [=] {
                // identity forward, sign-flipped backward: emulates a wrong
                // conv weight gradient that the suite must flag
                auto w_bad = make_node(
                    "sabotage", w->shape, w->data, {w}, [](Tensor& t) {
                        auto& in = *t.inputs[0];
                        in.ensure_grad();
                        for (std::size_t i = 0; i < in.grad.size(); ++i) in.grad[i] -= t.grad[i];
                    });
                return dot_const(conv2d(x, w_bad, nullptr, 1, 1), coef);
            }};
}

} // namespace unicd
