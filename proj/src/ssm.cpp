#include "unicd/ssm.hpp"

#include "unicd/ops.hpp"

#include <cmath>

namespace unicd {

SSMProjections generate_params(const TensorPtr& x, const SSMParams& p) {
    SSMProjections out;
    out.delta = softplus(linear(x, p.w_delta, p.b_delta));
    out.B = linear(x, p.w_b, nullptr);
    out.C = linear(x, p.w_c, nullptr);
    return out;
}

TensorPtr selective_scan(const TensorPtr& u, const TensorPtr& delta, const TensorPtr& A,
                         const TensorPtr& B, const TensorPtr& C, const TensorPtr& Dskip) {
    if (u->rank() != 2 || delta->shape != u->shape)
        throw ShapeError("selective_scan: u and delta must be matching [L,D]");
    std::int64_t L = u->extent(0), D = u->extent(1);
    if (A->rank() != 2 || A->extent(0) != D)
        throw ShapeError("selective_scan: A must be [D,N]");
    std::int64_t N = A->extent(1);
    if (B->rank() != 2 || B->extent(0) != L || B->extent(1) != N || B->shape != C->shape)
        throw ShapeError("selective_scan: B and C must be matching [L,N]");
    if (Dskip->rank() != 1 || Dskip->extent(0) != D)
        throw ShapeError("selective_scan: Dskip must be [D]");

    std::vector<double> y(static_cast<std::size_t>(L * D), 0.0);
    // h_all[l] = hidden state after consuming step l; kept for the backward pass.
    std::vector<double> h_all(static_cast<std::size_t>(L * D * N), 0.0);
    std::vector<double> h(static_cast<std::size_t>(D * N), 0.0);
    for (std::int64_t l = 0; l < L; ++l) {
        for (std::int64_t d = 0; d < D; ++d) {
            double dt = delta->data[static_cast<std::size_t>(l * D + d)];
            double ul = u->data[static_cast<std::size_t>(l * D + d)];
            double acc = 0.0;
            for (std::int64_t n = 0; n < N; ++n) {
                double abar = std::exp(dt * A->data[static_cast<std::size_t>(d * N + n)]);
                double hv = abar * h[static_cast<std::size_t>(d * N + n)] +
                            dt * B->data[static_cast<std::size_t>(l * N + n)] * ul;
                h[static_cast<std::size_t>(d * N + n)] = hv;
                h_all[static_cast<std::size_t>((l * D + d) * N + n)] = hv;
                acc += C->data[static_cast<std::size_t>(l * N + n)] * hv;
            }
            y[static_cast<std::size_t>(l * D + d)] =
                acc + Dskip->data[static_cast<std::size_t>(d)] * ul;
        }
    }

    return make_node(
        "selective_scan", {L, D}, std::move(y), {u, delta, A, B, C, Dskip},
        [L, D, N, h_all = std::move(h_all)](Tensor& self) {
            auto& iu = *self.inputs[0];
            auto& idt = *self.inputs[1];
            auto& iA = *self.inputs[2];
            auto& iB = *self.inputs[3];
            auto& iC = *self.inputs[4];
            auto& iD = *self.inputs[5];
            for (auto& t : self.inputs)
                if (t->requires_grad) t->ensure_grad();
            bool gu = iu.requires_grad, gdt = idt.requires_grad, gA = iA.requires_grad,
                 gB = iB.requires_grad, gC = iC.requires_grad, gD = iD.requires_grad;

            // gh carries dL/dh_l while walking l backwards.
            std::vector<double> gh(static_cast<std::size_t>(D * N), 0.0);
            for (std::int64_t l = L - 1; l >= 0; --l) {
                for (std::int64_t d = 0; d < D; ++d) {
                    double gy = self.grad[static_cast<std::size_t>(l * D + d)];
                    double dt = idt.data[static_cast<std::size_t>(l * D + d)];
                    double ul = iu.data[static_cast<std::size_t>(l * D + d)];
                    if (gD) iD.grad[static_cast<std::size_t>(d)] += gy * ul;
                    if (gu)
                        iu.grad[static_cast<std::size_t>(l * D + d)] +=
                            gy * iD.data[static_cast<std::size_t>(d)];
                    double gdt_acc = 0.0, gu_acc = 0.0;
                    for (std::int64_t n = 0; n < N; ++n) {
                        std::size_t hi = static_cast<std::size_t>((l * D + d) * N + n);
                        std::size_t si = static_cast<std::size_t>(d * N + n);
                        double cv = iC.data[static_cast<std::size_t>(l * N + n)];
                        double hv = h_all[hi];
                        double ghm = gh[si] + gy * cv; // output + recurrence paths
                        if (gC) iC.grad[static_cast<std::size_t>(l * N + n)] += gy * hv;
                        double av = iA.data[si];
                        double abar = std::exp(dt * av);
                        double hprev =
                            l > 0 ? h_all[static_cast<std::size_t>(((l - 1) * D + d) * N + n)]
                                  : 0.0;
                        double bv = iB.data[static_cast<std::size_t>(l * N + n)];
                        double gabar = ghm * hprev;
                        gdt_acc += gabar * av * abar + ghm * bv * ul;
                        gu_acc += ghm * dt * bv;
                        if (gA) iA.grad[si] += gabar * dt * abar;
                        if (gB)
                            iB.grad[static_cast<std::size_t>(l * N + n)] += ghm * dt * ul;
                        gh[si] = ghm * abar;
                    }
                    if (gdt) idt.grad[static_cast<std::size_t>(l * D + d)] += gdt_acc;
                    if (gu) iu.grad[static_cast<std::size_t>(l * D + d)] += gu_acc;
                }
            }
        });
}

TensorPtr ssm_apply(const TensorPtr& seq, const SSMParams& p) {
    auto proj = generate_params(seq, p);
    return selective_scan(seq, proj.delta, p.A, proj.B, proj.C, p.Dskip);
}

} // namespace unicd
