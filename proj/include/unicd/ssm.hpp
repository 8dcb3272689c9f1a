#pragma once

#include "unicd/tensor.hpp"

namespace unicd {

// Per-block selective-SSM parameters, shared by all four scan directions.
struct SSMParams {
    TensorPtr A;      // [D,N], entries kept strictly negative at init
    TensorPtr Dskip;  // [D]
    TensorPtr w_delta; // [D,D]
    TensorPtr b_delta; // [D]
    TensorPtr w_b;     // [N,D]
    TensorPtr w_c;     // [N,D]
};

struct SSMProjections {
    TensorPtr delta; // [L,D], strictly positive
    TensorPtr B;     // [L,N]
    TensorPtr C;     // [L,N]
};

// Δ = softplus(x·w_Δᵀ + b_Δ), B = x·W_Bᵀ, C = x·W_Cᵀ
SSMProjections generate_params(const TensorPtr& x, const SSMParams& p);

// Discrete recurrence with Ā = exp(Δ·A), B̄ = Δ·B:
//   h_t = Ā_t ⊙ h_{t-1} + B̄_t·u_t,  y_t = C_t·h_t + D ⊙ u_t,  h_0 = 0.
// Single fused op with a hand-written backward over the unrolled recurrence.
TensorPtr selective_scan(const TensorPtr& u, const TensorPtr& delta, const TensorPtr& A,
                         const TensorPtr& B, const TensorPtr& C, const TensorPtr& Dskip);

// generate_params + selective_scan on one sequence.
TensorPtr ssm_apply(const TensorPtr& seq, const SSMParams& p);

} // namespace unicd
