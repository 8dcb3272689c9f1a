#pragma once

#include <functional>

#include "unicd/tensor.hpp"

namespace unicd {

// One finite-difference fixture: `forward` must rebuild the graph from the
// shared `leaves` on every call (pure in the leaf data).
struct GradCase {
    std::string name;
    std::vector<TensorPtr> leaves;
    std::function<TensorPtr()> forward; // returns a scalar
    // (leaf index, flat element) pairs to probe; empty = every element
    std::vector<std::pair<std::size_t, std::int64_t>> probes;
    // 0 = use the suite-wide step. The end-to-end model case needs a smaller
    // step: curvature through the stacked exp() discretization makes the
    // O(h^2) truncation error exceed tol at the default h.
    double h_override = 0.0;
};

struct GradCaseResult {
    std::string name;
    double max_rel = 0.0;
    std::int64_t checked = 0;
    bool pass = false;
    std::string worst; // "leaf i elem j: analytic=…, numeric=…"
};

// Central differences in f64: rel = |a-n| / max(1,|a|,|n|).
GradCaseResult run_grad_case(const GradCase& c, double h = 1e-5, double tol = 1e-4);

std::vector<GradCase> default_grad_cases(std::uint64_t seed);

// Mutation canary: a conv case whose weight backward has an injected sign
// flip; the suite must fail on it.
GradCase sabotaged_case(std::uint64_t seed);

std::vector<GradCaseResult> run_grad_suite(const std::vector<GradCase>& cases, double h = 1e-5,
                                           double tol = 1e-4);

} // namespace unicd
