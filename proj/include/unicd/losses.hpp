#pragma once

#include "unicd/model.hpp"
#include "unicd/ops.hpp"

namespace unicd {

struct LossReport {
    TensorPtr total;
    // pre-weight component values in composition order, e.g. ("ce_cd", 0.42)
    std::vector<std::pair<std::string, double>> components;

    double component(const std::string& name) const;
};

// Gradient of the Lovász extension of the Jaccard loss for a ground-truth
// vector already sorted by descending prediction error.
std::vector<double> lovasz_grad(const std::vector<char>& gt_sorted);

// Sorted-dot form of the extension: errors are sorted descending (stable on
// ties by index), weighted by lovasz_grad of the permuted ground truth. The
// ordering is treated as a constant; gradients flow through the dot product.
TensorPtr lovasz_extension(const TensorPtr& errors, const std::vector<char>& gt);

// Per-class extension on |fg - prob|, averaged over classes present in the
// labels (ignoring ignore_index pixels).
TensorPtr lovasz_softmax(const TensorPtr& probs, const std::vector<int>& labels,
                         int ignore_index = -1);

// Binary hinge variant on signed margins 1 - logit·sign.
TensorPtr lovasz_hinge(const TensorPtr& logits, const std::vector<char>& fg);

// L_ce + 0.75·L_lovasz
LossReport bcd_loss(const HeadOutputs& out, const std::vector<int>& labels);

// ce_cd + 0.5·(ce_t1 + ce_t2 + 0.5·sim) + 0.75·(lov_cd + 0.5·(lov_t1 + lov_t2))
LossReport scd_loss(const HeadOutputs& out, const std::vector<int>& change,
                    const std::vector<int>& t1, const std::vector<int>& t2,
                    const std::vector<double>& cw_change, const std::vector<double>& cw_sem);

// L_ce_loc + L_ce_clf + 0.5·L_lovasz_loc + L_lovasz_clf
LossReport bda_loss(const HeadOutputs& out, const std::vector<int>& loc,
                    const std::vector<int>& dmg, const std::vector<double>& cw_loc,
                    const std::vector<double>& cw_dmg);

// Inverse-frequency class weights over a label collection, renormalized so the
// mean over observed classes is 1; unobserved classes weight 1.
std::vector<double> class_weights(const std::vector<const std::vector<int>*>& label_maps, int k,
                                  int ignore_index = -1);

} // namespace unicd
