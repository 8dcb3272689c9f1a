#include "unicd/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace unicd {

double LossReport::component(const std::string& name) const {
    for (const auto& [k, v] : components)
        if (k == name) return v;
    throw ContractError("loss component not found: " + name);
}

std::vector<double> lovasz_grad(const std::vector<char>& gt_sorted) {
    const std::size_t p = gt_sorted.size();
    std::vector<double> jaccard(p), grad(p);
    double gts = 0.0;
    for (char g : gt_sorted) gts += g ? 1.0 : 0.0;
    double cum_fg = 0.0, cum_bg = 0.0;
    for (std::size_t i = 0; i < p; ++i) {
        if (gt_sorted[i]) cum_fg += 1.0; else cum_bg += 1.0;
        const double inter = gts - cum_fg;
        const double uni = gts + cum_bg;
        jaccard[i] = 1.0 - (uni > 0.0 ? inter / uni : 0.0);
    }
    for (std::size_t i = 0; i < p; ++i)
        grad[i] = i == 0 ? jaccard[0] : jaccard[i] - jaccard[i - 1];
    return grad;
}

namespace {

// Stable argsort of `vals` descending; order of the permutation is a constant
// w.r.t. autodiff (the sorted-dot form keeps it out of the graph).
std::vector<std::size_t> argsort_desc(const std::vector<double>& vals) {
    std::vector<std::size_t> idx(vals.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return vals[a] > vals[b]; });
    return idx;
}

} // namespace

TensorPtr lovasz_extension(const TensorPtr& errors, const std::vector<char>& gt) {
    if (errors->numel() != static_cast<std::int64_t>(gt.size()))
        throw ShapeError("lovasz_extension: errors/gt length mismatch");
    if (gt.empty()) return scalar(0.0);
    const auto perm = argsort_desc(errors->data);
    std::vector<char> gt_sorted(gt.size());
    for (std::size_t j = 0; j < perm.size(); ++j) gt_sorted[j] = gt[perm[j]];
    const auto g = lovasz_grad(gt_sorted);
    std::vector<double> coef(gt.size(), 0.0);
    for (std::size_t j = 0; j < perm.size(); ++j) coef[perm[j]] = g[j];
    return dot_const(errors, coef);
}

TensorPtr lovasz_softmax(const TensorPtr& probs, const std::vector<int>& labels,
                         int ignore_index) {
    if (probs->shape.size() != 3)
        throw ShapeError("lovasz_softmax: probs must be [K,H,W]");
    const std::int64_t k = probs->shape[0];
    const std::int64_t hw = probs->shape[1] * probs->shape[2];
    if (static_cast<std::int64_t>(labels.size()) != hw)
        throw ShapeError("lovasz_softmax: label count mismatch");

    std::vector<std::int64_t> valid;
    std::set<int> present;
    for (std::int64_t i = 0; i < hw; ++i) {
        if (labels[i] == ignore_index) continue;
        if (labels[i] < 0 || labels[i] >= k)
            throw DataError("lovasz_softmax: label out of range at pixel " + std::to_string(i));
        valid.push_back(i);
        present.insert(labels[i]);
    }
    if (valid.empty() || present.empty()) return scalar(0.0);

    std::vector<TensorPtr> terms;
    for (int c : present) {
        std::vector<std::int64_t> idx(valid.size());
        std::vector<double> fg(valid.size());
        std::vector<char> gt(valid.size());
        for (std::size_t j = 0; j < valid.size(); ++j) {
            idx[j] = static_cast<std::int64_t>(c) * hw + valid[j];
            gt[j] = labels[valid[j]] == c ? 1 : 0;
            fg[j] = gt[j] ? 1.0 : 0.0;
        }
        auto p_sel = take_indices(probs, idx);
        auto fg_t = tensor({static_cast<std::int64_t>(fg.size())}, fg);
        auto errors = abs_t(sub(fg_t, p_sel));
        terms.push_back(lovasz_extension(errors, gt));
    }
    return mul_const(add_n(terms), 1.0 / static_cast<double>(terms.size()));
}

TensorPtr lovasz_hinge(const TensorPtr& logits, const std::vector<char>& fg) {
    if (logits->numel() != static_cast<std::int64_t>(fg.size()))
        throw ShapeError("lovasz_hinge: logits/fg length mismatch");
    if (fg.empty()) return scalar(0.0);
    const std::int64_t m = logits->numel();
    std::vector<double> signs(m);
    for (std::int64_t i = 0; i < m; ++i) signs[i] = fg[i] ? 1.0 : -1.0;
    auto sign_t = tensor({m}, signs);
    // margins 1 - y·s; sort by the pre-relu margin so clipped ties keep order
    auto margins = add_const(neg(mul(logits, sign_t)), 1.0);
    const auto perm = argsort_desc(margins->data);
    std::vector<char> gt_sorted(fg.size());
    for (std::size_t j = 0; j < perm.size(); ++j) gt_sorted[j] = fg[perm[j]];
    const auto g = lovasz_grad(gt_sorted);
    std::vector<double> coef(fg.size(), 0.0);
    for (std::size_t j = 0; j < perm.size(); ++j) coef[perm[j]] = g[j];
    return dot_const(relu(margins), coef);
}

LossReport bcd_loss(const HeadOutputs& out, const std::vector<int>& labels) {
    auto ce = cross_entropy(out.change, labels, {}, -1);
    auto lov = lovasz_softmax(softmax_channels(out.change), labels, -1);
    LossReport r;
    r.components = {{"ce", ce->data[0]}, {"lovasz", lov->data[0]}};
    r.total = add(ce, mul_const(lov, 0.75));
    return r;
}

namespace {

// mean over unchanged pixels of 1 - cos(p1, p2), p = per-pixel class vectors
TensorPtr semantic_similarity_loss(const TensorPtr& sem_t1, const TensorPtr& sem_t2,
                                   const std::vector<int>& change) {
    auto p1 = softmax_channels(sem_t1);
    auto p2 = softmax_channels(sem_t2);
    auto num = channel_sum(mul(p1, p2));
    auto n1 = sqrt_t(channel_sum(mul(p1, p1)));
    auto n2 = sqrt_t(channel_sum(mul(p2, p2)));
    auto cosmap = div(num, mul(n1, n2));
    auto dist = add_const(neg(cosmap), 1.0);
    std::vector<char> unchanged(change.size());
    for (std::size_t i = 0; i < change.size(); ++i) unchanged[i] = change[i] == 0 ? 1 : 0;
    return masked_mean(dist, unchanged);
}

} // namespace

LossReport scd_loss(const HeadOutputs& out, const std::vector<int>& change,
                    const std::vector<int>& t1, const std::vector<int>& t2,
                    const std::vector<double>& cw_change, const std::vector<double>& cw_sem) {
    auto ce_cd = cross_entropy(out.change, change, cw_change, -1);
    auto ce_t1 = cross_entropy(out.sem_t1, t1, cw_sem, -1);
    auto ce_t2 = cross_entropy(out.sem_t2, t2, cw_sem, -1);
    auto sim = semantic_similarity_loss(out.sem_t1, out.sem_t2, change);
    auto lov_cd = lovasz_softmax(softmax_channels(out.change), change, -1);
    auto lov_t1 = lovasz_softmax(softmax_channels(out.sem_t1), t1, -1);
    auto lov_t2 = lovasz_softmax(softmax_channels(out.sem_t2), t2, -1);

    LossReport r;
    r.components = {{"ce_cd", ce_cd->data[0]},   {"ce_t1", ce_t1->data[0]},
                    {"ce_t2", ce_t2->data[0]},   {"sim", sim->data[0]},
                    {"lov_cd", lov_cd->data[0]}, {"lov_t1", lov_t1->data[0]},
                    {"lov_t2", lov_t2->data[0]}};
    auto sem_ce = add(add(ce_t1, ce_t2), mul_const(sim, 0.5));
    auto sem_lov = add(lov_t1, lov_t2);
    auto lov_all = add(lov_cd, mul_const(sem_lov, 0.5));
    r.total = add(add(ce_cd, mul_const(sem_ce, 0.5)), mul_const(lov_all, 0.75));
    return r;
}

LossReport bda_loss(const HeadOutputs& out, const std::vector<int>& loc,
                    const std::vector<int>& dmg, const std::vector<double>& cw_loc,
                    const std::vector<double>& cw_dmg) {
    auto ce_loc = cross_entropy(out.loc, loc, cw_loc, -1);
    auto ce_clf = cross_entropy(out.dmg, dmg, cw_dmg, 0);
    auto lov_loc = lovasz_softmax(softmax_channels(out.loc), loc, -1);
    auto lov_clf = lovasz_softmax(softmax_channels(out.dmg), dmg, 0);

    LossReport r;
    r.components = {{"ce_loc", ce_loc->data[0]},
                    {"ce_clf", ce_clf->data[0]},
                    {"lov_loc", lov_loc->data[0]},
                    {"lov_clf", lov_clf->data[0]}};
    r.total = add(add(ce_loc, ce_clf), add(mul_const(lov_loc, 0.5), lov_clf));
    return r;
}

std::vector<double> class_weights(const std::vector<const std::vector<int>*>& label_maps, int k,
                                  int ignore_index) {
    std::vector<double> counts(static_cast<std::size_t>(k), 0.0);
    for (const auto* m : label_maps) {
        for (int v : *m) {
            if (v == ignore_index) continue;
            if (v < 0 || v >= k) throw DataError("class_weights: label out of range");
            counts[static_cast<std::size_t>(v)] += 1.0;
        }
    }
    std::vector<double> w(static_cast<std::size_t>(k), 1.0);
    double sum = 0.0;
    int observed = 0;
    for (int c = 0; c < k; ++c) {
        if (counts[c] > 0.0) {
            w[c] = 1.0 / counts[c];
            sum += w[c];
            ++observed;
        }
    }
    if (observed == 0) return w;
    const double mean = sum / observed;
    for (int c = 0; c < k; ++c)
        if (counts[c] > 0.0) w[c] /= mean;
    return w;
}

} // namespace unicd
