#include "unicd/metrics.hpp"

#include <cmath>

#include "unicd/common.hpp"

namespace unicd {

void BinaryMetrics::accumulate(const std::vector<int>& ref, const std::vector<int>& pred) {
    if (ref.size() != pred.size())
        throw ShapeError("BinaryMetrics::accumulate: length mismatch");
    for (std::size_t i = 0; i < ref.size(); ++i) {
        const bool r = ref[i] != 0, p = pred[i] != 0;
        if (r && p) ++tp;
        else if (!r && p) ++fp;
        else if (r && !p) ++fn;
        else ++tn;
    }
}

namespace {
double ratio(std::int64_t num, std::int64_t den, bool& degenerate) {
    if (den == 0) {
        degenerate = true;
        return 0.0;
    }
    return static_cast<double>(num) / static_cast<double>(den);
}
} // namespace

double BinaryMetrics::precision() { return ratio(tp, tp + fp, degenerate); }
double BinaryMetrics::recall() { return ratio(tp, tp + fn, degenerate); }

double BinaryMetrics::f1() {
    const double p = precision(), r = recall();
    if (p + r == 0.0) {
        degenerate = true;
        return 0.0;
    }
    return 2.0 * p * r / (p + r);
}

double BinaryMetrics::iou() { return ratio(tp, tp + fp + fn, degenerate); }

double BinaryMetrics::oa() const {
    const std::int64_t n = tp + fp + fn + tn;
    return n == 0 ? 0.0 : static_cast<double>(tp + tn) / static_cast<double>(n);
}

ConfusionMatrix::ConfusionMatrix(int n_classes) : n(n_classes) {
    if (n_classes <= 0) throw ConfigError("ConfusionMatrix: need at least one class");
    mat.assign(static_cast<std::size_t>(n) * n, 0);
}

void ConfusionMatrix::accumulate(const std::vector<int>& ref, const std::vector<int>& pred,
                                 int ignore_index) {
    if (ref.size() != pred.size())
        throw ShapeError("ConfusionMatrix::accumulate: length mismatch");
    for (std::size_t i = 0; i < ref.size(); ++i) {
        if (ref[i] == ignore_index) continue;
        if (ref[i] < 0 || ref[i] >= n || pred[i] < 0 || pred[i] >= n)
            throw DataError("ConfusionMatrix::accumulate: label out of range");
        ++at(ref[i], pred[i]);
    }
}

std::int64_t ConfusionMatrix::total() const {
    std::int64_t s = 0;
    for (auto v : mat) s += v;
    return s;
}

ScdMetrics scd_metrics(const ConfusionMatrix& q) {
    ScdMetrics m;
    const int n = q.n;
    const std::int64_t total = q.total();
    if (total == 0) {
        m.degenerate = true;
        return m;
    }

    std::int64_t diag = 0;
    for (int c = 0; c < n; ++c) diag += q.at(c, c);
    m.oa = static_cast<double>(diag) / static_cast<double>(total);

    // binary unchanged/changed IoUs with the changed classes pooled
    std::int64_t ref_chg = 0, pred_chg = 0, both_chg = 0;
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) {
            const std::int64_t v = q.at(r, c);
            if (r != 0) ref_chg += v;
            if (c != 0) pred_chg += v;
            if (r != 0 && c != 0) both_chg += v;
        }
    const std::int64_t unch_inter = q.at(0, 0);
    const std::int64_t unch_union = total - both_chg;
    const std::int64_t chg_union = ref_chg + pred_chg - both_chg;
    m.iou_unchanged =
        unch_union == 0 ? 0.0 : static_cast<double>(unch_inter) / static_cast<double>(unch_union);
    m.iou_changed =
        chg_union == 0 ? 0.0 : static_cast<double>(both_chg) / static_cast<double>(chg_union);
    if (unch_union == 0 || chg_union == 0) m.degenerate = true;
    m.miou = 0.5 * (m.iou_unchanged + m.iou_changed);

    // kappa on the matrix with the true-negative cell zeroed
    const double nhat = static_cast<double>(total - q.at(0, 0));
    if (nhat <= 0.0) {
        m.degenerate = true;
    } else {
        double dhat = 0.0, pe = 0.0;
        for (int c = 0; c < n; ++c) {
            double row = 0.0, col = 0.0;
            for (int j = 0; j < n; ++j) {
                std::int64_t rv = q.at(c, j), cv = q.at(j, c);
                if (c == 0 && j == 0) rv = cv = 0;
                row += static_cast<double>(rv);
                col += static_cast<double>(cv);
            }
            if (c != 0) dhat += static_cast<double>(q.at(c, c));
            pe += row * col;
        }
        const double po = dhat / nhat;
        pe /= nhat * nhat;
        double kappa = 0.0;
        if (std::abs(1.0 - pe) < 1e-12) {
            m.degenerate = true;
        } else {
            kappa = (po - pe) / (1.0 - pe);
        }
        m.sek = std::exp(m.iou_changed - 1.0) * kappa;
    }

    // semantic F1 over the changed classes
    std::int64_t sc_diag = 0;
    for (int c = 1; c < n; ++c) sc_diag += q.at(c, c);
    if (pred_chg == 0 || ref_chg == 0) {
        m.degenerate = true;
        m.f1_scd = 0.0;
    } else {
        const double p = static_cast<double>(sc_diag) / static_cast<double>(pred_chg);
        const double r = static_cast<double>(sc_diag) / static_cast<double>(ref_chg);
        m.f1_scd = p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
    }
    return m;
}

BdaMetrics bda_metrics(BinaryMetrics loc_cm, const ConfusionMatrix& dmg_cm) {
    BdaMetrics m;
    m.f1_loc = loc_cm.f1();
    if (loc_cm.degenerate) m.degenerate = true;

    const int n = dmg_cm.n;
    double inv_sum = 0.0;
    bool any_zero = false;
    for (int c = 1; c < n; ++c) {
        std::int64_t tp = dmg_cm.at(c, c), fp = 0, fn = 0;
        for (int j = 0; j < n; ++j) {
            if (j == c) continue;
            fp += dmg_cm.at(j, c);
            fn += dmg_cm.at(c, j);
        }
        double f1 = 0.0;
        const std::int64_t den = 2 * tp + fp + fn;
        if (den > 0) f1 = 2.0 * static_cast<double>(tp) / static_cast<double>(den);
        m.f1_class.push_back(f1);
        if (f1 > 0.0) inv_sum += 1.0 / f1;
        else any_zero = true;
    }
    if (m.f1_class.empty() || any_zero) {
        m.f1_clf = 0.0;
        m.degenerate = m.degenerate || any_zero || m.f1_class.empty();
    } else {
        m.f1_clf = static_cast<double>(m.f1_class.size()) / inv_sum;
    }
    m.f1_overall = 0.3 * m.f1_loc + 0.7 * m.f1_clf;
    return m;
}

} // namespace unicd
