#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace unicd {

// Binary confusion counts with derived scores. Any score whose denominator is
// zero comes back 0.0 with `degenerate` set, never NaN.
struct BinaryMetrics {
    std::int64_t tp = 0, fp = 0, fn = 0, tn = 0;
    bool degenerate = false;

    void accumulate(const std::vector<int>& ref, const std::vector<int>& pred);
    double precision();
    double recall();
    double f1();
    double iou();
    double oa() const;
};

// Row = reference class, column = predicted class.
struct ConfusionMatrix {
    int n = 0;
    std::vector<std::int64_t> mat;

    explicit ConfusionMatrix(int n_classes);
    void accumulate(const std::vector<int>& ref, const std::vector<int>& pred,
                    int ignore_index = -1);
    std::int64_t at(int r, int c) const { return mat[static_cast<std::size_t>(r) * n + c]; }
    std::int64_t& at(int r, int c) { return mat[static_cast<std::size_t>(r) * n + c]; }
    std::int64_t total() const;
};

struct ScdMetrics {
    double oa = 0.0;
    double miou = 0.0;
    double sek = 0.0;
    double f1_scd = 0.0;
    double iou_changed = 0.0;
    double iou_unchanged = 0.0;
    bool degenerate = false;
};

// q: (K+1)x(K+1) confusion over semantic-change maps (0 = unchanged) with both
// temporal directions accumulated.
ScdMetrics scd_metrics(const ConfusionMatrix& q);

struct BdaMetrics {
    double f1_loc = 0.0;
    std::vector<double> f1_class; // damage levels 1..D
    double f1_clf = 0.0;          // harmonic mean of f1_class
    double f1_overall = 0.0;      // 0.3·loc + 0.7·clf
    bool degenerate = false;
};

// loc_cm: binary localization counts; dmg_cm: (D+1)x(D+1) confusion restricted
// to pixels whose reference damage level is nonzero.
BdaMetrics bda_metrics(BinaryMetrics loc_cm, const ConfusionMatrix& dmg_cm);

} // namespace unicd
