#include "doctest.h"

#include <cmath>
#include <vector>

#include "unicd/common.hpp"
#include "unicd/metrics.hpp"

using namespace unicd;

namespace {

// Everything below recomputes the scores straight from the count formulas so
// the library implementation is checked against an independent path.

struct ScdOracle {
    double oa, miou, sek, f1_scd;
};

ScdOracle scd_oracle(const ConfusionMatrix& q) {
    const int n = q.n;
    double total = 0, diag = 0, ref_chg = 0, pred_chg = 0, both = 0;
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) {
            const double v = static_cast<double>(q.at(r, c));
            total += v;
            if (r == c) diag += v;
            if (r != 0) ref_chg += v;
            if (c != 0) pred_chg += v;
            if (r != 0 && c != 0) both += v;
        }
    ScdOracle o{};
    o.oa = diag / total;
    const double iou_u = q.at(0, 0) / (total - both);
    const double iou_c = both / (ref_chg + pred_chg - both);
    o.miou = 0.5 * (iou_u + iou_c);

    // kappa over the matrix with the (0,0) cell removed
    const double nhat = total - static_cast<double>(q.at(0, 0));
    double po = 0, pe = 0;
    for (int c = 0; c < n; ++c) {
        double row = 0, col = 0;
        for (int j = 0; j < n; ++j) {
            double rv = static_cast<double>(q.at(c, j));
            double cv = static_cast<double>(q.at(j, c));
            if (c == 0 && j == 0) rv = cv = 0;
            row += rv;
            col += cv;
        }
        if (c != 0) po += static_cast<double>(q.at(c, c));
        pe += row * col;
    }
    po /= nhat;
    pe /= nhat * nhat;
    o.sek = std::exp(iou_c - 1.0) * (po - pe) / (1.0 - pe);

    double sc_diag = 0;
    for (int c = 1; c < n; ++c) sc_diag += static_cast<double>(q.at(c, c));
    const double p = sc_diag / pred_chg, r = sc_diag / ref_chg;
    o.f1_scd = p + r == 0 ? 0.0 : 2 * p * r / (p + r);
    return o;
}

} // namespace

TEST_CASE("binary closed form: tp=50 fp=10 fn=10") {
    BinaryMetrics m;
    m.tp = 50;
    m.fp = 10;
    m.fn = 10;
    m.tn = 30;
    CHECK(std::abs(m.precision() - 5.0 / 6.0) <= 1e-12);
    CHECK(std::abs(m.recall() - 5.0 / 6.0) <= 1e-12);
    CHECK(std::abs(m.f1() - 5.0 / 6.0) <= 1e-12);
    CHECK(std::abs(m.iou() - 5.0 / 7.0) <= 1e-12);
    CHECK(std::abs(m.oa() - 0.8) <= 1e-12);
    CHECK_FALSE(m.degenerate);
}

TEST_CASE("binary accumulate counts every confusion cell") {
    BinaryMetrics m;
    //            tp tp fp fn tn tn
    m.accumulate({1, 1, 0, 1, 0, 0}, {1, 1, 1, 0, 0, 0});
    CHECK(m.tp == 2);
    CHECK(m.fp == 1);
    CHECK(m.fn == 1);
    CHECK(m.tn == 2);
    CHECK_THROWS_AS(m.accumulate({1}, {1, 0}), ShapeError);
}

TEST_CASE("degenerate empty counts flag instead of NaN") {
    BinaryMetrics m;
    CHECK(m.f1() == 0.0);
    CHECK(m.iou() == 0.0);
    CHECK(m.oa() == 0.0);
    CHECK(m.degenerate);
}

TEST_CASE("binary scores match a counting oracle on random 16x16 maps") {
    Rng rng(71);
    for (int it = 0; it < 20; ++it) {
        std::vector<int> ref(256), pred(256);
        for (auto& v : ref) v = rng.uniform() < 0.4;
        for (auto& v : pred) v = rng.uniform() < 0.4;
        BinaryMetrics m;
        m.accumulate(ref, pred);

        std::int64_t tp = 0, fp = 0, fn = 0;
        for (int i = 0; i < 256; ++i) {
            tp += ref[static_cast<std::size_t>(i)] && pred[static_cast<std::size_t>(i)];
            fp += !ref[static_cast<std::size_t>(i)] && pred[static_cast<std::size_t>(i)];
            fn += ref[static_cast<std::size_t>(i)] && !pred[static_cast<std::size_t>(i)];
        }
        CHECK(m.tp == tp);
        const double p = static_cast<double>(tp) / static_cast<double>(tp + fp);
        const double r = static_cast<double>(tp) / static_cast<double>(tp + fn);
        CHECK(std::abs(m.f1() - 2 * p * r / (p + r)) <= 1e-12);
        CHECK(std::abs(m.iou() - static_cast<double>(tp) / static_cast<double>(tp + fp + fn)) <=
              1e-12);
    }
}

TEST_CASE("iou and f1 satisfy iou = f1 / (2 - f1)") {
    Rng rng(72);
    for (int it = 0; it < 100; ++it) {
        BinaryMetrics m;
        m.tp = 1 + static_cast<std::int64_t>(rng.uniform_int(500));
        m.fp = static_cast<std::int64_t>(rng.uniform_int(200));
        m.fn = static_cast<std::int64_t>(rng.uniform_int(200));
        const double f1 = m.f1();
        CHECK(std::abs(m.iou() - f1 / (2.0 - f1)) <= 1e-12);
    }
}

TEST_CASE("confusion matrix accumulates, ignores, and range-checks") {
    ConfusionMatrix q(3);
    q.accumulate({0, 1, 2, 1, -1}, {0, 1, 1, 2, 2}, -1);
    CHECK(q.at(0, 0) == 1);
    CHECK(q.at(1, 1) == 1);
    CHECK(q.at(2, 1) == 1);
    CHECK(q.at(1, 2) == 1);
    CHECK(q.total() == 4); // the ignored pixel is gone entirely
    CHECK_THROWS_AS(q.accumulate({3}, {0}, -1), DataError);
    CHECK_THROWS_AS(q.accumulate({0}, {5}, -1), DataError);
    CHECK_THROWS_AS(ConfusionMatrix(0), ConfigError);
}

TEST_CASE("confusion accumulation is additive across batches") {
    Rng rng(73);
    std::vector<int> ra(50), pa(50), rb(30), pb(30);
    for (auto& v : ra) v = static_cast<int>(rng.uniform_int(3));
    for (auto& v : pa) v = static_cast<int>(rng.uniform_int(3));
    for (auto& v : rb) v = static_cast<int>(rng.uniform_int(3));
    for (auto& v : pb) v = static_cast<int>(rng.uniform_int(3));

    ConfusionMatrix merged(3), split(3);
    std::vector<int> rall(ra), pall(pa);
    rall.insert(rall.end(), rb.begin(), rb.end());
    pall.insert(pall.end(), pb.begin(), pb.end());
    merged.accumulate(rall, pall, -1);
    split.accumulate(ra, pa, -1);
    split.accumulate(rb, pb, -1);
    CHECK(merged.mat == split.mat);
}

TEST_CASE("scd metrics at a perfect prediction") {
    ConfusionMatrix q(4);
    q.at(0, 0) = 40;
    q.at(1, 1) = 10;
    q.at(2, 2) = 8;
    q.at(3, 3) = 6;
    auto m = scd_metrics(q);
    CHECK(std::abs(m.oa - 1.0) <= 1e-12);
    CHECK(std::abs(m.miou - 1.0) <= 1e-12);
    CHECK(std::abs(m.f1_scd - 1.0) <= 1e-12);
    CHECK(std::abs(m.iou_changed - 1.0) <= 1e-12);
    // kappa of a diagonal matrix is 1, and exp(iou_changed - 1) = 1
    CHECK(std::abs(m.sek - 1.0) <= 1e-9);
    CHECK_FALSE(m.degenerate);
}

TEST_CASE("scd metrics degrade gracefully when nothing changed") {
    ConfusionMatrix q(3);
    q.at(0, 0) = 64;
    auto m = scd_metrics(q);
    CHECK(std::abs(m.oa - 1.0) <= 1e-12);
    CHECK(m.degenerate);
    CHECK(m.sek == 0.0);
    CHECK(m.f1_scd == 0.0);
    CHECK(std::abs(m.iou_unchanged - 1.0) <= 1e-12);
}

TEST_CASE("scd metrics match the formula oracle on random 8x8 maps") {
    Rng rng(74);
    for (int it = 0; it < 20; ++it) {
        std::vector<int> ref(64), pred(64);
        for (auto& v : ref) v = static_cast<int>(rng.uniform_int(3));
        for (auto& v : pred) v = static_cast<int>(rng.uniform_int(3));
        ConfusionMatrix q(3);
        q.accumulate(ref, pred, -1);
        if (q.at(0, 0) == q.total()) continue; // astronomically unlikely

        auto m = scd_metrics(q);
        auto o = scd_oracle(q);
        CHECK(std::abs(m.oa - o.oa) <= 1e-12);
        CHECK(std::abs(m.miou - o.miou) <= 1e-12);
        CHECK(std::abs(m.sek - o.sek) <= 1e-12);
        CHECK(std::abs(m.f1_scd - o.f1_scd) <= 1e-12);
    }
}

TEST_CASE("empty scd confusion is degenerate") {
    ConfusionMatrix q(3);
    auto m = scd_metrics(q);
    CHECK(m.degenerate);
    CHECK(m.oa == 0.0);
}

TEST_CASE("bda closed form: four 0.8 classes and 0.9 localization") {
    BinaryMetrics loc;
    loc.tp = 9;
    loc.fp = 1;
    loc.fn = 1;
    loc.tn = 100;

    ConfusionMatrix dmg(5);
    for (int c = 1; c <= 4; ++c) {
        dmg.at(c, c) = 4;
        dmg.at(c, c % 4 + 1) = 1; // one miss per class, cyclic, so fp = fn = 1
    }
    auto m = bda_metrics(loc, dmg);
    CHECK(std::abs(m.f1_loc - 0.9) <= 1e-12);
    REQUIRE(m.f1_class.size() == 4);
    for (double f : m.f1_class) CHECK(std::abs(f - 0.8) <= 1e-12);
    CHECK(std::abs(m.f1_clf - 0.8) <= 1e-12);
    CHECK(std::abs(m.f1_overall - 0.83) <= 1e-12);
    CHECK_FALSE(m.degenerate);
}

TEST_CASE("harmonic mean punishes a collapsed damage class") {
    BinaryMetrics loc;
    loc.tp = 9;
    loc.fp = 1;
    loc.fn = 1;

    ConfusionMatrix dmg(3);
    dmg.at(1, 1) = 100;  // class 1 nearly perfect
    dmg.at(2, 1) = 5;    // class 2 never predicted: f1 = 0
    auto m = bda_metrics(loc, dmg);
    CHECK(m.f1_class[0] > 0.9);
    CHECK(m.f1_class[1] == 0.0);
    CHECK(m.f1_clf == 0.0);
    CHECK(m.degenerate);
    CHECK(std::abs(m.f1_overall - 0.3 * m.f1_loc) <= 1e-12);
}

TEST_CASE("bda per-class f1 agrees with a direct count oracle") {
    Rng rng(75);
    std::vector<int> ref(200), pred(200);
    for (auto& v : ref) v = static_cast<int>(rng.uniform_int(5));
    for (auto& v : pred) v = static_cast<int>(rng.uniform_int(5));
    ConfusionMatrix dmg(5);
    dmg.accumulate(ref, pred, -1);
    BinaryMetrics loc;
    loc.tp = 1;
    auto m = bda_metrics(loc, dmg);

    for (int c = 1; c <= 4; ++c) {
        std::int64_t tp = 0, fp = 0, fn = 0;
        for (int i = 0; i < 200; ++i) {
            const bool r = ref[static_cast<std::size_t>(i)] == c;
            const bool p = pred[static_cast<std::size_t>(i)] == c;
            tp += r && p;
            fp += !r && p;
            fn += r && !p;
        }
        const double f1 = 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
        CHECK(std::abs(m.f1_class[static_cast<std::size_t>(c - 1)] - f1) <= 1e-12);
    }
}
