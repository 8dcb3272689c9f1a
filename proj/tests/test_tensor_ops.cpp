#include "doctest.h"

#include <cmath>

#include "unicd/ops.hpp"

using namespace unicd;

TEST_CASE("broadcast rules: size-1 operand expands, mismatched shapes throw") {
    auto a = tensor({2, 2}, {1, 2, 3, 4});
    auto s = scalar(10.0);
    auto y = add(a, s);
    CHECK(y->data == std::vector<double>{11, 12, 13, 14});
    auto z = mul(s, a);
    CHECK(z->data == std::vector<double>{10, 20, 30, 40});
    auto bad = tensor({3}, {1, 2, 3});
    CHECK_THROWS_AS(add(a, bad), ShapeError);
}

TEST_CASE("matmul matches a naive triple loop and rejects bad inner dims") {
    Rng r(5);
    auto a = rand_uniform({3, 4}, r, -1, 1, false);
    auto b = rand_uniform({4, 2}, r, -1, 1, false);
    auto c = matmul(a, b);
    REQUIRE(c->shape == std::vector<std::int64_t>{3, 2});
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 2; ++j) {
            double acc = 0;
            for (int k = 0; k < 4; ++k) acc += a->data[i * 4 + k] * b->data[k * 2 + j];
            CHECK(c->data[i * 2 + j] == doctest::Approx(acc).epsilon(1e-12));
        }
    CHECK_THROWS_AS(matmul(a, a), ShapeError);
}

TEST_CASE("linear equals x*W^T + b") {
    Rng r(6);
    auto x = rand_uniform({5, 3}, r, -1, 1, false);
    auto w = rand_uniform({2, 3}, r, -1, 1, false);
    auto b = rand_uniform({2}, r, -1, 1, false);
    auto y = linear(x, w, b);
    for (int i = 0; i < 5; ++i)
        for (int o = 0; o < 2; ++o) {
            double acc = b->data[o];
            for (int k = 0; k < 3; ++k) acc += x->data[i * 3 + k] * w->data[o * 3 + k];
            CHECK(y->data[i * 2 + o] == doctest::Approx(acc).epsilon(1e-12));
        }
}

TEST_CASE("conv2d shape arithmetic and zero annihilation") {
    Rng r(7);
    auto x = rand_uniform({3, 8, 8}, r, -1, 1, false);
    auto w = rand_uniform({4, 3, 3, 3}, r, -1, 1, false);
    CHECK(conv2d(x, w, nullptr, 1, 1)->shape == std::vector<std::int64_t>{4, 8, 8});
    CHECK(conv2d(x, w, nullptr, 2, 1)->shape == std::vector<std::int64_t>{4, 4, 4});
    auto w2 = rand_uniform({4, 3, 2, 2}, r, -1, 1, false);
    CHECK(conv2d(x, w2, nullptr, 2, 0)->shape == std::vector<std::int64_t>{4, 4, 4});

    auto zx = tensor({3, 4, 4}, std::vector<double>(48, 0.0));
    auto y = conv2d(zx, w, nullptr, 1, 1);
    for (double v : y->data) CHECK(v == 0.0);
}

TEST_CASE("conv2d k1 is a per-pixel channel mix") {
    Rng r(8);
    auto x = rand_uniform({2, 3, 3}, r, -1, 1, false);
    auto w = tensor({2, 2, 1, 1}, {1, 0, 0, 1}); // identity mixing
    auto y = conv2d(x, w, nullptr, 1, 0);
    for (int i = 0; i < 18; ++i) CHECK(y->data[i] == x->data[i]);
}

TEST_CASE("depthwise_conv2d applies one filter per channel") {
    auto x = tensor({2, 2, 2}, {1, 2, 3, 4, 10, 20, 30, 40});
    // 1x1 kernels: channel 0 scaled by 2, channel 1 by -1
    auto w = tensor({2, 1, 1}, {2, -1});
    auto y = depthwise_conv2d(x, w, nullptr, 1, 0);
    CHECK(y->data == std::vector<double>{2, 4, 6, 8, -10, -20, -30, -40});
}

TEST_CASE("batch_norm2d normalizes per channel with biased variance") {
    Rng r(9);
    auto x = rand_uniform({3, 4, 5}, r, -2, 2, false);
    auto g = tensor({3}, {1, 1, 1});
    auto b = tensor({3}, {0, 0, 0});
    auto y = batch_norm2d(x, g, b, 1e-12);
    for (int c = 0; c < 3; ++c) {
        double mean = 0, var = 0;
        for (int i = 0; i < 20; ++i) mean += y->data[c * 20 + i];
        mean /= 20;
        for (int i = 0; i < 20; ++i) {
            double d = y->data[c * 20 + i] - mean;
            var += d * d;
        }
        var /= 20;
        CHECK(mean == doctest::Approx(0.0).epsilon(1e-9));
        CHECK(std::abs(mean) < 1e-9);
        CHECK(var == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("layer_norm on [L,D] normalizes each row") {
    Rng r(10);
    auto x = rand_uniform({4, 6}, r, -3, 3, false);
    auto g = tensor({6}, std::vector<double>(6, 1.0));
    auto b = tensor({6}, std::vector<double>(6, 0.0));
    auto y = layer_norm(x, g, b, 1e-12);
    for (int i = 0; i < 4; ++i) {
        double mean = 0;
        for (int j = 0; j < 6; ++j) mean += y->data[i * 6 + j];
        CHECK(std::abs(mean / 6) < 1e-9);
    }
}

TEST_CASE("concat_width then crop_width recovers both halves bitwise") {
    Rng r(11);
    auto a = rand_uniform({3, 4, 5}, r, -1, 1, false);
    auto b = rand_uniform({3, 4, 7}, r, -1, 1, false);
    auto cat = concat_width(a, b);
    REQUIRE(cat->shape == std::vector<std::int64_t>{3, 4, 12});
    auto a2 = crop_width(cat, 0, 5);
    auto b2 = crop_width(cat, 5, 12);
    CHECK(a2->data == a->data);
    CHECK(b2->data == b->data);
}

TEST_CASE("concat_channel and crop_channel round trip") {
    Rng r(12);
    auto a = rand_uniform({2, 3, 3}, r, -1, 1, false);
    auto b = rand_uniform({4, 3, 3}, r, -1, 1, false);
    auto cat = concat_channel({a, b});
    REQUIRE(cat->shape == std::vector<std::int64_t>{6, 3, 3});
    CHECK(crop_channel(cat, 0, 2)->data == a->data);
    CHECK(crop_channel(cat, 2, 6)->data == b->data);
}

TEST_CASE("add_n sums any number of equal-shape tensors") {
    auto t = tensor({2}, {1, 2});
    auto y = add_n({t, t, t, t});
    CHECK(y->data == std::vector<double>{4, 8});
}

TEST_CASE("take_indices gathers flat elements") {
    auto t = tensor({2, 3}, {10, 11, 12, 13, 14, 15});
    auto y = take_indices(t, {5, 0, 3});
    CHECK(y->data == std::vector<double>{15, 10, 13});
    CHECK_THROWS_AS(take_indices(t, {6}), ShapeError);
}

TEST_CASE("reshape preserves data and rejects numel changes") {
    auto t = tensor({2, 3}, {1, 2, 3, 4, 5, 6});
    auto y = reshape(t, {3, 2});
    CHECK(y->data == t->data);
    CHECK_THROWS_AS(reshape(t, {4, 2}), ShapeError);
}

TEST_CASE("softmax_channels produces a distribution per pixel") {
    Rng r(13);
    auto x = rand_uniform({3, 2, 2}, r, -4, 4, false);
    auto p = softmax_channels(x);
    for (int i = 0; i < 4; ++i) {
        double s = 0;
        for (int c = 0; c < 3; ++c) {
            double v = p->data[c * 4 + i];
            CHECK(v > 0.0);
            s += v;
        }
        CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("spatial_mean / channel_sum / scale helpers match naive oracles") {
    Rng r(14);
    auto x = rand_uniform({3, 2, 4}, r, -1, 1, false);

    auto sm = spatial_mean(x);
    for (int c = 0; c < 3; ++c) {
        double acc = 0;
        for (int i = 0; i < 8; ++i) acc += x->data[c * 8 + i];
        CHECK(sm->data[c] == doctest::Approx(acc / 8).epsilon(1e-12));
    }

    auto cs = channel_sum(x);
    for (int i = 0; i < 8; ++i) {
        double acc = 0;
        for (int c = 0; c < 3; ++c) acc += x->data[c * 8 + i];
        CHECK(cs->data[i] == doctest::Approx(acc).epsilon(1e-12));
    }

    auto s = tensor({3}, {2, -1, 0.5});
    auto sc = scale_channels(x, s);
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < 8; ++i)
            CHECK(sc->data[c * 8 + i] == doctest::Approx(x->data[c * 8 + i] * s->data[c]));

    auto m = rand_uniform({2, 4}, r, -1, 1, false);
    auto sp = scale_map(x, m);
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < 8; ++i)
            CHECK(sp->data[c * 8 + i] == doctest::Approx(x->data[c * 8 + i] * m->data[i]));

    auto oc = outer_cmap(s, m);
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < 8; ++i)
            CHECK(oc->data[c * 8 + i] == doctest::Approx(s->data[c] * m->data[i]));
}

TEST_CASE("group_mean with group count == channels returns the channels") {
    Rng r(15);
    auto x = rand_uniform({4, 3, 3}, r, -1, 1, false);
    auto g = group_mean(x, 4);
    CHECK(g->data == x->data);
    // and the two-group case averages pairs
    auto g2 = group_mean(x, 2);
    for (int i = 0; i < 9; ++i) {
        CHECK(g2->data[i] == doctest::Approx((x->data[i] + x->data[9 + i]) / 2));
        CHECK(g2->data[9 + i] == doctest::Approx((x->data[18 + i] + x->data[27 + i]) / 2));
    }
    CHECK_THROWS_AS(group_mean(x, 3), ConfigError);
}

TEST_CASE("group_broadcast repeats each group map over its channels") {
    auto g = tensor({2, 1, 2}, {1, 2, 10, 20});
    auto y = group_broadcast(g, 4);
    CHECK(y->data == std::vector<double>{1, 2, 1, 2, 10, 20, 10, 20});
}

TEST_CASE("bilinear_upsample keeps constants constant and doubles extents") {
    auto x = tensor({2, 2, 2}, std::vector<double>(8, 3.25));
    auto y = bilinear_upsample(x, 4, 4);
    REQUIRE(y->shape == std::vector<std::int64_t>{2, 4, 4});
    for (double v : y->data) CHECK(v == doctest::Approx(3.25).epsilon(1e-12));
}

TEST_CASE("bilinear_upsample interpolates between neighbors within range") {
    auto x = tensor({1, 1, 2}, {0.0, 1.0});
    auto y = bilinear_upsample(x, 1, 4);
    for (double v : y->data) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
    CHECK(y->data[0] < y->data[3]); // preserves the ramp direction
}

TEST_CASE("masked_mean averages only where the mask is set") {
    auto x = tensor({4}, {1, 2, 3, 4});
    std::vector<char> m{1, 0, 0, 1};
    CHECK(masked_mean(x, m)->item() == doctest::Approx(2.5));
    std::vector<char> empty(4, 0);
    CHECK(masked_mean(x, empty)->item() == 0.0);
}

TEST_CASE("unary op values match libm") {
    auto x = tensor({4}, {-1.5, -0.25, 0.0, 2.0});
    auto sp = softplus(x);
    auto sg = sigmoid(x);
    for (int i = 0; i < 4; ++i) {
        double v = x->data[i];
        CHECK(sp->data[i] == doctest::Approx(std::log1p(std::exp(v))).epsilon(1e-12));
        CHECK(sg->data[i] == doctest::Approx(1.0 / (1.0 + std::exp(-v))).epsilon(1e-12));
    }
    CHECK(relu(x)->data == std::vector<double>{0, 0, 0, 2});
    CHECK(abs_t(x)->data == std::vector<double>{1.5, 0.25, 0, 2});
}
