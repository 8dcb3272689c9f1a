#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "unicd/data.hpp"
#include "unicd/gradcheck.hpp"
#include "unicd/optim.hpp"
#include "unicd/train.hpp"

using namespace unicd;

TEST_CASE("generate_dataset basics: count, emptiness, validation") {
    auto ds = generate_dataset(Task::bcd, 3, 32, 32, 3, 4, 5);
    CHECK(ds.size() == 3);
    CHECK(generate_dataset(Task::bcd, 0, 32, 32, 3, 4, 5).empty());
    CHECK_THROWS_AS(generate_dataset(Task::bcd, 1, 33, 32, 3, 4, 5), ConfigError);
    CHECK_THROWS_AS(generate_dataset(Task::bcd, 1, 32, 40, 3, 4, 5), ConfigError);
    CHECK_THROWS_AS(generate_dataset(Task::bcd, -1, 32, 32, 3, 4, 5), ConfigError);

    for (const auto& s : ds) {
        CHECK(s.pre->shape == std::vector<std::int64_t>{3, 32, 32});
        CHECK(s.post->shape == std::vector<std::int64_t>{3, 32, 32});
        CHECK(s.bcd.size() == 32 * 32);
        for (double v : s.pre->data) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
    }
}

TEST_CASE("dataset generation is seed-deterministic") {
    auto a = generate_dataset(Task::scd, 4, 32, 32, 3, 4, 11);
    auto b = generate_dataset(Task::scd, 4, 32, 32, 3, 4, 11);
    auto c = generate_dataset(Task::scd, 4, 32, 32, 3, 4, 12);
    CHECK(dataset_hash(a) == dataset_hash(b));
    CHECK(dataset_hash(a) != dataset_hash(c));
    // per-sample hashes differ across indices (no accidental duplication)
    CHECK(sample_hash(a[0]) != sample_hash(a[1]));
}

TEST_CASE("stored labels equal a fresh rasterization of the geometry") {
    for (Task task : {Task::bcd, Task::scd, Task::bda}) {
        auto ds = generate_dataset(task, 3, 32, 64, 3, 4, 21);
        for (const auto& s : ds) {
            auto L = rasterize_labels(s.geometry, task, s.h, s.w, s.classes, s.damage_levels);
            CHECK(L.bcd == s.bcd);
            CHECK(L.t1 == s.t1);
            CHECK(L.t2 == s.t2);
            CHECK(L.loc == s.loc);
            CHECK(L.dmg == s.dmg);
        }
    }
}

TEST_CASE("scd change map is exactly the semantic disagreement mask") {
    auto ds = generate_dataset(Task::scd, 4, 32, 32, 3, 4, 23);
    for (const auto& s : ds)
        for (std::size_t i = 0; i < s.bcd.size(); ++i)
            CHECK(s.bcd[i] == (s.t1[i] != s.t2[i] ? 1 : 0));
}

TEST_CASE("bda damage levels live only on building pixels") {
    auto ds = generate_dataset(Task::bda, 4, 32, 32, 3, 4, 25);
    bool saw_damage = false;
    for (const auto& s : ds)
        for (std::size_t i = 0; i < s.loc.size(); ++i) {
            if (s.loc[i] == 0) CHECK(s.dmg[i] == 0);
            if (s.dmg[i] != 0) {
                CHECK(s.loc[i] == 1);
                CHECK(s.dmg[i] >= 1);
                CHECK(s.dmg[i] <= 4);
                saw_damage = true;
            }
        }
    CHECK(saw_damage);
}

TEST_CASE("flips are involutions and rot90 has order four") {
    auto s = generate_dataset(Task::scd, 1, 32, 64, 3, 4, 27)[0];
    const auto h0 = sample_hash(s);

    auto lr2 = apply_transform(apply_transform(s, 0, true, false), 0, true, false);
    CHECK(sample_hash(lr2) == h0);
    auto tb2 = apply_transform(apply_transform(s, 0, false, true), 0, false, true);
    CHECK(sample_hash(tb2) == h0);

    auto r = s;
    for (int i = 0; i < 4; ++i) r = apply_transform(r, 1, false, false);
    CHECK(sample_hash(r) == h0);
    // and a quarter turn actually moves things
    CHECK(sample_hash(apply_transform(s, 1, false, false)) != h0);
    // non-square input: rotation swaps the extents
    auto q = apply_transform(s, 1, false, false);
    CHECK(q.h == s.w);
    CHECK(q.w == s.h);
}

TEST_CASE("augmented geometry still rasterizes to the augmented labels") {
    auto base = generate_dataset(Task::bda, 2, 32, 32, 3, 4, 29);
    for (std::uint64_t seed = 0; seed < 8; ++seed)
        for (const auto& s : base) {
            auto a = augment(s, seed);
            auto L = rasterize_labels(a.geometry, a.task, a.h, a.w, a.classes, a.damage_levels);
            CHECK(L.loc == a.loc);
            CHECK(L.dmg == a.dmg);
            CHECK(L.bcd == a.bcd);
        }
}

TEST_CASE("augment is deterministic in its seed and varies across seeds") {
    auto s = generate_dataset(Task::bcd, 1, 32, 32, 3, 4, 31)[0];
    CHECK(sample_hash(augment(s, 3)) == sample_hash(augment(s, 3)));
    bool any_diff = false;
    for (std::uint64_t k = 0; k < 16 && !any_diff; ++k)
        any_diff = sample_hash(augment(s, k)) != sample_hash(s);
    CHECK(any_diff);
}

TEST_CASE("adamw with zero gradients is pure decoupled decay") {
    // powers of two keep p - lr*wd*p and p*(1 - lr*wd) bit-identical
    auto p = tensor({4}, {1.0, -2.0, 0.5, 4.0}, true);
    p->grad.assign(4, 0.0);
    AdamWConfig cfg;
    cfg.lr = 0.25;
    cfg.weight_decay = 0.5;
    AdamW opt({{"p", ParamGroup::head, p}}, cfg);
    opt.step();
    CHECK(p->data == std::vector<double>{0.875, -1.75, 0.4375, 3.5});
}

TEST_CASE("adamw single step matches the closed form") {
    const double p0 = 0.7, g = 0.3, lr = 1e-2, wd = 5e-4, eps = 1e-8;
    auto p = tensor({1}, {p0}, true);
    p->grad = {g};
    AdamWConfig cfg;
    cfg.lr = lr;
    cfg.weight_decay = wd;
    cfg.eps = eps;
    AdamW opt({{"p", ParamGroup::head, p}}, cfg);
    opt.step();
    // bias-corrected first moments equal the raw gradient after one step
    const double expect = p0 - lr * wd * p0 - lr * g / (std::sqrt(g * g) + eps);
    CHECK(std::abs(p->data[0] - expect) <= 1e-12);
    CHECK(opt.t() == 1);
}

TEST_CASE("adamw with wd=0 reproduces a reference adam trace") {
    const double lr = 1e-3, b1 = 0.9, b2 = 0.999, eps = 1e-8;
    auto p = tensor({2}, {0.4, -1.1}, true);
    AdamWConfig cfg;
    cfg.lr = lr;
    cfg.beta1 = b1;
    cfg.beta2 = b2;
    cfg.eps = eps;
    cfg.weight_decay = 0.0;
    AdamW opt({{"p", ParamGroup::head, p}}, cfg);

    double ref[2] = {0.4, -1.1};
    double m[2] = {0, 0}, v[2] = {0, 0};
    Rng rng(33);
    for (int t = 1; t <= 10; ++t) {
        double g[2] = {rng.uniform() - 0.5, rng.uniform() - 0.5};
        p->grad = {g[0], g[1]};
        opt.step();
        for (int j = 0; j < 2; ++j) {
            m[j] = b1 * m[j] + (1 - b1) * g[j];
            v[j] = b2 * v[j] + (1 - b2) * g[j] * g[j];
            const double mh = m[j] / (1 - std::pow(b1, t));
            const double vh = v[j] / (1 - std::pow(b2, t));
            ref[j] -= lr * mh / (std::sqrt(vh) + eps);
        }
    }
    CHECK(std::abs(p->data[0] - ref[0]) <= 1e-12);
    CHECK(std::abs(p->data[1] - ref[1]) <= 1e-12);
}

TEST_CASE("adamw validates config and missing grads") {
    auto p = tensor({2}, {1.0, 2.0}, true);
    AdamWConfig bad;
    bad.lr = 0.0;
    CHECK_THROWS_AS(AdamW({{"p", ParamGroup::head, p}}, bad), ConfigError);
    AdamWConfig ok;
    AdamW opt({{"p", ParamGroup::head, p}}, ok);
    p->grad.clear();
    CHECK_THROWS_AS(opt.step(), ContractError);
}

TEST_CASE("gradient clipping rescales to the requested norm") {
    auto p = tensor({2}, {0.0, 0.0}, true);
    p->grad = {3.0, 4.0}; // norm 5
    AdamWConfig cfg;
    cfg.lr = 1.0;
    cfg.weight_decay = 0.0;
    cfg.eps = 0.0;
    cfg.clip_norm = 1.0;
    AdamW opt({{"p", ParamGroup::head, p}}, cfg);
    opt.step();
    // with eps=0 the update direction is sign(g) regardless of scale, so probe
    // the moment buffers for the clipped values instead
    CHECK(std::abs(opt.m()[0][0] - 0.1 * 0.6) <= 1e-12);
    CHECK(std::abs(opt.m()[0][1] - 0.1 * 0.8) <= 1e-12);
}

TEST_CASE("steplr closed forms") {
    CHECK(steplr(1e-4, 2500, 1000, 0.5) == 2.5e-5);
    CHECK(steplr(1e-4, 999, 1000, 0.5) == 1e-4);
    CHECK(steplr(1e-4, 1000, 1000, 0.5) == 5e-5);
    CHECK(steplr(3e-3, 0, 100, 0.1) == 3e-3);
    CHECK_THROWS_AS(steplr(1e-4, 10, 0, 0.5), ConfigError);
}

TEST_CASE("task weights: bcd unweighted, scd/bda sized and positive") {
    auto scd = generate_dataset(Task::scd, 4, 32, 32, 3, 4, 41);
    auto bda = generate_dataset(Task::bda, 4, 32, 32, 3, 4, 41);

    auto wb = compute_task_weights(scd, Task::bcd, 3, 4);
    CHECK(wb.a.empty());
    CHECK(wb.b.empty());

    auto ws = compute_task_weights(scd, Task::scd, 3, 4);
    REQUIRE(ws.a.size() == 2);
    REQUIRE(ws.b.size() == 4);
    for (double v : ws.a) CHECK(v > 0.0);
    for (double v : ws.b) CHECK(v > 0.0);

    auto wd = compute_task_weights(bda, Task::bda, 3, 4);
    REQUIRE(wd.a.size() == 2);
    REQUIRE(wd.b.size() == 5);
}

TEST_CASE("sabotaged gradient case is caught by the checker") {
    auto res = run_grad_case(sabotaged_case(11));
    CHECK_FALSE(res.pass);
    CHECK(res.max_rel > 1e-4);
}

TEST_CASE("default gradient suite passes at the published step and tolerance") {
    // the full suite runs in the acceptance binary; spot-check a prefix here
    auto cases = default_grad_cases(11);
    REQUIRE(cases.size() >= 5);
    for (std::size_t i = 0; i < 5; ++i) {
        auto res = run_grad_case(cases[i]);
        INFO(res.name, ": ", res.worst);
        CHECK(res.pass);
    }
}

TEST_CASE("short training run produces trace, checkpoint and finite losses") {
    namespace fs = std::filesystem;
    const auto dir = fs::temp_directory_path() / "unicd_train_smoke";
    fs::remove_all(dir);

    TrainConfig cfg;
    cfg.task = Task::bcd;
    cfg.n_train = 2;
    cfg.crop = 32;
    cfg.batch_size = 2;
    cfg.max_iters = 3;
    cfg.eval_every = 100;
    cfg.seed = 9;
    cfg.model = toy_model_config();
    cfg.out_dir = dir.string();
    cfg.finalize();

    auto res = train(cfg);
    CHECK(res.steps == 3);
    REQUIRE(res.loss_trace.size() == 3);
    for (double l : res.loss_trace) {
        CHECK(std::isfinite(l));
        CHECK(l >= 0.0);
    }
    CHECK_FALSE(res.early_stopped);
    CHECK(fs::exists(res.checkpoint_path));
    CHECK(fs::exists(res.trace_path));
    CHECK(res.final_eval.task == Task::bcd);
    fs::remove_all(dir);
}
