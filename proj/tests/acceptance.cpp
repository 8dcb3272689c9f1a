// Acceptance gate: one PASS/FAIL line per headline criterion, nonzero exit on
// any failure. Oracles are recomputed locally so a library regression cannot
// hide behind its own helpers.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

#include "json.hpp"

#include "unicd/fcpg.hpp"
#include "unicd/fft.hpp"
#include "unicd/gradcheck.hpp"
#include "unicd/losses.hpp"
#include "unicd/metrics.hpp"
#include "unicd/serialize.hpp"
#include "unicd/ssm.hpp"
#include "unicd/train.hpp"

using namespace unicd;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(const std::string& name, bool ok, const std::string& detail) {
    std::cout << (ok ? "PASS  " : "FAIL  ") << std::left << std::setw(34) << name << detail
              << std::endl;
    if (!ok) ++g_failures;
}

double now_s() {
    using clock = std::chrono::steady_clock;
    static const auto t0 = clock::now();
    return std::chrono::duration<double>(clock::now() - t0).count();
}

std::string fmt(double v, int prec = 4) {
    std::ostringstream os;
    os << std::setprecision(prec) << v;
    return os.str();
}

std::string read_bytes(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) return "<missing:" + path + ">";
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
}

fs::path work_dir() {
    static const fs::path d = [] {
        auto p = fs::temp_directory_path() / "unicd_acceptance";
        fs::remove_all(p);
        fs::create_directories(p);
        return p;
    }();
    return d;
}

int run_cli(const std::string& args) {
    const std::string cmd =
        std::string("\"") + UNICD_CLI_PATH + "\" " + args + " > /dev/null 2>&1";
    return std::system(cmd.c_str());
}

// ---- local oracles -------------------------------------------------------

// textbook unrolled recurrence, kept independent of src/ssm.cpp
std::vector<double> naive_scan(const std::vector<double>& u, const std::vector<double>& delta,
                               const std::vector<double>& A, const std::vector<double>& B,
                               const std::vector<double>& C, const std::vector<double>& Dskip,
                               std::int64_t L, std::int64_t D, std::int64_t N) {
    std::vector<double> h(static_cast<std::size_t>(D * N), 0.0);
    std::vector<double> y(static_cast<std::size_t>(L * D), 0.0);
    for (std::int64_t t = 0; t < L; ++t)
        for (std::int64_t d = 0; d < D; ++d) {
            const double dt = delta[static_cast<std::size_t>(t * D + d)];
            const double ut = u[static_cast<std::size_t>(t * D + d)];
            double acc = 0.0;
            for (std::int64_t n = 0; n < N; ++n) {
                auto& hd = h[static_cast<std::size_t>(d * N + n)];
                hd = std::exp(dt * A[static_cast<std::size_t>(d * N + n)]) * hd +
                     dt * B[static_cast<std::size_t>(t * N + n)] * ut;
                acc += C[static_cast<std::size_t>(t * N + n)] * hd;
            }
            y[static_cast<std::size_t>(t * D + d)] = acc + Dskip[static_cast<std::size_t>(d)] * ut;
        }
    return y;
}

double jaccard_loss(const std::vector<char>& gt, const std::vector<char>& pred) {
    int inter = 0, uni = 0;
    for (std::size_t i = 0; i < gt.size(); ++i) {
        inter += gt[i] && pred[i];
        uni += gt[i] || pred[i];
    }
    return uni == 0 ? 0.0 : 1.0 - static_cast<double>(inter) / static_cast<double>(uni);
}

double extension_at(const std::vector<char>& gt, const std::vector<char>& pred) {
    std::vector<double> errors(gt.size());
    for (std::size_t i = 0; i < gt.size(); ++i)
        errors[i] = std::abs(static_cast<double>(pred[i]) - static_cast<double>(gt[i]));
    return lovasz_extension(tensor({static_cast<std::int64_t>(gt.size())}, errors), gt)->item();
}

FcpgParams make_fcpg(std::int64_t c, std::int64_t groups, Rng& r) {
    FcpgParams p;
    p.theta_a = scalar(r.uniform(-2.5, -1.5), true);
    p.theta_b = scalar(r.uniform(-2.0, -1.0), true);
    p.alpha = scalar(0.0, true); // bypass under test
    for (std::size_t b = 0; b < 2; ++b) {
        p.fc1_w[b] = rand_uniform({c, c}, r, -0.4, 0.4, true);
        p.fc1_b[b] = rand_uniform({c}, r, -0.1, 0.1, true);
        p.fc2_w[b] = rand_uniform({c, c}, r, -0.4, 0.4, true);
        p.fc2_b[b] = rand_uniform({c}, r, -0.1, 0.1, true);
        p.spat_w[b] = rand_uniform({1, c, 3, 3}, r, -0.3, 0.3, true);
        p.spat_b[b] = rand_uniform({1}, r, -0.1, 0.1, true);
    }
    p.fuse_w = rand_uniform({c, 2 * c, 1, 1}, r, -0.3, 0.3, true);
    p.fuse_b = rand_uniform({c}, r, -0.1, 0.1, true);
    p.spm_w = rand_uniform({groups, groups, 3, 3}, r, -0.3, 0.3, true);
    p.spm_b = rand_uniform({groups}, r, -0.1, 0.1, true);
    p.groups = groups;
    return p;
}

std::map<std::string, std::vector<double>> checkpoint_map(const std::string& path) {
    std::map<std::string, std::vector<double>> m;
    for (const auto& [name, t] : load_checkpoint(path).params) m[name] = t->data;
    return m;
}

// ---- criteria ------------------------------------------------------------

void criterion_gradients() {
    const double t0 = now_s();
    auto results = run_grad_suite(default_grad_cases(11));
    const double secs = now_s() - t0;
    bool all = true;
    double worst = 0.0;
    std::string worst_name;
    for (const auto& r : results) {
        all = all && r.pass;
        if (r.max_rel > worst) {
            worst = r.max_rel;
            worst_name = r.name;
        }
    }
    report("gradient-suite", all && secs < 300.0,
           fmt(static_cast<double>(results.size()), 3) + " cases, worst rel " + fmt(worst, 3) +
               " (" + worst_name + "), " + fmt(secs, 3) + "s");

    auto sab = run_grad_case(sabotaged_case(11));
    report("gradient-canary", !sab.pass,
           "sabotaged conv backward rejected, rel " + fmt(sab.max_rel, 3));
}

void criterion_scan_oracle() {
    Rng r(17);
    double worst = 0.0;
    for (int it = 0; it < 100; ++it) {
        const std::int64_t L = 1 + static_cast<std::int64_t>(r.uniform_int(64));
        const std::int64_t D = 1 + static_cast<std::int64_t>(r.uniform_int(4));
        const std::int64_t N = 1 + static_cast<std::int64_t>(r.uniform_int(8));
        auto u = rand_uniform({L, D}, r, -1, 1);
        auto delta = rand_uniform({L, D}, r, 0.01, 1.5);
        auto A = rand_uniform({D, N}, r, -2, -0.05);
        auto B = rand_uniform({L, N}, r, -1, 1);
        auto C = rand_uniform({L, N}, r, -1, 1);
        auto Dk = rand_uniform({D}, r, -1, 1);
        auto y = selective_scan(u, delta, A, B, C, Dk);
        auto ref = naive_scan(u->data, delta->data, A->data, B->data, C->data, Dk->data, L, D, N);
        for (std::size_t i = 0; i < ref.size(); ++i)
            worst = std::max(worst, std::abs(y->data[i] - ref[i]));
    }
    report("scan-oracle", worst <= 1e-10, "100 instances, max |diff| " + fmt(worst, 3));
}

void criterion_spectral() {
    Rng r(19);
    double rt = 0.0;
    for (auto [c, h, w] : {std::array<std::int64_t, 3>{2, 8, 16},
                           std::array<std::int64_t, 3>{1, 3, 6},
                           std::array<std::int64_t, 3>{1, 4, 4}}) {
        auto x = rand_uniform({c, h, w}, r, -1, 1);
        auto back = ifft2d_real(fft2d(x));
        for (std::size_t i = 0; i < x->data.size(); ++i)
            rt = std::max(rt, std::abs(back->data[i] - x->data[i]));
    }
    report("spectral-roundtrip", rt <= 1e-10, "max |diff| " + fmt(rt, 3));

    auto x = rand_uniform({2, 8, 8}, r, -1, 1);
    auto X = fft2d(x);
    double spatial = 0.0, spectral = 0.0;
    for (double v : x->data) spatial += v * v;
    for (std::size_t i = 0; i < X.re->data.size(); ++i)
        spectral += X.re->data[i] * X.re->data[i] + X.im->data[i] * X.im->data[i];
    spectral /= 64.0;
    const double rel = std::abs(spatial - spectral) / spatial;
    report("spectral-parseval", rel <= 1e-9, "relative energy gap " + fmt(rel, 3));

    Rng pr(23);
    auto params = make_fcpg(4, 2, pr);
    auto inp = rand_uniform({4, 8, 8}, pr, -1, 1, true);
    auto out = fcpg_forward(inp, params);
    report("fcpg-alpha-bypass", out->data == inp->data, "alpha=0 output bitwise equals input");
}

void criterion_lovasz() {
    double worst2 = 0.0;
    for (int g = 0; g < 16; ++g)
        for (int p = 0; p < 16; ++p) {
            std::vector<char> gt(4), pred(4);
            for (int i = 0; i < 4; ++i) {
                gt[static_cast<std::size_t>(i)] = static_cast<char>((g >> i) & 1);
                pred[static_cast<std::size_t>(i)] = static_cast<char>((p >> i) & 1);
            }
            worst2 = std::max(worst2, std::abs(extension_at(gt, pred) - jaccard_loss(gt, pred)));
        }
    report("lovasz-exhaustive-2x2", worst2 <= 1e-15, "256 instances, max |diff| " + fmt(worst2, 3));

    Rng r(29);
    double worst4 = 0.0;
    for (int it = 0; it < 500; ++it) {
        std::vector<char> gt(16), pred(16);
        for (auto& v : gt) v = r.uniform() < 0.5;
        for (auto& v : pred) v = r.uniform() < 0.5;
        worst4 = std::max(worst4, std::abs(extension_at(gt, pred) - jaccard_loss(gt, pred)));
    }
    report("lovasz-random-4x4", worst4 <= 1e-12, "500 instances, max |diff| " + fmt(worst4, 3));
}

void criterion_loss_composition() {
    Rng r(31);
    double worst = 0.0;

    {
        HeadOutputs out;
        out.change = rand_uniform({2, 4, 4}, r, -2, 2, true);
        std::vector<int> labels(16);
        for (auto& v : labels) v = static_cast<int>(r.uniform_int(2));
        auto rep = bcd_loss(out, labels);
        worst = std::max(worst, std::abs(rep.total->item() - (rep.component("ce") +
                                                              0.75 * rep.component("lovasz"))));
    }
    {
        HeadOutputs out;
        out.change = rand_uniform({2, 4, 4}, r, -2, 2, true);
        out.sem_t1 = rand_uniform({4, 4, 4}, r, -2, 2, true);
        out.sem_t2 = rand_uniform({4, 4, 4}, r, -2, 2, true);
        std::vector<int> chg(16), t1(16), t2(16);
        for (int i = 0; i < 16; ++i) {
            chg[static_cast<std::size_t>(i)] = static_cast<int>(r.uniform_int(2));
            t1[static_cast<std::size_t>(i)] = static_cast<int>(r.uniform_int(4));
            t2[static_cast<std::size_t>(i)] = static_cast<int>(r.uniform_int(4));
        }
        auto rep = scd_loss(out, chg, t1, t2, {}, {});
        const double re = rep.component("ce_cd") +
                          0.5 * (rep.component("ce_t1") + rep.component("ce_t2") +
                                 0.5 * rep.component("sim")) +
                          0.75 * (rep.component("lov_cd") +
                                  0.5 * (rep.component("lov_t1") + rep.component("lov_t2")));
        worst = std::max(worst, std::abs(rep.total->item() - re));
    }
    {
        HeadOutputs out;
        out.loc = rand_uniform({2, 4, 4}, r, -2, 2, true);
        out.dmg = rand_uniform({5, 4, 4}, r, -2, 2, true);
        std::vector<int> loc(16), dmg(16);
        for (int i = 0; i < 16; ++i) {
            loc[static_cast<std::size_t>(i)] = static_cast<int>(r.uniform_int(2));
            dmg[static_cast<std::size_t>(i)] =
                loc[static_cast<std::size_t>(i)] == 0 ? 0 : 1 + static_cast<int>(r.uniform_int(4));
        }
        auto rep = bda_loss(out, loc, dmg, {}, {});
        const double re = rep.component("ce_loc") + rep.component("ce_clf") +
                          0.5 * rep.component("lov_loc") + rep.component("lov_clf");
        worst = std::max(worst, std::abs(rep.total->item() - re));
    }
    report("loss-composition-lock", worst <= 1e-12,
           "weights (1,.75 | 1,.5,.25,.75,.375 | 1,1,.5,1), max |diff| " + fmt(worst, 3));
}

void criterion_metrics() {
    Rng r(37);
    double worst = 0.0;
    for (int it = 0; it < 30; ++it) {
        std::vector<int> ref(256), pred(256);
        for (auto& v : ref) v = r.uniform() < 0.4;
        for (auto& v : pred) v = r.uniform() < 0.4;
        BinaryMetrics m;
        m.accumulate(ref, pred);
        double tp = 0, fp = 0, fn = 0;
        for (int i = 0; i < 256; ++i) {
            tp += ref[static_cast<std::size_t>(i)] && pred[static_cast<std::size_t>(i)];
            fp += !ref[static_cast<std::size_t>(i)] && pred[static_cast<std::size_t>(i)];
            fn += ref[static_cast<std::size_t>(i)] && !pred[static_cast<std::size_t>(i)];
        }
        const double p = tp / (tp + fp), rc = tp / (tp + fn);
        worst = std::max(worst, std::abs(m.f1() - 2 * p * rc / (p + rc)));
        worst = std::max(worst, std::abs(m.iou() - tp / (tp + fp + fn)));
    }

    // scd against the independent formula path
    for (int it = 0; it < 10; ++it) {
        std::vector<int> ref(256), pred(256);
        for (auto& v : ref) v = static_cast<int>(r.uniform_int(3));
        for (auto& v : pred) v = static_cast<int>(r.uniform_int(3));
        ConfusionMatrix q(3);
        q.accumulate(ref, pred, -1);
        auto m = scd_metrics(q);

        double total = 0, diag = 0, refc = 0, predc = 0, both = 0;
        for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b) {
                const double v = static_cast<double>(q.at(a, b));
                total += v;
                if (a == b) diag += v;
                if (a != 0) refc += v;
                if (b != 0) predc += v;
                if (a != 0 && b != 0) both += v;
            }
        worst = std::max(worst, std::abs(m.oa - diag / total));
        const double iou_u = static_cast<double>(q.at(0, 0)) / (total - both);
        const double iou_c = both / (refc + predc - both);
        worst = std::max(worst, std::abs(m.miou - 0.5 * (iou_u + iou_c)));
        const double nhat = total - static_cast<double>(q.at(0, 0));
        double po = 0, pe = 0;
        for (int c = 0; c < 3; ++c) {
            double row = 0, col = 0;
            for (int j = 0; j < 3; ++j) {
                double rv = static_cast<double>(q.at(c, j)), cv = static_cast<double>(q.at(j, c));
                if (c == 0 && j == 0) rv = cv = 0;
                row += rv;
                col += cv;
            }
            if (c != 0) po += static_cast<double>(q.at(c, c));
            pe += row * col;
        }
        po /= nhat;
        pe /= nhat * nhat;
        worst = std::max(worst,
                         std::abs(m.sek - std::exp(iou_c - 1.0) * (po - pe) / (1.0 - pe)));
        double scd_diag = static_cast<double>(q.at(1, 1) + q.at(2, 2));
        const double pp = scd_diag / predc, rr = scd_diag / refc;
        worst = std::max(worst, std::abs(m.f1_scd - (pp + rr == 0 ? 0 : 2 * pp * rr / (pp + rr))));
    }

    // bda per-class counting
    for (int it = 0; it < 5; ++it) {
        std::vector<int> ref(200), pred(200);
        for (auto& v : ref) v = static_cast<int>(r.uniform_int(5));
        for (auto& v : pred) v = static_cast<int>(r.uniform_int(5));
        ConfusionMatrix dmg(5);
        dmg.accumulate(ref, pred, -1);
        BinaryMetrics loc;
        loc.tp = 1;
        auto m = bda_metrics(loc, dmg);
        for (int c = 1; c <= 4; ++c) {
            double tp = 0, fp = 0, fn = 0;
            for (int i = 0; i < 200; ++i) {
                const bool a = ref[static_cast<std::size_t>(i)] == c;
                const bool b = pred[static_cast<std::size_t>(i)] == c;
                tp += a && b;
                fp += !a && b;
                fn += a && !b;
            }
            worst = std::max(worst, std::abs(m.f1_class[static_cast<std::size_t>(c - 1)] -
                                             2 * tp / (2 * tp + fp + fn)));
        }
    }
    report("metric-oracle", worst <= 1e-12, "binary/scd/bda counting, max |diff| " + fmt(worst, 3));

    double idw = 0.0;
    for (int it = 0; it < 100; ++it) {
        BinaryMetrics m;
        m.tp = 1 + static_cast<std::int64_t>(r.uniform_int(500));
        m.fp = static_cast<std::int64_t>(r.uniform_int(200));
        m.fn = static_cast<std::int64_t>(r.uniform_int(200));
        const double f1 = m.f1();
        idw = std::max(idw, std::abs(m.iou() - f1 / (2.0 - f1)));
    }
    report("metric-identity-iou-f1", idw <= 1e-12, "100 count triples, max |diff| " + fmt(idw, 3));
}

TrainConfig overfit_config(Task task, double gate, const std::string& out) {
    TrainConfig cfg;
    cfg.task = task;
    cfg.n_train = 16;
    cfg.crop = 32;
    cfg.max_iters = 2000;
    cfg.lr = 2e-3;
    cfg.steplr_period = 700;
    cfg.augment_enabled = false;
    cfg.target_metric = gate;
    cfg.model = toy_model_config();
    cfg.out_dir = (work_dir() / out).string();
    return cfg;
}

void criterion_overfit() {
    struct Case {
        Task task;
        const char* name;
        double gate;
    };
    for (const auto& c : {Case{Task::bcd, "overfit-bcd", 0.95}, Case{Task::scd, "overfit-scd", 0.80},
                          Case{Task::bda, "overfit-bda", 0.90}}) {
        auto cfg = overfit_config(c.task, c.gate, c.name);
        const double t0 = now_s();
        auto res = train(cfg);
        const double secs = now_s() - t0;
        const double metric = res.final_eval.primary();
        bool ok = metric >= c.gate && res.steps <= 2000 && secs < 900.0;

        std::string extra;
        if (c.task == Task::bcd && res.loss_trace.size() >= 60) {
            // sanity: the 20-step moving average must not climb overall
            double head = 0, tail = 0;
            for (int i = 0; i < 20; ++i) {
                head += res.loss_trace[static_cast<std::size_t>(i)];
                tail += res.loss_trace[res.loss_trace.size() - 1 - static_cast<std::size_t>(i)];
            }
            ok = ok && tail <= head * 1.05;
            extra = ", loss avg " + fmt(head / 20, 3) + " -> " + fmt(tail / 20, 3);
        }
        report(c.name, ok,
               "metric " + fmt(metric, 4) + " >= " + fmt(c.gate, 2) + " @ step " +
                   std::to_string(res.steps) + ", " + fmt(secs, 3) + "s" + extra);
    }
}

void criterion_two_stage() {
    auto cfg1 = overfit_config(Task::bcd, -1.0, "two-stage-s1");
    cfg1.n_train = 4;
    cfg1.max_iters = 50;
    cfg1.steplr_period = 0;
    cfg1.target_metric = -1.0;
    auto r1 = train(cfg1);

    // stage 1 must not touch the prompt generator: compare against a fresh
    // same-seed initialization
    auto fcfg = cfg1;
    fcfg.finalize();
    bool fcpg_frozen = true;
    std::int64_t fcpg_params = 0;
    {
        PrecisionGuard guard(fcfg.precision);
        Model fresh(fcfg.model);
        auto ck = checkpoint_map(r1.checkpoint_path);
        for (const auto& p : fresh.params().in_group(ParamGroup::fcpg)) {
            auto it = ck.find(p.name);
            if (it == ck.end() || it->second != p.t->data) fcpg_frozen = false;
            fcpg_params += p.t->numel();
        }
    }
    report("two-stage-s1-fcpg-frozen", fcpg_frozen && fcpg_params > 0,
           std::to_string(fcpg_params) + " prompt parameters bitwise at init after 50 steps");

    auto cfg2 = cfg1;
    cfg2.stage = 2;
    cfg2.resume = r1.checkpoint_path;
    cfg2.max_iters = 100;
    cfg2.out_dir = (work_dir() / "two-stage-s2").string();
    const bool lr_default = TrainConfig{}.stage2_lr == 1e-5 && cfg2.stage2_lr == 1e-5;
    auto r2 = train(cfg2);

    auto ck1 = checkpoint_map(r1.checkpoint_path);
    auto ck2 = checkpoint_map(r2.checkpoint_path);
    bool backbone_frozen = true, heads_moved = false;
    std::int64_t backbone_params = 0;
    {
        PrecisionGuard guard(fcfg.precision);
        Model probe(fcfg.model);
        for (const auto& p : probe.params().in_group(ParamGroup::backbone)) {
            if (ck1.at(p.name) != ck2.at(p.name)) backbone_frozen = false;
            backbone_params += p.t->numel();
        }
        for (const auto& p : probe.params().in_group(ParamGroup::head))
            if (ck1.at(p.name) != ck2.at(p.name)) heads_moved = true;
    }
    report("two-stage-s2-backbone-frozen",
           backbone_frozen && heads_moved && lr_default && backbone_params > 0,
           std::to_string(backbone_params) + " backbone parameters bitwise over 100 steps, " +
               "heads updated, stage-2 lr 1e-05");
}

void criterion_direction() {
    // frozen seed: soft prompting vs no-fcpg under identical data and init.
    // stage 2 runs at a working lr here so the prompts actually train; the
    // schedule-contract criterion above covers the default 1e-5 behaviour.
    const std::uint64_t seed = 2;
    auto run_variant = [&](FcpgMode mode, const std::string& name) {
        auto cfg = overfit_config(Task::bcd, -1.0, name + "-s1");
        cfg.n_train = 8;
        cfg.max_iters = 120;
        cfg.steplr_period = 0;
        cfg.seed = seed;
        cfg.model.fcpg_mode = mode;
        auto r1 = train(cfg);
        auto cfg2 = cfg;
        cfg2.stage = 2;
        cfg2.resume = r1.checkpoint_path;
        cfg2.max_iters = 300;
        cfg2.stage2_lr = 1e-3;
        cfg2.out_dir = (work_dir() / (name + "-s2")).string();
        auto r2 = train(cfg2);

        auto fcfg = cfg2;
        fcfg.finalize();
        PrecisionGuard guard(fcfg.precision);
        Model model(fcfg.model);
        apply_checkpoint(load_checkpoint(r2.checkpoint_path), model.params());
        auto ds = generate_dataset(Task::bcd, 8, 32, 32, fcfg.classes, fcfg.damage_levels, seed);
        return distractor_activation(model, ds, seed);
    };
    const double with_fcpg = run_variant(FcpgMode::soft, "dir-soft");
    const double without = run_variant(FcpgMode::disabled, "dir-none");
    report("fcpg-direction-check", with_fcpg < without,
           "distractor activation " + fmt(with_fcpg, 4) + " (soft) < " + fmt(without, 4) +
               " (no-fcpg), seed 2");
}

void criterion_determinism() {
    auto mk = [&](const std::string& out) {
        auto cfg = overfit_config(Task::bcd, -1.0, out);
        cfg.n_train = 4;
        cfg.max_iters = 50;
        cfg.steplr_period = 0;
        return cfg;
    };
    auto ra = train(mk("det-a"));
    auto rb = train(mk("det-b"));
    const bool lib_ok = read_bytes(ra.checkpoint_path) == read_bytes(rb.checkpoint_path) &&
                        read_bytes(ra.trace_path) == read_bytes(rb.trace_path);
    report("determinism-library", lib_ok, "two 50-step runs byte-identical (checkpoint + trace)");

    const auto da = work_dir() / "cli-a";
    const auto db = work_dir() / "cli-b";
    const auto dc = work_dir() / "cli-c";
    const std::string base_args = "train --task bcd --n-train 4 --max-iters 10 --seed 5 --out ";
    bool cli_ok = run_cli(base_args + "\"" + da.string() + "\"") == 0 &&
                  run_cli(base_args + "\"" + db.string() + "\"") == 0;
    cli_ok = cli_ok && read_bytes((da / "checkpoint.uckp").string()) ==
                           read_bytes((db / "checkpoint.uckp").string());
    cli_ok = cli_ok && read_bytes((da / "trace.tsv").string()) ==
                           read_bytes((db / "trace.tsv").string());

    // manifest replay: the resolved config echoed by run A must reproduce it
    bool manifest_ok = false;
    try {
        std::ifstream mf((da / "manifest.json").string());
        nlohmann::json manifest;
        mf >> manifest;
        const auto cfg_path = work_dir() / "replay.json";
        std::ofstream cf(cfg_path.string());
        cf << manifest.at("config").dump(2);
        cf.close();
        manifest_ok = run_cli("train --config \"" + cfg_path.string() + "\" --out \"" +
                              dc.string() + "\"") == 0 &&
                      read_bytes((da / "checkpoint.uckp").string()) ==
                          read_bytes((dc / "checkpoint.uckp").string());
    } catch (...) {
        manifest_ok = false;
    }
    report("determinism-cli", cli_ok && manifest_ok,
           "repeat run and manifest replay byte-identical");
}

} // namespace

int main() {
    std::cout << "acceptance gate (cli: " << UNICD_CLI_PATH << ")\n";
    const double t0 = now_s();
    try {
        criterion_gradients();
        criterion_scan_oracle();
        criterion_spectral();
        criterion_lovasz();
        criterion_loss_composition();
        criterion_metrics();
        criterion_overfit();
        criterion_two_stage();
        criterion_direction();
        criterion_determinism();
    } catch (const std::exception& e) {
        std::cout << "FAIL  unhandled-exception              " << e.what() << std::endl;
        ++g_failures;
    }
    if (g_failures == 0)
        std::cout << "ALL CRITERIA PASSED (total " << fmt(now_s() - t0, 4) << "s)" << std::endl;
    else
        std::cout << "FAILURES: " << g_failures << " (total " << fmt(now_s() - t0, 4) << "s)"
                  << std::endl;
    return g_failures == 0 ? 0 : 1;
}
