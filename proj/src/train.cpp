#include "unicd/train.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "unicd/serialize.hpp"

namespace unicd {

void TrainConfig::finalize() {
    model.task = task;
    model.classes = classes;
    model.damage_levels = damage_levels;
    if (steplr_period <= 0) steplr_period = std::max<std::int64_t>(1, max_iters / 3);
    if (stage != 1 && stage != 2) throw ConfigError("stage must be 1 or 2");
    if (stage == 2 && resume.empty())
        throw ConfigError("stage 2 requires a stage-1 checkpoint (resume)");
    if (lr <= 0.0 || stage2_lr <= 0.0) throw ConfigError("learning rates must be positive");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (max_iters < 1) throw ConfigError("max_iters must be >= 1");
    if (n_train < 1) throw ConfigError("n_train must be >= 1");
    if (eval_every < 1) throw ConfigError("eval_every must be >= 1");
    model.validate();
}

ModelConfig toy_model_config() {
    ModelConfig m;
    m.dims = {8, 16, 32, 64};
    m.depths = {1, 1, 1, 1};
    m.state_dim = 4;
    m.c_dec = 16;
    m.c_hid = 32;
    m.fcpg_groups = 4;
    return m;
}

double EvalSummary::primary() const {
    switch (task) {
        case Task::bcd: return f1;
        case Task::scd: return miou;
        case Task::bda: return f1_loc;
    }
    return 0.0;
}

std::vector<std::pair<std::string, double>> EvalSummary::rows() const {
    switch (task) {
        case Task::bcd:
            return {{"precision", precision}, {"recall", recall}, {"f1", f1},
                    {"iou", iou},             {"oa", oa}};
        case Task::scd:
            return {{"oa", scd_oa}, {"miou", miou}, {"sek", sek}, {"f1_scd", f1_scd}};
        case Task::bda:
            return {{"f1_loc", f1_loc}, {"f1_clf", f1_clf}, {"f1_overall", f1_overall}};
    }
    return {};
}

TaskWeights compute_task_weights(const std::vector<SyntheticSample>& ds, Task task, int classes,
                                 int damage_levels) {
    TaskWeights w;
    std::vector<const std::vector<int>*> a_maps, b_maps;
    switch (task) {
        case Task::bcd:
            return w; // unweighted CE
        case Task::scd:
            for (const auto& s : ds) {
                a_maps.push_back(&s.bcd);
                b_maps.push_back(&s.t1);
                b_maps.push_back(&s.t2);
            }
            w.a = class_weights(a_maps, 2, -1);
            w.b = class_weights(b_maps, classes + 1, -1);
            return w;
        case Task::bda:
            for (const auto& s : ds) {
                a_maps.push_back(&s.loc);
                b_maps.push_back(&s.dmg);
            }
            w.a = class_weights(a_maps, 2, -1);
            w.b = class_weights(b_maps, damage_levels + 1, 0);
            return w;
    }
    return w;
}

std::vector<int> argmax_channels(const Tensor& logits) {
    if (logits.shape.size() != 3) throw ShapeError("argmax_channels: need [K,H,W]");
    const std::int64_t k = logits.shape[0];
    const std::int64_t hw = logits.shape[1] * logits.shape[2];
    std::vector<int> out(static_cast<std::size_t>(hw), 0);
    for (std::int64_t i = 0; i < hw; ++i) {
        double best = logits.data[i];
        int arg = 0;
        for (std::int64_t c = 1; c < k; ++c) {
            const double v = logits.data[c * hw + i];
            if (v > best) {
                best = v;
                arg = static_cast<int>(c);
            }
        }
        out[i] = arg;
    }
    return out;
}

LossReport sample_loss(const HeadOutputs& out, const SyntheticSample& s, const TaskWeights& w) {
    switch (s.task) {
        case Task::bcd: return bcd_loss(out, s.bcd);
        case Task::scd: return scd_loss(out, s.bcd, s.t1, s.t2, w.a, w.b);
        case Task::bda: return bda_loss(out, s.loc, s.dmg, w.a, w.b);
    }
    throw ContractError("sample_loss: unknown task");
}

EvalSummary evaluate_model(Model& model, const std::vector<SyntheticSample>& ds,
                           std::uint64_t seed) {
    if (ds.empty()) throw DataError("evaluate_model: empty dataset");
    NoGradGuard ng;
    const Task task = model.config().task;
    EvalSummary ev;
    ev.task = task;

    BinaryMetrics bin;
    ConfusionMatrix q(model.config().classes + 1);
    BinaryMetrics loc_bin;
    ConfusionMatrix dmg_q(model.config().damage_levels + 1);

    for (const auto& s : ds) {
        RunCtx ctx{seed, 0, false, 0};
        auto out = model.forward(s.pre, s.post, ctx);
        switch (task) {
            case Task::bcd: {
                bin.accumulate(s.bcd, argmax_channels(*out.change));
                break;
            }
            case Task::scd: {
                const auto pc = argmax_channels(*out.change);
                const auto p1 = argmax_channels(*out.sem_t1);
                const auto p2 = argmax_channels(*out.sem_t2);
                std::vector<int> ref1(pc.size()), ref2(pc.size()), pr1(pc.size()), pr2(pc.size());
                for (std::size_t i = 0; i < pc.size(); ++i) {
                    ref1[i] = s.bcd[i] ? s.t1[i] : 0;
                    ref2[i] = s.bcd[i] ? s.t2[i] : 0;
                    pr1[i] = pc[i] ? p1[i] : 0;
                    pr2[i] = pc[i] ? p2[i] : 0;
                }
                q.accumulate(ref1, pr1);
                q.accumulate(ref2, pr2);
                break;
            }
            case Task::bda: {
                loc_bin.accumulate(s.loc, argmax_channels(*out.loc));
                dmg_q.accumulate(s.dmg, argmax_channels(*out.dmg), 0);
                break;
            }
        }
    }

    switch (task) {
        case Task::bcd: {
            ev.precision = bin.precision();
            ev.recall = bin.recall();
            ev.f1 = bin.f1();
            ev.iou = bin.iou();
            ev.oa = bin.oa();
            ev.degenerate = bin.degenerate;
            break;
        }
        case Task::scd: {
            const auto m = scd_metrics(q);
            ev.scd_oa = m.oa;
            ev.miou = m.miou;
            ev.sek = m.sek;
            ev.f1_scd = m.f1_scd;
            ev.degenerate = m.degenerate;
            break;
        }
        case Task::bda: {
            const auto m = bda_metrics(loc_bin, dmg_q);
            ev.f1_loc = m.f1_loc;
            ev.f1_clf = m.f1_clf;
            ev.f1_overall = m.f1_overall;
            ev.degenerate = m.degenerate;
            break;
        }
    }
    return ev;
}

double distractor_activation(Model& model, const std::vector<SyntheticSample>& ds,
                             std::uint64_t seed) {
    NoGradGuard ng;
    double acc = 0.0;
    std::int64_t count = 0;
    for (const auto& s : ds) {
        RunCtx ctx{seed, 0, false, 0};
        auto out = model.forward(s.pre, s.post, ctx);
        const TensorPtr& logits = model.config().task == Task::bda ? out.loc : out.change;
        auto prob = softmax_channels(logits);
        const std::int64_t hw = s.h * s.w;
        const std::vector<int>& truth = model.config().task == Task::bda ? s.loc : s.bcd;
        for (std::int64_t y = 0; y < s.h; ++y)
            for (std::int64_t x = 0; x < s.w; ++x) {
                const std::int64_t i = y * s.w + x;
                if (truth[i] != 0) continue;
                bool inside = false;
                for (const auto& d : s.distractors)
                    if (d.contains(static_cast<double>(x), static_cast<double>(y))) {
                        inside = true;
                        break;
                    }
                if (!inside) continue;
                acc += prob->data[hw + i]; // channel 1 = change/foreground
                ++count;
            }
    }
    return count == 0 ? 0.0 : acc / static_cast<double>(count);
}

TrainResult train(const TrainConfig& cfg_in) {
    TrainConfig cfg = cfg_in;
    cfg.finalize();
    PrecisionGuard prec(cfg.precision);

    auto ds = generate_dataset(cfg.task, cfg.n_train, cfg.crop, cfg.crop, cfg.classes,
                               cfg.damage_levels, cfg.seed);
    const auto weights = compute_task_weights(ds, cfg.task, cfg.classes, cfg.damage_levels);

    Model model(cfg.model);
    if (!cfg.resume.empty()) {
        const auto ck = load_checkpoint(cfg.resume);
        if (ck.task != task_name(cfg.task))
            throw ConfigError("checkpoint task '" + ck.task + "' does not match '" +
                              task_name(cfg.task) + "'");
        apply_checkpoint(ck, model.params());
    }

    std::vector<Param> trainable;
    if (cfg.stage == 1) {
        for (auto g : {ParamGroup::backbone, ParamGroup::decoder, ParamGroup::head})
            for (auto& p : model.params().in_group(g)) trainable.push_back(p);
    } else {
        // a disabled FCPG never sees gradients, so keep its params out of the
        // stage-2 group or the optimizer's missing-grad tripwire fires
        if (cfg.model.fcpg_mode != FcpgMode::disabled)
            for (auto& p : model.params().in_group(ParamGroup::fcpg)) trainable.push_back(p);
        for (auto& p : model.params().in_group(ParamGroup::head)) trainable.push_back(p);
    }
    AdamWConfig ocfg;
    ocfg.lr = cfg.stage == 2 ? cfg.stage2_lr : cfg.lr;
    ocfg.weight_decay = cfg.weight_decay;
    ocfg.clip_norm = cfg.clip_norm;
    AdamW opt(trainable, ocfg);

    TrainResult res;
    std::ofstream trace;
    if (!cfg.out_dir.empty()) {
        std::filesystem::create_directories(cfg.out_dir);
        res.trace_path = cfg.out_dir + "/trace.tsv";
        trace.open(res.trace_path);
        if (!trace) throw IoError("cannot open " + res.trace_path + " for writing");
    }

    std::vector<std::size_t> order(ds.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::int64_t epoch = -1;
    bool wrote_header = false;

    for (std::int64_t step = 0; step < cfg.max_iters; ++step) {
        const double lr_t = steplr(ocfg.lr, step, cfg.steplr_period, cfg.steplr_gamma);

        std::vector<TensorPtr> totals;
        std::vector<std::pair<std::string, double>> comp_sum;
        for (int j = 0; j < cfg.batch_size; ++j) {
            const std::int64_t k = step * cfg.batch_size + j;
            const std::int64_t ep = k / static_cast<std::int64_t>(ds.size());
            if (ep != epoch) {
                epoch = ep;
                Rng shuffle_rng(hash_combine(cfg.seed ^ 0x5u, static_cast<std::uint64_t>(epoch)));
                for (std::size_t i = order.size(); i > 1; --i)
                    std::swap(order[i - 1], order[shuffle_rng.uniform_int(i)]);
            }
            const auto& base = ds[order[k % static_cast<std::int64_t>(ds.size())]];
            SyntheticSample samp =
                cfg.augment_enabled
                    ? augment(base, hash_combine(hash_combine(cfg.seed ^ 0xA6u,
                                                              static_cast<std::uint64_t>(step)),
                                                 static_cast<std::uint64_t>(j)))
                    : base;
            RunCtx ctx{cfg.seed, step, true, static_cast<std::int64_t>(j) << 20};
            auto out = model.forward(samp.pre, samp.post, ctx);
            auto rep = sample_loss(out, samp, weights);
            totals.push_back(rep.total);
            if (comp_sum.empty())
                comp_sum = rep.components;
            else
                for (std::size_t c = 0; c < comp_sum.size(); ++c)
                    comp_sum[c].second += rep.components[c].second;
        }
        auto batch_loss = mul_const(add_n(totals), 1.0 / cfg.batch_size);
        for (auto& p : model.params().all()) p.t->zero_grad();
        batch_loss->backward();
        opt.step(lr_t);

        res.final_loss = batch_loss->item();
        res.loss_trace.push_back(res.final_loss);
        res.steps = step + 1;

        if (trace.is_open()) {
            if (!wrote_header) {
                trace << "step\tlr\ttotal";
                for (auto& [name, _] : comp_sum) trace << "\t" << name;
                trace << "\n";
                wrote_header = true;
            }
            trace << step << "\t" << lr_t << "\t" << res.final_loss;
            for (auto& [_, v] : comp_sum) trace << "\t" << v / cfg.batch_size;
            trace << "\n";
        }

        if (cfg.target_metric >= 0.0 && (step + 1) % cfg.eval_every == 0) {
            const auto ev = evaluate_model(model, ds, cfg.seed);
            if (ev.primary() >= cfg.target_metric) {
                res.early_stopped = true;
                res.final_eval = ev;
                break;
            }
        }
    }

    if (!res.early_stopped) res.final_eval = evaluate_model(model, ds, cfg.seed);
    if (trace.is_open()) {
        trace.flush();
        if (!trace) throw IoError("write failed: " + res.trace_path);
    }
    if (!cfg.out_dir.empty()) {
        res.checkpoint_path = cfg.out_dir + "/checkpoint.uckp";
        save_checkpoint(res.checkpoint_path, task_name(cfg.task), model.params(), &opt);
    }
    return res;
}

} // namespace unicd
