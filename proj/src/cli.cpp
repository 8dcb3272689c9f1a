#include "unicd/cli.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"

#include "unicd/gradcheck.hpp"
#include "unicd/serialize.hpp"
#include "unicd/train.hpp"

namespace unicd {

namespace {

using nlohmann::json;

std::string fcpg_mode_name(FcpgMode m) {
    switch (m) {
        case FcpgMode::soft: return "soft";
        case FcpgMode::hard_fixed: return "hard-fixed";
        case FcpgMode::hard_single: return "hard-single";
        case FcpgMode::disabled: return "disabled";
    }
    return "soft";
}

FcpgMode fcpg_mode_from(const std::string& s) {
    if (s == "soft") return FcpgMode::soft;
    if (s == "hard-fixed") return FcpgMode::hard_fixed;
    if (s == "hard-single") return FcpgMode::hard_single;
    if (s == "disabled") return FcpgMode::disabled;
    throw ConfigError("unknown fcpg mode: " + s);
}

std::string concat_name(ConcatMode m) {
    return m == ConcatMode::width ? "width" : "channel";
}

ConcatMode concat_from(const std::string& s) {
    if (s == "width") return ConcatMode::width;
    if (s == "channel") return ConcatMode::channel;
    throw ConfigError("unknown concat mode: " + s);
}

std::string precision_name(Precision p) { return p == Precision::f32 ? "f32" : "f64"; }

Precision precision_from(const std::string& s) {
    if (s == "f32") return Precision::f32;
    if (s == "f64") return Precision::f64;
    throw ConfigError("unknown precision: " + s);
}

json model_to_json(const ModelConfig& m) {
    return json{{"dims", m.dims},
                {"depths", m.depths},
                {"state_dim", m.state_dim},
                {"c_dec", m.c_dec},
                {"c_hid", m.c_hid},
                {"fcpg_groups", m.fcpg_groups},
                {"fcpg_mode", fcpg_mode_name(m.fcpg_mode)},
                {"spm_enabled", m.spm_enabled},
                {"concat", concat_name(m.concat)},
                {"droppath_max", m.droppath_max},
                {"head_dropout", m.head_dropout},
                {"tau", m.tau},
                {"norm_eps", m.norm_eps},
                {"init_seed", m.init_seed}};
}

void model_from_json(const json& j, ModelConfig& m) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        const std::string& k = it.key();
        const json& v = it.value();
        if (k == "dims") {
            auto d = v.get<std::vector<std::int64_t>>();
            if (d.size() != 4) throw ConfigError("model.dims must have 4 entries");
            std::copy(d.begin(), d.end(), m.dims.begin());
        } else if (k == "depths") {
            auto d = v.get<std::vector<std::int64_t>>();
            if (d.size() != 4) throw ConfigError("model.depths must have 4 entries");
            std::copy(d.begin(), d.end(), m.depths.begin());
        } else if (k == "state_dim") m.state_dim = v.get<std::int64_t>();
        else if (k == "c_dec") m.c_dec = v.get<std::int64_t>();
        else if (k == "c_hid") m.c_hid = v.get<std::int64_t>();
        else if (k == "fcpg_groups") m.fcpg_groups = v.get<std::int64_t>();
        else if (k == "fcpg_mode") m.fcpg_mode = fcpg_mode_from(v.get<std::string>());
        else if (k == "spm_enabled") m.spm_enabled = v.get<bool>();
        else if (k == "concat") m.concat = concat_from(v.get<std::string>());
        else if (k == "droppath_max") m.droppath_max = v.get<double>();
        else if (k == "head_dropout") m.head_dropout = v.get<double>();
        else if (k == "tau") m.tau = v.get<double>();
        else if (k == "norm_eps") m.norm_eps = v.get<double>();
        else if (k == "init_seed") m.init_seed = v.get<std::uint64_t>();
        else if (k == "task" || k == "classes" || k == "damage_levels") { /* set by owner */ }
        else throw ConfigError("unknown model config key: " + k);
    }
}

json train_to_json(const TrainConfig& c) {
    json j{{"task", task_name(c.task)},
           {"classes", c.classes},
           {"damage_levels", c.damage_levels},
           {"n_train", c.n_train},
           {"crop", c.crop},
           {"batch_size", c.batch_size},
           {"max_iters", c.max_iters},
           {"lr", c.lr},
           {"stage2_lr", c.stage2_lr},
           {"weight_decay", c.weight_decay},
           {"stage", c.stage},
           {"seed", c.seed},
           {"steplr_period", c.steplr_period},
           {"steplr_gamma", c.steplr_gamma},
           {"augment", c.augment_enabled},
           {"clip_norm", c.clip_norm},
           {"precision", precision_name(c.precision)},
           {"target_metric", c.target_metric},
           {"eval_every", c.eval_every},
           {"out_dir", c.out_dir},
           {"resume", c.resume}};
    j["model"] = model_to_json(c.model);
    return j;
}

void train_from_json(const json& j, TrainConfig& c) {
    if (!j.is_object()) throw ConfigError("config root must be a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        const std::string& k = it.key();
        const json& v = it.value();
        if (k == "task") c.task = task_from_name(v.get<std::string>());
        else if (k == "classes") c.classes = v.get<int>();
        else if (k == "damage_levels") c.damage_levels = v.get<int>();
        else if (k == "n_train") c.n_train = v.get<int>();
        else if (k == "crop") c.crop = v.get<std::int64_t>();
        else if (k == "batch_size") c.batch_size = v.get<int>();
        else if (k == "max_iters") c.max_iters = v.get<std::int64_t>();
        else if (k == "lr") c.lr = v.get<double>();
        else if (k == "stage2_lr") c.stage2_lr = v.get<double>();
        else if (k == "weight_decay") c.weight_decay = v.get<double>();
        else if (k == "stage") c.stage = v.get<int>();
        else if (k == "seed") c.seed = v.get<std::uint64_t>();
        else if (k == "steplr_period") c.steplr_period = v.get<std::int64_t>();
        else if (k == "steplr_gamma") c.steplr_gamma = v.get<double>();
        else if (k == "augment") c.augment_enabled = v.get<bool>();
        else if (k == "clip_norm") c.clip_norm = v.get<double>();
        else if (k == "precision") c.precision = precision_from(v.get<std::string>());
        else if (k == "target_metric") c.target_metric = v.get<double>();
        else if (k == "eval_every") c.eval_every = v.get<std::int64_t>();
        else if (k == "out_dir") c.out_dir = v.get<std::string>();
        else if (k == "resume") c.resume = v.get<std::string>();
        else if (k == "model") model_from_json(v, c.model);
        else throw ConfigError("unknown config key: " + k);
    }
}

json load_json_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open " + path);
    json j;
    try {
        f >> j;
    } catch (const json::parse_error& e) {
        throw ConfigError("invalid JSON in " + path + ": " + e.what());
    }
    return j;
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot open " + path + " for writing");
    f << content;
    f.flush();
    if (!f) throw IoError("write failed: " + path);
}

void write_manifest(const std::string& dir, const std::string& command,
                    const std::string& config_path, const json& resolved, std::uint64_t seed,
                    const std::vector<std::string>& artifacts, double wall_clock_sec) {
    if (dir.empty()) return;
    std::filesystem::create_directories(dir);
    json m{{"command", command},
           {"config_path", config_path},
           {"config", resolved},
           {"seed", seed},
           {"artifacts", artifacts},
           {"wall_clock_sec", wall_clock_sec}};
    write_text_file(dir + "/manifest.json", m.dump(2) + "\n");
}

struct Timer {
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
};

// ---------------------------------------------------------------------------
// Shared option plumbing: every value is bound to `Opts`, and after parsing
// only flags the user actually passed override the (default- or file-supplied)
// TrainConfig.
// ---------------------------------------------------------------------------

struct Opts {
    std::string task = "bcd";
    std::string config_path;
    std::string out_dir;
    std::string resume;
    std::string fcpg_mode = "soft";
    std::string concat = "width";
    std::string precision = "f32";
    int classes = 3, damage_levels = 4, n_train = 16, batch_size = 4, stage = 1;
    std::int64_t crop = 32, max_iters = 300, steplr_period = 0, eval_every = 25;
    double lr = 1e-3, stage2_lr = 1e-5, weight_decay = 5e-4, steplr_gamma = 0.5, clip_norm = 0.0;
    double target_metric = -1.0;
    std::uint64_t seed = 7;
    bool toy = false, full = false, no_augment = false, no_spm = false;
};

void add_train_options(CLI::App* cmd, Opts& o, bool with_stage = true) {
    cmd->add_option("--task", o.task, "task: bcd|scd|bda")
        ->check(CLI::IsMember({"bcd", "scd", "bda"}));
    cmd->add_option("--config", o.config_path, "JSON config file (flags override file values)");
    cmd->add_option("--out", o.out_dir, "output directory");
    cmd->add_option("--seed", o.seed, "global seed");
    cmd->add_flag("--toy", o.toy, "small CPU model preset (default)");
    cmd->add_flag("--full", o.full, "full-scale model dims (slow on CPU)");
    cmd->add_option("--classes", o.classes, "semantic classes (scd)");
    cmd->add_option("--damage-levels", o.damage_levels, "damage grades (bda)");
    cmd->add_option("--n-train", o.n_train, "synthetic training samples");
    cmd->add_option("--crop", o.crop, "sample side length (multiple of 32)");
    cmd->add_option("--batch", o.batch_size, "batch size");
    cmd->add_option("--max-iters", o.max_iters, "training steps");
    cmd->add_option("--lr", o.lr, "stage-1 learning rate");
    cmd->add_option("--stage2-lr", o.stage2_lr, "stage-2 learning rate");
    cmd->add_option("--weight-decay", o.weight_decay, "AdamW decoupled weight decay");
    if (with_stage) {
        cmd->add_option("--stage", o.stage, "training stage (1 or 2)")->check(CLI::Range(1, 2));
        cmd->add_option("--resume", o.resume, "checkpoint to load (required for stage 2)");
    }
    cmd->add_option("--steplr-period", o.steplr_period, "StepLR period (0 -> max_iters/3)");
    cmd->add_option("--steplr-gamma", o.steplr_gamma, "StepLR decay factor");
    cmd->add_flag("--no-augment", o.no_augment, "disable rotation/flip augmentation");
    cmd->add_option("--clip-norm", o.clip_norm, "global gradient-norm clip (0 = off)");
    cmd->add_option("--precision", o.precision, "f32|f64")
        ->check(CLI::IsMember({"f32", "f64"}));
    cmd->add_option("--target-metric", o.target_metric, "early-stop primary metric (<0 = off)");
    cmd->add_option("--eval-every", o.eval_every, "early-stop evaluation cadence");
    cmd->add_option("--fcpg-mode", o.fcpg_mode, "soft|hard-fixed|hard-single|disabled")
        ->check(CLI::IsMember({"soft", "hard-fixed", "hard-single", "disabled"}));
    cmd->add_flag("--no-spm", o.no_spm, "disable the spatial modulator");
    cmd->add_option("--concat", o.concat, "bitemporal concatenation: width|channel")
        ->check(CLI::IsMember({"width", "channel"}));
}

TrainConfig resolve_train_config(const CLI::App* cmd, const Opts& o) {
    TrainConfig cfg;
    cfg.model = toy_model_config(); // desk-scale default
    if (!o.config_path.empty()) train_from_json(load_json_file(o.config_path), cfg);
    if (o.full) cfg.model = ModelConfig{};

    auto passed = [cmd](const std::string& flag) {
        const auto* opt = cmd->get_option_no_throw(flag);
        return opt != nullptr && opt->count() > 0;
    };
    if (passed("--task")) cfg.task = task_from_name(o.task);
    if (passed("--out")) cfg.out_dir = o.out_dir;
    if (passed("--seed")) cfg.seed = o.seed;
    if (passed("--classes")) cfg.classes = o.classes;
    if (passed("--damage-levels")) cfg.damage_levels = o.damage_levels;
    if (passed("--n-train")) cfg.n_train = o.n_train;
    if (passed("--crop")) cfg.crop = o.crop;
    if (passed("--batch")) cfg.batch_size = o.batch_size;
    if (passed("--max-iters")) cfg.max_iters = o.max_iters;
    if (passed("--lr")) cfg.lr = o.lr;
    if (passed("--stage2-lr")) cfg.stage2_lr = o.stage2_lr;
    if (passed("--weight-decay")) cfg.weight_decay = o.weight_decay;
    if (passed("--stage")) cfg.stage = o.stage;
    if (passed("--resume")) cfg.resume = o.resume;
    if (passed("--steplr-period")) cfg.steplr_period = o.steplr_period;
    if (passed("--steplr-gamma")) cfg.steplr_gamma = o.steplr_gamma;
    if (passed("--no-augment")) cfg.augment_enabled = false;
    if (passed("--clip-norm")) cfg.clip_norm = o.clip_norm;
    if (passed("--precision")) cfg.precision = precision_from(o.precision);
    if (passed("--target-metric")) cfg.target_metric = o.target_metric;
    if (passed("--eval-every")) cfg.eval_every = o.eval_every;
    if (passed("--fcpg-mode")) cfg.model.fcpg_mode = fcpg_mode_from(o.fcpg_mode);
    if (passed("--no-spm")) cfg.model.spm_enabled = false;
    if (passed("--concat")) cfg.model.concat = concat_from(o.concat);
    return cfg;
}

std::string format_rows(const std::vector<std::pair<std::string, double>>& rows, bool csv) {
    std::ostringstream os;
    if (csv) {
        os << "metric,value\n";
        for (const auto& [k, v] : rows) os << k << "," << v << "\n";
    } else {
        for (const auto& [k, v] : rows) {
            os << "  ";
            os.width(14);
            os << std::left << k << " " << v << "\n";
        }
    }
    return os.str();
}

ModelConfig model_config_for_checkpoint(const std::string& ckpt_path, const Checkpoint& ck,
                                        TrainConfig& cfg) {
    // prefer the config snapshot written next to the checkpoint
    const std::string sidecar = ckpt_path + ".json";
    if (std::filesystem::exists(sidecar)) {
        TrainConfig stored;
        train_from_json(load_json_file(sidecar), stored);
        cfg.classes = stored.classes;
        cfg.damage_levels = stored.damage_levels;
        cfg.crop = stored.crop;
        ModelConfig m = stored.model;
        m.task = task_from_name(ck.task);
        m.classes = stored.classes;
        m.damage_levels = stored.damage_levels;
        return m;
    }
    ModelConfig m = cfg.model;
    m.task = task_from_name(ck.task);
    m.classes = cfg.classes;
    m.damage_levels = cfg.damage_levels;
    return m;
}

int cmd_train(const CLI::App* cmd, const Opts& o) {
    Timer timer;
    TrainConfig cfg = resolve_train_config(cmd, o);
    if (cfg.out_dir.empty()) cfg.out_dir = "runs/train-" + task_name(cfg.task);
    auto res = train(cfg);

    std::vector<std::string> artifacts{res.checkpoint_path, res.trace_path};
    const json resolved = train_to_json(cfg);
    write_text_file(res.checkpoint_path + ".json", resolved.dump(2) + "\n");
    artifacts.push_back(res.checkpoint_path + ".json");
    write_manifest(cfg.out_dir, "train", o.config_path, resolved, cfg.seed, artifacts,
                   timer.seconds());

    std::cout << "task " << task_name(cfg.task) << ", stage " << cfg.stage << ": " << res.steps
              << " steps, final loss " << res.final_loss
              << (res.early_stopped ? " (early stop)" : "") << "\n";
    std::cout << format_rows(res.final_eval.rows(), false);
    std::cout << "checkpoint: " << res.checkpoint_path << "\n";
    return 0;
}

int cmd_eval(const CLI::App* cmd, const Opts& o, const std::string& ckpt_path,
             const std::string& format) {
    Timer timer;
    TrainConfig cfg = resolve_train_config(cmd, o);
    const auto ck = load_checkpoint(ckpt_path);
    if (cmd->count("--task") > 0 && task_name(task_from_name(o.task)) != ck.task)
        throw ConfigError("checkpoint task '" + ck.task + "' does not match --task " + o.task);

    ModelConfig mc = model_config_for_checkpoint(ckpt_path, ck, cfg);
    mc.validate();
    PrecisionGuard prec(cfg.precision);
    Model model(mc);
    apply_checkpoint(ck, model.params());

    if (cfg.n_train <= 0) throw DataError("evaluation dataset is empty (--n-train 0)");
    auto ds = generate_dataset(mc.task, cfg.n_train, cfg.crop, cfg.crop, mc.classes,
                               mc.damage_levels, cfg.seed);
    auto ev = evaluate_model(model, ds, cfg.seed);

    auto rows = ev.rows();
    rows.emplace_back("degenerate", ev.degenerate ? 1.0 : 0.0);
    const std::string csv = format_rows(rows, true);
    std::cout << (format == "csv" ? csv : format_rows(rows, false));

    if (!o.out_dir.empty()) {
        std::filesystem::create_directories(o.out_dir);
        write_text_file(o.out_dir + "/metrics.csv", csv);
        json resolved = train_to_json(cfg);
        resolved["checkpoint"] = ckpt_path;
        resolved["format"] = format;
        write_manifest(o.out_dir, "eval", o.config_path, resolved, cfg.seed,
                       {o.out_dir + "/metrics.csv"}, timer.seconds());
    }
    return 0;
}

int cmd_gradcheck(std::uint64_t seed, double h, double tol, const std::string& out_dir) {
    Timer timer;
    auto results = run_grad_suite(default_grad_cases(seed), h, tol);
    bool all_pass = true;
    std::ostringstream report;
    for (const auto& r : results) {
        report << (r.pass ? "PASS" : "FAIL") << "  max_rel=";
        report.setf(std::ios::scientific);
        report.precision(3);
        report << r.max_rel;
        report.unsetf(std::ios::scientific);
        report << "  checked=" << r.checked << "  " << r.name;
        if (!r.pass) report << "  [" << r.worst << "]";
        report << "\n";
        all_pass = all_pass && r.pass;
    }
    report << (all_pass ? "gradient suite: all ops pass\n" : "gradient suite: FAILURES above\n");
    std::cout << report.str();
    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        write_text_file(out_dir + "/gradcheck.txt", report.str());
        write_manifest(out_dir, "gradcheck", "",
                       json{{"seed", seed}, {"h", h}, {"tol", tol}}, seed,
                       {out_dir + "/gradcheck.txt"}, timer.seconds());
    }
    return all_pass ? 0 : 1;
}

int cmd_ablate(const CLI::App* cmd, const Opts& o, const std::string& axis,
               std::int64_t stage2_iters) {
    Timer timer;
    TrainConfig base = resolve_train_config(cmd, o);
    if (base.out_dir.empty()) base.out_dir = "runs/ablate-" + axis;
    base.target_metric = -1.0;

    auto variant = base;
    if (axis == "no-fcpg") variant.model.fcpg_mode = FcpgMode::disabled;
    else if (axis == "no-spm") variant.model.spm_enabled = false;
    else if (axis == "fixed-thresholds") variant.model.fcpg_mode = FcpgMode::hard_fixed;
    else if (axis == "single-threshold") variant.model.fcpg_mode = FcpgMode::hard_single;
    else if (axis == "channel-concat") variant.model.concat = ConcatMode::channel;
    else throw ConfigError("unknown ablation axis: " + axis);

    auto ds = generate_dataset(base.task, base.n_train, base.crop, base.crop, base.classes,
                               base.damage_levels, base.seed);
    const std::uint64_t dhash = dataset_hash(ds);

    std::ostringstream csv;
    csv << "axis,variant,dataset_hash,metric,value\n";
    std::vector<std::string> artifacts;

    auto run_variant = [&](const std::string& name, TrainConfig cfg) {
        cfg.out_dir = base.out_dir + "/" + name + "/s1";
        cfg.stage = 1;
        cfg.resume.clear();
        auto r1 = train(cfg);
        TrainConfig cfg2 = cfg;
        cfg2.stage = 2;
        cfg2.resume = r1.checkpoint_path;
        cfg2.max_iters = stage2_iters;
        cfg2.steplr_period = 0;
        cfg2.out_dir = base.out_dir + "/" + name + "/s2";
        auto r2 = train(cfg2);
        artifacts.push_back(r2.checkpoint_path);

        PrecisionGuard prec(cfg.precision);
        ModelConfig mc = cfg.model;
        mc.task = cfg.task;
        mc.classes = cfg.classes;
        mc.damage_levels = cfg.damage_levels;
        Model model(mc);
        apply_checkpoint(load_checkpoint(r2.checkpoint_path), model.params());
        auto ev = evaluate_model(model, ds, cfg.seed);
        for (const auto& [k, v] : ev.rows())
            csv << axis << "," << name << "," << dhash << "," << k << "," << v << "\n";
        csv << axis << "," << name << "," << dhash << ",distractor_activation,"
            << distractor_activation(model, ds, cfg.seed) << "\n";
        csv << axis << "," << name << "," << dhash << ",final_loss," << r2.final_loss << "\n";
    };

    run_variant("baseline", base);
    run_variant(axis, variant);

    std::filesystem::create_directories(base.out_dir);
    write_text_file(base.out_dir + "/ablation.csv", csv.str());
    artifacts.push_back(base.out_dir + "/ablation.csv");
    std::cout << csv.str();

    json resolved = train_to_json(base);
    resolved["axis"] = axis;
    resolved["stage2_iters"] = stage2_iters;
    write_manifest(base.out_dir, "ablate", o.config_path, resolved, base.seed, artifacts,
                   timer.seconds());
    return 0;
}

int cmd_export_features(const CLI::App* cmd, const Opts& o, const std::string& ckpt_path,
                        int stage, int sample_index) {
    Timer timer;
    TrainConfig cfg = resolve_train_config(cmd, o);
    if (stage < 0 || stage > 4) throw ConfigError("--stage must be 0 (all) or 1..4");
    const std::string out_dir = cfg.out_dir.empty() ? "runs/features" : cfg.out_dir;
    std::filesystem::create_directories(out_dir);

    ModelConfig mc = cfg.model;
    mc.task = cfg.task;
    mc.classes = cfg.classes;
    mc.damage_levels = cfg.damage_levels;
    Checkpoint ck;
    const bool have_ck = !ckpt_path.empty();
    if (have_ck) {
        ck = load_checkpoint(ckpt_path);
        mc = model_config_for_checkpoint(ckpt_path, ck, cfg);
    }
    mc.validate();
    PrecisionGuard prec(cfg.precision);
    Model model(mc);
    if (have_ck) apply_checkpoint(ck, model.params());

    if (cfg.n_train <= 0) throw DataError("dataset is empty (--n-train 0)");
    auto ds = generate_dataset(mc.task, cfg.n_train, cfg.crop, cfg.crop, mc.classes,
                               mc.damage_levels, cfg.seed);
    if (sample_index < 0 || sample_index >= static_cast<int>(ds.size()))
        throw ConfigError("--sample index out of range");
    const auto& s = ds[static_cast<std::size_t>(sample_index)];

    NoGradGuard ng;
    RunCtx ctx{cfg.seed, 0, false, 0};
    auto out = model.forward(s.pre, s.post, ctx);

    std::vector<std::string> artifacts;
    save_ppm(out_dir + "/pre.ppm", s.pre->data, s.h, s.w);
    save_ppm(out_dir + "/post.ppm", s.post->data, s.h, s.w);
    {
        const std::vector<int>& ref = mc.task == Task::bda ? s.loc : s.bcd;
        std::vector<double> m(ref.size());
        for (std::size_t i = 0; i < ref.size(); ++i) m[i] = ref[i] ? 1.0 : 0.0;
        save_pgm(out_dir + "/mask.pgm", m, s.h, s.w);
    }
    artifacts.insert(artifacts.end(),
                     {out_dir + "/pre.ppm", out_dir + "/post.ppm", out_dir + "/mask.pgm"});

    for (int st = 1; st <= 4; ++st) {
        if (stage != 0 && st != stage) continue;
        const TensorPtr& f = out.features[static_cast<std::size_t>(st - 1)];
        const std::int64_t c = f->shape[0], fh = f->shape[1], fw = f->shape[2];
        std::vector<double> mag(static_cast<std::size_t>(fh * fw), 0.0);
        for (std::int64_t ci = 0; ci < c; ++ci)
            for (std::int64_t i = 0; i < fh * fw; ++i) {
                const double v = f->data[ci * fh * fw + i];
                mag[static_cast<std::size_t>(i)] += v * v;
            }
        for (auto& v : mag) v = std::sqrt(v / static_cast<double>(c));
        const std::string base = out_dir + "/stage" + std::to_string(st);
        save_pgm(base + ".pgm", minmax_normalize(mag), fh, fw);
        save_utsr(base + ".utsr", *f);
        artifacts.push_back(base + ".pgm");
        artifacts.push_back(base + ".utsr");
    }

    json resolved = train_to_json(cfg);
    resolved["checkpoint"] = ckpt_path;
    resolved["stage"] = stage;
    resolved["sample"] = sample_index;
    write_manifest(out_dir, "export-features", o.config_path, resolved, cfg.seed, artifacts,
                   timer.seconds());
    std::cout << "wrote " << artifacts.size() << " artifacts to " << out_dir << "\n";
    return 0;
}

} // namespace

int cli_main(int argc, char** argv) {
    CLI::App app{"unified change-detection training and analysis CLI"};
    app.require_subcommand(1);

    Opts topt, eopt, aopt, xopt;
    std::string eval_ckpt, eval_format = "table";
    std::string ablate_axis;
    std::int64_t ablate_stage2_iters = 40;
    std::string export_ckpt;
    int export_stage = 0, export_sample = 0;
    std::uint64_t gc_seed = 20240501;
    double gc_h = 1e-5, gc_tol = 1e-4;
    std::string gc_out;

    auto* t = app.add_subcommand("train", "train a model on synthetic bitemporal data");
    add_train_options(t, topt);

    auto* e = app.add_subcommand("eval", "evaluate a checkpoint on a synthetic dataset");
    add_train_options(e, eopt, false);
    e->add_option("--checkpoint", eval_ckpt, "checkpoint path")->required();
    e->add_option("--format", eval_format, "csv|table")
        ->check(CLI::IsMember({"csv", "table"}));

    auto* a = app.add_subcommand("ablate", "train/evaluate baseline vs one ablation variant");
    add_train_options(a, aopt, false);
    a->add_option("--axis", ablate_axis, "no-fcpg|no-spm|fixed-thresholds|single-threshold|channel-concat")
        ->required()
        ->check(CLI::IsMember({"no-fcpg", "no-spm", "fixed-thresholds", "single-threshold",
                               "channel-concat"}));
    a->add_option("--stage2-iters", ablate_stage2_iters, "stage-2 steps per variant");

    auto* g = app.add_subcommand("gradcheck", "run the finite-difference gradient suite");
    g->add_option("--seed", gc_seed, "suite seed");
    g->add_option("--fd-step", gc_h, "finite-difference step");
    g->add_option("--tol", gc_tol, "relative-error tolerance");
    g->add_option("--out", gc_out, "optional report directory");

    auto* x = app.add_subcommand("export-features", "dump post-FCPG stage features (PGM + UTSR)");
    add_train_options(x, xopt, false);
    x->add_option("--checkpoint", export_ckpt, "checkpoint path (optional: untrained init)");
    x->add_option("--stage", export_stage, "stage 1..4 (0 = all)");
    x->add_option("--sample", export_sample, "synthetic sample index");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& h2) {
        return app.exit(h2);
    } catch (const CLI::ParseError& pe) {
        app.exit(pe);
        return 2;
    }

    try {
        if (t->parsed()) return cmd_train(t, topt);
        if (e->parsed()) return cmd_eval(e, eopt, eval_ckpt, eval_format);
        if (a->parsed()) return cmd_ablate(a, aopt, ablate_axis, ablate_stage2_iters);
        if (g->parsed()) return cmd_gradcheck(gc_seed, gc_h, gc_tol, gc_out);
        if (x->parsed()) return cmd_export_features(x, xopt, export_ckpt, export_stage,
                                                    export_sample);
        throw ContractError("no subcommand dispatched");
    } catch (const ConfigError& ex) {
        std::cerr << ex.what() << "\n";
        return 2;
    } catch (const DataError& ex) {
        std::cerr << ex.what() << "\n";
        return 2;
    } catch (const ShapeError& ex) {
        std::cerr << ex.what() << "\n";
        return 2;
    } catch (const IoError& ex) {
        std::cerr << ex.what() << "\n";
        return 3;
    } catch (const std::exception& ex) {
        std::cerr << "internal error: " << ex.what() << "\n";
        return 1;
    }
}

} // namespace unicd
