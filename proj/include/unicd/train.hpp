#pragma once

#include "unicd/data.hpp"
#include "unicd/losses.hpp"
#include "unicd/metrics.hpp"
#include "unicd/optim.hpp"

namespace unicd {

struct TrainConfig {
    Task task = Task::bcd;
    int classes = 3;
    int damage_levels = 4;
    int n_train = 16;
    std::int64_t crop = 32;
    int batch_size = 4;
    std::int64_t max_iters = 300;
    double lr = 1e-3; // toy-scale default; full-scale runs use 1e-4
    double stage2_lr = 1e-5;
    double weight_decay = 5e-4;
    int stage = 1;
    std::uint64_t seed = 7;
    std::int64_t steplr_period = 0; // 0 -> max_iters / 3
    double steplr_gamma = 0.5;
    bool augment_enabled = true;
    double clip_norm = 0.0;
    Precision precision = Precision::f32;
    double target_metric = -1.0; // early stop when primary metric reaches this
    std::int64_t eval_every = 25;
    ModelConfig model;
    std::string out_dir; // empty -> no trace/checkpoint files
    std::string resume;  // stage-1 checkpoint path (required for stage 2)

    // Copies task fields into the nested model config, fills dependent
    // defaults and validates.
    void finalize();
};

// Small model preset for CPU smoke runs.
ModelConfig toy_model_config();

struct EvalSummary {
    Task task = Task::bcd;
    double precision = 0, recall = 0, f1 = 0, iou = 0, oa = 0;   // bcd
    double miou = 0, sek = 0, f1_scd = 0, scd_oa = 0;            // scd
    double f1_loc = 0, f1_clf = 0, f1_overall = 0;               // bda
    bool degenerate = false;

    double primary() const; // bcd: f1, scd: miou, bda: f1_loc
    std::vector<std::pair<std::string, double>> rows() const;
};

struct TrainResult {
    std::int64_t steps = 0;
    double final_loss = 0.0;
    bool early_stopped = false;
    EvalSummary final_eval;
    std::vector<double> loss_trace;
    std::string checkpoint_path, trace_path;
};

// Inverse-frequency weight pairs per task (scd: change/semantic, bda: loc/damage).
struct TaskWeights {
    std::vector<double> a, b;
};
TaskWeights compute_task_weights(const std::vector<SyntheticSample>& ds, Task task, int classes,
                                 int damage_levels);

std::vector<int> argmax_channels(const Tensor& logits);

LossReport sample_loss(const HeadOutputs& out, const SyntheticSample& s, const TaskWeights& w);

EvalSummary evaluate_model(Model& model, const std::vector<SyntheticSample>& ds,
                           std::uint64_t seed);

// Mean predicted change probability over pixels that sit inside a pseudo-change
// distractor but outside the true change mask.
double distractor_activation(Model& model, const std::vector<SyntheticSample>& ds,
                             std::uint64_t seed);

TrainResult train(const TrainConfig& cfg_in);

} // namespace unicd
