#pragma once

#include <array>
#include <unordered_map>

#include "unicd/fcpg.hpp"
#include "unicd/scan.hpp"
#include "unicd/ssm.hpp"

namespace unicd {

enum class Task { bcd, scd, bda };
std::string task_name(Task t);
Task task_from_name(const std::string& s);

enum class ConcatMode { width, channel };

enum class ParamGroup { backbone, fcpg, decoder, head };
std::string group_name(ParamGroup g);

struct Param {
    std::string name;
    ParamGroup group;
    TensorPtr t;
};

// Flat named-parameter registry. Registration order is the canonical order
// for checkpoints and optimizer state, so construction must be deterministic.
class ParamStore {
public:
    TensorPtr add(ParamGroup g, const std::string& name, TensorPtr t);
    const std::vector<Param>& all() const { return items_; }
    std::vector<Param> in_group(ParamGroup g) const;
    TensorPtr find(const std::string& name) const;
    std::int64_t element_count(ParamGroup g) const;
    std::int64_t element_count() const;

private:
    std::vector<Param> items_;
    std::unordered_map<std::string, std::size_t> index_;
};

struct ModelConfig {
    Task task = Task::bcd;
    int classes = 3;       // SCD semantic classes (heads emit classes+1 channels)
    int damage_levels = 4; // BDA damage grades (head emits levels+1 channels)
    std::array<std::int64_t, 4> dims{16, 32, 64, 128};
    std::array<std::int64_t, 4> depths{1, 1, 2, 1};
    std::int64_t state_dim = 8;
    std::int64_t c_dec = 64;
    std::int64_t c_hid = 128;
    std::int64_t fcpg_groups = 4;
    FcpgMode fcpg_mode = FcpgMode::soft;
    bool spm_enabled = true;
    ConcatMode concat = ConcatMode::width;
    double droppath_max = 0.1;
    double head_dropout = 0.2;
    double tau = 0.05;
    double norm_eps = 1e-5;
    std::uint64_t init_seed = 1234;

    void validate() const;
};

// Per-forward context: PRNG key material for dropout / drop-path plus the
// running layer counter that makes every stochastic site distinct.
struct RunCtx {
    std::uint64_t seed = 0;
    std::int64_t step = 0;
    bool training = false;
    std::int64_t layer = 0;
    DropKey key() { return DropKey{seed, step, layer++}; }
};

struct HeadOutputs {
    TensorPtr change;          // BCD/SCD [2,H,W]
    TensorPtr sem_t1, sem_t2;  // SCD [K+1,H,W]
    TensorPtr loc, dmg;        // BDA [2,H,W], [D+1,H,W]
    std::array<TensorPtr, 4> features; // post-FCPG stage outputs (export hook)
};

class Model {
public:
    explicit Model(const ModelConfig& cfg);

    HeadOutputs forward(const TensorPtr& pre, const TensorPtr& post, RunCtx& ctx);

    ParamStore& params() { return store_; }
    const ParamStore& params() const { return store_; }
    const ModelConfig& config() const { return cfg_; }

private:
    struct Norm {
        TensorPtr g, b;
    };
    struct Conv {
        TensorPtr w, b;
    };
    struct VssBlock {
        Norm ln1;
        Conv in_proj;
        TensorPtr dw_w, dw_b;
        SSMParams ssm;
        Conv out_proj;
        Norm ln2;
        Conv mlp1, mlp2;
        double droppath = 0.0;
    };
    struct Stage {
        std::vector<VssBlock> blocks;
        FcpgParams fcpg;
        Conv down;
        Norm down_norm;
        bool has_down = false;
    };

    TensorPtr vss_forward(const TensorPtr& x, const VssBlock& blk, RunCtx& ctx) const;
    TensorPtr avg_halves(const TensorPtr& x) const; // [C,H,2W] -> [C,H,W] in width mode
    TensorPtr half(const TensorPtr& x, int which) const;

    ModelConfig cfg_;
    ParamStore store_;

    Conv stem1_, stem2_;
    Norm stem_n1_, stem_n2_;
    std::array<Stage, 4> stages_;
    std::array<Conv, 4> lateral_;
    std::array<Conv, 3> td_; // top-down fusion convs producing N3, N2, N1
    Conv fuse_;
    Conv head1_, head2_;
    Norm head_bn1_, head_bn2_;

    Conv task_change_;            // bcd/scd
    TensorPtr sem_w_t1_, sem_w_t2_, sem_b_t1_, sem_b_t2_; // scd suppression heads
    Conv task_loc_, task_dmg_;    // bda
};

} // namespace unicd
