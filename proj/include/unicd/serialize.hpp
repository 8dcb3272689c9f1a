#pragma once

#include <optional>

#include "unicd/model.hpp"
#include "unicd/optim.hpp"

namespace unicd {

// Raw tensor dump: magic "UTSR", u32 rank, u32 extents, little-endian f64 payload.
void save_utsr(const std::string& path, const Tensor& t);
TensorPtr load_utsr(const std::string& path);

// 8-bit binary PGM (P5) / PPM (P6). `gray` is row-major [H,W] in [0,1] after
// caller-side normalization; `rgb` is [3,H,W] in [0,1].
void save_pgm(const std::string& path, const std::vector<double>& gray, std::int64_t h,
              std::int64_t w);
void save_ppm(const std::string& path, const std::vector<double>& rgb, std::int64_t h,
              std::int64_t w);

// min-max normalize to [0,1]; constant input maps to all-zeros
std::vector<double> minmax_normalize(const std::vector<double>& v);

struct OptStateBlock {
    std::string name;
    std::vector<double> m, v;
};

struct Checkpoint {
    std::string task;
    std::vector<std::pair<std::string, TensorPtr>> params; // f32 payloads
    bool has_optimizer = false;
    std::int64_t opt_t = 0;
    std::vector<OptStateBlock> opt_state;
};

// Checkpoint file: magic "UCKP", u32 version, task tag, named parameter blocks
// (name, shape, f32 payload), optional optimizer state blocks.
void save_checkpoint(const std::string& path, const std::string& task, const ParamStore& store,
                     const AdamW* opt);
Checkpoint load_checkpoint(const std::string& path);

// Copies checkpoint values into an existing store; every store parameter must
// be present with a matching shape.
void apply_checkpoint(const Checkpoint& ck, ParamStore& store);
// Restores moment vectors for the optimizer's parameter subset (by name).
void apply_optimizer_state(const Checkpoint& ck, AdamW& opt);

} // namespace unicd
