#pragma once

#include "unicd/model.hpp"

namespace unicd {

struct AdamWConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 5e-4;
    double clip_norm = 0.0; // 0 disables gradient clipping
};

// Decoupled weight decay: p <- p - lr·wd·p - lr·m̂/(sqrt(v̂)+eps), with the
// decay term taken from the pre-update parameter value.
class AdamW {
public:
    AdamW(std::vector<Param> params, AdamWConfig cfg);

    void zero_grad();
    void step(double lr);
    void step() { step(cfg_.lr); }

    const AdamWConfig& config() const { return cfg_; }
    const std::vector<Param>& params() const { return params_; }
    std::int64_t t() const { return t_; }

    // exposed for checkpointing; moment vectors are ordered like params()
    std::vector<std::vector<double>>& m() { return m_; }
    std::vector<std::vector<double>>& v() { return v_; }
    const std::vector<std::vector<double>>& m() const { return m_; }
    const std::vector<std::vector<double>>& v() const { return v_; }
    void set_t(std::int64_t t) { t_ = t; }

private:
    AdamWConfig cfg_;
    std::vector<Param> params_;
    std::vector<std::vector<double>> m_, v_;
    std::int64_t t_ = 0;
};

// lr0 · gamma^floor(step/period)
double steplr(double lr0, std::int64_t step, std::int64_t period, double gamma);

} // namespace unicd
