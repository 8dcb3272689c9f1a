#include "unicd/optim.hpp"

#include <cmath>

namespace unicd {

AdamW::AdamW(std::vector<Param> params, AdamWConfig cfg) : cfg_(cfg), params_(std::move(params)) {
    if (cfg_.lr <= 0.0) throw ConfigError("AdamW: lr must be positive");
    if (cfg_.beta1 < 0.0 || cfg_.beta1 >= 1.0 || cfg_.beta2 < 0.0 || cfg_.beta2 >= 1.0)
        throw ConfigError("AdamW: betas must lie in [0,1)");
    m_.resize(params_.size());
    v_.resize(params_.size());
    for (std::size_t i = 0; i < params_.size(); ++i) {
        m_[i].assign(params_[i].t->numel(), 0.0);
        v_[i].assign(params_[i].t->numel(), 0.0);
    }
}

void AdamW::zero_grad() {
    for (auto& p : params_) p.t->grad.assign(p.t->numel(), 0.0);
}

void AdamW::step(double lr) {
    const bool quantize = precision_mode() == Precision::f32;
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));

    double clip_scale = 1.0;
    if (cfg_.clip_norm > 0.0) {
        double sq = 0.0;
        for (const auto& p : params_)
            for (double g : p.t->grad) sq += g * g;
        const double norm = std::sqrt(sq);
        if (norm > cfg_.clip_norm) clip_scale = cfg_.clip_norm / norm;
    }

    for (std::size_t i = 0; i < params_.size(); ++i) {
        auto& p = *params_[i].t;
        if (p.grad.size() != p.data.size())
            throw ContractError("AdamW::step: missing gradient for " + params_[i].name);
        auto& m = m_[i];
        auto& v = v_[i];
        for (std::size_t j = 0; j < p.data.size(); ++j) {
            const double g = p.grad[j] * clip_scale;
            m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g;
            v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g * g;
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            double out = p.data[j] - lr * cfg_.weight_decay * p.data[j] -
                         lr * mhat / (std::sqrt(vhat) + cfg_.eps);
            if (quantize) {
                out = quantize_f32(out);
                m[j] = quantize_f32(m[j]);
                v[j] = quantize_f32(v[j]);
            }
            p.data[j] = out;
        }
    }
}

double steplr(double lr0, std::int64_t step, std::int64_t period, double gamma) {
    if (period <= 0) throw ConfigError("steplr: period must be positive");
    return lr0 * std::pow(gamma, static_cast<double>(step / period));
}

} // namespace unicd
