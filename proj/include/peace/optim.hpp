#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "peace/tensor.hpp"

namespace peace {

struct OptimConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double lr_init = 1e-4;
    double weight_decay = 1.2e-3;
    int warmup_epochs = 5;
    double min_lr = 1e-6;
    double grad_clip_norm = 5.0;
    int batch_size = 32;
    int epochs = 20;
    std::uint64_t seed = 0;

    void validate() const {
        if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0))
            throw std::invalid_argument("optim: betas must lie in [0, 1)");
        if (!(lr_init > 0.0 && min_lr > 0.0 && min_lr <= lr_init))
            throw std::invalid_argument("optim: need 0 < min_lr <= lr_init");
        if (weight_decay < 0.0) throw std::invalid_argument("optim: negative weight decay");
        if (warmup_epochs < 0) throw std::invalid_argument("optim: negative warmup");
        if (!(grad_clip_norm > 0.0)) throw std::invalid_argument("optim: clip norm must be positive");
        if (batch_size < 1 || epochs < 1) throw std::invalid_argument("optim: batch size and epochs must be >= 1");
    }
};

inline constexpr double kAdamEps = 1e-8;
inline constexpr double kWarmupFloor = 1e-5;

inline double clip_grad_norm(std::vector<Tensor>& params, double max_norm = 5.0) {
    if (!(max_norm > 0.0)) throw std::invalid_argument("clip_grad_norm: max_norm must be positive");
    double sq = 0.0;
    for (auto& p : params)
        for (double g : p.grad()) sq += g * g;
    const double norm = std::sqrt(sq);
    if (norm > max_norm) {
        const double s = max_norm / norm;
        for (auto& p : params)
            for (double& g : p.grad()) g *= s;
    }
    return norm;
}

struct AdamState {
    std::vector<std::vector<double>> m, v;
    std::int64_t t = 0;
};

inline void adamw_step(std::vector<Tensor>& params, AdamState& state, const OptimConfig& cfg, double lr) {
    cfg.validate();
    if (!(lr >= 0.0) || !std::isfinite(lr)) throw std::invalid_argument("adamw: bad learning rate");
    if (state.t == 0) {
        state.m.resize(params.size());
        state.v.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
            state.m[i].assign(params[i].data().size(), 0.0);
            state.v[i].assign(params[i].data().size(), 0.0);
        }
    }
    if (state.m.size() != params.size()) throw std::invalid_argument("adamw: state/param count mismatch");
    ++state.t;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& data = params[i].data();
        auto& grad = params[i].grad();
        if (state.m[i].size() != data.size()) throw std::invalid_argument("adamw: state size mismatch");
        for (std::size_t j = 0; j < data.size(); ++j) {
            const double g = grad[j];
            if (!std::isfinite(g)) throw std::invalid_argument("adamw: non-finite gradient");
            state.m[i][j] = cfg.beta1 * state.m[i][j] + (1.0 - cfg.beta1) * g;
            state.v[i][j] = cfg.beta2 * state.v[i][j] + (1.0 - cfg.beta2) * g * g;
            const double mhat = state.m[i][j] / bc1;
            const double vhat = state.v[i][j] / bc2;
            data[j] -= lr * (mhat / (std::sqrt(vhat) + kAdamEps) + cfg.weight_decay * data[j]);
        }
    }
}

inline double lr_schedule(std::int64_t step, std::int64_t total_steps, std::int64_t warmup_steps,
                          const OptimConfig& cfg) {
    if (total_steps < 1) throw std::invalid_argument("lr_schedule: total_steps must be >= 1");
    if (warmup_steps < 0 || warmup_steps > total_steps)
        throw std::invalid_argument("lr_schedule: warmup outside run");
    if (step < 0 || step > total_steps) throw std::invalid_argument("lr_schedule: step outside run");
    if (step < warmup_steps) {
        const double frac = static_cast<double>(step) / static_cast<double>(warmup_steps);
        return kWarmupFloor + (cfg.lr_init - kWarmupFloor) * frac;
    }
    if (total_steps == warmup_steps) return cfg.lr_init;
    const double progress =
        static_cast<double>(step - warmup_steps) / static_cast<double>(total_steps - warmup_steps);
    return cfg.min_lr + 0.5 * (cfg.lr_init - cfg.min_lr) * (1.0 + std::cos(progress * 3.14159265358979323846));
}

}  // namespace peace
