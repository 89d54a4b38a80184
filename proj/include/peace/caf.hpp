#pragma once

#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <stdexcept>
#include <vector>

namespace peace {

inline void validate_breakpoints(double b1, double b2) {
    if (!(0.0 < b1 && b1 < b2 && b2 < 1.0))
        throw std::invalid_argument("curriculum breakpoints must satisfy 0 < b1 < b2 < 1");
}

// Knot values stay (0.1, 0, 0.3, 1.0) under breakpoint overrides; the last branch
// divides by (1 - b2) so beta(1) is exactly 1 in floating point.
inline double beta(double t, double b1 = 0.3, double b2 = 0.7) {
    validate_breakpoints(b1, b2);
    if (!(t >= 0.0 && t <= 1.0)) throw std::invalid_argument("beta: t must lie in [0, 1]");
    if (t < b1) return 0.1 - 0.1 * (t / b1);
    if (t < b2) return 0.3 * ((t - b1) / (b2 - b1));
    return 0.3 + 0.7 * ((t - b2) / (1.0 - b2));
}

struct CurriculumConfig {
    double gamma = 0.05;
    int window = 50;
    double epsilon = 0.01;
    double b1 = 0.3;
    double b2 = 0.7;

    void validate() const {
        if (!(gamma > 0.0 && gamma <= 1.0)) throw std::invalid_argument("caf: gamma must lie in (0, 1]");
        if (window < 1) throw std::invalid_argument("caf: window must be >= 1");
        if (!(epsilon > 0.0)) throw std::invalid_argument("caf: epsilon must be positive");
        validate_breakpoints(b1, b2);
    }
};

class CurriculumState {
public:
    explicit CurriculumState(const CurriculumConfig& cfg) : cfg_(cfg) { cfg.validate(); }

    void ema_update(double loss_ce) {
        if (!std::isfinite(loss_ce)) throw std::invalid_argument("caf: non-finite loss");
        const double ema = steps_ == 0 ? loss_ce
                                       : (1.0 - cfg_.gamma) * ema_history_.back() + cfg_.gamma * loss_ce;
        ema_history_.push_back(ema);
        if (ema_history_.size() > static_cast<std::size_t>(cfg_.window) + 1) ema_history_.pop_front();
        ++steps_;
    }

    double latest_ema() const {
        if (ema_history_.empty()) throw std::logic_error("caf: no EMA observed yet");
        return ema_history_.back();
    }

    double stability_delta() const {
        if (ema_history_.size() < static_cast<std::size_t>(cfg_.window) + 1)
            return std::numeric_limits<double>::infinity();
        return std::abs(ema_history_.back() - ema_history_.front());
    }

    std::int64_t steps_observed() const { return steps_; }
    const CurriculumConfig& config() const { return cfg_; }

private:
    CurriculumConfig cfg_;
    std::deque<double> ema_history_;
    std::int64_t steps_ = 0;
};

struct CurriculumWeight {
    double t = 0.0;
    double beta = 0.0;
    double delta = std::numeric_limits<double>::infinity();
    bool gate = false;
    double w = 0.0;
};

inline CurriculumWeight lsbc_weight(double t, const CurriculumState& state) {
    CurriculumWeight out;
    out.t = t;
    out.beta = beta(t, state.config().b1, state.config().b2);
    out.delta = state.stability_delta();
    out.gate = out.delta < state.config().epsilon;
    out.w = out.gate ? out.beta : 0.0;
    return out;
}

struct TraceRow {
    std::int64_t step = 0;
    double t = 0.0;
    double beta = 0.0;
    double delta = 0.0;
    bool gate = false;
    double w = 0.0;
};

// One EMA update per step; the step's gate uses the state advanced through that step.
inline std::vector<TraceRow> curriculum_trace(std::int64_t total_steps, const CurriculumConfig& cfg,
                                              const std::function<double(std::int64_t)>& loss_at) {
    if (total_steps < 1) throw std::invalid_argument("curriculum_trace: total_steps must be >= 1");
    cfg.validate();
    CurriculumState state(cfg);
    std::vector<TraceRow> rows;
    rows.reserve(static_cast<std::size_t>(total_steps));
    for (std::int64_t s = 1; s <= total_steps; ++s) {
        state.ema_update(loss_at(s));
        const double t = static_cast<double>(s) / static_cast<double>(total_steps);
        CurriculumWeight w = lsbc_weight(t, state);
        rows.push_back({s, t, w.beta, w.delta, w.gate, w.w});
    }
    return rows;
}

}  // namespace peace
