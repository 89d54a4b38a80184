#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "peace/ecg_data.hpp"
#include "peace/tensor.hpp"

namespace peace {

struct ClassWeights {
    std::vector<double> w;
};

struct ObjectiveConfig {
    double lambda_max = 1.0;

    void validate() const {
        if (!(std::isfinite(lambda_max) && lambda_max >= 0.0))
            throw std::invalid_argument("objective: lambda_max must be finite and >= 0");
    }
};

inline constexpr double kClassWeightFloor = 1.0;
inline constexpr double kClassWeightCeil = 5.0;

inline ClassWeights class_weights(const std::vector<std::int64_t>& pos_counts) {
    if (pos_counts.empty()) throw std::invalid_argument("class_weights: empty counts");
    std::int64_t total = 0;
    for (std::int64_t c : pos_counts) {
        if (c < 0) throw std::invalid_argument("class_weights: negative count");
        total += c;
    }
    if (total == 0) throw std::invalid_argument("class_weights: all counts are zero");
    const double mean = static_cast<double>(total) / static_cast<double>(pos_counts.size());
    ClassWeights out;
    out.w.reserve(pos_counts.size());
    for (std::int64_t c : pos_counts) {
        const double raw = c == 0 ? kClassWeightCeil : mean / static_cast<double>(c);
        out.w.push_back(std::clamp(raw, kClassWeightFloor, kClassWeightCeil));
    }
    return out;
}

inline Tensor targets_tensor(const std::vector<LabelVector>& labels, std::size_t num_classes) {
    if (labels.empty()) throw std::invalid_argument("targets_tensor: empty batch");
    std::vector<double> flat;
    flat.reserve(labels.size() * num_classes);
    for (const auto& row : labels) {
        if (row.size() != num_classes) throw std::invalid_argument("targets_tensor: ragged label row");
        for (int v : row) {
            if (v != 0 && v != 1) throw std::invalid_argument("targets_tensor: labels must be 0/1");
            flat.push_back(static_cast<double>(v));
        }
    }
    return Tensor::from({static_cast<i64>(labels.size()), static_cast<i64>(num_classes)}, std::move(flat));
}

inline Tensor weighted_bce(const Tensor& logits, const Tensor& targets, const ClassWeights& weights) {
    if (logits.rank() != 2 || targets.rank() != 2 || logits.shape() != targets.shape())
        throw std::invalid_argument("weighted_bce: expects matching [B,C] logits and targets");
    if (static_cast<std::size_t>(logits.dim(1)) != weights.w.size())
        throw std::invalid_argument("weighted_bce: class weight count mismatch");
    for (double l : logits.data())
        if (!std::isfinite(l)) throw std::invalid_argument("weighted_bce: non-finite logit");
    for (double y : targets.data())
        if (y != 0.0 && y != 1.0) throw std::invalid_argument("weighted_bce: targets must be 0/1");
    for (double wc : weights.w)
        if (!(wc >= kClassWeightFloor && wc <= kClassWeightCeil))
            throw std::invalid_argument("weighted_bce: weight outside clip interval");
    Tensor wrow = Tensor::from({static_cast<i64>(weights.w.size())}, weights.w);
    return bce_with_logits_weighted_mean(logits, targets, wrow);
}

inline Tensor total_loss(const Tensor& ce_ecg, const Tensor& ce_rep, const Tensor& lsbc, double w_lsbc,
                         const ObjectiveConfig& cfg) {
    cfg.validate();
    if (!(std::isfinite(w_lsbc) && w_lsbc >= 0.0))
        throw std::invalid_argument("total_loss: w_lsbc must be finite and >= 0");
    Tensor ce = add(ce_ecg, ce_rep);
    const double coef = cfg.lambda_max * w_lsbc;
    if (coef == 0.0) return ce;
    return add(ce, scale(lsbc, coef));
}

}  // namespace peace
