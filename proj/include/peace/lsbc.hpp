#pragma once

#include <stdexcept>
#include <vector>

#include "ecg_data.hpp"
#include "tensor.hpp"

namespace peace {

struct PairSets {
    std::vector<std::vector<i64>> positives;
    std::vector<std::vector<i64>> negatives;
    std::vector<int> active;
};

inline PairSets build_pair_sets(const std::vector<LabelVector>& label_matrix) {
    PairSets out;
    if (label_matrix.empty()) return out;
    const std::size_t C = label_matrix.front().size();
    out.positives.resize(C);
    out.negatives.resize(C);
    for (std::size_t i = 0; i < label_matrix.size(); ++i) {
        const auto& row = label_matrix[i];
        if (row.size() != C) throw std::invalid_argument("build_pair_sets: ragged label matrix");
        for (std::size_t c = 0; c < C; ++c) {
            if (row[c] != 0 && row[c] != 1)
                throw std::invalid_argument("build_pair_sets: labels must be binary");
            (row[c] ? out.positives[c] : out.negatives[c]).push_back(static_cast<i64>(i));
        }
    }
    for (std::size_t c = 0; c < C; ++c)
        if (!out.positives[c].empty()) out.active.push_back(static_cast<int>(c));
    return out;
}

namespace detail {

inline Tensor cosine_matrix(const Tensor& a, const Tensor& b, double tau) {
    Tensor an = l2_normalize(a, 1, 1e-8);
    Tensor bn = l2_normalize(b, 1, 1e-8);
    return scale(matmul(an, transpose(bn, {1, 0})), 1.0 / tau);
}

}  // namespace detail

// -(1/|P|) sum_{i in P} log( sum_{j in P} e^{s_ij/tau} / sum_{k in batch} e^{s_ik/tau} )
inline Tensor directional_loss(const Tensor& z_m1, const Tensor& z_m2,
                               const std::vector<i64>& positives, const std::vector<i64>& negatives,
                               double tau) {
    if (positives.empty()) throw std::invalid_argument("directional_loss: empty positive set");
    if (!(tau > 0.0)) throw std::invalid_argument("directional_loss: tau must be positive");
    if (z_m1.rank() != 2 || z_m2.rank() != 2 || z_m1.shape() != z_m2.shape())
        throw std::invalid_argument("directional_loss: features must share [B x d] shape");
    if (static_cast<i64>(positives.size() + negatives.size()) != z_m1.dim(0))
        throw std::invalid_argument("directional_loss: pair sets must partition the batch");

    Tensor sims = detail::cosine_matrix(z_m1, z_m2, tau);
    Tensor anchor_rows = gather_rows(sims, positives);
    Tensor den = log_sum_exp(anchor_rows, 1);
    Tensor num = log_sum_exp(gather_last(anchor_rows, positives), 1);
    return mean_all(sub(den, num));
}

struct LsbcConfig {
    double tau = 0.07;
};

// (1/|C_B|) sum over active labels of the two-direction average; 0 when C_B is empty.
inline Tensor lsbc_loss(const Tensor& z_ecg, const Tensor& z_rep,
                        const std::vector<LabelVector>& label_matrix, double tau) {
    if (z_ecg.rank() != 3 || z_rep.rank() != 3 || z_ecg.shape() != z_rep.shape())
        throw std::invalid_argument("lsbc_loss: features must share [B x C x d] shape");
    const i64 B = z_ecg.dim(0);
    const i64 C = z_ecg.dim(1);
    const i64 d = z_ecg.dim(2);
    if (static_cast<i64>(label_matrix.size()) != B)
        throw std::invalid_argument("lsbc_loss: label matrix batch mismatch");
    if (B > 0 && static_cast<i64>(label_matrix.front().size()) != C)
        throw std::invalid_argument("lsbc_loss: label matrix class-count mismatch");

    PairSets pairs = build_pair_sets(label_matrix);
    if (pairs.active.empty()) return Tensor::scalar(0.0);

    Tensor total;
    for (int c : pairs.active) {
        Tensor ze = reshape(slice(z_ecg, 1, c, c + 1), {B, d});
        Tensor zr = reshape(slice(z_rep, 1, c, c + 1), {B, d});
        Tensor fwd = directional_loss(ze, zr, pairs.positives[c], pairs.negatives[c], tau);
        Tensor bwd = directional_loss(zr, ze, pairs.positives[c], pairs.negatives[c], tau);
        Tensor term = scale(add(fwd, bwd), 0.5);
        total = total.defined() ? add(total, term) : term;
    }
    return scale(total, 1.0 / static_cast<double>(pairs.active.size()));
}

}  // namespace peace
