#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "descriptors.hpp"
#include "encoders.hpp"
#include "tensor.hpp"

namespace peace {

struct LqnParams {
    Tensor wq, bq;
    Tensor wk, bk;
    Tensor wv, bv;
    Tensor wo, bo;
    Tensor ln_scale, ln_shift;
    i64 heads = 1;

    static LqnParams init(i64 d_share, i64 heads, Rng& rng) {
        if (heads < 1) throw std::invalid_argument("lqn: heads must be >= 1");
        if (d_share % heads != 0) throw std::invalid_argument("lqn: heads must divide d_share");
        LqnParams p;
        p.heads = heads;
        const double s = std::sqrt(1.0 / double(d_share));
        p.wq = Tensor::randn({d_share, d_share}, rng, s, true);
        p.bq = Tensor::zeros({d_share}, true);
        p.wk = Tensor::randn({d_share, d_share}, rng, s, true);
        p.bk = Tensor::zeros({d_share}, true);
        p.wv = Tensor::randn({d_share, d_share}, rng, s, true);
        p.bv = Tensor::zeros({d_share}, true);
        p.wo = Tensor::randn({d_share, d_share}, rng, s, true);
        p.bo = Tensor::zeros({d_share}, true);
        p.ln_scale = Tensor::full({d_share}, 1.0, true);
        p.ln_shift = Tensor::zeros({d_share}, true);
        return p;
    }

    i64 dim() const { return wq.dim(0); }

    std::vector<Tensor> parameters() const {
        return {wq, bq, wk, bk, wv, bv, wo, bo, ln_scale, ln_shift};
    }
};

// LN(MHA(q_c, kv_i)) with no residual; softmax over the T' axis.
inline Tensor label_query_attend(const Tensor& queries, const Tensor& keys_values,
                                 const LqnParams& params, Tensor* attn_out = nullptr) {
    if (queries.rank() != 2) throw std::invalid_argument("lqn: queries must be [C x d_share]");
    if (keys_values.rank() != 3) throw std::invalid_argument("lqn: keys_values must be [B x T x d_share]");
    const i64 ds = params.dim();
    if (queries.dim(1) != ds || keys_values.dim(2) != ds)
        throw std::invalid_argument("lqn: feature dim mismatch");
    const i64 C = queries.dim(0);
    const i64 B = keys_values.dim(0);
    const i64 T = keys_values.dim(1);
    const i64 h = params.heads;
    const i64 dh = ds / h;

    Tensor q = linear(queries, params.wq, params.bq);
    Tensor k = linear(keys_values, params.wk, params.bk);
    Tensor v = linear(keys_values, params.wv, params.bv);

    Tensor qh = reshape(tile_leading(transpose(reshape(q, {C, h, dh}), {1, 0, 2}), B), {B * h, C, dh});
    Tensor kh = reshape(transpose(reshape(k, {B, T, h, dh}), {0, 2, 1, 3}), {B * h, T, dh});
    Tensor vh = reshape(transpose(reshape(v, {B, T, h, dh}), {0, 2, 1, 3}), {B * h, T, dh});

    Tensor scores = scale(matmul(qh, transpose(kh, {0, 2, 1})), 1.0 / std::sqrt(double(dh)));
    Tensor attn = softmax(scores, 2);
    if (attn_out) *attn_out = reshape(attn, {B, h, C, T});

    Tensor ctx = matmul(attn, vh);
    ctx = reshape(transpose(reshape(ctx, {B, h, C, dh}), {0, 2, 1, 3}), {B, C, ds});
    Tensor out = linear(ctx, params.wo, params.bo);
    Tensor normed = layer_norm(out, 2, 1e-5);
    return add(mul(normed, params.ln_scale), params.ln_shift);
}

inline Tensor label_embeddings(const std::vector<Label>& labels, const TextEmbedder& emb,
                               const ProjectionHead& head) {
    if (labels.empty()) throw std::invalid_argument("label_embeddings: empty label list");
    const i64 d = emb.dim();
    std::vector<double> rows;
    rows.reserve(labels.size() * static_cast<std::size_t>(d));
    for (Label c : labels) {
        auto v = emb.embed(label_full_name(c));
        rows.insert(rows.end(), v.begin(), v.end());
    }
    Tensor x = Tensor::from({static_cast<i64>(labels.size()), d}, std::move(rows));
    return project(x, head);
}

inline std::vector<Label> all_labels() {
    std::vector<Label> out;
    for (int c = 0; c < kNumLabels; ++c) out.push_back(static_cast<Label>(c));
    return out;
}

}  // namespace peace
