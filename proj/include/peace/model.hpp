#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "peace/descriptors.hpp"
#include "peace/encoders.hpp"
#include "peace/label_ontology.hpp"
#include "peace/lqn.hpp"
#include "peace/rng.hpp"
#include "peace/tensor.hpp"

namespace peace {

struct ModelConfig {
    EncoderConfig encoder;
    i64 d_share = 32;
    i64 heads = 4;

    void validate() const {
        encoder.validate();
        if (d_share < 1 || d_share >= encoder.token_dim())
            throw std::invalid_argument("model: d_share must lie in [1, token_dim)");
        if (heads < 1 || encoder.token_dim() % heads != 0)
            throw std::invalid_argument("model: heads must divide token_dim");
    }
};

struct PeaceModel {
    ModelConfig cfg;
    HashingTextEmbedder embedder{64};
    Tensor queries;  // frozen label-name embeddings, [C, d]
    EcgEncoderParams encoder;
    LqnParams lqn;
    ProjectionHead share;
    FusionHead fusion;
    Tensor cls_w, cls_b;
    Tensor rep_w, rep_b;

    static PeaceModel init(const ModelConfig& cfg, std::uint64_t seed) {
        cfg.validate();
        const i64 d = cfg.encoder.token_dim();
        PeaceModel m;
        m.cfg = cfg;
        m.embedder = HashingTextEmbedder(static_cast<int>(d));

        std::vector<double> qdata;
        qdata.reserve(static_cast<std::size_t>(kNumLabels * d));
        for (int c = 0; c < kNumLabels; ++c) {
            const auto row = m.embedder.embed(label_full_name(static_cast<Label>(c)));
            qdata.insert(qdata.end(), row.begin(), row.end());
        }
        m.queries = Tensor::from({kNumLabels, d}, std::move(qdata));

        Rng rng(seed);
        m.encoder = EcgEncoderParams::init(cfg.encoder, rng);
        m.lqn = LqnParams::init(d, cfg.heads, rng);
        m.share = ProjectionHead::init(d, cfg.d_share, rng);
        m.fusion = FusionHead::init(static_cast<int>(d), rng);
        m.cls_w = Tensor::randn({kNumLabels, d}, rng, 1.0 / std::sqrt(static_cast<double>(d)), true);
        m.cls_b = Tensor::zeros({kNumLabels}, true);
        m.rep_w = Tensor::randn({d, kNumLabels}, rng, 1.0 / std::sqrt(static_cast<double>(d)), true);
        m.rep_b = Tensor::zeros({kNumLabels}, true);
        return m;
    }

    std::vector<std::pair<std::string, Tensor>> named_parameters() const {
        std::vector<std::pair<std::string, Tensor>> out;
        for (std::size_t i = 0; i < encoder.blocks.size(); ++i) {
            const auto& b = encoder.blocks[i];
            const std::string p = "encoder.b" + std::to_string(i) + ".";
            out.emplace_back(p + "w1", b.w1);
            out.emplace_back(p + "b1", b.b1);
            out.emplace_back(p + "w2", b.w2);
            out.emplace_back(p + "b2", b.b2);
            out.emplace_back(p + "ws", b.ws);
            out.emplace_back(p + "bs", b.bs);
        }
        out.emplace_back("lqn.wq", lqn.wq);
        out.emplace_back("lqn.bq", lqn.bq);
        out.emplace_back("lqn.wk", lqn.wk);
        out.emplace_back("lqn.bk", lqn.bk);
        out.emplace_back("lqn.wv", lqn.wv);
        out.emplace_back("lqn.bv", lqn.bv);
        out.emplace_back("lqn.wo", lqn.wo);
        out.emplace_back("lqn.bo", lqn.bo);
        out.emplace_back("lqn.ln_scale", lqn.ln_scale);
        out.emplace_back("lqn.ln_shift", lqn.ln_shift);
        out.emplace_back("share.w1", share.w1);
        out.emplace_back("share.b1", share.b1);
        out.emplace_back("share.w2", share.w2);
        out.emplace_back("share.b2", share.b2);
        out.emplace_back("fusion.w", fusion.w);
        out.emplace_back("fusion.b", fusion.b);
        out.emplace_back("cls.w", cls_w);
        out.emplace_back("cls.b", cls_b);
        out.emplace_back("rep.w", rep_w);
        out.emplace_back("rep.b", rep_b);
        return out;
    }

    std::vector<Tensor> parameters() const {
        std::vector<Tensor> out;
        for (auto& [name, t] : named_parameters()) out.push_back(t);
        return out;
    }
};

struct EcgBranch {
    Tensor tokens;      // [B, T, d]
    Tensor h;           // [B, C, d]
    Tensor logits;      // [B, C]
    Tensor z;           // [B, C, d_share]
};

inline Tensor label_classifier_logits(const Tensor& h, const Tensor& cls_w, const Tensor& cls_b) {
    return add(sum_axis(mul(h, cls_w), 2), cls_b);
}

inline EcgBranch forward_ecg(const PeaceModel& m, const Tensor& x) {
    EcgBranch out;
    out.tokens = encode_ecg(x, m.encoder);
    out.h = label_query_attend(m.queries, out.tokens, m.lqn);
    out.logits = label_classifier_logits(out.h, m.cls_w, m.cls_b);
    out.z = project(out.h, m.share);
    return out;
}

struct RepBranch {
    Tensor fused;       // [C, d]
    Tensor x_rep;       // [B, d]
    Tensor logits;      // [B, C]
    Tensor h;           // [B, C, d]
    Tensor z;           // [B, C, d_share]
};

// Semantic tokens per sample: the fused descriptor rows of its positive labels,
// non-positives zeroed (NORM stands in when a row has no positives).
inline Tensor descriptor_token_mask(const std::vector<LabelVector>& labels, i64 d) {
    const i64 B = static_cast<i64>(labels.size());
    if (B == 0) throw std::invalid_argument("descriptor_token_mask: empty batch");
    std::vector<double> mask(static_cast<std::size_t>(B * kNumLabels * d), 0.0);
    for (i64 b = 0; b < B; ++b) {
        const auto& row = labels[static_cast<std::size_t>(b)];
        if (row.size() != static_cast<std::size_t>(kNumLabels))
            throw std::invalid_argument("descriptor_token_mask: label vector must have 12 entries");
        bool any = false;
        for (i64 c = 0; c < kNumLabels; ++c) {
            if (row[static_cast<std::size_t>(c)] == 1) {
                any = true;
                for (i64 k = 0; k < d; ++k)
                    mask[static_cast<std::size_t>((b * kNumLabels + c) * d + k)] = 1.0;
            }
        }
        if (!any) {
            const i64 c = static_cast<i64>(Label::NORM);
            for (i64 k = 0; k < d; ++k) mask[static_cast<std::size_t>((b * kNumLabels + c) * d + k)] = 1.0;
        }
    }
    return Tensor::from({B, kNumLabels, d}, std::move(mask));
}

inline RepBranch forward_rep(const PeaceModel& m, const std::vector<LabelVector>& labels) {
    RepBranch out;
    out.fused = fused_descriptor_matrix(m.embedder, m.fusion);
    out.x_rep = descriptor_inputs(labels, out.fused);
    out.logits = linear(out.x_rep, m.rep_w, m.rep_b);
    const i64 B = static_cast<i64>(labels.size());
    Tensor kv = mul(tile_leading(out.fused, B), descriptor_token_mask(labels, m.cfg.encoder.token_dim()));
    out.h = label_query_attend(m.queries, kv, m.lqn);
    out.z = project(out.h, m.share);
    return out;
}

inline std::vector<std::vector<double>> inference_scores(const PeaceModel& m, const Tensor& x) {
    NoGradGuard guard;
    Tensor logits = forward_ecg(m, x).logits;
    const i64 B = logits.dim(0), C = logits.dim(1);
    std::vector<std::vector<double>> out(static_cast<std::size_t>(B), std::vector<double>(static_cast<std::size_t>(C)));
    for (i64 b = 0; b < B; ++b)
        for (i64 c = 0; c < C; ++c)
            out[static_cast<std::size_t>(b)][static_cast<std::size_t>(c)] =
                logits.data()[static_cast<std::size_t>(b * C + c)];
    return out;
}

}  // namespace peace
