#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "ecg_data.hpp"
#include "rng.hpp"
#include "tensor.hpp"

namespace peace {

struct EncoderConfig {
    std::vector<i64> channels = {32, 64, 64, 64};
    std::vector<i64> kernels = {7, 5, 5, 5};
    std::vector<i64> strides = {4, 4, 4, 2};
    i64 input_len = 5000;

    void validate() const {
        if (channels.empty() || channels.size() != kernels.size() || channels.size() != strides.size())
            throw std::invalid_argument("encoder config: channels/kernels/strides must align");
        for (std::size_t i = 0; i < channels.size(); ++i)
            if (channels[i] < 1 || kernels[i] < 1 || strides[i] < 1)
                throw std::invalid_argument("encoder config: nonpositive entry");
        if (input_len < 1) throw std::invalid_argument("encoder config: nonpositive input_len");
        if (token_count() < 8) throw std::invalid_argument("encoder config: stride plan leaves fewer than 8 tokens");
    }

    // Every block halves-or-more via floor(L/s); padding is chosen to land exactly there.
    std::vector<i64> block_lengths() const {
        std::vector<i64> lens;
        i64 len = input_len;
        for (i64 s : strides) {
            len = len / s;
            lens.push_back(len);
        }
        return lens;
    }

    i64 token_count() const { return block_lengths().back(); }
    i64 token_dim() const { return channels.back(); }
};

struct ConvBlockParams {
    Tensor w1, b1;
    Tensor w2, b2;
    Tensor ws, bs;
    i64 stride = 1;
    i64 pad = 0;
};

struct EcgEncoderParams {
    EncoderConfig cfg;
    std::vector<ConvBlockParams> blocks;

    static EcgEncoderParams init(const EncoderConfig& cfg, Rng& rng) {
        cfg.validate();
        EcgEncoderParams p;
        p.cfg = cfg;
        i64 in_ch = kNumLeads;
        i64 len = cfg.input_len;
        for (std::size_t i = 0; i < cfg.channels.size(); ++i) {
            const i64 out_ch = cfg.channels[i];
            const i64 k = cfg.kernels[i];
            const i64 s = cfg.strides[i];
            const i64 q = len / s;
            const i64 need = (q - 1) * s + k - len;
            ConvBlockParams block;
            block.stride = s;
            block.pad = need > 0 ? (need + 1) / 2 : 0;
            block.w1 = Tensor::randn({out_ch, in_ch, k}, rng, std::sqrt(2.0 / double(in_ch * k)), true);
            block.b1 = Tensor::zeros({out_ch}, true);
            block.w2 = Tensor::randn({out_ch, out_ch, 3}, rng, std::sqrt(2.0 / double(out_ch * 3)), true);
            block.b2 = Tensor::zeros({out_ch}, true);
            block.ws = Tensor::randn({out_ch, in_ch, 1}, rng, std::sqrt(1.0 / double(in_ch)), true);
            block.bs = Tensor::zeros({out_ch}, true);
            p.blocks.push_back(block);
            in_ch = out_ch;
            len = q;
        }
        return p;
    }

    std::vector<Tensor> parameters() const {
        std::vector<Tensor> out;
        for (const auto& b : blocks) {
            out.push_back(b.w1);
            out.push_back(b.b1);
            out.push_back(b.w2);
            out.push_back(b.b2);
            out.push_back(b.ws);
            out.push_back(b.bs);
        }
        return out;
    }
};

inline Tensor encode_ecg(const Tensor& batch, const EcgEncoderParams& params) {
    if (batch.rank() != 3 || batch.dim(1) != kNumLeads || batch.dim(2) != params.cfg.input_len)
        throw std::invalid_argument("encode_ecg: expected input [B x 12 x " +
                                    std::to_string(params.cfg.input_len) + "]");
    Tensor h = batch;
    for (const auto& block : params.blocks) {
        Tensor main = gelu(conv1d(h, block.w1, block.b1, block.stride, block.pad));
        main = conv1d(main, block.w2, block.b2, 1, 1);
        Tensor shortcut = conv1d(h, block.ws, block.bs, block.stride, 0);
        if (shortcut.dim(2) > main.dim(2)) shortcut = slice(shortcut, 2, 0, main.dim(2));
        h = layer_norm(gelu(add(main, shortcut)), 1, 1e-5);
    }
    return transpose(h, {0, 2, 1});
}

inline Tensor global_avg_pool(const Tensor& tokens) {
    if (tokens.rank() != 3) throw std::invalid_argument("global_avg_pool: expected [B x T x d]");
    return mean_axis(tokens, 1);
}

struct ProjectionHead {
    Tensor w1, b1;  // [d, d]
    Tensor w2, b2;  // [d, d_share]
    bool gelu_hidden = true;

    static ProjectionHead init(i64 d, i64 d_share, Rng& rng, bool gelu_hidden = true) {
        if (d_share >= d) throw std::invalid_argument("projection head: d_share must be < d");
        if (d_share < 1) throw std::invalid_argument("projection head: d_share must be >= 1");
        ProjectionHead h;
        h.w1 = Tensor::randn({d, d}, rng, std::sqrt(2.0 / double(d)), true);
        h.b1 = Tensor::zeros({d}, true);
        h.w2 = Tensor::randn({d, d_share}, rng, std::sqrt(1.0 / double(d)), true);
        h.b2 = Tensor::zeros({d_share}, true);
        h.gelu_hidden = gelu_hidden;
        return h;
    }

    std::vector<Tensor> parameters() const { return {w1, b1, w2, b2}; }
};

inline Tensor project(const Tensor& x, const ProjectionHead& head) {
    if (x.rank() != 2 && x.rank() != 3) throw std::invalid_argument("project: expected rank 2 or 3");
    if (x.dim(-1) != head.w1.dim(0)) throw std::invalid_argument("project: trailing dim mismatch");
    Tensor h = linear(x, head.w1, head.b1);
    if (head.gelu_hidden) h = gelu(h);
    return linear(h, head.w2, head.b2);
}

}  // namespace peace
