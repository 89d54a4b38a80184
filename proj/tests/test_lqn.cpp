#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "peace/grad_check.hpp"
#include "peace/lqn.hpp"

using namespace peace;

namespace {

double max_abs_diff(const Tensor& a, const Tensor& b) {
    REQUIRE(a.shape() == b.shape());
    double m = 0.0;
    for (i64 i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
    return m;
}

// Single-(sample, label, head) attention computed with raw loops.
std::vector<double> oracle_attend(const Tensor& queries, const Tensor& kv, const LqnParams& p,
                                  i64 b, i64 c) {
    const i64 ds = p.dim();
    const i64 h = p.heads;
    const i64 dh = ds / h;
    const i64 T = kv.dim(1);
    const i64 C = queries.dim(0);
    (void)C;

    auto row_proj = [&](const double* x, const Tensor& w, const Tensor& bias, i64 j) {
        double acc = bias.data()[j];
        for (i64 i = 0; i < ds; ++i) acc += x[i] * w.data()[i * ds + j];
        return acc;
    };

    std::vector<double> q(ds), ctx(ds, 0.0);
    const double* qrow = queries.data().data() + c * ds;
    for (i64 j = 0; j < ds; ++j) q[j] = row_proj(qrow, p.wq, p.bq, j);

    for (i64 head = 0; head < h; ++head) {
        std::vector<double> scores(T);
        double best = -1e300;
        for (i64 t = 0; t < T; ++t) {
            const double* kvrow = kv.data().data() + (b * T + t) * ds;
            double dot = 0.0;
            for (i64 j = 0; j < dh; ++j)
                dot += q[head * dh + j] * row_proj(kvrow, p.wk, p.bk, head * dh + j);
            scores[t] = dot / std::sqrt(double(dh));
            best = std::max(best, scores[t]);
        }
        double z = 0.0;
        for (i64 t = 0; t < T; ++t) z += std::exp(scores[t] - best);
        for (i64 t = 0; t < T; ++t) {
            double w = std::exp(scores[t] - best) / z;
            const double* kvrow = kv.data().data() + (b * T + t) * ds;
            for (i64 j = 0; j < dh; ++j)
                ctx[head * dh + j] += w * row_proj(kvrow, p.wv, p.bv, head * dh + j);
        }
    }

    std::vector<double> out(ds);
    for (i64 j = 0; j < ds; ++j) out[j] = row_proj(ctx.data(), p.wo, p.bo, j);

    double mean = 0.0;
    for (double x : out) mean += x;
    mean /= double(ds);
    double var = 0.0;
    for (double x : out) var += (x - mean) * (x - mean);
    var /= double(ds);
    const double inv = 1.0 / std::sqrt(var + 1e-5);
    for (i64 j = 0; j < ds; ++j)
        out[j] = (out[j] - mean) * inv * p.ln_scale.data()[j] + p.ln_shift.data()[j];
    return out;
}

}  // namespace

TEST_CASE("attention weights are a distribution over tokens") {
    Rng rng(3);
    LqnParams p = LqnParams::init(8, 2, rng);
    Tensor q = Tensor::randn({3, 8}, rng);
    Tensor kv = Tensor::randn({2, 5, 8}, rng);

    NoGradGuard ng;
    Tensor attn;
    Tensor out = label_query_attend(q, kv, p, &attn);
    REQUIRE(out.shape() == Shape{2, 3, 8});
    REQUIRE(attn.shape() == Shape{2, 2, 3, 5});

    for (i64 i = 0; i < attn.numel(); ++i) REQUIRE(attn.data()[i] >= 0.0);
    for (i64 row = 0; row < 2 * 2 * 3; ++row) {
        double s = 0.0;
        for (i64 t = 0; t < 5; ++t) s += attn.data()[row * 5 + t];
        REQUIRE(s == Catch::Approx(1.0).margin(1e-6));
    }
}

TEST_CASE("singleton token sequence ignores the query weighting") {
    Rng rng(17);
    LqnParams p = LqnParams::init(6, 3, rng);
    Tensor kv = Tensor::randn({2, 1, 6}, rng);
    Tensor q1 = Tensor::randn({4, 6}, rng);
    Tensor q2 = Tensor::randn({4, 6}, rng);

    NoGradGuard ng;
    Tensor attn;
    Tensor out1 = label_query_attend(q1, kv, p, &attn);
    Tensor out2 = label_query_attend(q2, kv, p);

    for (i64 i = 0; i < attn.numel(); ++i) REQUIRE(attn.data()[i] == 1.0);
    REQUIRE(max_abs_diff(out1, out2) == 0.0);

    const i64 ds = 6;
    for (i64 c = 1; c < 4; ++c)
        for (i64 j = 0; j < ds; ++j)
            REQUIRE(out1.data()[c * ds + j] == out1.data()[j]);
}

TEST_CASE("duplicating every token leaves the output unchanged") {
    Rng rng(29);
    LqnParams p = LqnParams::init(8, 4, rng);
    Tensor q = Tensor::randn({3, 8}, rng);
    Tensor kv = Tensor::randn({2, 6, 8}, rng);

    NoGradGuard ng;
    Tensor base = label_query_attend(q, kv, p);
    Tensor doubled = label_query_attend(q, concat({kv, kv}, 1), p);
    REQUIRE(max_abs_diff(base, doubled) < 1e-12);
}

TEST_CASE("attention matches the loop oracle") {
    Rng rng(41);
    LqnParams p = LqnParams::init(8, 2, rng);
    Tensor q = Tensor::randn({3, 8}, rng);
    Tensor kv = Tensor::randn({2, 5, 8}, rng);

    NoGradGuard ng;
    Tensor out = label_query_attend(q, kv, p);
    for (i64 b = 0; b < 2; ++b)
        for (i64 c = 0; c < 3; ++c) {
            auto expect = oracle_attend(q, kv, p, b, c);
            for (i64 j = 0; j < 8; ++j)
                REQUIRE(out.data()[(b * 3 + c) * 8 + j] == Catch::Approx(expect[j]).margin(1e-6));
        }
}

TEST_CASE("attention is equivariant over batch and label axes") {
    Rng rng(53);
    LqnParams p = LqnParams::init(6, 2, rng);
    Tensor q = Tensor::randn({4, 6}, rng);
    Tensor kv = Tensor::randn({3, 5, 6}, rng);

    NoGradGuard ng;
    Tensor base = label_query_attend(q, kv, p);

    Tensor batch_perm = label_query_attend(q, gather_rows(kv, {2, 0, 1}), p);
    REQUIRE(max_abs_diff(batch_perm, gather_rows(base, {2, 0, 1})) == 0.0);

    Tensor label_perm = label_query_attend(gather_rows(q, {3, 1, 0, 2}), kv, p);
    std::vector<i64> perm = {3, 1, 0, 2};
    for (i64 b = 0; b < 3; ++b)
        for (i64 c = 0; c < 4; ++c)
            for (i64 j = 0; j < 6; ++j)
                REQUIRE(label_perm.data()[(b * 4 + c) * 6 + j] ==
                        base.data()[(b * 4 + perm[c]) * 6 + j]);
}

TEST_CASE("attention gradients pass the finite-difference check") {
    Rng rng(67);
    LqnParams p = LqnParams::init(6, 2, rng);
    Tensor q = Tensor::randn({3, 6}, rng, 1.0, true);
    Tensor kv = Tensor::randn({2, 4, 6}, rng, 1.0, true);
    Tensor probe = Tensor::randn({2, 3, 6}, rng);

    auto f = [&]() { return sum_all(mul(label_query_attend(q, kv, p), probe)); };
    std::vector<Tensor> params = p.parameters();
    params.push_back(q);
    params.push_back(kv);
    REQUIRE(grad_check(f, params, 1e-5) < 1e-4);
}

TEST_CASE("lqn rejects inconsistent shapes") {
    Rng rng(7);
    REQUIRE_THROWS_AS(LqnParams::init(8, 3, rng), std::invalid_argument);
    REQUIRE_THROWS_AS(LqnParams::init(8, 0, rng), std::invalid_argument);

    LqnParams p = LqnParams::init(8, 2, rng);
    REQUIRE_THROWS_AS(label_query_attend(Tensor::zeros({3, 8}), Tensor::zeros({2, 5, 6}), p),
                      std::invalid_argument);
    REQUIRE_THROWS_AS(label_query_attend(Tensor::zeros({3, 6}), Tensor::zeros({2, 5, 8}), p),
                      std::invalid_argument);
    REQUIRE_THROWS_AS(label_query_attend(Tensor::zeros({3, 1, 8}), Tensor::zeros({2, 5, 8}), p),
                      std::invalid_argument);
}

TEST_CASE("label embeddings are deterministic projected name vectors") {
    Rng rng(19);
    HashingTextEmbedder emb(16);
    ProjectionHead head = ProjectionHead::init(16, 8, rng);

    NoGradGuard ng;
    Tensor twice = label_embeddings({Label::LVH, Label::LVH}, emb, head);
    for (i64 j = 0; j < 8; ++j) REQUIRE(twice.data()[j] == twice.data()[8 + j]);

    Tensor all = label_embeddings(all_labels(), emb, head);
    REQUIRE(all.shape() == Shape{12, 8});
    for (int i = 0; i < 12; ++i)
        for (int j = i + 1; j < 12; ++j) {
            double diff = 0.0;
            for (i64 k = 0; k < 8; ++k)
                diff = std::max(diff, std::abs(all.data()[i * 8 + k] - all.data()[j * 8 + k]));
            REQUIRE(diff > 1e-9);
        }

    Tensor again = label_embeddings(all_labels(), emb, head);
    REQUIRE(max_abs_diff(all, again) == 0.0);

    ProjectionHead zero;
    zero.w1 = Tensor::zeros({16, 16});
    zero.b1 = Tensor::zeros({16});
    zero.w2 = Tensor::zeros({16, 8});
    zero.b2 = Tensor::zeros({8});
    Tensor zq = label_embeddings(all_labels(), emb, zero);
    for (i64 i = 0; i < zq.numel(); ++i) REQUIRE(zq.data()[i] == 0.0);

    REQUIRE_THROWS_AS(label_embeddings({}, emb, head), std::invalid_argument);
}
