#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>
#include <vector>

#include "peace/metrics.hpp"
#include "peace/rng.hpp"

using namespace peace;

namespace {

double pair_count_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    double wins = 0.0, ties = 0.0;
    std::size_t np = 0, nn = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] != 1) continue;
        ++np;
        for (std::size_t j = 0; j < labels.size(); ++j) {
            if (labels[j] != 0) continue;
            if (scores[i] > scores[j])
                wins += 1.0;
            else if (scores[i] == scores[j])
                ties += 1.0;
        }
    }
    for (int l : labels) nn += l == 0 ? 1u : 0u;
    return (wins + 0.5 * ties) / (static_cast<double>(np) * static_cast<double>(nn));
}

double f1_at(const std::vector<double>& col, const std::vector<int>& lab, double t) {
    std::int64_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < col.size(); ++i) {
        const bool pred = col[i] > t;
        if (lab[i] == 1 && pred) ++tp;
        if (lab[i] == 0 && pred) ++fp;
        if (lab[i] == 1 && !pred) ++fn;
    }
    const std::int64_t den = 2 * tp + fp + fn;
    return den == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(den);
}

}  // namespace

TEST_CASE("auc separates the textbook cases") {
    REQUIRE(auc({0.9, 0.8, 0.2, 0.1}, {1, 1, 0, 0}).value() == 1.0);
    REQUIRE(auc({0.2, 0.9, 0.6, 0.1}, {1, 0, 1, 0}).value() == 0.5);
    REQUIRE(auc({0.9, 0.8, 0.2, 0.1}, {0, 0, 1, 1}).value() == 0.0);
    REQUIRE_FALSE(auc({0.3, 0.4}, {1, 1}).has_value());
    REQUIRE_FALSE(auc({0.3, 0.4}, {0, 0}).has_value());
}

TEST_CASE("tied scores contribute half a win") {
    REQUIRE(auc({0.5, 0.5}, {1, 0}).value() == 0.5);
    REQUIRE(auc({0.7, 0.5, 0.5, 0.1}, {1, 1, 0, 0}).value() == Catch::Approx(0.875).margin(1e-12));
}

TEST_CASE("midrank auc matches brute-force pair counting") {
    Rng rng(2024);
    int evaluated = 0;
    while (evaluated < 200) {
        const std::size_t n = 2 + static_cast<std::size_t>(rng.uniform_int(58));
        std::vector<double> scores(n);
        std::vector<int> labels(n);
        for (std::size_t i = 0; i < n; ++i) {
            scores[i] = 0.1 * static_cast<double>(rng.uniform_int(12));
            labels[i] = rng.uniform() < 0.5 ? 1 : 0;
        }
        auto got = auc(scores, labels);
        if (!got.has_value()) continue;
        ++evaluated;
        REQUIRE(got.value() == Catch::Approx(pair_count_auc(scores, labels)).margin(1e-12));
    }
}

TEST_CASE("auc is invariant under strictly monotone transforms") {
    Rng rng(5);
    std::vector<double> scores(40);
    std::vector<int> labels(40);
    for (std::size_t i = 0; i < scores.size(); ++i) {
        scores[i] = rng.normal();
        labels[i] = rng.uniform() < 0.4 ? 1 : 0;
    }
    labels[0] = 1;
    labels[1] = 0;
    const double base = auc(scores, labels).value();
    std::vector<double> expd(scores.size()), affine(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) {
        expd[i] = std::exp(scores[i]);
        affine[i] = 3.0 * scores[i] + 1.0;
    }
    REQUIRE(auc(expd, labels).value() == Catch::Approx(base).margin(1e-12));
    REQUIRE(auc(affine, labels).value() == Catch::Approx(base).margin(1e-12));
}

TEST_CASE("auc of negated tie-free scores is the complement") {
    Rng rng(6);
    std::vector<double> scores(30);
    std::vector<int> labels(30);
    for (std::size_t i = 0; i < scores.size(); ++i) {
        scores[i] = rng.normal();
        labels[i] = i % 3 == 0 ? 1 : 0;
    }
    std::vector<double> negated(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) negated[i] = -scores[i];
    REQUIRE(auc(scores, labels).value() + auc(negated, labels).value() == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("auc validates its inputs") {
    REQUIRE_THROWS_AS(auc({0.1, 0.2}, {1}), std::invalid_argument);
    REQUIRE_THROWS_AS(auc({0.1, 0.2}, {1, 2}), std::invalid_argument);
    REQUIRE_THROWS_AS(auc({0.1, std::numeric_limits<double>::quiet_NaN()}, {1, 0}), std::invalid_argument);
}

TEST_CASE("threshold optimization picks the f1 maximizer") {
    std::vector<std::vector<double>> scores = {{0.1}, {0.4}, {0.6}, {0.9}};
    std::vector<LabelVector> labels = {{0}, {1}, {0}, {1}};
    auto t = optimize_thresholds(scores, labels);
    REQUIRE(t.size() == 1);
    REQUIRE(t[0] == Catch::Approx(0.25).margin(1e-12));
    REQUIRE(f1_at({0.1, 0.4, 0.6, 0.9}, {0, 1, 0, 1}, t[0]) == Catch::Approx(0.8).margin(1e-12));
}

TEST_CASE("a separable class gets a gap threshold with perfect f1") {
    std::vector<std::vector<double>> scores = {{0.05}, {0.1}, {0.8}, {0.95}};
    std::vector<LabelVector> labels = {{0}, {0}, {1}, {1}};
    auto t = optimize_thresholds(scores, labels);
    REQUIRE(t[0] > 0.1);
    REQUIRE(t[0] < 0.8);
    REQUIRE(f1_at({0.05, 0.1, 0.8, 0.95}, {0, 0, 1, 1}, t[0]) == 1.0);
    REQUIRE(t[0] == Catch::Approx(0.45).margin(1e-12));
}

TEST_CASE("a class without positives gets the never-predict threshold") {
    std::vector<std::vector<double>> scores = {{0.3, 0.9}, {0.7, 0.2}};
    std::vector<LabelVector> labels = {{0, 1}, {0, 0}};
    auto t = optimize_thresholds(scores, labels);
    REQUIRE(std::isinf(t[0]));
    REQUIRE(t[0] > 0);
    REQUIRE(std::isfinite(t[1]));
}

TEST_CASE("optimized thresholds beat every candidate on random small instances") {
    Rng rng(77);
    for (int trial = 0; trial < 40; ++trial) {
        const std::size_t n = 4 + static_cast<std::size_t>(rng.uniform_int(27));
        std::vector<std::vector<double>> scores(n, std::vector<double>(1));
        std::vector<LabelVector> labels(n, LabelVector(1));
        bool any_pos = false;
        for (std::size_t i = 0; i < n; ++i) {
            scores[i][0] = 0.05 * static_cast<double>(rng.uniform_int(21));
            labels[i][0] = rng.uniform() < 0.45 ? 1 : 0;
            any_pos = any_pos || labels[i][0] == 1;
        }
        if (!any_pos) labels[0][0] = 1;
        auto t = optimize_thresholds(scores, labels);
        std::vector<double> col(n);
        std::vector<int> lab(n);
        for (std::size_t i = 0; i < n; ++i) {
            col[i] = scores[i][0];
            lab[i] = labels[i][0];
        }
        const double got = f1_at(col, lab, t[0]);
        for (double cand : threshold_candidates(col)) {
            REQUIRE(got >= f1_at(col, lab, cand));
            if (f1_at(col, lab, cand) == got) REQUIRE(t[0] <= cand);
        }
    }
}

TEST_CASE("perfect predictions score ones across the report") {
    std::vector<std::vector<double>> scores = {{0.9, 0.1}, {0.8, 0.2}, {0.1, 0.9}};
    std::vector<LabelVector> labels = {{1, 0}, {1, 0}, {0, 1}};
    auto report = classification_report(scores, labels, {0.5, 0.5});
    for (const auto& m : report.per_class) {
        REQUIRE(m.auc.value() == 1.0);
        REQUIRE(m.acc.value() == 1.0);
        REQUIRE(m.sensitivity.value() == 1.0);
        REQUIRE(m.specificity.value() == 1.0);
        REQUIRE(m.f1.value() == 1.0);
    }
    REQUIRE(report.macro_f1.value() == 1.0);
    REQUIRE(report.macro_auc.value() == 1.0);
}

TEST_CASE("inverted predictions zero out sensitivity") {
    std::vector<std::vector<double>> scores = {{0.1}, {0.2}, {0.9}};
    std::vector<LabelVector> labels = {{1}, {1}, {0}};
    auto report = classification_report(scores, labels, {0.5});
    REQUIRE(report.per_class[0].sensitivity.value() == 0.0);
    REQUIRE(report.per_class[0].specificity.value() == 0.0);
    REQUIRE(report.per_class[0].auc.value() == 0.0);
}

TEST_CASE("report matches a hand-tabulated confusion") {
    std::vector<std::vector<double>> scores = {{0.9}, {0.7}, {0.4}, {0.2}, {0.6}};
    std::vector<LabelVector> labels = {{1}, {0}, {1}, {0}, {1}};
    auto report = classification_report(scores, labels, {0.5});
    const auto& m = report.per_class[0];
    REQUIRE(m.acc.value() == Catch::Approx(0.6).margin(1e-12));
    REQUIRE(m.sensitivity.value() == Catch::Approx(2.0 / 3.0).margin(1e-12));
    REQUIRE(m.specificity.value() == Catch::Approx(0.5).margin(1e-12));
    REQUIRE(m.f1.value() == Catch::Approx(2.0 / 3.0).margin(1e-12));
    REQUIRE(m.auc.value() == Catch::Approx(2.0 / 3.0).margin(1e-12));
}

TEST_CASE("scores equal to the threshold predict negative") {
    std::vector<std::vector<double>> scores = {{0.5}, {0.5}};
    std::vector<LabelVector> labels = {{1}, {0}};
    auto report = classification_report(scores, labels, {0.5});
    REQUIRE(report.per_class[0].sensitivity.value() == 0.0);
    REQUIRE(report.per_class[0].specificity.value() == 1.0);
}

TEST_CASE("macro averages skip undefined classes") {
    std::vector<std::vector<double>> scores = {{0.9, 0.2}, {0.8, 0.3}, {0.2, 0.4}};
    std::vector<LabelVector> labels = {{1, 0}, {1, 0}, {0, 0}};
    auto report = classification_report(scores, labels, {0.5, std::numeric_limits<double>::infinity()});
    REQUIRE_FALSE(report.per_class[1].auc.has_value());
    REQUIRE_FALSE(report.per_class[1].sensitivity.has_value());
    REQUIRE_FALSE(report.per_class[1].f1.has_value());
    REQUIRE(report.per_class[1].specificity.value() == 1.0);
    REQUIRE(report.macro_auc.value() == report.per_class[0].auc.value());
    REQUIRE(report.macro_sensitivity.value() == report.per_class[0].sensitivity.value());
    REQUIRE(report.macro_specificity.value() ==
            0.5 * (report.per_class[0].specificity.value() + 1.0));
}

TEST_CASE("all reported rates live in the unit interval") {
    Rng rng(404);
    for (int trial = 0; trial < 10; ++trial) {
        const std::size_t n = 5 + static_cast<std::size_t>(rng.uniform_int(40));
        const std::size_t C = 1 + static_cast<std::size_t>(rng.uniform_int(4));
        std::vector<std::vector<double>> scores(n, std::vector<double>(C));
        std::vector<LabelVector> labels(n, LabelVector(C));
        for (auto& row : scores)
            for (auto& v : row) v = rng.uniform();
        for (auto& row : labels)
            for (auto& v : row) v = rng.uniform() < 0.3 ? 1 : 0;
        auto report = classification_report(scores, labels, optimize_thresholds(scores, labels));
        for (const auto& m : report.per_class)
            for (auto f : {m.auc, m.acc, m.sensitivity, m.specificity, m.f1})
                if (f.has_value()) {
                    REQUIRE(*f >= 0.0);
                    REQUIRE(*f <= 1.0);
                }
    }
}

TEST_CASE("reports render to csv and a text table") {
    std::vector<std::vector<double>> scores = {{0.9, 0.2}, {0.1, 0.8}};
    std::vector<LabelVector> labels = {{1, 0}, {0, 0}};
    auto report = classification_report(scores, labels, {0.5, std::numeric_limits<double>::infinity()});
    const std::string csv = report_csv(report, {"CRBBB", "LVH"});
    REQUIRE_THAT(csv, Catch::Matchers::ContainsSubstring("class,auc,acc,sensitivity,specificity,f1,threshold"));
    REQUIRE_THAT(csv, Catch::Matchers::ContainsSubstring("CRBBB,1.0000,1.0000,1.0000,1.0000,1.0000,0.5000"));
    REQUIRE_THAT(csv, Catch::Matchers::ContainsSubstring("LVH,n/a"));
    REQUIRE_THAT(csv, Catch::Matchers::ContainsSubstring(",inf"));
    REQUIRE_THAT(csv, Catch::Matchers::ContainsSubstring("macro,"));

    const std::string table = report_table(report, {"CRBBB", "LVH"});
    REQUIRE_THAT(table, Catch::Matchers::ContainsSubstring("class"));
    REQUIRE_THAT(table, Catch::Matchers::ContainsSubstring("macro"));
    REQUIRE_THAT(table, Catch::Matchers::ContainsSubstring("n/a"));
    REQUIRE_THROWS_AS(report_csv(report, {"one"}), std::invalid_argument);
}

TEST_CASE("report validates shapes") {
    std::vector<std::vector<double>> scores = {{0.9, 0.2}, {0.1}};
    std::vector<LabelVector> labels = {{1, 0}, {0, 1}};
    REQUIRE_THROWS_AS(classification_report(scores, labels, {0.5, 0.5}), std::invalid_argument);
    REQUIRE_THROWS_AS(classification_report({{0.9, 0.2}}, {{1, 0}}, {0.5}), std::invalid_argument);
    REQUIRE_THROWS_AS(optimize_thresholds({}, {}), std::invalid_argument);
}
