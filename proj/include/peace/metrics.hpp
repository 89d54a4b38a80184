#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "peace/ecg_data.hpp"

namespace peace {

inline std::optional<double> auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size()) throw std::invalid_argument("auc: length mismatch");
    std::size_t n_pos = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] != 0 && labels[i] != 1) throw std::invalid_argument("auc: labels must be 0/1");
        if (!std::isfinite(scores[i])) throw std::invalid_argument("auc: non-finite score");
        n_pos += static_cast<std::size_t>(labels[i]);
    }
    const std::size_t n_neg = labels.size() - n_pos;
    if (n_pos == 0 || n_neg == 0) return std::nullopt;

    std::vector<std::size_t> order(scores.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
        const double midrank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
        for (std::size_t k = i; k < j; ++k)
            if (labels[order[k]] == 1) rank_sum_pos += midrank;
        i = j;
    }
    const double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
    return (rank_sum_pos - np * (np + 1.0) / 2.0) / (np * nn);
}

namespace detail {

struct Confusion {
    std::int64_t tp = 0, fp = 0, tn = 0, fn = 0;
};

inline Confusion confusion_at(const std::vector<double>& scores, const std::vector<int>& labels,
                              double threshold) {
    Confusion c;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const bool pred = scores[i] > threshold;
        if (labels[i] == 1)
            (pred ? c.tp : c.fn)++;
        else
            (pred ? c.fp : c.tn)++;
    }
    return c;
}

inline std::optional<double> f1_of(const Confusion& c) {
    const std::int64_t den = 2 * c.tp + c.fp + c.fn;
    if (den == 0) return std::nullopt;
    return 2.0 * static_cast<double>(c.tp) / static_cast<double>(den);
}

inline void check_rectangular(const std::vector<std::vector<double>>& scores,
                              const std::vector<LabelVector>& labels) {
    if (scores.empty() || scores.size() != labels.size())
        throw std::invalid_argument("metrics: scores and labels must be same-length and nonempty");
    const std::size_t c = scores.front().size();
    if (c == 0) throw std::invalid_argument("metrics: zero classes");
    for (std::size_t i = 0; i < scores.size(); ++i)
        if (scores[i].size() != c || labels[i].size() != c)
            throw std::invalid_argument("metrics: ragged rows");
}

inline std::vector<double> column_scores(const std::vector<std::vector<double>>& scores, std::size_t c) {
    std::vector<double> out(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) out[i] = scores[i][c];
    return out;
}

inline std::vector<int> column_labels(const std::vector<LabelVector>& labels, std::size_t c) {
    std::vector<int> out(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) out[i] = labels[i][c];
    return out;
}

}  // namespace detail

inline std::vector<double> threshold_candidates(std::vector<double> col) {
    std::sort(col.begin(), col.end());
    col.erase(std::unique(col.begin(), col.end()), col.end());
    if (col.size() < 2) return {col.empty() ? 0.0 : col.front() - 0.5};
    std::vector<double> mids;
    mids.reserve(col.size() - 1);
    for (std::size_t i = 0; i + 1 < col.size(); ++i) mids.push_back(0.5 * (col[i] + col[i + 1]));
    return mids;
}

inline std::vector<double> optimize_thresholds(const std::vector<std::vector<double>>& scores,
                                               const std::vector<LabelVector>& labels) {
    detail::check_rectangular(scores, labels);
    const std::size_t C = scores.front().size();
    std::vector<double> thresholds(C);
    for (std::size_t c = 0; c < C; ++c) {
        auto col = detail::column_scores(scores, c);
        auto lab = detail::column_labels(labels, c);
        if (std::count(lab.begin(), lab.end(), 1) == 0) {
            thresholds[c] = std::numeric_limits<double>::infinity();
            continue;
        }
        double best_t = 0.0, best_f1 = -1.0;
        for (double t : threshold_candidates(col)) {
            const auto f1 = detail::f1_of(detail::confusion_at(col, lab, t));
            const double v = f1.value_or(0.0);
            if (v > best_f1) {
                best_f1 = v;
                best_t = t;
            }
        }
        thresholds[c] = best_t;
    }
    return thresholds;
}

struct ClassMetrics {
    std::optional<double> auc;
    std::optional<double> acc;
    std::optional<double> sensitivity;
    std::optional<double> specificity;
    std::optional<double> f1;
    double threshold = 0.0;
};

struct MetricsReport {
    std::vector<ClassMetrics> per_class;
    std::optional<double> macro_auc, macro_acc, macro_sensitivity, macro_specificity, macro_f1;
};

namespace detail {

inline std::optional<double> macro_of(const std::vector<ClassMetrics>& rows,
                                      std::optional<double> ClassMetrics::*field) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& r : rows)
        if ((r.*field).has_value()) {
            sum += *(r.*field);
            ++n;
        }
    if (n == 0) return std::nullopt;
    return sum / static_cast<double>(n);
}

}  // namespace detail

inline MetricsReport classification_report(const std::vector<std::vector<double>>& scores,
                                           const std::vector<LabelVector>& labels,
                                           const std::vector<double>& thresholds) {
    detail::check_rectangular(scores, labels);
    const std::size_t C = scores.front().size();
    if (thresholds.size() != C) throw std::invalid_argument("metrics: threshold count mismatch");

    MetricsReport report;
    report.per_class.resize(C);
    for (std::size_t c = 0; c < C; ++c) {
        auto col = detail::column_scores(scores, c);
        auto lab = detail::column_labels(labels, c);
        auto& m = report.per_class[c];
        m.threshold = thresholds[c];
        m.auc = auc(col, lab);
        const auto cf = detail::confusion_at(col, lab, thresholds[c]);
        const double n = static_cast<double>(col.size());
        m.acc = static_cast<double>(cf.tp + cf.tn) / n;
        if (cf.tp + cf.fn > 0) m.sensitivity = static_cast<double>(cf.tp) / static_cast<double>(cf.tp + cf.fn);
        if (cf.tn + cf.fp > 0) m.specificity = static_cast<double>(cf.tn) / static_cast<double>(cf.tn + cf.fp);
        m.f1 = detail::f1_of(cf);
    }
    report.macro_auc = detail::macro_of(report.per_class, &ClassMetrics::auc);
    report.macro_acc = detail::macro_of(report.per_class, &ClassMetrics::acc);
    report.macro_sensitivity = detail::macro_of(report.per_class, &ClassMetrics::sensitivity);
    report.macro_specificity = detail::macro_of(report.per_class, &ClassMetrics::specificity);
    report.macro_f1 = detail::macro_of(report.per_class, &ClassMetrics::f1);
    return report;
}

namespace detail {

inline std::string fmt_opt(const std::optional<double>& v, int width = 0) {
    std::ostringstream os;
    if (v.has_value())
        os << std::fixed << std::setprecision(4) << *v;
    else
        os << "n/a";
    std::string s = os.str();
    if (width > static_cast<int>(s.size())) s.insert(0, static_cast<std::size_t>(width) - s.size(), ' ');
    return s;
}

inline std::string fmt_threshold(double t) {
    if (std::isinf(t)) return t > 0 ? "inf" : "-inf";
    std::ostringstream os;
    os << std::fixed << std::setprecision(4) << t;
    return os.str();
}

}  // namespace detail

inline std::string report_csv(const MetricsReport& report, const std::vector<std::string>& class_names) {
    if (class_names.size() != report.per_class.size())
        throw std::invalid_argument("report_csv: class name count mismatch");
    std::ostringstream os;
    os << "class,auc,acc,sensitivity,specificity,f1,threshold\n";
    for (std::size_t c = 0; c < report.per_class.size(); ++c) {
        const auto& m = report.per_class[c];
        os << class_names[c] << ',' << detail::fmt_opt(m.auc) << ',' << detail::fmt_opt(m.acc) << ','
           << detail::fmt_opt(m.sensitivity) << ',' << detail::fmt_opt(m.specificity) << ','
           << detail::fmt_opt(m.f1) << ',' << detail::fmt_threshold(m.threshold) << '\n';
    }
    os << "macro," << detail::fmt_opt(report.macro_auc) << ',' << detail::fmt_opt(report.macro_acc) << ','
       << detail::fmt_opt(report.macro_sensitivity) << ',' << detail::fmt_opt(report.macro_specificity) << ','
       << detail::fmt_opt(report.macro_f1) << ",\n";
    return os.str();
}

inline std::string report_table(const MetricsReport& report, const std::vector<std::string>& class_names) {
    if (class_names.size() != report.per_class.size())
        throw std::invalid_argument("report_table: class name count mismatch");
    std::size_t name_w = 5;
    for (const auto& n : class_names) name_w = std::max(name_w, n.size());
    std::ostringstream os;
    os << std::left << std::setw(static_cast<int>(name_w) + 2) << "class" << std::right << std::setw(8)
       << "auc" << std::setw(8) << "acc" << std::setw(8) << "sens" << std::setw(8) << "spec" << std::setw(8)
       << "f1" << std::setw(10) << "thresh" << '\n';
    for (std::size_t c = 0; c < report.per_class.size(); ++c) {
        const auto& m = report.per_class[c];
        os << std::left << std::setw(static_cast<int>(name_w) + 2) << class_names[c] << std::right
           << detail::fmt_opt(m.auc, 8) << detail::fmt_opt(m.acc, 8) << detail::fmt_opt(m.sensitivity, 8)
           << detail::fmt_opt(m.specificity, 8) << detail::fmt_opt(m.f1, 8) << std::setw(10)
           << detail::fmt_threshold(m.threshold) << '\n';
    }
    os << std::left << std::setw(static_cast<int>(name_w) + 2) << "macro" << std::right
       << detail::fmt_opt(report.macro_auc, 8) << detail::fmt_opt(report.macro_acc, 8)
       << detail::fmt_opt(report.macro_sensitivity, 8) << detail::fmt_opt(report.macro_specificity, 8)
       << detail::fmt_opt(report.macro_f1, 8) << '\n';
    return os.str();
}

}  // namespace peace
