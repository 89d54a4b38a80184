#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "peace/caf.hpp"
#include "peace/lsbc.hpp"
#include "peace/metrics.hpp"
#include "peace/model.hpp"
#include "peace/objective.hpp"
#include "peace/optim.hpp"
#include "peace/synthetic.hpp"

namespace peace {

enum class Regime { zeroshot, fewshot, full };

inline const char* to_string(Regime r) {
    switch (r) {
        case Regime::zeroshot: return "zeroshot";
        case Regime::fewshot: return "fewshot";
        case Regime::full: return "full";
    }
    return "?";
}

inline Regime regime_from(const std::string& s) {
    if (s == "zeroshot") return Regime::zeroshot;
    if (s == "fewshot") return Regime::fewshot;
    if (s == "full") return Regime::full;
    throw std::invalid_argument("unknown regime: " + s);
}

struct RegimeConfig {
    Regime regime = Regime::full;
    int n_per_class = 0;
    std::vector<std::string> frozen_groups;

    void validate() const {
        if (regime == Regime::fewshot && n_per_class < 1)
            throw std::invalid_argument("regime: fewshot requires n_per_class >= 1");
    }
};

struct RunSpec {
    ModelConfig model;
    RegimeConfig regime;
    OptimConfig optim;
    CurriculumConfig caf;
    ObjectiveConfig objective;
    LsbcConfig lsbc;
    int repeats = 1;

    void validate() const {
        model.validate();
        regime.validate();
        optim.validate();
        caf.validate();
        objective.validate();
        if (!(lsbc.tau > 0.0)) throw std::invalid_argument("run: tau must be positive");
        if (repeats < 1) throw std::invalid_argument("run: repeats must be >= 1");
    }
};

struct StepLog {
    std::int64_t step = 0;
    double t = 0.0;
    double lr = 0.0;
    double ce_ecg = 0.0;
    double ce_rep = 0.0;
    double lsbc = 0.0;
    double w = 0.0;
    bool gate = false;
    double total = 0.0;
    double grad_norm = 0.0;
};

struct EpochStats {
    int epoch = 0;
    double mean_total = 0.0;
    double mean_ce_ecg = 0.0;
    double mean_ce_rep = 0.0;
    double val_metric = 0.0;
};

struct RepeatResult {
    std::uint64_t seed = 0;
    std::vector<StepLog> steps;
    std::vector<EpochStats> epochs;
    std::vector<double> thresholds;
    MetricsReport test_report;
    int best_epoch = -1;
};

struct RunResult {
    std::vector<RepeatResult> repeats;
    double mean_macro_auc = 0.0;
    double std_macro_auc = 0.0;
    double mean_macro_f1 = 0.0;
    double std_macro_f1 = 0.0;
};

namespace detail {

inline void check_cohort(const Cohort& cohort, const ModelConfig& cfg) {
    if (cohort.dataset.size() != cohort.signals.size())
        throw std::invalid_argument("cohort: dataset/signal count mismatch");
    if (cohort.dataset.records.empty()) throw std::invalid_argument("cohort: empty");
    for (const auto& rec : cohort.signals)
        if (rec.n_samples() != cfg.encoder.input_len)
            throw std::invalid_argument("cohort: record " + rec.id + " length does not match encoder input");
}

inline Tensor batch_tensor(const Cohort& cohort, const std::vector<std::size_t>& indices) {
    const i64 B = static_cast<i64>(indices.size());
    const i64 L = cohort.signals[indices[0]].n_samples();
    std::vector<double> flat;
    flat.reserve(static_cast<std::size_t>(B * kNumLeads * L));
    for (std::size_t idx : indices)
        for (const auto& lead : cohort.signals[idx].leads) flat.insert(flat.end(), lead.begin(), lead.end());
    return Tensor::from({B, kNumLeads, L}, std::move(flat));
}

inline std::vector<LabelVector> batch_labels(const Cohort& cohort, const std::vector<std::size_t>& indices) {
    std::vector<LabelVector> out;
    out.reserve(indices.size());
    for (std::size_t idx : indices) out.push_back(cohort.dataset.records[idx].labels);
    return out;
}

inline std::vector<std::int64_t> split_pos_counts(const Cohort& cohort,
                                                  const std::vector<std::size_t>& indices) {
    std::vector<std::int64_t> counts(kNumLabels, 0);
    for (std::size_t idx : indices)
        for (int c = 0; c < kNumLabels; ++c) counts[static_cast<std::size_t>(c)] += cohort.dataset.records[idx].labels[static_cast<std::size_t>(c)];
    return counts;
}

inline std::vector<Tensor> trainable_parameters(const PeaceModel& model,
                                                const std::vector<std::string>& frozen_groups) {
    std::vector<Tensor> out;
    for (auto& [name, t] : model.named_parameters()) {
        bool frozen = false;
        for (const auto& g : frozen_groups)
            if (name.rfind(g + ".", 0) == 0 || name == g) frozen = true;
        if (!frozen) out.push_back(t);
    }
    return out;
}

inline void zero_grads(const PeaceModel& model) {
    for (auto& [name, t] : model.named_parameters())
        std::fill(t.grad().begin(), t.grad().end(), 0.0);
}

inline std::vector<std::vector<double>> scores_for(const PeaceModel& model, const Cohort& cohort,
                                                   const std::vector<std::size_t>& indices, int batch_size) {
    std::vector<std::vector<double>> out;
    out.reserve(indices.size());
    for (std::size_t at = 0; at < indices.size(); at += static_cast<std::size_t>(batch_size)) {
        const std::size_t end = std::min(indices.size(), at + static_cast<std::size_t>(batch_size));
        std::vector<std::size_t> chunk(indices.begin() + static_cast<std::ptrdiff_t>(at),
                                       indices.begin() + static_cast<std::ptrdiff_t>(end));
        auto rows = inference_scores(model, batch_tensor(cohort, chunk));
        for (auto& r : rows) out.push_back(std::move(r));
    }
    return out;
}

struct Snapshot {
    std::vector<std::vector<double>> data;
};

inline Snapshot snapshot_params(const PeaceModel& model) {
    Snapshot s;
    for (auto& [name, t] : model.named_parameters()) s.data.push_back(t.data());
    return s;
}

inline void restore_params(const PeaceModel& model, const Snapshot& s) {
    auto named = model.named_parameters();
    if (named.size() != s.data.size()) throw std::logic_error("snapshot: size mismatch");
    for (std::size_t i = 0; i < named.size(); ++i) named[i].second.data() = s.data[i];
}

}  // namespace detail

inline MetricsReport evaluate_with_thresholds(const PeaceModel& model, const Cohort& cohort,
                                              const std::vector<std::size_t>& indices,
                                              const std::vector<double>& thresholds, int batch_size) {
    auto scores = detail::scores_for(model, cohort, indices, batch_size);
    return classification_report(scores, detail::batch_labels(cohort, indices), thresholds);
}

inline std::vector<double> fit_thresholds(const PeaceModel& model, const Cohort& cohort,
                                          const std::vector<std::size_t>& indices, int batch_size) {
    auto scores = detail::scores_for(model, cohort, indices, batch_size);
    return optimize_thresholds(scores, detail::batch_labels(cohort, indices));
}

inline RepeatResult train_and_evaluate(PeaceModel& model, const Cohort& cohort,
                                       const std::vector<std::size_t>& train_idx,
                                       const std::vector<std::size_t>& val_idx,
                                       const std::vector<std::size_t>& test_idx, const RunSpec& spec,
                                       std::uint64_t seed) {
    if (train_idx.empty() || val_idx.empty() || test_idx.empty())
        throw std::invalid_argument("train: every split must be nonempty");
    RepeatResult result;
    result.seed = seed;

    const auto cw = class_weights(detail::split_pos_counts(cohort, train_idx));
    auto trainable = detail::trainable_parameters(model, spec.regime.frozen_groups);
    if (trainable.empty()) throw std::invalid_argument("train: no trainable parameters");
    AdamState adam;
    CurriculumState curriculum(spec.caf);

    const int bs = spec.optim.batch_size;
    const std::int64_t steps_per_epoch =
        static_cast<std::int64_t>((train_idx.size() + static_cast<std::size_t>(bs) - 1) / static_cast<std::size_t>(bs));
    const std::int64_t total_steps = steps_per_epoch * spec.optim.epochs;
    const std::int64_t warmup_steps =
        std::min<std::int64_t>(total_steps, steps_per_epoch * spec.optim.warmup_epochs);

    Rng shuffle_rng(seed ^ 0x5eedf00dULL);
    const bool select_by_f1 = spec.regime.regime == Regime::fewshot;
    double best_metric = -std::numeric_limits<double>::infinity();
    detail::Snapshot best;
    std::int64_t step = 0;

    for (int epoch = 1; epoch <= spec.optim.epochs; ++epoch) {
        std::vector<std::size_t> order = train_idx;
        shuffle_rng.shuffle(order);
        double sum_total = 0.0, sum_ce_ecg = 0.0, sum_ce_rep = 0.0;
        for (std::size_t at = 0; at < order.size(); at += static_cast<std::size_t>(bs)) {
            const std::size_t end = std::min(order.size(), at + static_cast<std::size_t>(bs));
            std::vector<std::size_t> chunk(order.begin() + static_cast<std::ptrdiff_t>(at),
                                           order.begin() + static_cast<std::ptrdiff_t>(end));
            Tensor x = detail::batch_tensor(cohort, chunk);
            const auto labels = detail::batch_labels(cohort, chunk);
            Tensor targets = targets_tensor(labels, kNumLabels);

            auto ecg = forward_ecg(model, x);
            auto rep = forward_rep(model, labels);
            Tensor ce_ecg = weighted_bce(ecg.logits, targets, cw);
            Tensor ce_rep = weighted_bce(rep.logits, targets, cw);

            curriculum.ema_update(ce_ecg.data()[0] + ce_rep.data()[0]);
            ++step;
            const double t = static_cast<double>(step) / static_cast<double>(total_steps);
            const CurriculumWeight cw_t = lsbc_weight(t, curriculum);

            double lsbc_val = 0.0;
            Tensor loss;
            if (cw_t.w > 0.0) {
                Tensor align = lsbc_loss(ecg.z, rep.z, labels, spec.lsbc.tau);
                lsbc_val = align.data()[0];
                loss = total_loss(ce_ecg, ce_rep, align, cw_t.w, spec.objective);
            } else {
                loss = total_loss(ce_ecg, ce_rep, Tensor::scalar(0.0), 0.0, spec.objective);
            }

            detail::zero_grads(model);
            loss.backward();
            const double gnorm = clip_grad_norm(trainable, spec.optim.grad_clip_norm);
            const double lr = lr_schedule(step, total_steps, warmup_steps, spec.optim);
            adamw_step(trainable, adam, spec.optim, lr);

            StepLog log;
            log.step = step;
            log.t = t;
            log.lr = lr;
            log.ce_ecg = ce_ecg.data()[0];
            log.ce_rep = ce_rep.data()[0];
            log.lsbc = lsbc_val;
            log.w = cw_t.w;
            log.gate = cw_t.gate;
            log.total = loss.data()[0];
            log.grad_norm = gnorm;
            result.steps.push_back(log);
            sum_total += log.total;
            sum_ce_ecg += log.ce_ecg;
            sum_ce_rep += log.ce_rep;
        }

        const auto val_thresholds = fit_thresholds(model, cohort, val_idx, bs);
        const auto val_report = evaluate_with_thresholds(model, cohort, val_idx, val_thresholds, bs);
        const double metric = select_by_f1 ? val_report.macro_f1.value_or(0.0)
                                           : val_report.macro_auc.value_or(0.0);
        if (metric > best_metric) {
            best_metric = metric;
            best = detail::snapshot_params(model);
            result.best_epoch = epoch;
        }

        EpochStats es;
        es.epoch = epoch;
        const double denom = static_cast<double>(steps_per_epoch);
        es.mean_total = sum_total / denom;
        es.mean_ce_ecg = sum_ce_ecg / denom;
        es.mean_ce_rep = sum_ce_rep / denom;
        es.val_metric = metric;
        result.epochs.push_back(es);
    }

    if (!best.data.empty()) detail::restore_params(model, best);
    result.thresholds = fit_thresholds(model, cohort, val_idx, bs);
    result.test_report = evaluate_with_thresholds(model, cohort, test_idx, result.thresholds, bs);
    return result;
}

struct RunArtifacts {
    RunResult result;
    PeaceModel model;  // trained instance from the first repeat
};

inline RunArtifacts run_with_model(const Cohort& cohort, const RunSpec& spec) {
    spec.validate();
    detail::check_cohort(cohort, spec.model);
    const auto train_idx = cohort.dataset.indices_of(Split::train);
    const auto val_idx = cohort.dataset.indices_of(Split::val);
    const auto test_idx = cohort.dataset.indices_of(Split::test);
    if (train_idx.empty() || val_idx.empty() || test_idx.empty())
        throw std::invalid_argument("run_regime: dataset must carry train/val/test splits");

    std::unordered_map<std::string, std::size_t> index_by_id;
    for (std::size_t i = 0; i < cohort.dataset.size(); ++i)
        index_by_id[cohort.dataset.records[i].meta.id] = i;

    RunArtifacts out;
    std::vector<double> aucs, f1s;
    for (int r = 0; r < spec.repeats; ++r) {
        const std::uint64_t seed = spec.optim.seed + static_cast<std::uint64_t>(r);
        PeaceModel model = PeaceModel::init(spec.model, seed);
        RepeatResult rep;
        if (spec.regime.regime == Regime::zeroshot) {
            rep.seed = seed;
            rep.thresholds = fit_thresholds(model, cohort, val_idx, spec.optim.batch_size);
            rep.test_report =
                evaluate_with_thresholds(model, cohort, test_idx, rep.thresholds, spec.optim.batch_size);
        } else if (spec.regime.regime == Regime::fewshot) {
            const Dataset few = sample_few_shot(cohort.dataset, spec.regime.n_per_class, seed);
            std::vector<std::size_t> few_idx;
            few_idx.reserve(few.records.size());
            for (const auto& entry : few.records) few_idx.push_back(index_by_id.at(entry.meta.id));
            rep = train_and_evaluate(model, cohort, few_idx, val_idx, test_idx, spec, seed);
        } else {
            rep = train_and_evaluate(model, cohort, train_idx, val_idx, test_idx, spec, seed);
        }
        aucs.push_back(rep.test_report.macro_auc.value_or(0.0));
        f1s.push_back(rep.test_report.macro_f1.value_or(0.0));
        out.result.repeats.push_back(std::move(rep));
        if (r == 0) out.model = std::move(model);
    }

    auto mean_of = [](const std::vector<double>& v) {
        double s = 0.0;
        for (double x : v) s += x;
        return s / static_cast<double>(v.size());
    };
    auto std_of = [&](const std::vector<double>& v, double mean) {
        if (v.size() < 2) return 0.0;
        double s = 0.0;
        for (double x : v) s += (x - mean) * (x - mean);
        return std::sqrt(s / static_cast<double>(v.size() - 1));
    };
    out.result.mean_macro_auc = mean_of(aucs);
    out.result.std_macro_auc = std_of(aucs, out.result.mean_macro_auc);
    out.result.mean_macro_f1 = mean_of(f1s);
    out.result.std_macro_f1 = std_of(f1s, out.result.mean_macro_f1);
    return out;
}

inline RunResult run_regime(const Cohort& cohort, const RunSpec& spec) {
    return run_with_model(cohort, spec).result;
}

inline Cohort load_training_set(const std::filesystem::path& manifest, const std::filesystem::path& root,
                                const std::array<double, 3>& split_ratios, std::uint64_t split_seed) {
    const auto metas = parse_manifest_file(manifest);
    BuildStats stats;
    Dataset ds = build_dataset(metas, &stats);
    if (ds.records.empty())
        throw std::runtime_error("training set: no usable records in " + manifest.string());
    Cohort cohort;
    cohort.dataset = stratified_split(ds, split_ratios, split_seed);
    cohort.signals.reserve(cohort.dataset.size());
    for (const auto& entry : cohort.dataset.records)
        cohort.signals.push_back(load_record(entry.meta, root));
    return cohort;
}

struct SweepRow {
    int n = 0;
    double mean_auc = 0.0;
    double std_auc = 0.0;
    double gain = 0.0;
};

inline std::vector<SweepRow> sample_efficiency_sweep(const Cohort& cohort, RunSpec spec,
                                                     const std::vector<int>& n_list = {5, 10, 20, 50, 100}) {
    if (n_list.empty()) throw std::invalid_argument("sweep: empty n list");
    spec.regime.regime = Regime::fewshot;
    std::vector<SweepRow> rows;
    for (int n : n_list) {
        spec.regime.n_per_class = n;
        const RunResult result = run_regime(cohort, spec);
        SweepRow row;
        row.n = n;
        row.mean_auc = result.mean_macro_auc;
        row.std_auc = result.std_macro_auc;
        row.gain = rows.empty() ? 0.0 : row.mean_auc - rows.back().mean_auc;
        rows.push_back(row);
    }
    return rows;
}

namespace detail {

inline std::string fmt_full(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

}  // namespace detail

inline std::string steps_csv(const RunResult& result) {
    std::ostringstream os;
    os << "repeat,step,t,lr,ce_ecg,ce_rep,lsbc,w,gate,total,grad_norm\n";
    for (std::size_t r = 0; r < result.repeats.size(); ++r)
        for (const auto& s : result.repeats[r].steps)
            os << r << ',' << s.step << ',' << detail::fmt_full(s.t) << ',' << detail::fmt_full(s.lr) << ','
               << detail::fmt_full(s.ce_ecg) << ',' << detail::fmt_full(s.ce_rep) << ','
               << detail::fmt_full(s.lsbc) << ',' << detail::fmt_full(s.w) << ',' << (s.gate ? 1 : 0) << ','
               << detail::fmt_full(s.total) << ',' << detail::fmt_full(s.grad_norm) << '\n';
    return os.str();
}

inline std::string run_result_csv(const RunResult& result) {
    std::ostringstream os;
    os << "repeat,seed,best_epoch,test_macro_auc,test_macro_f1\n";
    for (std::size_t r = 0; r < result.repeats.size(); ++r) {
        const auto& rep = result.repeats[r];
        os << r << ',' << rep.seed << ',' << rep.best_epoch << ','
           << detail::fmt_full(rep.test_report.macro_auc.value_or(0.0)) << ','
           << detail::fmt_full(rep.test_report.macro_f1.value_or(0.0)) << '\n';
    }
    os << "aggregate,,," << detail::fmt_full(result.mean_macro_auc) << "+-"
       << detail::fmt_full(result.std_macro_auc) << ',' << detail::fmt_full(result.mean_macro_f1) << "+-"
       << detail::fmt_full(result.std_macro_f1) << '\n';
    return os.str();
}

inline std::string sweep_csv(const std::vector<SweepRow>& rows) {
    std::ostringstream os;
    os << "n,mean_auc,std_auc,gain\n";
    for (const auto& r : rows)
        os << r.n << ',' << detail::fmt_full(r.mean_auc) << ',' << detail::fmt_full(r.std_auc) << ','
           << detail::fmt_full(r.gain) << '\n';
    return os.str();
}

}  // namespace peace
