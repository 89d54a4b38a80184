#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "peace/checkpoint.hpp"
#include "peace/config.hpp"
#include "peace/harness.hpp"
#include "peace/svg.hpp"

namespace fs = std::filesystem;
using namespace peace;

namespace {

struct GlobalOpts {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<int> repeats;
};

RunConfig effective_config(const GlobalOpts& g) {
    RunConfig cfg;
    if (!g.config_path.empty()) cfg = load_run_config(g.config_path);
    if (g.seed) cfg.optim.seed = *g.seed;
    if (g.out) cfg.output.dir = *g.out;
    if (g.repeats) cfg.repeats = *g.repeats;
    cfg.validate();
    return cfg;
}

fs::path data_root(const RunConfig& cfg) {
    if (!cfg.data.root.empty()) return cfg.data.root;
    if (const char* env = std::getenv("PEACE_DATA_ROOT")) return env;
    return ".";
}

Cohort build_cohort(const RunConfig& cfg) {
    if (cfg.data.kind == "synthetic") return make_synthetic_dataset(cfg.data.synthetic);
    return load_training_set(cfg.data.manifest, data_root(cfg), cfg.data.split_ratios,
                             cfg.data.split_seed);
}

std::vector<std::string> label_code_names() {
    std::vector<std::string> names;
    for (const char* c : kLabelCodes) names.emplace_back(c);
    return names;
}

void write_text(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << content;
}

std::string hash_banner(const RunConfig& cfg) { return "# config_hash " + config_hash_hex(cfg) + "\n"; }

std::string stage_banner(const PipelineConfig& p) {
    std::ostringstream os;
    os << "stage order: resample(" << p.target_hz << " Hz) -> bandlimit(" << p.filter.highpass_hz << "-"
       << p.filter.lowpass_hz << " Hz, notch " << p.filter.notch_hz << ") -> fix_length(" << p.seconds
       << " s) -> calibrate(";
    if (!p.calibrate)
        os << "off";
    else if (p.reference_p2p)
        os << "reference p2p";
    else
        os << "cohort median p2p";
    os << ")";
    return os.str();
}

int cmd_preprocess(const RunConfig& cfg, const std::string& manifest_flag, bool dry_run) {
    const std::string manifest = manifest_flag.empty() ? cfg.data.manifest : manifest_flag;
    if (manifest.empty())
        throw std::invalid_argument("preprocess: no manifest (pass --manifest or set data.manifest)");
    const auto metas = parse_manifest_file(manifest);
    const fs::path out_dir = cfg.output.dir;
    const fs::path root = data_root(cfg);

    std::cout << stage_banner(cfg.pipeline) << "\n";
    if (dry_run) {
        std::cout << "dry run: would process " << metas.size() << " record(s) from " << manifest
                  << " into " << out_dir.string() << "\n";
        return 0;
    }

    fs::create_directories(out_dir);
    std::vector<EcgRecord> processed;
    std::vector<const RecordMeta*> kept;
    std::vector<std::pair<std::string, std::string>> failures;
    for (const auto& meta : metas) {
        try {
            EcgRecord rec = load_record(meta, root);
            rec = resample(rec, cfg.pipeline.target_hz);
            rec = bandlimit(rec, cfg.pipeline.filter);
            rec = fix_length(rec, cfg.pipeline.seconds);
            processed.push_back(std::move(rec));
            kept.push_back(&meta);
        } catch (const std::exception& e) {
            failures.emplace_back(meta.id, e.what());
        }
    }

    if (cfg.pipeline.calibrate && !processed.empty()) {
        const AmplitudeStats own = compute_p2p_stats(processed);
        AmplitudeStats ref = own;
        if (cfg.pipeline.reference_p2p) ref.p2p_median = *cfg.pipeline.reference_p2p;
        for (auto& rec : processed) rec = calibrate_amplitude(rec, ref, own);
    }

    std::ostringstream manifest_out;
    for (std::size_t i = 0; i < processed.size(); ++i) {
        const fs::path rel = write_record(processed[i], out_dir);
        nlohmann::json line = {{"id", processed[i].id},
                               {"signal", rel.string()},
                               {"labels", kept[i]->raw_labels},
                               {"dataset", to_string(kept[i]->tag)},
                               {"fs", processed[i].fs}};
        manifest_out << line.dump() << "\n";
    }
    write_text(out_dir / "manifest.jsonl", manifest_out.str());

    for (const auto& [id, what] : failures) std::cerr << "failed " << id << ": " << what << "\n";
    std::cout << "processed " << processed.size() << "/" << metas.size() << " record(s) into "
              << out_dir.string() << "\n";
    return failures.empty() ? 0 : 2;
}

int cmd_map_labels(const std::string& dataset, const std::vector<std::string>& raws,
                   const std::string& manifest) {
    if (raws.empty() && manifest.empty())
        throw std::invalid_argument("map-labels: pass --raw and --dataset, or --manifest");
    std::cout << "input,code,full_name\n";
    if (!raws.empty()) {
        if (dataset.empty()) throw std::invalid_argument("map-labels: --raw requires --dataset");
        const DatasetTag tag = dataset_tag_from(dataset);
        for (const auto& raw : raws) {
            const auto mapped = map_label(tag, raw);
            if (mapped)
                std::cout << raw << ',' << label_code(*mapped) << ',' << label_full_name(*mapped) << "\n";
            else
                std::cout << raw << ",unmapped,\n";
        }
    }
    if (!manifest.empty()) {
        for (const auto& meta : parse_manifest_file(manifest))
            for (const auto& raw : meta.raw_labels) {
                const auto mapped = map_label(meta.tag, raw);
                if (mapped)
                    std::cout << meta.id << '/' << raw << ',' << label_code(*mapped) << ','
                              << label_full_name(*mapped) << "\n";
                else
                    std::cout << meta.id << '/' << raw << ",unmapped,\n";
            }
    }
    return 0;
}

int cmd_train(const RunConfig& cfg) {
    const Cohort cohort = build_cohort(cfg);
    const RunSpec spec = cfg.run_spec();
    const fs::path out_dir = cfg.output.dir;
    fs::create_directories(out_dir);

    RunArtifacts artifacts = run_with_model(cohort, spec);
    save_checkpoint(out_dir / "checkpoint.bin", config_hash(cfg), artifacts.model.named_parameters());
    write_text(out_dir / "run_result.csv", hash_banner(cfg) + run_result_csv(artifacts.result));
    write_text(out_dir / "steps.csv", hash_banner(cfg) + steps_csv(artifacts.result));

    std::cout << "regime " << to_string(cfg.regime.regime) << ", " << cfg.repeats << " repeat(s), "
              << "config " << config_hash_hex(cfg) << "\n";
    std::cout << "test macro AUC " << std::setprecision(4) << artifacts.result.mean_macro_auc << " +- "
              << artifacts.result.std_macro_auc << ", macro F1 " << artifacts.result.mean_macro_f1
              << " +- " << artifacts.result.std_macro_f1 << "\n";
    std::cout << "wrote " << (out_dir / "checkpoint.bin").string() << ", "
              << (out_dir / "run_result.csv").string() << ", " << (out_dir / "steps.csv").string()
              << "\n";
    return 0;
}

int cmd_eval(const RunConfig& cfg, const std::string& checkpoint_path) {
    if (checkpoint_path.empty()) throw std::invalid_argument("eval: --checkpoint is required");
    const Cohort cohort = build_cohort(cfg);
    const RunSpec spec = cfg.run_spec();

    PeaceModel model = PeaceModel::init(spec.model, spec.optim.seed);
    const Checkpoint ck = load_checkpoint(checkpoint_path);
    if (ck.config_hash != config_hash(cfg))
        std::cerr << "warning: checkpoint config hash does not match the current config\n";
    load_into(model.named_parameters(), ck);

    const auto val_idx = cohort.dataset.indices_of(Split::val);
    const auto test_idx = cohort.dataset.indices_of(Split::test);
    if (val_idx.empty() || test_idx.empty())
        throw std::invalid_argument("eval: dataset must carry val and test splits");
    const auto thresholds = fit_thresholds(model, cohort, val_idx, spec.optim.batch_size);
    const MetricsReport report =
        evaluate_with_thresholds(model, cohort, test_idx, thresholds, spec.optim.batch_size);

    const auto names = label_code_names();
    const fs::path out_dir = cfg.output.dir;
    fs::create_directories(out_dir);
    write_text(out_dir / "eval.csv", hash_banner(cfg) + report_csv(report, names));
    std::cout << report_table(report, names);
    std::cout << "wrote " << (out_dir / "eval.csv").string() << "\n";
    return 0;
}

int cmd_schedule(const RunConfig& cfg, int steps) {
    if (steps < 1) throw std::invalid_argument("schedule: --steps must be >= 1");
    const auto rows = curriculum_trace(steps, cfg.caf, [](std::int64_t) { return 1.0; });

    std::ostringstream csv;
    csv << hash_banner(cfg) << "step,t,beta,delta,gate,w\n";
    csv << std::setprecision(17);
    SvgSeries beta_series{"beta(t)", {}, "#1f77b4"}, w_series{"w(t)", {}, "#d62728"};
    for (const auto& r : rows) {
        csv << r.step << ',' << r.t << ',' << r.beta << ',' << r.delta << ',' << (r.gate ? 1 : 0) << ','
            << r.w << "\n";
        beta_series.points.emplace_back(r.t, r.beta);
        w_series.points.emplace_back(r.t, r.w);
    }

    const fs::path out_dir = cfg.output.dir;
    fs::create_directories(out_dir);
    write_text(out_dir / "schedule.csv", csv.str());
    write_text(out_dir / "schedule.svg",
               svg_line_chart("curriculum schedule", "training progress t", "weight",
                              {beta_series, w_series}));
    std::cout << "traced " << rows.size() << " step(s); wrote " << (out_dir / "schedule.csv").string()
              << " and " << (out_dir / "schedule.svg").string() << "\n";
    return 0;
}

int cmd_sweep(const RunConfig& cfg, std::vector<int> n_list) {
    if (n_list.empty()) n_list = {5, 10, 20, 50, 100};
    const Cohort cohort = build_cohort(cfg);
    const auto rows = sample_efficiency_sweep(cohort, cfg.run_spec(), n_list);

    const fs::path out_dir = cfg.output.dir;
    fs::create_directories(out_dir);
    write_text(out_dir / "sweep.csv", hash_banner(cfg) + sweep_csv(rows));

    SvgSeries auc{"macro AUC", {}, "#2ca02c"};
    for (const auto& r : rows) auc.points.emplace_back(static_cast<double>(r.n), r.mean_auc);
    write_text(out_dir / "sweep.svg",
               svg_line_chart("sample efficiency", "shots per class", "test macro AUC", {auc}));

    std::cout << std::left << std::setw(12) << "N" << std::setw(14) << "macro AUC" << std::setw(12)
              << "std" << std::setw(12) << "gain" << "\n";
    std::cout << std::setprecision(4) << std::fixed;
    for (const auto& r : rows)
        std::cout << std::left << std::setw(12) << r.n << std::setw(14) << r.mean_auc << std::setw(12)
                  << r.std_auc << std::setw(12) << r.gain << "\n";
    std::cout.unsetf(std::ios::fixed);
    std::cout << "wrote " << (out_dir / "sweep.csv").string() << " and "
              << (out_dir / "sweep.svg").string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"PEACE: adult-to-pediatric ECG transfer at desk scale"};
    app.require_subcommand(1);
    app.fallthrough();

    GlobalOpts global;
    app.add_option("--config", global.config_path, "run config file (JSON)");
    app.add_option("--seed", global.seed, "override optimizer seed");
    app.add_option("--out", global.out, "override output directory");
    app.add_option("--repeats", global.repeats, "override repeat count");

    auto* preprocess = app.add_subcommand("preprocess", "run the signal pipeline over a manifest");
    std::string pre_manifest;
    bool dry_run = false;
    preprocess->add_option("--manifest", pre_manifest, "input manifest (JSONL)");
    preprocess->add_flag("--dry-run", dry_run, "print the plan without writing");

    auto* map_labels = app.add_subcommand("map-labels", "map raw dataset labels onto the shared codes");
    std::string ml_dataset, ml_manifest;
    std::vector<std::string> ml_raws;
    map_labels->add_option("--dataset", ml_dataset, "source dataset: mimic|zzu|ptbxl|synthetic");
    map_labels->add_option("--raw", ml_raws, "raw label to map (repeatable)");
    map_labels->add_option("--manifest", ml_manifest, "map every raw label in a manifest");

    auto* train = app.add_subcommand("train", "train under the configured regime");
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
    std::string eval_checkpoint;
    eval->add_option("--checkpoint", eval_checkpoint, "checkpoint file from train");

    auto* schedule = app.add_subcommand("schedule", "trace the curriculum schedule");
    int schedule_steps = 200;
    schedule->add_option("--steps", schedule_steps, "steps to trace");

    auto* sweep = app.add_subcommand("sweep", "few-shot sample-efficiency sweep");
    std::vector<int> sweep_n;
    sweep->add_option("--n", sweep_n, "shots-per-class list (default 5 10 20 50 100)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (preprocess->parsed()) return cmd_preprocess(effective_config(global), pre_manifest, dry_run);
        if (map_labels->parsed()) return cmd_map_labels(ml_dataset, ml_raws, ml_manifest);
        if (train->parsed()) return cmd_train(effective_config(global));
        if (eval->parsed()) return cmd_eval(effective_config(global), eval_checkpoint);
        if (schedule->parsed()) return cmd_schedule(effective_config(global), schedule_steps);
        if (sweep->parsed()) return cmd_sweep(effective_config(global), sweep_n);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const ManifestError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
