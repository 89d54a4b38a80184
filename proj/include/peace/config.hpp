#pragma once

#include <array>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "peace/harness.hpp"
#include "peace/signal_pipeline.hpp"

namespace peace {

struct DataConfig {
    std::string kind = "synthetic";
    std::string manifest;
    std::string root;
    std::array<double, 3> split_ratios = {0.8, 0.1, 0.1};
    std::uint64_t split_seed = 0;
    SyntheticSpec synthetic;

    void validate() const {
        if (kind != "synthetic" && kind != "manifest")
            throw std::invalid_argument("config: data.kind must be 'synthetic' or 'manifest'");
        if (kind == "manifest" && manifest.empty())
            throw std::invalid_argument("config: data.manifest required when data.kind is 'manifest'");
        for (double r : split_ratios)
            if (r < 0.0) throw std::invalid_argument("config: data.split entries must be nonnegative");
        synthetic.validate();
    }
};

struct PipelineConfig {
    double target_hz = 500.0;
    double seconds = 10.0;
    FilterSpec filter;
    bool calibrate = true;
    std::optional<std::array<double, 12>> reference_p2p;

    void validate() const {
        if (!(target_hz > 0.0)) throw std::invalid_argument("config: pipeline.target_hz must be positive");
        if (!(seconds > 0.0)) throw std::invalid_argument("config: pipeline.seconds must be positive");
        filter.validate(target_hz);
        if (reference_p2p)
            for (double v : *reference_p2p)
                if (!(v > 0.0))
                    throw std::invalid_argument("config: pipeline.reference_p2p entries must be positive");
    }
};

struct OutputConfig {
    std::string dir = "out";
};

struct RunConfig {
    DataConfig data;
    PipelineConfig pipeline;
    ModelConfig model;
    LsbcConfig lsbc;
    CurriculumConfig caf;
    ObjectiveConfig objective;
    OptimConfig optim;
    RegimeConfig regime;
    OutputConfig output;
    int repeats = 1;

    void validate() const {
        data.validate();
        pipeline.validate();
        run_spec().validate();
        if (output.dir.empty()) throw std::invalid_argument("config: output.dir must not be empty");
    }

    RunSpec run_spec() const {
        RunSpec spec;
        spec.model = model;
        spec.regime = regime;
        spec.optim = optim;
        spec.caf = caf;
        spec.objective = objective;
        spec.lsbc = lsbc;
        spec.repeats = repeats;
        return spec;
    }
};

namespace cfgdetail {

using nlohmann::json;

[[noreturn]] inline void fail(const std::string& path, const std::string& what) {
    throw std::invalid_argument("config: " + path + ": " + what);
}

inline std::string join(const std::string& path, const std::string& key) {
    return path.empty() ? key : path + "." + key;
}

inline void check_keys(const json& j, const std::string& path, std::initializer_list<const char*> allowed) {
    if (!j.is_object()) fail(path.empty() ? "<root>" : path, "expected an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : allowed)
            if (it.key() == k) ok = true;
        if (!ok) throw std::invalid_argument("config: unknown key '" + join(path, it.key()) + "'");
    }
}

inline void read_double(const json& j, const std::string& path, const char* key, double& out) {
    if (!j.contains(key)) return;
    const json& v = j.at(key);
    if (!v.is_number()) fail(join(path, key), "expected a number");
    out = v.get<double>();
}

inline void read_int(const json& j, const std::string& path, const char* key, int& out) {
    if (!j.contains(key)) return;
    const json& v = j.at(key);
    if (!v.is_number_integer()) fail(join(path, key), "expected an integer");
    out = v.get<int>();
}

inline void read_i64(const json& j, const std::string& path, const char* key, std::int64_t& out) {
    if (!j.contains(key)) return;
    const json& v = j.at(key);
    if (!v.is_number_integer()) fail(join(path, key), "expected an integer");
    out = v.get<std::int64_t>();
}

inline void read_u64(const json& j, const std::string& path, const char* key, std::uint64_t& out) {
    if (!j.contains(key)) return;
    const json& v = j.at(key);
    if (!v.is_number_integer() || (v.is_number_integer() && v.get<std::int64_t>() < 0))
        fail(join(path, key), "expected a nonnegative integer");
    out = v.get<std::uint64_t>();
}

inline void read_bool(const json& j, const std::string& path, const char* key, bool& out) {
    if (!j.contains(key)) return;
    const json& v = j.at(key);
    if (!v.is_boolean()) fail(join(path, key), "expected a boolean");
    out = v.get<bool>();
}

inline void read_string(const json& j, const std::string& path, const char* key, std::string& out) {
    if (!j.contains(key)) return;
    const json& v = j.at(key);
    if (!v.is_string()) fail(join(path, key), "expected a string");
    out = v.get<std::string>();
}

inline void read_i64_list(const json& j, const std::string& path, const char* key, std::vector<i64>& out) {
    if (!j.contains(key)) return;
    const json& v = j.at(key);
    if (!v.is_array()) fail(join(path, key), "expected an array of integers");
    std::vector<i64> tmp;
    for (const auto& e : v) {
        if (!e.is_number_integer()) fail(join(path, key), "expected an array of integers");
        tmp.push_back(e.get<i64>());
    }
    out = std::move(tmp);
}

inline void read_string_list(const json& j, const std::string& path, const char* key,
                             std::vector<std::string>& out) {
    if (!j.contains(key)) return;
    const json& v = j.at(key);
    if (!v.is_array()) fail(join(path, key), "expected an array of strings");
    std::vector<std::string> tmp;
    for (const auto& e : v) {
        if (!e.is_string()) fail(join(path, key), "expected an array of strings");
        tmp.push_back(e.get<std::string>());
    }
    out = std::move(tmp);
}

inline void read_ratio3(const json& j, const std::string& path, const char* key,
                        std::array<double, 3>& out) {
    if (!j.contains(key)) return;
    const json& v = j.at(key);
    if (!v.is_array() || v.size() != 3) fail(join(path, key), "expected an array of 3 numbers");
    for (std::size_t i = 0; i < 3; ++i) {
        if (!v[i].is_number()) fail(join(path, key), "expected an array of 3 numbers");
        out[i] = v[i].get<double>();
    }
}

}  // namespace cfgdetail

inline RunConfig parse_run_config(const nlohmann::json& j) {
    using namespace cfgdetail;
    RunConfig cfg;
    check_keys(j, "", {"data", "pipeline", "encoder", "lqn", "lsbc", "caf", "objective", "optim",
                       "regime", "output", "repeats"});
    read_int(j, "", "repeats", cfg.repeats);

    if (j.contains("data")) {
        const json& d = j.at("data");
        check_keys(d, "data", {"kind", "manifest", "root", "split", "split_seed", "synthetic"});
        read_string(d, "data", "kind", cfg.data.kind);
        read_string(d, "data", "manifest", cfg.data.manifest);
        read_string(d, "data", "root", cfg.data.root);
        read_ratio3(d, "data", "split", cfg.data.split_ratios);
        read_u64(d, "data", "split_seed", cfg.data.split_seed);
        if (d.contains("synthetic")) {
            const json& s = d.at("synthetic");
            auto& spec = cfg.data.synthetic;
            check_keys(s, "data.synthetic",
                       {"num_classes", "records_per_class", "length", "fs", "noise", "rate_scale",
                        "amp_scale", "split", "seed"});
            read_int(s, "data.synthetic", "num_classes", spec.num_classes);
            read_int(s, "data.synthetic", "records_per_class", spec.records_per_class);
            read_i64(s, "data.synthetic", "length", spec.length);
            read_double(s, "data.synthetic", "fs", spec.fs);
            read_double(s, "data.synthetic", "noise", spec.noise);
            read_double(s, "data.synthetic", "rate_scale", spec.rate_scale);
            read_double(s, "data.synthetic", "amp_scale", spec.amp_scale);
            read_ratio3(s, "data.synthetic", "split", spec.split_ratios);
            read_u64(s, "data.synthetic", "seed", spec.seed);
        }
    }

    if (j.contains("pipeline")) {
        const json& p = j.at("pipeline");
        check_keys(p, "pipeline",
                   {"target_hz", "seconds", "highpass_hz", "lowpass_hz", "notch_hz", "notch_q", "order",
                    "calibrate", "reference_p2p"});
        read_double(p, "pipeline", "target_hz", cfg.pipeline.target_hz);
        read_double(p, "pipeline", "seconds", cfg.pipeline.seconds);
        read_double(p, "pipeline", "highpass_hz", cfg.pipeline.filter.highpass_hz);
        read_double(p, "pipeline", "lowpass_hz", cfg.pipeline.filter.lowpass_hz);
        read_double(p, "pipeline", "notch_hz", cfg.pipeline.filter.notch_hz);
        read_double(p, "pipeline", "notch_q", cfg.pipeline.filter.notch_q);
        read_int(p, "pipeline", "order", cfg.pipeline.filter.order);
        read_bool(p, "pipeline", "calibrate", cfg.pipeline.calibrate);
        if (p.contains("reference_p2p")) {
            const json& r = p.at("reference_p2p");
            if (!r.is_array() || r.size() != 12)
                fail("pipeline.reference_p2p", "expected an array of 12 numbers");
            std::array<double, 12> ref{};
            for (std::size_t i = 0; i < 12; ++i) {
                if (!r[i].is_number()) fail("pipeline.reference_p2p", "expected an array of 12 numbers");
                ref[i] = r[i].get<double>();
            }
            cfg.pipeline.reference_p2p = ref;
        }
    }

    if (j.contains("encoder")) {
        const json& e = j.at("encoder");
        check_keys(e, "encoder", {"channels", "kernels", "strides", "input_len"});
        read_i64_list(e, "encoder", "channels", cfg.model.encoder.channels);
        read_i64_list(e, "encoder", "kernels", cfg.model.encoder.kernels);
        read_i64_list(e, "encoder", "strides", cfg.model.encoder.strides);
        read_i64(e, "encoder", "input_len", cfg.model.encoder.input_len);
    }

    if (j.contains("lqn")) {
        const json& l = j.at("lqn");
        check_keys(l, "lqn", {"d_share", "heads"});
        read_i64(l, "lqn", "d_share", cfg.model.d_share);
        read_i64(l, "lqn", "heads", cfg.model.heads);
    }

    if (j.contains("lsbc")) {
        const json& l = j.at("lsbc");
        check_keys(l, "lsbc", {"tau"});
        read_double(l, "lsbc", "tau", cfg.lsbc.tau);
    }

    if (j.contains("caf")) {
        const json& c = j.at("caf");
        check_keys(c, "caf", {"gamma", "window", "epsilon", "b1", "b2"});
        read_double(c, "caf", "gamma", cfg.caf.gamma);
        read_int(c, "caf", "window", cfg.caf.window);
        read_double(c, "caf", "epsilon", cfg.caf.epsilon);
        read_double(c, "caf", "b1", cfg.caf.b1);
        read_double(c, "caf", "b2", cfg.caf.b2);
    }

    if (j.contains("objective")) {
        const json& o = j.at("objective");
        check_keys(o, "objective", {"lambda_max"});
        read_double(o, "objective", "lambda_max", cfg.objective.lambda_max);
    }

    if (j.contains("optim")) {
        const json& o = j.at("optim");
        check_keys(o, "optim",
                   {"beta1", "beta2", "lr_init", "weight_decay", "warmup_epochs", "min_lr",
                    "grad_clip_norm", "batch_size", "epochs", "seed"});
        read_double(o, "optim", "beta1", cfg.optim.beta1);
        read_double(o, "optim", "beta2", cfg.optim.beta2);
        read_double(o, "optim", "lr_init", cfg.optim.lr_init);
        read_double(o, "optim", "weight_decay", cfg.optim.weight_decay);
        read_int(o, "optim", "warmup_epochs", cfg.optim.warmup_epochs);
        read_double(o, "optim", "min_lr", cfg.optim.min_lr);
        read_double(o, "optim", "grad_clip_norm", cfg.optim.grad_clip_norm);
        read_int(o, "optim", "batch_size", cfg.optim.batch_size);
        read_int(o, "optim", "epochs", cfg.optim.epochs);
        read_u64(o, "optim", "seed", cfg.optim.seed);
    }

    if (j.contains("regime")) {
        const json& r = j.at("regime");
        check_keys(r, "regime", {"regime", "n_per_class", "frozen_groups"});
        std::string name = to_string(cfg.regime.regime);
        read_string(r, "regime", "regime", name);
        cfg.regime.regime = regime_from(name);
        read_int(r, "regime", "n_per_class", cfg.regime.n_per_class);
        read_string_list(r, "regime", "frozen_groups", cfg.regime.frozen_groups);
    }

    if (j.contains("output")) {
        const json& o = j.at("output");
        check_keys(o, "output", {"dir"});
        read_string(o, "output", "dir", cfg.output.dir);
    }

    return cfg;
}

inline RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw std::invalid_argument("config: " + path + ": " + e.what());
    }
    return parse_run_config(j);
}

inline nlohmann::json canonical_json(const RunConfig& cfg) {
    nlohmann::json j;
    j["data"] = {{"kind", cfg.data.kind},
                 {"manifest", cfg.data.manifest},
                 {"root", cfg.data.root},
                 {"split", cfg.data.split_ratios},
                 {"split_seed", cfg.data.split_seed},
                 {"synthetic",
                  {{"num_classes", cfg.data.synthetic.num_classes},
                   {"records_per_class", cfg.data.synthetic.records_per_class},
                   {"length", cfg.data.synthetic.length},
                   {"fs", cfg.data.synthetic.fs},
                   {"noise", cfg.data.synthetic.noise},
                   {"rate_scale", cfg.data.synthetic.rate_scale},
                   {"amp_scale", cfg.data.synthetic.amp_scale},
                   {"split", cfg.data.synthetic.split_ratios},
                   {"seed", cfg.data.synthetic.seed}}}};
    j["pipeline"] = {{"target_hz", cfg.pipeline.target_hz},
                     {"seconds", cfg.pipeline.seconds},
                     {"highpass_hz", cfg.pipeline.filter.highpass_hz},
                     {"lowpass_hz", cfg.pipeline.filter.lowpass_hz},
                     {"notch_hz", cfg.pipeline.filter.notch_hz},
                     {"notch_q", cfg.pipeline.filter.notch_q},
                     {"order", cfg.pipeline.filter.order},
                     {"calibrate", cfg.pipeline.calibrate}};
    if (cfg.pipeline.reference_p2p) j["pipeline"]["reference_p2p"] = *cfg.pipeline.reference_p2p;
    j["encoder"] = {{"channels", cfg.model.encoder.channels},
                    {"kernels", cfg.model.encoder.kernels},
                    {"strides", cfg.model.encoder.strides},
                    {"input_len", cfg.model.encoder.input_len}};
    j["lqn"] = {{"d_share", cfg.model.d_share}, {"heads", cfg.model.heads}};
    j["lsbc"] = {{"tau", cfg.lsbc.tau}};
    j["caf"] = {{"gamma", cfg.caf.gamma},
                {"window", cfg.caf.window},
                {"epsilon", cfg.caf.epsilon},
                {"b1", cfg.caf.b1},
                {"b2", cfg.caf.b2}};
    j["objective"] = {{"lambda_max", cfg.objective.lambda_max}};
    j["optim"] = {{"beta1", cfg.optim.beta1},
                  {"beta2", cfg.optim.beta2},
                  {"lr_init", cfg.optim.lr_init},
                  {"weight_decay", cfg.optim.weight_decay},
                  {"warmup_epochs", cfg.optim.warmup_epochs},
                  {"min_lr", cfg.optim.min_lr},
                  {"grad_clip_norm", cfg.optim.grad_clip_norm},
                  {"batch_size", cfg.optim.batch_size},
                  {"epochs", cfg.optim.epochs},
                  {"seed", cfg.optim.seed}};
    j["regime"] = {{"regime", to_string(cfg.regime.regime)},
                   {"n_per_class", cfg.regime.n_per_class},
                   {"frozen_groups", cfg.regime.frozen_groups}};
    // output location is plumbing, not experiment identity; it stays out of the hash
    j["repeats"] = cfg.repeats;
    return j;
}

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

inline std::uint64_t config_hash(const RunConfig& cfg) { return fnv1a64(canonical_json(cfg).dump()); }

inline std::string config_hash_hex(const RunConfig& cfg) {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << config_hash(cfg);
    return os.str();
}

}  // namespace peace
