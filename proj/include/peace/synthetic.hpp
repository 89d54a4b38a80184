#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "peace/ecg_data.hpp"
#include "peace/label_ontology.hpp"
#include "peace/rng.hpp"

namespace peace {

struct SyntheticSpec {
    int num_classes = 4;
    int records_per_class = 100;
    std::int64_t length = 240;
    double fs = 120.0;
    double noise = 0.05;
    double rate_scale = 1.0;
    double amp_scale = 1.0;
    std::array<double, 3> split_ratios = {0.8, 0.1, 0.1};
    std::uint64_t seed = 0;

    void validate() const {
        if (num_classes < 1 || num_classes > kNumLabels)
            throw std::invalid_argument("synthetic: num_classes must lie in [1, 12]");
        if (records_per_class < 1) throw std::invalid_argument("synthetic: records_per_class must be >= 1");
        if (length < 16) throw std::invalid_argument("synthetic: length must be >= 16");
        if (!(fs > 0.0)) throw std::invalid_argument("synthetic: fs must be positive");
        if (noise < 0.0) throw std::invalid_argument("synthetic: negative noise");
        if (!(rate_scale > 0.0 && amp_scale > 0.0))
            throw std::invalid_argument("synthetic: scales must be positive");
        if (class_freq(num_classes - 1) * rate_scale >= fs / 2.0)
            throw std::invalid_argument("synthetic: scaled class frequency exceeds Nyquist");
    }

    // Bin-aligned at the default fs/length so rate scaling moves whole DFT bins.
    static double class_freq(int k) { return 2.0 + static_cast<double>(k); }
};

struct Cohort {
    Dataset dataset;
    std::vector<EcgRecord> signals;  // aligned with dataset.records
};

inline Cohort make_synthetic_dataset(const SyntheticSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);
    const bool shifted = spec.rate_scale != 1.0 || spec.amp_scale != 1.0;
    Cohort out;
    for (int k = 0; k < spec.num_classes; ++k) {
        const double f = spec.class_freq(k) * spec.rate_scale;
        const double c2 = 0.45 * static_cast<double>(k % 3 + 1) / 3.0;
        const double c3 = 0.3 * static_cast<double>(k % 4) / 4.0;
        const double phi = 0.6 * static_cast<double>(k);
        for (int i = 0; i < spec.records_per_class; ++i) {
            std::ostringstream id;
            id << "syn" << (shifted ? "s" : "") << "-" << label_code(static_cast<Label>(k)) << "-" << i;
            EcgRecord rec;
            rec.id = id.str();
            rec.fs = spec.fs;
            rec.tag = DatasetTag::synthetic;
            for (int l = 0; l < kNumLeads; ++l) {
                const double gain = 0.6 + 0.08 * static_cast<double>(l);
                auto& lead = rec.leads[static_cast<std::size_t>(l)];
                lead.resize(static_cast<std::size_t>(spec.length));
                for (std::int64_t t = 0; t < spec.length; ++t) {
                    const double x = static_cast<double>(t) / spec.fs;
                    const double w = 2.0 * 3.14159265358979323846 * f * x;
                    const double motif =
                        std::sin(w + 0.25 * l) + c2 * std::sin(2.0 * w + phi) + c3 * std::sin(3.0 * w);
                    lead[static_cast<std::size_t>(t)] =
                        spec.amp_scale * gain * motif + spec.noise * rng.normal();
                }
            }
            DatasetEntry entry;
            entry.meta.id = rec.id;
            entry.meta.signal_path = rec.id + ".f32";
            entry.meta.tag = DatasetTag::synthetic;
            entry.meta.fs_override = spec.fs;
            entry.meta.raw_labels = {label_code(static_cast<Label>(k))};
            entry.labels = LabelVector(kNumLabels, 0);
            entry.labels[static_cast<std::size_t>(k)] = 1;
            out.dataset.records.push_back(std::move(entry));
            out.signals.push_back(std::move(rec));
        }
    }
    out.dataset = stratified_split(out.dataset, spec.split_ratios, spec.seed);
    return out;
}

}  // namespace peace
