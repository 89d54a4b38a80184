#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ecg_data.hpp"
#include "rng.hpp"

namespace peace {

enum class Label : int {
    CRBBB = 0,
    IRBBB,
    LAFB,
    LAO_LAE,
    LQTS,
    LVH,
    LVOLT,
    NORM,
    RAO_RAE,
    RVH,
    STTC,
    TAB,
};

inline constexpr int kNumLabels = 12;

inline constexpr std::array<const char*, kNumLabels> kLabelCodes = {
    "CRBBB", "IRBBB", "LAFB", "LAO/LAE", "LQTS", "LVH",
    "LVOLT", "NORM",  "RAO/RAE", "RVH",  "STTC", "TAB_"};

inline constexpr std::array<const char*, kNumLabels> kLabelFullNames = {
    "complete right bundle branch block",
    "incomplete RBBB",
    "left anterior fascicular block",
    "left atrial enlargement",
    "long QT syndrome",
    "left ventricular hypertrophy",
    "low QRS voltage",
    "normal ECG",
    "right atrial enlargement",
    "right ventricular hypertrophy",
    "ST/T changes",
    "T-wave abnormality"};

inline const char* label_code(Label c) { return kLabelCodes[static_cast<int>(c)]; }
inline const char* label_full_name(Label c) { return kLabelFullNames[static_cast<int>(c)]; }

inline std::optional<Label> label_from_code(std::string_view code) {
    for (int i = 0; i < kNumLabels; ++i)
        if (code == kLabelCodes[i]) return static_cast<Label>(i);
    return std::nullopt;
}

// Lookup keys: lowercase, trimmed, internal whitespace runs collapsed to one space.
inline std::string normalize_raw_label(std::string_view raw) {
    std::string out;
    out.reserve(raw.size());
    bool pending_space = false;
    for (char ch : raw) {
        unsigned char u = static_cast<unsigned char>(ch);
        if (std::isspace(u)) {
            if (!out.empty()) pending_space = true;
            continue;
        }
        if (pending_space) {
            out.push_back(' ');
            pending_space = false;
        }
        out.push_back(static_cast<char>(std::tolower(u)));
    }
    return out;
}

inline constexpr const char* kMimicMappingTsv =
    "normal ECG\tNORM\tnormal ECG\n"
    "normal ECG except for rate\tNORM\tnormal ECG\n"
    "left anterior fascicular block\tLAFB\tleft anterior fascicular block\n"
    "incomplete right bundle branch block\tIRBBB\tincomplete right bundle branch block\n"
    "right bundle branch block\tCRBBB\tcomplete right bundle branch block\n"
    "generalized low QRS voltages\tLVOLT\tlow QRS voltage\n"
    "low QRS voltages in limb leads\tLVOLT\tlow QRS voltage\n"
    "low QRS voltages in precordial leads\tLVOLT\tlow QRS voltage\n"
    "low voltage in the extremity leads\tLVOLT\tlow QRS voltage\n"
    "low voltage in the precordial leads\tLVOLT\tlow QRS voltage\n"
    "left atrial enlargement\tLAO/LAE\tleft atrial enlargement/overload\n"
    "right atrial abnormality\tRAO/RAE\tright atrial enlargement/overload\n"
    "left ventricular hypertrophy\tLVH\tleft ventricular hypertrophy\n"
    "right ventricular hypertrophy\tRVH\tright ventricular hypertrophy\n"
    "non-specific ST segment junctional depression\tSTTC\tST/T changes\n"
    "non-specific lateral ST segment changes\tSTTC\tST/T changes\n"
    "T wave abnormality\tTAB_\tT wave abnormality\n"
    "non-specific anterior T wave changes\tTAB_\tT wave abnormality\n"
    "non-specific anterolateral T wave changes\tTAB_\tT wave abnormality\n"
    "non-specific anteroseptal T wave changes\tTAB_\tT wave abnormality\n"
    "non-specific extensive T wave changes\tTAB_\tT wave abnormality\n"
    "non-specific inferior T wave changes\tTAB_\tT wave abnormality\n"
    "non-specific inferior and lateral T wave changes\tTAB_\tT wave abnormality\n"
    "non-specific inferior/lateral T wave changes\tTAB_\tT wave abnormality\n"
    "non-specific lateral T wave changes\tTAB_\tT wave abnormality\n"
    "non-specific septal T wave changes\tTAB_\tT wave abnormality\n"
    "prolonged QT interval\tLQTS\tlong QT syndrome\n";

inline constexpr const char* kZzuMappingTsv =
    "A1\tNORM\tnormal ECG\n"
    "A2\tNORM\tnormal ECG\n"
    "I101\tLAFB\tleft anterior fascicular block\n"
    "I105\tIRBBB\tincomplete right bundle branch block\n"
    "I106\tCRBBB\tcomplete right bundle branch block\n"
    "J125\tLVOLT\tlow QRS voltage\n"
    "K140\tLAO/LAE\tleft atrial enlargement/overload\n"
    "K141\tRAO/RAE\tright atrial enlargement/overload\n"
    "K142\tLVH\tleft ventricular hypertrophy\n"
    "K143\tRVH\tright ventricular hypertrophy\n"
    "L145\tSTTC\tST/T changes\n"
    "L146\tSTTC\tST/T changes\n"
    "L147\tTAB_\tT wave abnormality\n"
    "L148\tLQTS\tlong QT syndrome\n";

inline constexpr const char* kPtbxlMappingTsv =
    "NDT\tSTTC\tST changes\n"
    "DIG\tSTTC\tST changes\n"
    "LNGQT\tSTTC\tST changes\n"
    "ANEUR\tSTTC\tST changes\n"
    "EL\tSTTC\tST changes\n"
    "NORM\tNORM\tnormal ECG\n"
    "LAFB\tLAFB\tleft anterior fascicular block\n"
    "IRBBB\tIRBBB\tincomplete right bundle branch block\n"
    "CRBBB\tCRBBB\tcomplete right bundle branch block\n"
    "LAO/LAE\tLAO/LAE\tleft atrial enlargement/overload\n"
    "RAO/RAE\tRAO/RAE\tright atrial enlargement/overload\n"
    "LVH\tLVH\tleft ventricular hypertrophy\n"
    "RVH\tRVH\tright ventricular hypertrophy\n"
    "LVOLT\tLVOLT\tlow QRS voltage\n"
    "LQTS\tLQTS\tlong QT syndrome\n"
    "TAB_\tTAB_\tT wave abnormalities\n";

struct MappingTable {
    DatasetTag tag = DatasetTag::synthetic;
    std::unordered_map<std::string, Label> entries;
};

inline MappingTable parse_mapping_tsv(std::string_view tsv, DatasetTag tag) {
    MappingTable table;
    table.tag = tag;
    std::size_t pos = 0;
    std::size_t line_no = 0;
    while (pos < tsv.size()) {
        std::size_t eol = tsv.find('\n', pos);
        if (eol == std::string_view::npos) eol = tsv.size();
        std::string_view line = tsv.substr(pos, eol - pos);
        pos = eol + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty() || line.front() == '#') continue;

        std::size_t t1 = line.find('\t');
        std::size_t t2 = t1 == std::string_view::npos ? t1 : line.find('\t', t1 + 1);
        if (t1 == std::string_view::npos || t2 == std::string_view::npos)
            throw std::runtime_error("mapping tsv line " + std::to_string(line_no) +
                                     ": expected 3 tab-separated fields");
        std::string_view raw = line.substr(0, t1);
        std::string_view code = line.substr(t1 + 1, t2 - t1 - 1);
        std::string_view full = line.substr(t2 + 1);
        if (raw.empty() || full.empty())
            throw std::runtime_error("mapping tsv line " + std::to_string(line_no) + ": empty field");
        auto target = label_from_code(code);
        if (!target)
            throw std::runtime_error("mapping tsv line " + std::to_string(line_no) +
                                     ": unknown target \"" + std::string(code) + "\"");
        auto [it, fresh] = table.entries.emplace(normalize_raw_label(raw), *target);
        if (!fresh)
            throw std::runtime_error("mapping tsv line " + std::to_string(line_no) +
                                     ": duplicate raw label \"" + std::string(raw) + "\"");
    }
    return table;
}

inline const MappingTable& mapping_table(DatasetTag tag) {
    static const MappingTable mimic = parse_mapping_tsv(kMimicMappingTsv, DatasetTag::mimic);
    static const MappingTable zzu = parse_mapping_tsv(kZzuMappingTsv, DatasetTag::zzu);
    static const MappingTable ptbxl = parse_mapping_tsv(kPtbxlMappingTsv, DatasetTag::ptbxl);
    switch (tag) {
        case DatasetTag::mimic: return mimic;
        case DatasetTag::zzu: return zzu;
        case DatasetTag::ptbxl: return ptbxl;
        case DatasetTag::synthetic: break;
    }
    throw std::invalid_argument("no mapping table for dataset tag: " + std::string(to_string(tag)));
}

// Synthetic cohorts label records with canonical codes directly.
inline std::optional<Label> map_label(DatasetTag tag, std::string_view raw) {
    if (tag == DatasetTag::synthetic) {
        std::string key = normalize_raw_label(raw);
        for (int i = 0; i < kNumLabels; ++i)
            if (key == normalize_raw_label(kLabelCodes[i])) return static_cast<Label>(i);
        return std::nullopt;
    }
    const auto& table = mapping_table(tag);
    auto it = table.entries.find(normalize_raw_label(raw));
    if (it == table.entries.end()) return std::nullopt;
    return it->second;
}

inline LabelVector to_label_vector(const std::vector<Label>& labels) {
    LabelVector bits(kNumLabels, 0);
    for (Label c : labels) bits[static_cast<int>(c)] = 1;
    return bits;
}

inline bool any_positive(const LabelVector& bits) {
    for (int b : bits)
        if (b) return true;
    return false;
}

struct BuildStats {
    std::size_t dropped = 0;
    std::size_t unknown_raw_labels = 0;
};

// Keeps a record iff at least one raw label maps; drop count goes to stats.
inline Dataset build_dataset(const std::vector<RecordMeta>& metas, BuildStats* stats = nullptr) {
    Dataset ds;
    BuildStats local;
    for (const auto& meta : metas) {
        std::vector<Label> mapped;
        for (const auto& raw : meta.raw_labels) {
            auto c = map_label(meta.tag, raw);
            if (c)
                mapped.push_back(*c);
            else
                ++local.unknown_raw_labels;
        }
        if (mapped.empty()) {
            ++local.dropped;
            continue;
        }
        ds.records.push_back({meta, to_label_vector(mapped)});
    }
    if (stats) *stats = local;
    return ds;
}

inline std::array<std::int64_t, kNumLabels> class_counts(const Dataset& ds) {
    std::array<std::int64_t, kNumLabels> counts{};
    for (const auto& rec : ds.records)
        for (int c = 0; c < kNumLabels; ++c) counts[c] += rec.labels[c];
    return counts;
}

inline std::array<std::int64_t, kNumLabels> class_counts(const Dataset& ds, Split s) {
    std::array<std::int64_t, kNumLabels> counts{};
    for (const auto& rec : ds.records) {
        auto it = ds.split_assignment.find(rec.meta.id);
        if (it == ds.split_assignment.end() || it->second != s) continue;
        for (int c = 0; c < kNumLabels; ++c) counts[c] += rec.labels[c];
    }
    return counts;
}

namespace detail {

inline std::array<std::size_t, 3> split_capacities(std::size_t n, const std::array<double, 3>& ratios) {
    std::array<std::size_t, 3> cap{};
    std::array<double, 3> frac{};
    std::size_t assigned = 0;
    for (int k = 0; k < 3; ++k) {
        double exact = static_cast<double>(n) * ratios[k];
        cap[k] = static_cast<std::size_t>(std::floor(exact + 1e-9));
        frac[k] = exact - static_cast<double>(cap[k]);
        assigned += cap[k];
    }
    std::array<int, 3> order = {0, 1, 2};
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return frac[a] > frac[b]; });
    for (std::size_t r = 0; assigned < n; ++r, ++assigned) ++cap[order[r % 3]];
    return cap;
}

}  // namespace detail

// Iterative proportional assignment, rarest class first.
inline Dataset stratified_split(const Dataset& dataset, const std::array<double, 3>& ratios,
                                std::uint64_t seed) {
    if (dataset.records.empty()) throw std::invalid_argument("stratified_split: empty dataset");
    double sum = ratios[0] + ratios[1] + ratios[2];
    for (double r : ratios)
        if (r < 0.0) throw std::invalid_argument("stratified_split: negative ratio");
    if (std::abs(sum - 1.0) > 1e-9) throw std::invalid_argument("stratified_split: ratios must sum to 1");

    const std::size_t n = dataset.records.size();
    auto capacity = detail::split_capacities(n, ratios);

    Rng rng(seed);
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    rng.shuffle(order);

    auto global = class_counts(dataset);
    std::array<std::array<double, 3>, kNumLabels> desired{};
    for (int c = 0; c < kNumLabels; ++c)
        for (int k = 0; k < 3; ++k) desired[c][k] = static_cast<double>(global[c]) * ratios[k];

    std::vector<int> assignment(n, -1);
    std::array<std::int64_t, kNumLabels> remaining = global;

    auto pick_split = [&](int cls) {
        int best = -1;
        for (int k = 0; k < 3; ++k) {
            if (capacity[k] == 0) continue;
            if (best < 0) {
                best = k;
                continue;
            }
            double need_k = cls >= 0 ? desired[cls][k] : static_cast<double>(capacity[k]);
            double need_b = cls >= 0 ? desired[cls][best] : static_cast<double>(capacity[best]);
            if (need_k > need_b + 1e-12 ||
                (std::abs(need_k - need_b) <= 1e-12 && capacity[k] > capacity[best]))
                best = k;
        }
        return best;
    };

    auto assign = [&](std::size_t idx, int k) {
        assignment[idx] = k;
        --capacity[k];
        for (int c = 0; c < kNumLabels; ++c) {
            if (!dataset.records[idx].labels[c]) continue;
            desired[c][k] -= 1.0;
            --remaining[c];
        }
    };

    std::array<std::vector<std::size_t>, kNumLabels> pools;
    for (std::size_t idx : order)
        for (int c = 0; c < kNumLabels; ++c)
            if (dataset.records[idx].labels[c]) pools[c].push_back(idx);
    std::array<std::size_t, kNumLabels> cursor{};

    for (;;) {
        int rarest = -1;
        for (int c = 0; c < kNumLabels; ++c) {
            if (remaining[c] <= 0) continue;
            if (rarest < 0 || remaining[c] < remaining[rarest]) rarest = c;
        }
        if (rarest < 0) break;
        auto& pool = pools[rarest];
        auto& cur = cursor[rarest];
        while (cur < pool.size() && assignment[pool[cur]] >= 0) ++cur;
        if (cur == pool.size()) {
            remaining[rarest] = 0;
            continue;
        }
        int k = pick_split(rarest);
        if (k < 0) throw std::logic_error("stratified_split: capacity exhausted");
        assign(pool[cur], k);
    }
    for (std::size_t idx : order) {
        if (assignment[idx] >= 0) continue;
        int k = pick_split(-1);
        if (k < 0) throw std::logic_error("stratified_split: capacity exhausted");
        assign(idx, k);
    }

    Dataset out = dataset;
    out.split_assignment.clear();
    for (std::size_t i = 0; i < n; ++i)
        out.split_assignment[dataset.records[i].meta.id] = static_cast<Split>(assignment[i]);
    return out;
}

// Per class, min(n, available) positive train records; a record can satisfy several classes.
inline Dataset sample_few_shot(const Dataset& train, int n_per_class, std::uint64_t seed) {
    if (n_per_class < 1) throw std::invalid_argument("sample_few_shot: n_per_class must be >= 1");

    auto eligible = [&](std::size_t i) {
        if (train.split_assignment.empty()) return true;
        auto it = train.split_assignment.find(train.records[i].meta.id);
        return it != train.split_assignment.end() && it->second == Split::train;
    };

    Rng rng(seed);
    std::vector<char> selected(train.records.size(), 0);
    for (int c = 0; c < kNumLabels; ++c) {
        std::vector<std::size_t> pool;
        for (std::size_t i = 0; i < train.records.size(); ++i)
            if (eligible(i) && train.records[i].labels[c]) pool.push_back(i);
        rng.shuffle(pool);
        std::size_t take = std::min<std::size_t>(pool.size(), static_cast<std::size_t>(n_per_class));
        for (std::size_t j = 0; j < take; ++j) selected[pool[j]] = 1;
    }

    Dataset out;
    for (std::size_t i = 0; i < train.records.size(); ++i) {
        if (!selected[i]) continue;
        out.records.push_back(train.records[i]);
        out.split_assignment[train.records[i].meta.id] = Split::train;
    }
    return out;
}

}  // namespace peace
