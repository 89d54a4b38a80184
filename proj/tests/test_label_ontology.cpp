#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "peace/label_ontology.hpp"

using namespace peace;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Dataset make_dataset(const std::vector<std::vector<Label>>& recs) {
    Dataset ds;
    for (std::size_t i = 0; i < recs.size(); ++i) {
        RecordMeta m;
        m.id = "r" + std::to_string(i);
        m.signal_path = m.id + ".f32";
        m.tag = DatasetTag::synthetic;
        ds.records.push_back({m, to_label_vector(recs[i])});
    }
    return ds;
}

std::array<std::array<std::int64_t, 3>, kNumLabels> per_split_counts(const Dataset& ds) {
    std::array<std::array<std::int64_t, 3>, kNumLabels> counts{};
    for (const auto& rec : ds.records) {
        int k = static_cast<int>(ds.split_assignment.at(rec.meta.id));
        for (int c = 0; c < kNumLabels; ++c) counts[c][k] += rec.labels[c];
    }
    return counts;
}

}  // namespace

TEST_CASE("canonical label space has 12 members with stable codes") {
    std::set<std::string> codes(kLabelCodes.begin(), kLabelCodes.end());
    std::set<std::string> names(kLabelFullNames.begin(), kLabelFullNames.end());
    REQUIRE(codes.size() == 12);
    REQUIRE(names.size() == 12);
    for (int c = 0; c < kNumLabels; ++c) {
        auto back = label_from_code(kLabelCodes[c]);
        REQUIRE(back.has_value());
        REQUIRE(static_cast<int>(*back) == c);
    }
    REQUIRE(std::string(label_full_name(Label::CRBBB)) == "complete right bundle branch block");
    REQUIRE(std::string(label_full_name(Label::LVH)) == "left ventricular hypertrophy");
    REQUIRE(std::string(label_code(Label::TAB)) == "TAB_");
    REQUIRE_FALSE(label_from_code("BLAH").has_value());
}

TEST_CASE("map_label resolves source vocabularies") {
    REQUIRE(map_label(DatasetTag::zzu, "I105") == Label::IRBBB);
    REQUIRE(map_label(DatasetTag::mimic, "right bundle branch block") == Label::CRBBB);
    REQUIRE(map_label(DatasetTag::ptbxl, "NDT") == Label::STTC);
    REQUIRE(map_label(DatasetTag::zzu, "A1") == Label::NORM);
    REQUIRE(map_label(DatasetTag::zzu, "L148") == Label::LQTS);
    REQUIRE(map_label(DatasetTag::mimic, "non-specific septal T wave changes") == Label::TAB);
    REQUIRE(map_label(DatasetTag::ptbxl, "LAO/LAE") == Label::LAO_LAE);
    REQUIRE_FALSE(map_label(DatasetTag::mimic, "sinus tachycardia").has_value());
    REQUIRE_FALSE(map_label(DatasetTag::ptbxl, "").has_value());
}

TEST_CASE("raw strings match case-insensitively after whitespace normalization") {
    REQUIRE(map_label(DatasetTag::mimic, "Right Bundle Branch Block") == Label::CRBBB);
    REQUIRE(map_label(DatasetTag::mimic, "  right   bundle\tbranch block \n") == Label::CRBBB);
    REQUIRE(map_label(DatasetTag::zzu, "i105") == Label::IRBBB);
    REQUIRE(map_label(DatasetTag::ptbxl, "ndt ") == Label::STTC);
    REQUIRE(normalize_raw_label("  A\t B\nC ") == "a b c");
    REQUIRE(normalize_raw_label("") == "");
}

TEST_CASE("mapping tables carry the full row sets") {
    REQUIRE(mapping_table(DatasetTag::mimic).entries.size() == 27);
    REQUIRE(mapping_table(DatasetTag::zzu).entries.size() == 14);
    REQUIRE(mapping_table(DatasetTag::ptbxl).entries.size() == 16);
    REQUIRE_THROWS_AS(mapping_table(DatasetTag::synthetic), std::invalid_argument);
}

TEST_CASE("synthetic tag accepts canonical codes as raw labels") {
    REQUIRE(map_label(DatasetTag::synthetic, "NORM") == Label::NORM);
    REQUIRE(map_label(DatasetTag::synthetic, "tab_") == Label::TAB);
    REQUIRE(map_label(DatasetTag::synthetic, "LAO/LAE") == Label::LAO_LAE);
    REQUIRE_FALSE(map_label(DatasetTag::synthetic, "not a code").has_value());
}

TEST_CASE("shipped mapping tsv files match the built-in tables") {
    fs::path data = fs::path(PEACE_SOURCE_DIR) / "data";
    REQUIRE(slurp(data / "labels_mimic.tsv") == kMimicMappingTsv);
    REQUIRE(slurp(data / "labels_zzu.tsv") == kZzuMappingTsv);
    REQUIRE(slurp(data / "labels_ptbxl.tsv") == kPtbxlMappingTsv);
}

TEST_CASE("mapping tsv parser rejects malformed rows") {
    REQUIRE_THROWS_WITH(parse_mapping_tsv("onlyonefield\n", DatasetTag::zzu),
                        Catch::Matchers::ContainsSubstring("3 tab-separated fields"));
    REQUIRE_THROWS_WITH(parse_mapping_tsv("x\tNOPE\ty\n", DatasetTag::zzu),
                        Catch::Matchers::ContainsSubstring("unknown target"));
    REQUIRE_THROWS_WITH(parse_mapping_tsv("x\tNORM\ty\nX \tNORM\ty\n", DatasetTag::zzu),
                        Catch::Matchers::ContainsSubstring("duplicate raw label"));
}

TEST_CASE("to_label_vector unions one-hot positions") {
    REQUIRE(to_label_vector({}) == LabelVector(12, 0));
    LabelVector norm_only = to_label_vector({Label::NORM});
    REQUIRE(norm_only[static_cast<int>(Label::NORM)] == 1);
    int bits = 0;
    for (int b : norm_only) bits += b;
    REQUIRE(bits == 1);

    LabelVector dup = to_label_vector({Label::STTC, Label::STTC, Label::TAB});
    bits = 0;
    for (int b : dup) bits += b;
    REQUIRE(bits == 2);
    REQUIRE(dup[static_cast<int>(Label::STTC)] == 1);
    REQUIRE(dup[static_cast<int>(Label::TAB)] == 1);
}

TEST_CASE("build_dataset drops records whose labels all fail to map") {
    std::vector<RecordMeta> metas(3);
    metas[0] = {"a", "a.f32", {"I105", "garbage"}, DatasetTag::zzu, 0.0};
    metas[1] = {"b", "b.f32", {"garbage"}, DatasetTag::zzu, 0.0};
    metas[2] = {"c", "c.f32", {"A1"}, DatasetTag::zzu, 0.0};

    BuildStats stats;
    Dataset ds = build_dataset(metas, &stats);
    REQUIRE(ds.records.size() == 2);
    REQUIRE(ds.records[0].meta.id == "a");
    REQUIRE(ds.records[0].labels[static_cast<int>(Label::IRBBB)] == 1);
    REQUIRE(ds.records[1].meta.id == "c");
    REQUIRE(stats.dropped == 1);
    REQUIRE(stats.unknown_raw_labels == 2);
}

TEST_CASE("stratified_split keeps a balanced single-label cohort balanced") {
    std::vector<std::vector<Label>> recs;
    for (int c = 0; c < kNumLabels; ++c)
        for (int i = 0; i < 100; ++i) recs.push_back({static_cast<Label>(c)});
    Dataset ds = make_dataset(recs);

    Dataset split = stratified_split(ds, {0.8, 0.1, 0.1}, 7);
    REQUIRE(split.split_assignment.size() == 1200);

    std::array<std::int64_t, 3> sizes{};
    for (const auto& [id, s] : split.split_assignment) ++sizes[static_cast<int>(s)];
    REQUIRE(sizes[0] == 960);
    REQUIRE(sizes[1] == 120);
    REQUIRE(sizes[2] == 120);

    auto counts = per_split_counts(split);
    for (int c = 0; c < kNumLabels; ++c) {
        REQUIRE(std::abs(counts[c][0] - 80) <= 1);
        REQUIRE(std::abs(counts[c][1] - 10) <= 1);
        REQUIRE(std::abs(counts[c][2] - 10) <= 1);
    }
}

TEST_CASE("stratified_split partitions and is deterministic per seed") {
    std::vector<std::vector<Label>> recs;
    Rng rng(123);
    for (int i = 0; i < 400; ++i) {
        std::vector<Label> ls;
        int n_labels = 1 + static_cast<int>(rng.uniform_int(3));
        for (int j = 0; j < n_labels; ++j) ls.push_back(static_cast<Label>(rng.uniform_int(kNumLabels)));
        recs.push_back(ls);
    }
    Dataset ds = make_dataset(recs);

    Dataset a = stratified_split(ds, {0.6, 0.2, 0.2}, 99);
    Dataset b = stratified_split(ds, {0.6, 0.2, 0.2}, 99);
    REQUIRE(a.split_assignment == b.split_assignment);

    REQUIRE(a.split_assignment.size() == ds.records.size());
    for (const auto& rec : ds.records) REQUIRE(a.split_assignment.count(rec.meta.id) == 1);

    std::array<std::int64_t, 3> sizes{};
    for (const auto& [id, s] : a.split_assignment) ++sizes[static_cast<int>(s)];
    REQUIRE(std::abs(sizes[0] - 240) <= 1);
    REQUIRE(std::abs(sizes[1] - 80) <= 1);
    REQUIRE(std::abs(sizes[2] - 80) <= 1);
}

TEST_CASE("stratified_split holds per-class proportions for populous classes") {
    std::vector<std::vector<Label>> recs;
    Rng rng(2024);
    for (int i = 0; i < 900; ++i) {
        std::vector<Label> ls;
        ls.push_back(static_cast<Label>(rng.uniform_int(kNumLabels)));
        if (rng.uniform() < 0.35) ls.push_back(static_cast<Label>(rng.uniform_int(kNumLabels)));
        recs.push_back(ls);
    }
    Dataset split = stratified_split(make_dataset(recs), {0.6, 0.2, 0.2}, 5);

    auto global = class_counts(split);
    auto counts = per_split_counts(split);
    std::array<double, 3> sizes{};
    for (const auto& [id, s] : split.split_assignment) sizes[static_cast<int>(s)] += 1.0;

    double n = static_cast<double>(split.records.size());
    for (int c = 0; c < kNumLabels; ++c) {
        if (global[c] < 20) continue;
        double global_prop = static_cast<double>(global[c]) / n;
        for (int k = 0; k < 3; ++k) {
            double prop = static_cast<double>(counts[c][k]) / sizes[k];
            REQUIRE(prop >= 0.8 * global_prop);
            REQUIRE(prop <= 1.2 * global_prop);
        }
    }
}

TEST_CASE("stratified_split edge shapes") {
    Dataset ds = make_dataset({{Label::NORM}, {Label::LVH}, {Label::NORM, Label::LVH}});

    Dataset all_train = stratified_split(ds, {1.0, 0.0, 0.0}, 3);
    for (const auto& [id, s] : all_train.split_assignment) REQUIRE(s == Split::train);

    REQUIRE_THROWS_AS(stratified_split(Dataset{}, {0.8, 0.1, 0.1}, 1), std::invalid_argument);
    REQUIRE_THROWS_AS(stratified_split(ds, {0.5, 0.2, 0.2}, 1), std::invalid_argument);
    REQUIRE_THROWS_AS(stratified_split(ds, {1.2, -0.1, -0.1}, 1), std::invalid_argument);
}

TEST_CASE("sample_few_shot takes min(n, available) per class") {
    std::vector<std::vector<Label>> recs;
    for (int i = 0; i < 30; ++i) recs.push_back({Label::LQTS});
    for (int i = 0; i < 200; ++i) recs.push_back({Label::NORM});
    Dataset ds = make_dataset(recs);

    Dataset subset = sample_few_shot(ds, 50, 11);
    auto counts = class_counts(subset);
    REQUIRE(counts[static_cast<int>(Label::LQTS)] == 30);
    REQUIRE(counts[static_cast<int>(Label::NORM)] == 50);
    REQUIRE(subset.records.size() == 80);

    Dataset again = sample_few_shot(ds, 50, 11);
    REQUIRE(again.records.size() == subset.records.size());
    for (std::size_t i = 0; i < subset.records.size(); ++i)
        REQUIRE(again.records[i].meta.id == subset.records[i].meta.id);
}

TEST_CASE("sample_few_shot n=1 on single-label data picks one record per class") {
    std::vector<std::vector<Label>> recs;
    for (int c = 0; c < kNumLabels; ++c)
        for (int i = 0; i < 40; ++i) recs.push_back({static_cast<Label>(c)});
    Dataset subset = sample_few_shot(make_dataset(recs), 1, 21);
    REQUIRE(subset.records.size() == 12);
    auto counts = class_counts(subset);
    for (int c = 0; c < kNumLabels; ++c) REQUIRE(counts[c] == 1);
}

TEST_CASE("sample_few_shot stays inside the train split and counts shared records once") {
    std::vector<std::vector<Label>> recs;
    for (int i = 0; i < 60; ++i) recs.push_back({Label::STTC, Label::TAB});
    for (int i = 0; i < 60; ++i) recs.push_back({Label::NORM});
    Dataset ds = stratified_split(make_dataset(recs), {0.5, 0.25, 0.25}, 4);

    Dataset subset = sample_few_shot(ds, 5, 9);
    std::int64_t upper = 0;
    auto train_counts = class_counts(ds, Split::train);
    for (int c = 0; c < kNumLabels; ++c) upper += std::min<std::int64_t>(5, train_counts[c]);
    REQUIRE(static_cast<std::int64_t>(subset.records.size()) <= upper);

    for (const auto& rec : subset.records)
        REQUIRE(ds.split_assignment.at(rec.meta.id) == Split::train);

    auto counts = class_counts(subset);
    REQUIRE(counts[static_cast<int>(Label::STTC)] >= 5);
    REQUIRE(counts[static_cast<int>(Label::NORM)] == 5);

    REQUIRE_THROWS_AS(sample_few_shot(ds, 0, 1), std::invalid_argument);
}
