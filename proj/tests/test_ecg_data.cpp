#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "peace/ecg_data.hpp"
#include "peace/rng.hpp"

using namespace peace;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
    auto d = fs::temp_directory_path() / "peace_ecg_data_test";
    fs::create_directories(d);
    return d;
}

EcgRecord make_record(const std::string& id, std::int64_t n, double fs, std::uint64_t seed) {
    EcgRecord rec;
    rec.id = id;
    rec.fs = fs;
    rec.tag = DatasetTag::synthetic;
    Rng rng(seed);
    for (auto& lead : rec.leads) {
        lead.resize(static_cast<std::size_t>(n));
        // keep values f32-representable so binary round trips are bit-exact
        for (auto& v : lead) v = static_cast<double>(static_cast<float>(rng.normal()));
    }
    return rec;
}

}  // namespace

TEST_CASE("manifest parse echoes fields in file order") {
    std::stringstream in(
        R"({"id":"r1","signal":"r1.f32","labels":["I105"],"dataset":"zzu"}
{"id":"r2","signal":"sub/r2.csv","labels":["NORM","LVH"],"dataset":"ptbxl","fs":250}
)");
    auto metas = parse_manifest(in);
    REQUIRE(metas.size() == 2);
    CHECK(metas[0].id == "r1");
    CHECK(metas[0].signal_path == "r1.f32");
    CHECK(metas[0].raw_labels == std::vector<std::string>{"I105"});
    CHECK(metas[0].tag == DatasetTag::zzu);
    CHECK(metas[0].fs_override == 0.0);
    CHECK(metas[1].id == "r2");
    CHECK(metas[1].raw_labels.size() == 2);
    CHECK(metas[1].fs_override == 250.0);
}

TEST_CASE("empty manifest stream parses to an empty list") {
    std::stringstream in("");
    REQUIRE(parse_manifest(in).empty());
    std::stringstream blank("\n   \n\t\n");
    REQUIRE(parse_manifest(blank).empty());
}

TEST_CASE("duplicate manifest id reports the offending line") {
    std::stringstream in(
        R"({"id":"r1","signal":"a.f32","labels":[],"dataset":"mimic"}
{"id":"r1","signal":"b.f32","labels":[],"dataset":"mimic"}
)");
    try {
        parse_manifest(in);
        FAIL("expected ManifestError");
    } catch (const ManifestError& e) {
        CHECK(e.line == 2);
        CHECK(std::string(e.what()).find("duplicate") != std::string::npos);
    }
}

TEST_CASE("malformed manifest line reports its line number") {
    std::stringstream in(
        R"({"id":"r1","signal":"a.f32","labels":[],"dataset":"mimic"}
{not json}
)");
    try {
        parse_manifest(in);
        FAIL("expected ManifestError");
    } catch (const ManifestError& e) {
        CHECK(e.line == 2);
    }
    std::stringstream bad_tag(R"({"id":"x","signal":"x.f32","labels":[],"dataset":"chaos"})");
    REQUIRE_THROWS_AS(parse_manifest(bad_tag), ManifestError);
}

TEST_CASE("binary signal round trip is bit-exact") {
    auto root = temp_dir();
    EcgRecord rec = make_record("rt1", 700, 500.0, 42);
    auto rel = write_record(rec, root);
    RecordMeta meta{"rt1", rel.string(), {}, DatasetTag::synthetic, 0.0};
    EcgRecord back = load_record(meta, root);
    REQUIRE(back.fs == 500.0);
    REQUIRE(back.n_samples() == 700);
    for (int l = 0; l < kNumLeads; ++l)
        REQUIRE(back.leads[static_cast<std::size_t>(l)] == rec.leads[static_cast<std::size_t>(l)]);
}

TEST_CASE("all-zero binary record loads as zeros with header fs") {
    auto root = temp_dir();
    EcgRecord rec;
    rec.id = "zero";
    rec.fs = 500.0;
    for (auto& lead : rec.leads) lead.assign(5000, 0.0);
    auto rel = write_record(rec, root);
    REQUIRE(fs::file_size(root / rel) == 20 + 12u * 5000u * 4u);
    RecordMeta meta{"zero", rel.string(), {}, DatasetTag::synthetic, 0.0};
    EcgRecord back = load_record(meta, root);
    REQUIRE(back.fs == 500.0);
    for (const auto& lead : back.leads)
        for (double v : lead) REQUIRE(v == 0.0);
}

TEST_CASE("truncated binary payload is a size-mismatch error") {
    auto root = temp_dir();
    EcgRecord rec = make_record("trunc", 100, 500.0, 7);
    auto rel = write_record(rec, root);
    const auto file = root / rel;
    fs::resize_file(file, fs::file_size(file) - 4);
    RecordMeta meta{"trunc", rel.string(), {}, DatasetTag::synthetic, 0.0};
    try {
        load_record(meta, root);
        FAIL("expected size mismatch");
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()).find("size mismatch") != std::string::npos);
    }
}

TEST_CASE("record with a NaN sample is rejected before write") {
    auto root = temp_dir();
    EcgRecord rec = make_record("nan", 10, 500.0, 9);
    rec.leads[3][5] = std::nan("");
    REQUIRE_THROWS_AS(write_record(rec, root), std::invalid_argument);
}

TEST_CASE("csv signal honors its fs header and column layout") {
    auto root = temp_dir();
    const auto file = root / "c1.csv";
    std::ofstream out(file);
    out << "# fs=250\n";
    std::vector<std::vector<double>> expected(12, std::vector<double>(40));
    for (int t = 0; t < 40; ++t) {
        for (int l = 0; l < 12; ++l) {
            const double v = 0.01 * t - 0.1 * l;
            expected[static_cast<std::size_t>(l)][static_cast<std::size_t>(t)] = v;
            out << (l ? "," : "") << v;
        }
        out << "\n";
    }
    out.close();
    RecordMeta meta{"c1", "c1.csv", {}, DatasetTag::zzu, 0.0};
    EcgRecord rec = load_record(meta, root);
    REQUIRE(rec.fs == 250.0);
    REQUIRE(rec.n_samples() == 40);
    for (int l = 0; l < 12; ++l)
        for (int t = 0; t < 40; ++t)
            REQUIRE(rec.leads[static_cast<std::size_t>(l)][static_cast<std::size_t>(t)] ==
                    Catch::Approx(expected[static_cast<std::size_t>(l)][static_cast<std::size_t>(t)])
                        .margin(1e-6));
}

TEST_CASE("manifest fs override wins over the file header") {
    auto root = temp_dir();
    EcgRecord rec = make_record("ov", 50, 500.0, 3);
    auto rel = write_record(rec, root);
    RecordMeta meta{"ov", rel.string(), {}, DatasetTag::synthetic, 360.0};
    REQUIRE(load_record(meta, root).fs == 360.0);
}

TEST_CASE("wrong magic is an unknown-format error") {
    auto root = temp_dir();
    const auto file = root / "bad.f32";
    std::ofstream out(file, std::ios::binary);
    out << "NOPE" << std::string(100, '\0');
    out.close();
    RecordMeta meta{"bad", "bad.f32", {}, DatasetTag::synthetic, 0.0};
    try {
        load_record(meta, root);
        FAIL("expected format error");
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()).find("unknown format") != std::string::npos);
    }
}
