#pragma once

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

namespace peace {

inline constexpr int kNumLeads = 12;
inline constexpr std::array<const char*, 12> kLeadNames = {
    "I", "II", "III", "aVR", "aVL", "aVF", "V1", "V2", "V3", "V4", "V5", "V6"};

enum class DatasetTag { mimic, zzu, ptbxl, synthetic };

inline const char* to_string(DatasetTag t) {
    switch (t) {
        case DatasetTag::mimic: return "mimic";
        case DatasetTag::zzu: return "zzu";
        case DatasetTag::ptbxl: return "ptbxl";
        case DatasetTag::synthetic: return "synthetic";
    }
    return "?";
}

inline DatasetTag dataset_tag_from(const std::string& s) {
    if (s == "mimic") return DatasetTag::mimic;
    if (s == "zzu") return DatasetTag::zzu;
    if (s == "ptbxl") return DatasetTag::ptbxl;
    if (s == "synthetic") return DatasetTag::synthetic;
    throw std::invalid_argument("unknown dataset tag: " + s);
}

using LabelVector = std::vector<int>;

struct EcgRecord {
    std::string id;
    std::array<std::vector<double>, 12> leads;
    double fs = 0.0;
    DatasetTag tag = DatasetTag::synthetic;

    std::int64_t n_samples() const { return static_cast<std::int64_t>(leads[0].size()); }

    void validate() const {
        if (id.empty()) throw std::invalid_argument("record: empty id");
        if (!(fs > 0.0)) throw std::invalid_argument("record " + id + ": fs must be positive");
        const std::size_t n = leads[0].size();
        for (const auto& lead : leads) {
            if (lead.size() != n)
                throw std::invalid_argument("record " + id + ": ragged lead lengths");
            for (double v : lead)
                if (!std::isfinite(v))
                    throw std::invalid_argument("record " + id + ": non-finite sample");
        }
    }
};

struct RecordMeta {
    std::string id;
    std::string signal_path;
    std::vector<std::string> raw_labels;
    DatasetTag tag = DatasetTag::synthetic;
    double fs_override = 0.0;
};

enum class Split : int { train = 0, val = 1, test = 2 };

inline const char* to_string(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
    }
    return "?";
}

struct DatasetEntry {
    RecordMeta meta;
    LabelVector labels;
};

struct Dataset {
    std::vector<DatasetEntry> records;
    std::unordered_map<std::string, Split> split_assignment;

    std::size_t size() const { return records.size(); }

    std::vector<std::size_t> indices_of(Split s) const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < records.size(); ++i) {
            auto it = split_assignment.find(records[i].meta.id);
            if (it != split_assignment.end() && it->second == s) out.push_back(i);
        }
        return out;
    }
};

struct ManifestError : std::runtime_error {
    std::size_t line;
    ManifestError(std::size_t line_no, const std::string& what)
        : std::runtime_error("manifest line " + std::to_string(line_no) + ": " + what),
          line(line_no) {}
};

inline std::vector<RecordMeta> parse_manifest(std::istream& in) {
    std::vector<RecordMeta> out;
    std::unordered_map<std::string, std::size_t> seen;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ManifestError(line_no, e.what());
        }
        RecordMeta m;
        try {
            m.id = j.at("id").get<std::string>();
            m.signal_path = j.at("signal").get<std::string>();
            for (const auto& l : j.at("labels")) m.raw_labels.push_back(l.get<std::string>());
            m.tag = dataset_tag_from(j.at("dataset").get<std::string>());
            if (j.contains("fs")) m.fs_override = j.at("fs").get<double>();
        } catch (const std::exception& e) {
            throw ManifestError(line_no, e.what());
        }
        if (m.id.empty()) throw ManifestError(line_no, "empty id");
        auto [it, fresh] = seen.emplace(m.id, line_no);
        if (!fresh) throw ManifestError(line_no, "duplicate id \"" + m.id + "\"");
        out.push_back(std::move(m));
    }
    return out;
}

inline std::vector<RecordMeta> parse_manifest_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open manifest: " + path.string());
    return parse_manifest(in);
}

namespace detail {

inline void put_u32(std::string& buf, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f32(std::string& buf, float v) {
    put_u32(buf, std::bit_cast<std::uint32_t>(v));
}

inline std::uint32_t get_u32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline float get_f32(const unsigned char* p) { return std::bit_cast<float>(get_u32(p)); }

inline constexpr std::size_t kBinHeader = 20;

}  // namespace detail

inline EcgRecord load_record_binary(const RecordMeta& meta, const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open signal: " + file.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    if (bytes.size() < detail::kBinHeader)
        throw std::runtime_error(file.string() + ": shorter than signal header");
    if (std::string(reinterpret_cast<const char*>(bytes.data()), 4) != "PECG")
        throw std::runtime_error(file.string() + ": unknown format (bad magic)");
    const std::uint32_t version = detail::get_u32(bytes.data() + 4);
    const std::uint32_t n_leads = detail::get_u32(bytes.data() + 8);
    const std::uint32_t n_samples = detail::get_u32(bytes.data() + 12);
    const float fs = detail::get_f32(bytes.data() + 16);
    if (version != 1) throw std::runtime_error(file.string() + ": unsupported version");
    if (n_leads != kNumLeads) throw std::runtime_error(file.string() + ": expected 12 leads");
    const std::size_t expect = detail::kBinHeader + std::size_t(12) * n_samples * 4;
    if (bytes.size() != expect)
        throw std::runtime_error(file.string() + ": size mismatch (got " +
                                 std::to_string(bytes.size()) + " bytes, expected " +
                                 std::to_string(expect) + ")");
    EcgRecord rec;
    rec.id = meta.id;
    rec.tag = meta.tag;
    rec.fs = meta.fs_override > 0.0 ? meta.fs_override : static_cast<double>(fs);
    const unsigned char* p = bytes.data() + detail::kBinHeader;
    for (int l = 0; l < kNumLeads; ++l) {
        rec.leads[static_cast<std::size_t>(l)].resize(n_samples);
        for (std::uint32_t i = 0; i < n_samples; ++i, p += 4) {
            const double v = detail::get_f32(p);
            if (!std::isfinite(v))
                throw std::runtime_error(file.string() + ": non-finite sample");
            rec.leads[static_cast<std::size_t>(l)][i] = v;
        }
    }
    return rec;
}

inline EcgRecord load_record_csv(const RecordMeta& meta, const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw std::runtime_error("cannot open signal: " + file.string());
    EcgRecord rec;
    rec.id = meta.id;
    rec.tag = meta.tag;
    double header_fs = 0.0;
    std::string line;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        if (line[0] == '#') {
            const auto pos = line.find("fs=");
            if (pos != std::string::npos) header_fs = std::stod(line.substr(pos + 3));
            continue;
        }
        std::stringstream ss(line);
        std::string cell;
        int col = 0;
        while (std::getline(ss, cell, ',')) {
            if (col >= kNumLeads)
                throw std::runtime_error(file.string() + ": more than 12 columns");
            const double v = std::stod(cell);
            if (!std::isfinite(v)) throw std::runtime_error(file.string() + ": non-finite sample");
            rec.leads[static_cast<std::size_t>(col)].push_back(v);
            ++col;
        }
        if (col != kNumLeads)
            throw std::runtime_error(file.string() + ": row " + std::to_string(row) +
                                     " has " + std::to_string(col) + " columns, expected 12");
        ++row;
    }
    rec.fs = header_fs > 0.0 ? header_fs : meta.fs_override;
    if (!(rec.fs > 0.0))
        throw std::runtime_error(file.string() + ": no sampling rate in header or manifest");
    return rec;
}

inline EcgRecord load_record(const RecordMeta& meta, const std::filesystem::path& root) {
    const std::filesystem::path file = root / meta.signal_path;
    if (file.extension() == ".csv") return load_record_csv(meta, file);
    return load_record_binary(meta, file);
}

inline std::filesystem::path write_record(const EcgRecord& rec, const std::filesystem::path& root) {
    rec.validate();
    std::string buf;
    buf.reserve(detail::kBinHeader + static_cast<std::size_t>(rec.n_samples()) * 48);
    buf += "PECG";
    detail::put_u32(buf, 1);
    detail::put_u32(buf, kNumLeads);
    detail::put_u32(buf, static_cast<std::uint32_t>(rec.n_samples()));
    detail::put_f32(buf, static_cast<float>(rec.fs));
    for (const auto& lead : rec.leads)
        for (double v : lead) detail::put_f32(buf, static_cast<float>(v));
    const std::filesystem::path rel = rec.id + ".f32";
    std::ofstream out(root / rel, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write signal: " + (root / rel).string());
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw std::runtime_error("write failed: " + (root / rel).string());
    return rel;
}

}  // namespace peace
