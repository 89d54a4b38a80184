#pragma once

#include <array>
#include <cctype>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "label_ontology.hpp"
#include "tensor.hpp"

namespace peace {

struct TriAxialDescriptor {
    Label label = Label::NORM;
    std::string rhythm;
    std::string morphology;
    std::string stt;
};

inline constexpr const char* kPromptTemplate =
    "I want you to play the role of a professional Electrocardiologist, and I need you to teach "
    "me how to diagnose <LABEL> from 12-lead ECG, such as what leads or what features to focus "
    "on, etc. Your answer must be less than 50 words.";

inline constexpr const char* kDescriptorsTsv =
    "CRBBB\tRegular sinus rhythm showing stable atrioventricular conduction\tQRS ≥ 120 ms with "
    "characteristic rsR' or rSR' in right precordial leads V1-V2 and slurred terminal S wave in I "
    "and V6\tSecondary T-wave inversion in V1-V3 without territorial ST-segment elevation or "
    "reciprocal changes.\n"
    "IRBBB\tNormal sinus rhythm with consistent R-R intervals\tQRS duration 100-119 ms exhibiting "
    "rSr' or rsR' in V1-V2 and narrow terminal S in I and V6\tAbsence of acute ST-T changes; no "
    "pathologic Q waves or ST-segment deviation in contiguous leads.\n"
    "LAFB\tSinus rhythm with normal heart rate\tMarked left axis deviation -45 to -90 degrees, qR "
    "pattern in lateral leads I and aVL, and rS pattern in inferior leads II, III, aVF\tNegative "
    "for acute ST-segment deviation or localized T-wave inversion.\n"
    "LAO/LAE\tSinus rhythm at a regular rate\tP mitrale with notched P wave in lead II or terminal "
    "negative P component in V1 ≥ 1 mm deep and ≥ 40 ms duration\tST-segments are isoelectric; no "
    "pathologic Q waves suggesting prior injury patterns.\n"
    "LQTS\tSinus rhythm with prolonged ventricular repolarization\tProlonged QTc interval > 470 ms "
    "measured in lead II or V5-V6 with normal QRS duration\tAbsence of acute ST-T abnormalities; "
    "T-waves may be broad but lack a specific territorial pattern.\n"
    "LVH\tRegular sinus rhythm\tIncreased QRS voltage (S V1 + R V5-V6 > 35 mm) with left axis "
    "deviation\tAsymmetric downsloping ST-segment depression and T-wave inversion in lateral leads "
    "I, aVL, V5-V6 representing a left ventricular strain pattern.\n"
    "LVOLT\tSinus rhythm with attenuated signal amplitude\tQRS voltage < 5 mm in all limb leads "
    "and < 10 mm in all precordial leads\tNo evidence of territorial ST-elevation or depression; "
    "T-waves are concordant but low in amplitude.\n"
    "NORM\tNormal sinus rhythm 60-100 bpm with consistent P-P intervals\tNormal P wave, PR "
    "interval, QRS duration, and QRS axis\tNo diagnostic ST-segment elevation, depression, or "
    "T-wave inversion; no pathologic Q waves in any lead.\n"
    "RAO/RAE\tSinus rhythm with prominent atrial signals\tTall peaked P wave > 2.5 mm in inferior "
    "leads II, III, aVF or initial positive P in V1 > 1.5 mm\tNegative for acute myocardial injury "
    "or primary repolarization abnormalities.\n"
    "RVH\tSinus rhythm with rightward QRS vector\tRight axis deviation with dominant R wave in V1 "
    "(R/S > 1) and deep S wave in lateral leads V5-V6\tST-segment depression and T-wave inversion "
    "in right precordial leads V1-V3 consistent with right ventricular strain.\n"
    "STTC\tStable sinus rhythm\tNormal QRS morphology and axis\tNonspecific ST-T abnormalities "
    "including minor ST-segment flattening or T-wave inversion without a specific lead-territory "
    "pattern or reciprocal ST-elevation.\n"
    "TAB_\tSinus rhythm with normal intervals\tQRS duration and P-wave morphology are "
    "unremarkable\tGeneralized T-wave flattening or inversion in contiguous leads without "
    "significant ST-segment deviation, excluding acute focal injury patterns.\n";

inline std::array<TriAxialDescriptor, kNumLabels> parse_descriptors_tsv(std::string_view tsv) {
    std::array<TriAxialDescriptor, kNumLabels> store;
    std::array<bool, kNumLabels> seen{};
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

        std::array<std::string_view, 4> field;
        std::size_t start = 0;
        for (int f = 0; f < 4; ++f) {
            std::size_t tab = f < 3 ? line.find('\t', start) : line.size();
            if (tab == std::string_view::npos)
                throw std::runtime_error("descriptor tsv line " + std::to_string(line_no) +
                                         ": expected 4 tab-separated fields");
            field[f] = line.substr(start, tab - start);
            start = tab + 1;
        }
        auto label = label_from_code(field[0]);
        if (!label)
            throw std::runtime_error("descriptor tsv line " + std::to_string(line_no) +
                                     ": unknown label \"" + std::string(field[0]) + "\"");
        if (field[1].empty() || field[2].empty() || field[3].empty())
            throw std::runtime_error("descriptor tsv line " + std::to_string(line_no) + ": empty axis text");
        int idx = static_cast<int>(*label);
        if (seen[idx])
            throw std::runtime_error("descriptor tsv line " + std::to_string(line_no) +
                                     ": duplicate label \"" + std::string(field[0]) + "\"");
        seen[idx] = true;
        store[idx] = {*label, std::string(field[1]), std::string(field[2]), std::string(field[3])};
    }
    for (int c = 0; c < kNumLabels; ++c)
        if (!seen[c])
            throw std::runtime_error(std::string("descriptor tsv: missing label ") + kLabelCodes[c]);
    return store;
}

inline const std::array<TriAxialDescriptor, kNumLabels>& descriptor_store() {
    static const auto store = parse_descriptors_tsv(kDescriptorsTsv);
    return store;
}

inline const TriAxialDescriptor& descriptor_for(Label c) {
    return descriptor_store()[static_cast<int>(c)];
}

inline std::string render_prompt(Label c) {
    std::string prompt = kPromptTemplate;
    const std::string token = "<LABEL>";
    std::size_t at = prompt.find(token);
    if (at == std::string::npos) throw std::logic_error("prompt template lost its <LABEL> slot");
    prompt.replace(at, token.size(), label_full_name(c));
    return prompt;
}

inline std::string compose_descriptor_text(const TriAxialDescriptor& d) {
    return "rhythm: " + d.rhythm + "; morphology: " + d.morphology +
           "; ST-T repolarization: " + d.stt;
}

inline TriAxialDescriptor split_descriptor_text(Label label, const std::string& text) {
    const std::string k1 = "rhythm: ";
    const std::string k2 = "; morphology: ";
    const std::string k3 = "; ST-T repolarization: ";
    if (text.rfind(k1, 0) != 0) throw std::invalid_argument("descriptor text: missing rhythm axis");
    std::size_t p2 = text.find(k2);
    std::size_t p3 = text.find(k3);
    if (p2 == std::string::npos || p3 == std::string::npos || p3 < p2)
        throw std::invalid_argument("descriptor text: missing axis separators");
    TriAxialDescriptor d;
    d.label = label;
    d.rhythm = text.substr(k1.size(), p2 - k1.size());
    d.morphology = text.substr(p2 + k2.size(), p3 - p2 - k2.size());
    d.stt = text.substr(p3 + k3.size());
    if (d.rhythm.empty() || d.morphology.empty() || d.stt.empty())
        throw std::invalid_argument("descriptor text: empty axis");
    return d;
}

struct DescriptorProvider {
    virtual ~DescriptorProvider() = default;
    virtual std::string generate(const std::string& prompt) const = 0;
};

// Default provider: bundled texts only, no network I/O.
struct BundledDescriptorProvider final : DescriptorProvider {
    std::string generate(const std::string& prompt) const override {
        for (int c = 0; c < kNumLabels; ++c) {
            Label label = static_cast<Label>(c);
            if (render_prompt(label) == prompt) return compose_descriptor_text(descriptor_for(label));
        }
        throw std::invalid_argument("no bundled text for prompt: " + prompt);
    }
};

struct TextEmbedder {
    virtual ~TextEmbedder() = default;
    virtual int dim() const = 0;
    virtual std::vector<double> embed(const std::string& text) const = 0;
};

// Signed feature hashing of lowercase word unigrams and bigrams, L2-normalized.
class HashingTextEmbedder final : public TextEmbedder {
public:
    explicit HashingTextEmbedder(int dim) : dim_(dim) {
        if (dim < 1) throw std::invalid_argument("embedder dim must be >= 1");
    }

    int dim() const override { return dim_; }

    std::vector<double> embed(const std::string& text) const override {
        std::vector<double> v(static_cast<std::size_t>(dim_), 0.0);
        std::vector<std::string> tokens = tokenize(text);
        for (const auto& tok : tokens) bump(v, tok);
        for (std::size_t i = 0; i + 1 < tokens.size(); ++i) bump(v, tokens[i] + '\x1f' + tokens[i + 1]);
        double norm2 = 0.0;
        for (double x : v) norm2 += x * x;
        if (norm2 > 0.0) {
            double inv = 1.0 / std::sqrt(norm2);
            for (double& x : v) x *= inv;
        }
        return v;
    }

private:
    static std::vector<std::string> tokenize(const std::string& text) {
        std::vector<std::string> tokens;
        std::string cur;
        for (char ch : text) {
            unsigned char u = static_cast<unsigned char>(ch);
            if (std::isalnum(u)) {
                cur.push_back(static_cast<char>(std::tolower(u)));
            } else if (!cur.empty()) {
                tokens.push_back(std::move(cur));
                cur.clear();
            }
        }
        if (!cur.empty()) tokens.push_back(std::move(cur));
        return tokens;
    }

    static std::uint64_t fnv1a64(const std::string& s) {
        std::uint64_t h = 1469598103934665603ull;
        for (char ch : s) {
            h ^= static_cast<unsigned char>(ch);
            h *= 1099511628211ull;
        }
        return h;
    }

    void bump(std::vector<double>& v, const std::string& feature) const {
        std::uint64_t h = fnv1a64(feature);
        double sign = (h >> 63) ? -1.0 : 1.0;
        v[static_cast<std::size_t>(h % static_cast<std::uint64_t>(dim_))] += sign;
    }

    int dim_;
};

struct TriAxialEmbedding {
    std::vector<double> rhythm;
    std::vector<double> morphology;
    std::vector<double> stt;
};

inline TriAxialEmbedding embed_triaxial(const TriAxialDescriptor& desc, const TextEmbedder& emb) {
    if (desc.rhythm.empty() || desc.morphology.empty() || desc.stt.empty())
        throw std::invalid_argument("descriptor axes must be nonempty");
    return {emb.embed(desc.rhythm), emb.embed(desc.morphology), emb.embed(desc.stt)};
}

struct FusionHead {
    Tensor w;  // [d, 3d]
    Tensor b;  // [d]

    static FusionHead init(int d, Rng& rng) {
        FusionHead head;
        head.w = Tensor::randn({d, 3 * static_cast<i64>(d)}, rng, 1.0 / std::sqrt(3.0 * d), true);
        head.b = Tensor::zeros({d}, true);
        return head;
    }

    i64 dim() const { return w.shape()[0]; }
};

inline Tensor fuse_triaxial(const Tensor& x_rhythm, const Tensor& x_morph, const Tensor& x_stt,
                            const FusionHead& head) {
    Tensor v = concat({x_rhythm, x_morph, x_stt}, 0);
    Tensor y = linear(reshape(v, {1, v.shape()[0]}), transpose(head.w, {1, 0}), head.b);
    return reshape(y, {head.dim()});
}

// All 12 descriptors embedded and fused in canonical order.
inline Tensor fused_descriptor_matrix(const TextEmbedder& emb, const FusionHead& head) {
    const i64 d = emb.dim();
    std::vector<double> rows;
    rows.reserve(static_cast<std::size_t>(kNumLabels * 3 * d));
    for (int c = 0; c < kNumLabels; ++c) {
        auto e = embed_triaxial(descriptor_for(static_cast<Label>(c)), emb);
        rows.insert(rows.end(), e.rhythm.begin(), e.rhythm.end());
        rows.insert(rows.end(), e.morphology.begin(), e.morphology.end());
        rows.insert(rows.end(), e.stt.begin(), e.stt.end());
    }
    Tensor x = Tensor::from({kNumLabels, 3 * d}, std::move(rows));
    return linear(x, transpose(head.w, {1, 0}), head.b);
}

// Per sample: mean of fused descriptors over its positive labels, NORM if it has none.
inline Tensor descriptor_inputs(const std::vector<LabelVector>& labels, const Tensor& fused) {
    const i64 batch = static_cast<i64>(labels.size());
    if (batch == 0) throw std::invalid_argument("descriptor_inputs: empty batch");
    std::vector<double> sel(static_cast<std::size_t>(batch * kNumLabels), 0.0);
    for (i64 i = 0; i < batch; ++i) {
        const auto& bits = labels[static_cast<std::size_t>(i)];
        if (static_cast<int>(bits.size()) != kNumLabels)
            throw std::invalid_argument("descriptor_inputs: label vector must have 12 entries");
        int count = 0;
        for (int b : bits) count += b != 0;
        if (count == 0) {
            sel[static_cast<std::size_t>(i * kNumLabels + static_cast<int>(Label::NORM))] = 1.0;
            continue;
        }
        for (int c = 0; c < kNumLabels; ++c)
            if (bits[c]) sel[static_cast<std::size_t>(i * kNumLabels + c)] = 1.0 / count;
    }
    return matmul(Tensor::from({batch, kNumLabels}, std::move(sel)), fused);
}

}  // namespace peace
