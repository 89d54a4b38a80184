#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "peace/ecg_data.hpp"

namespace peace {

struct FilterSpec {
    double highpass_hz = 0.5;
    double lowpass_hz = 100.0;
    double notch_hz = 50.0;
    double notch_q = 30.0;
    int order = 4;

    void validate(double fs) const {
        if (!(highpass_hz > 0.0 && highpass_hz < lowpass_hz && lowpass_hz < fs / 2.0))
            throw std::invalid_argument("filter spec: need 0 < highpass < lowpass < fs/2");
        if (!(notch_hz > 0.0 && notch_hz < fs / 2.0))
            throw std::invalid_argument("filter spec: notch outside (0, fs/2)");
        if (order < 2 || order % 2 != 0)
            throw std::invalid_argument("filter spec: order must be even and >= 2");
        if (!(notch_q > 0.0)) throw std::invalid_argument("filter spec: notch Q must be positive");
    }
};

struct AmplitudeStats {
    std::array<double, 12> p2p_median{};
    bool degenerate(int lead) const { return !(p2p_median[static_cast<std::size_t>(lead)] > 0.0); }
};

struct ScalerStats {
    std::array<double, 12> mean{};
    std::array<double, 12> std{};
};

struct Biquad {
    double b0, b1, b2, a1, a2;
};

namespace dsp {

inline void check_stable(const Biquad& s) {
    if (!(std::abs(s.a2) < 1.0 && std::abs(s.a1) < 1.0 + s.a2))
        throw std::invalid_argument("filter design unstable for this sampling rate");
}

inline std::vector<Biquad> butterworth_sections(int order, double cutoff_hz, double fs,
                                                bool highpass) {
    if (!(cutoff_hz > 0.0 && cutoff_hz < fs / 2.0))
        throw std::invalid_argument("butterworth cutoff outside (0, fs/2)");
    std::vector<Biquad> out;
    const double w0 = 2.0 * 3.14159265358979323846 * cutoff_hz / fs;
    const double cw = std::cos(w0), sw = std::sin(w0);
    for (int k = 0; k < order / 2; ++k) {
        const double q = 1.0 / (2.0 * std::cos((2.0 * k + 1.0) * 3.14159265358979323846 /
                                               (2.0 * order)));
        const double alpha = sw / (2.0 * q);
        const double a0 = 1.0 + alpha;
        Biquad s{};
        if (highpass) {
            s.b0 = (1.0 + cw) / 2.0 / a0;
            s.b1 = -(1.0 + cw) / a0;
            s.b2 = s.b0;
        } else {
            s.b0 = (1.0 - cw) / 2.0 / a0;
            s.b1 = (1.0 - cw) / a0;
            s.b2 = s.b0;
        }
        s.a1 = -2.0 * cw / a0;
        s.a2 = (1.0 - alpha) / a0;
        check_stable(s);
        out.push_back(s);
    }
    return out;
}

inline Biquad notch_section(double f0, double q, double fs) {
    if (!(f0 > 0.0 && f0 < fs / 2.0)) throw std::invalid_argument("notch outside (0, fs/2)");
    const double w0 = 2.0 * 3.14159265358979323846 * f0 / fs;
    const double cw = std::cos(w0);
    const double alpha = std::sin(w0) / (2.0 * q);
    const double a0 = 1.0 + alpha;
    Biquad s{1.0 / a0, -2.0 * cw / a0, 1.0 / a0, -2.0 * cw / a0, (1.0 - alpha) / a0};
    check_stable(s);
    return s;
}

// Direct form II transposed, started at the step-response steady state for x[0].
inline void lfilter_inplace(const Biquad& s, std::vector<double>& x) {
    const double h1 = (s.b0 + s.b1 + s.b2) / (1.0 + s.a1 + s.a2);
    double z1 = (h1 - s.b0) * x[0];
    double z2 = (h1 * (1.0 + s.a1) - s.b0 - s.b1) * x[0];
    for (double& v : x) {
        const double xin = v;
        const double y = s.b0 * xin + z1;
        z1 = s.b1 * xin - s.a1 * y + z2;
        z2 = s.b2 * xin - s.a2 * y;
        v = y;
    }
}

inline void cascade_inplace(const std::vector<Biquad>& sos, std::vector<double>& x) {
    for (const auto& s : sos) lfilter_inplace(s, x);
}

// Slowest decay constant of the cascade, in samples.
inline double slowest_tau(const std::vector<Biquad>& sos) {
    double tau = 1.0;
    for (const auto& s : sos) {
        double r;
        const double disc = s.a1 * s.a1 - 4.0 * s.a2;
        if (disc < 0.0) {
            r = std::sqrt(s.a2);
        } else {
            const double sq = std::sqrt(disc);
            r = std::max(std::abs((-s.a1 + sq) / 2.0), std::abs((-s.a1 - sq) / 2.0));
        }
        if (r > 0.0 && r < 1.0) tau = std::max(tau, -1.0 / std::log(r));
    }
    return tau;
}

// Edge padding continues the signal as a tone at `tone_hz` around the local mean,
// via the fixed recurrence p[k] = 2cos(w0) p[k-1] - p[k-2]. Power-line content then
// crosses the junction with no discontinuity, so the high-Q notch never rings at the
// edges; mirror-style extensions leave a kink there that the notch turns into a long
// in-band transient. The construction is linear in x.
inline std::vector<double> filtfilt(const std::vector<Biquad>& sos, const std::vector<double>& x,
                                    double fs, double tone_hz) {
    const std::size_t n = x.size();
    if (n < 2) return x;
    const std::size_t pad = std::min<std::size_t>(
        n - 1,
        std::max<std::size_t>(24, static_cast<std::size_t>(std::ceil(8.0 * slowest_tau(sos)))));
    const double c2 = 2.0 * std::cos(2.0 * 3.14159265358979323846 * tone_hz / fs);
    const std::size_t W =
        std::min<std::size_t>(n, std::max<std::size_t>(2, static_cast<std::size_t>(std::llround(2.0 * fs / tone_hz))));
    std::vector<double> ext;
    ext.reserve(n + 2 * pad);
    {
        double mu = 0.0;
        for (std::size_t i = 0; i < W; ++i) mu += x[i];
        mu /= static_cast<double>(W);
        std::vector<double> pre(pad);
        double q1 = x[1] - mu, q0 = x[0] - mu;
        for (std::size_t i = 0; i < pad; ++i) {
            const double p = c2 * q0 - q1;
            pre[pad - 1 - i] = mu + p;
            q1 = q0;
            q0 = p;
        }
        ext.insert(ext.end(), pre.begin(), pre.end());
    }
    ext.insert(ext.end(), x.begin(), x.end());
    {
        double mu = 0.0;
        for (std::size_t i = 0; i < W; ++i) mu += x[n - 1 - i];
        mu /= static_cast<double>(W);
        double q1 = x[n - 2] - mu, q0 = x[n - 1] - mu;
        for (std::size_t i = 0; i < pad; ++i) {
            const double p = c2 * q0 - q1;
            ext.push_back(mu + p);
            q1 = q0;
            q0 = p;
        }
    }
    cascade_inplace(sos, ext);
    std::reverse(ext.begin(), ext.end());
    cascade_inplace(sos, ext);
    std::reverse(ext.begin(), ext.end());
    return std::vector<double>(ext.begin() + static_cast<std::ptrdiff_t>(pad),
                               ext.begin() + static_cast<std::ptrdiff_t>(pad + n));
}

}  // namespace dsp

inline EcgRecord resample(const EcgRecord& rec, double target_hz, double content_max_hz = 0.0) {
    rec.validate();
    if (!(target_hz > 0.0)) throw std::invalid_argument("resample: target rate must be positive");
    if (content_max_hz > 0.0 && content_max_hz > target_hz / 2.0)
        throw std::invalid_argument("resample: declared content exceeds the target Nyquist rate");
    if (target_hz == rec.fs) return rec;

    const double ratio = target_hz / rec.fs;
    const std::int64_t n_in = rec.n_samples();
    const std::int64_t n_out = std::llround(static_cast<double>(n_in) * ratio);
    const double s = std::min(1.0, ratio);
    constexpr double kHalfWidth = 32.0;
    const double support = kHalfWidth / s;

    EcgRecord out;
    out.id = rec.id;
    out.fs = target_hz;
    out.tag = rec.tag;
    for (int l = 0; l < kNumLeads; ++l) {
        const auto& in = rec.leads[static_cast<std::size_t>(l)];
        auto& dst = out.leads[static_cast<std::size_t>(l)];
        dst.assign(static_cast<std::size_t>(n_out), 0.0);
        for (std::int64_t n = 0; n < n_out; ++n) {
            const double c = static_cast<double>(n) / ratio;
            const std::int64_t k0 = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::ceil(c - support)));
            const std::int64_t k1 = std::min<std::int64_t>(n_in - 1, static_cast<std::int64_t>(std::floor(c + support)));
            double acc = 0.0, wsum = 0.0;
            for (std::int64_t k = k0; k <= k1; ++k) {
                const double t = s * (c - static_cast<double>(k));
                const double u = t / kHalfWidth;
                const double win = 0.42 + 0.5 * std::cos(3.14159265358979323846 * u) +
                                   0.08 * std::cos(2.0 * 3.14159265358979323846 * u);
                const double sinc = t == 0.0 ? 1.0
                                             : std::sin(3.14159265358979323846 * t) /
                                                   (3.14159265358979323846 * t);
                const double w = sinc * win;
                acc += w * in[static_cast<std::size_t>(k)];
                wsum += w;
            }
            if (wsum != 0.0) dst[static_cast<std::size_t>(n)] = acc / wsum;
        }
    }
    return out;
}

inline EcgRecord fix_length(const EcgRecord& rec, double seconds) {
    rec.validate();
    const std::int64_t target = std::llround(seconds * rec.fs);
    EcgRecord out = rec;
    for (auto& lead : out.leads) {
        if (static_cast<std::int64_t>(lead.size()) > target)
            lead.resize(static_cast<std::size_t>(target));
        else
            lead.resize(static_cast<std::size_t>(target), 0.0);
    }
    return out;
}

inline EcgRecord bandlimit(const EcgRecord& rec, const FilterSpec& spec) {
    rec.validate();
    spec.validate(rec.fs);
    std::vector<Biquad> sos = dsp::butterworth_sections(spec.order, spec.highpass_hz, rec.fs, true);
    for (const auto& s : dsp::butterworth_sections(spec.order, spec.lowpass_hz, rec.fs, false))
        sos.push_back(s);
    sos.push_back(dsp::notch_section(spec.notch_hz, spec.notch_q, rec.fs));
    EcgRecord out = rec;
    for (auto& lead : out.leads) lead = dsp::filtfilt(sos, lead, rec.fs, spec.notch_hz);
    return out;
}

inline double median_of(std::vector<double> v) {
    if (v.empty()) throw std::invalid_argument("median of empty set");
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

template <typename Iterable>
AmplitudeStats compute_p2p_stats(const Iterable& records) {
    std::array<std::vector<double>, 12> p2p;
    for (const EcgRecord& rec : records)
        for (int l = 0; l < kNumLeads; ++l) {
            const auto& lead = rec.leads[static_cast<std::size_t>(l)];
            if (lead.empty()) throw std::invalid_argument("p2p stats: empty lead");
            const auto [mn, mx] = std::minmax_element(lead.begin(), lead.end());
            p2p[static_cast<std::size_t>(l)].push_back(*mx - *mn);
        }
    if (p2p[0].empty()) throw std::invalid_argument("p2p stats: no records");
    AmplitudeStats stats;
    for (int l = 0; l < kNumLeads; ++l)
        stats.p2p_median[static_cast<std::size_t>(l)] = median_of(p2p[static_cast<std::size_t>(l)]);
    return stats;
}

inline EcgRecord calibrate_amplitude(const EcgRecord& rec, const AmplitudeStats& ref,
                                     const AmplitudeStats& own) {
    rec.validate();
    EcgRecord out = rec;
    for (int l = 0; l < kNumLeads; ++l) {
        if (own.degenerate(l))
            throw std::invalid_argument("calibrate: degenerate own p2p stats on lead " +
                                        std::string(kLeadNames[static_cast<std::size_t>(l)]));
        const double r = ref.p2p_median[static_cast<std::size_t>(l)] /
                         own.p2p_median[static_cast<std::size_t>(l)];
        for (double& v : out.leads[static_cast<std::size_t>(l)]) v *= r;
    }
    return out;
}

template <typename Iterable>
ScalerStats fit_scaler(const Iterable& records) {
    std::array<double, 12> sum{}, sumsq{};
    std::array<std::int64_t, 12> count{};
    for (const EcgRecord& rec : records)
        for (int l = 0; l < kNumLeads; ++l)
            for (double v : rec.leads[static_cast<std::size_t>(l)]) {
                sum[static_cast<std::size_t>(l)] += v;
                sumsq[static_cast<std::size_t>(l)] += v * v;
                ++count[static_cast<std::size_t>(l)];
            }
    if (count[0] == 0) throw std::invalid_argument("scaler: no samples");
    ScalerStats stats;
    for (int l = 0; l < kNumLeads; ++l) {
        const double n = static_cast<double>(count[static_cast<std::size_t>(l)]);
        const double m = sum[static_cast<std::size_t>(l)] / n;
        const double var = std::max(0.0, sumsq[static_cast<std::size_t>(l)] / n - m * m);
        stats.mean[static_cast<std::size_t>(l)] = m;
        const double sd = std::sqrt(var);
        stats.std[static_cast<std::size_t>(l)] = sd > 1e-12 ? sd : 1.0;
    }
    return stats;
}

inline EcgRecord standardize(const EcgRecord& rec, const ScalerStats& stats) {
    rec.validate();
    EcgRecord out = rec;
    for (int l = 0; l < kNumLeads; ++l) {
        const double m = stats.mean[static_cast<std::size_t>(l)];
        const double s = stats.std[static_cast<std::size_t>(l)];
        for (double& v : out.leads[static_cast<std::size_t>(l)]) v = (v - m) / s;
    }
    return out;
}

}  // namespace peace
