#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "peace/rng.hpp"
#include "peace/signal_pipeline.hpp"

using namespace peace;

namespace {

constexpr double kPi = 3.14159265358979323846;

EcgRecord tone(double freq, double fs, double seconds, double amp = 1.0) {
    EcgRecord rec;
    rec.id = "tone";
    rec.fs = fs;
    const auto n = static_cast<std::size_t>(std::llround(seconds * fs));
    for (auto& lead : rec.leads) {
        lead.resize(n);
        for (std::size_t i = 0; i < n; ++i)
            lead[i] = amp * std::sin(2.0 * kPi * freq * static_cast<double>(i) / fs);
    }
    return rec;
}

EcgRecord noise_record(std::uint64_t seed, double fs, std::size_t n) {
    EcgRecord rec;
    rec.id = "noise" + std::to_string(seed);
    rec.fs = fs;
    Rng rng(seed);
    for (auto& lead : rec.leads) {
        lead.resize(n);
        for (auto& v : lead) v = rng.normal();
    }
    return rec;
}

double rms(const std::vector<double>& x) {
    double s = 0.0;
    for (double v : x) s += v * v;
    return std::sqrt(s / static_cast<double>(x.size()));
}

}  // namespace

TEST_CASE("resample at the same rate is the identity") {
    EcgRecord rec = noise_record(1, 500.0, 777);
    EcgRecord out = resample(rec, 500.0);
    for (int l = 0; l < kNumLeads; ++l)
        REQUIRE(out.leads[static_cast<std::size_t>(l)] == rec.leads[static_cast<std::size_t>(l)]);
}

TEST_CASE("resample length follows round(n * target / fs)") {
    EcgRecord rec = noise_record(2, 250.0, 2500);
    REQUIRE(resample(rec, 500.0).n_samples() == 5000);
    EcgRecord odd = noise_record(3, 360.0, 3600);
    REQUIRE(resample(odd, 500.0).n_samples() == 5000);
}

TEST_CASE("a 5 Hz sinusoid upsampled 250 to 500 matches the analytic waveform") {
    EcgRecord rec = tone(5.0, 250.0, 10.0);
    EcgRecord out = resample(rec, 500.0);
    // windowed-sinc support is 32 input samples; skip the edge-affected margin
    const std::size_t margin = 2 * 33;
    double max_err = 0.0;
    const auto& lead = out.leads[0];
    for (std::size_t i = margin; i + margin < lead.size(); ++i) {
        const double expect = std::sin(2.0 * kPi * 5.0 * static_cast<double>(i) / 500.0);
        max_err = std::max(max_err, std::abs(lead[i] - expect));
    }
    REQUIRE(max_err < 0.01);
}

TEST_CASE("downsampling keeps an in-band tone within 1% amplitude") {
    EcgRecord rec = tone(12.0, 1000.0, 8.0);
    EcgRecord out = resample(rec, 500.0);
    const std::size_t margin = 2 * 70;
    double max_err = 0.0;
    for (std::size_t i = margin; i + margin < out.leads[0].size(); ++i) {
        const double expect = std::sin(2.0 * kPi * 12.0 * static_cast<double>(i) / 500.0);
        max_err = std::max(max_err, std::abs(out.leads[0][i] - expect));
    }
    REQUIRE(max_err < 0.01);
}

TEST_CASE("resample rejects content declared above the target Nyquist") {
    EcgRecord rec = noise_record(4, 1000.0, 1000);
    REQUIRE_THROWS_AS(resample(rec, 500.0, 300.0), std::invalid_argument);
    REQUIRE_NOTHROW(resample(rec, 500.0, 200.0));
}

TEST_CASE("fix_length pads with trailing zeros and truncates the tail") {
    EcgRecord ten = noise_record(5, 500.0, 5000);
    EcgRecord same = fix_length(ten, 10.0);
    REQUIRE(same.leads[0] == ten.leads[0]);

    EcgRecord shorty = noise_record(6, 500.0, 1500);
    EcgRecord padded = fix_length(shorty, 10.0);
    REQUIRE(padded.n_samples() == 5000);
    for (int l = 0; l < kNumLeads; ++l) {
        for (std::size_t i = 0; i < 1500; ++i)
            REQUIRE(padded.leads[static_cast<std::size_t>(l)][i] ==
                    shorty.leads[static_cast<std::size_t>(l)][i]);
        for (std::size_t i = 1500; i < 5000; ++i)
            REQUIRE(padded.leads[static_cast<std::size_t>(l)][i] == 0.0);
    }

    EcgRecord longy = noise_record(7, 500.0, 6000);
    EcgRecord cut = fix_length(longy, 10.0);
    REQUIRE(cut.n_samples() == 5000);
    for (std::size_t i = 0; i < 5000; ++i) REQUIRE(cut.leads[2][i] == longy.leads[2][i]);

    EcgRecord twice = fix_length(cut, 10.0);
    REQUIRE(twice.leads[2] == cut.leads[2]);
}

TEST_CASE("bandlimit of silence is silence") {
    EcgRecord rec;
    rec.id = "silence";
    rec.fs = 500.0;
    for (auto& lead : rec.leads) lead.assign(5000, 0.0);
    EcgRecord out = bandlimit(rec, FilterSpec{});
    for (const auto& lead : out.leads)
        for (double v : lead) REQUIRE(v == 0.0);
}

TEST_CASE("the default filter stack notches 50 Hz by at least 20 dB") {
    EcgRecord rec = tone(50.0, 500.0, 10.0);
    EcgRecord out = bandlimit(rec, FilterSpec{});
    REQUIRE(rms(out.leads[0]) <= 0.10 * rms(rec.leads[0]));
}

TEST_CASE("the default filter stack passes 10 Hz within 1 dB") {
    EcgRecord rec = tone(10.0, 500.0, 10.0);
    EcgRecord out = bandlimit(rec, FilterSpec{});
    REQUIRE(rms(out.leads[0]) >= 0.89 * rms(rec.leads[0]));
}

TEST_CASE("bandlimit is linear") {
    EcgRecord x = noise_record(8, 500.0, 2000);
    EcgRecord y = noise_record(9, 500.0, 2000);
    EcgRecord mix = x;
    for (int l = 0; l < kNumLeads; ++l)
        for (std::size_t i = 0; i < 2000; ++i)
            mix.leads[static_cast<std::size_t>(l)][i] =
                1.7 * x.leads[static_cast<std::size_t>(l)][i] -
                0.6 * y.leads[static_cast<std::size_t>(l)][i];
    FilterSpec spec;
    EcgRecord fx = bandlimit(x, spec), fy = bandlimit(y, spec), fmix = bandlimit(mix, spec);
    for (std::size_t i = 0; i < 2000; ++i) {
        const double expect = 1.7 * fx.leads[0][i] - 0.6 * fy.leads[0][i];
        REQUIRE(fmix.leads[0][i] == Catch::Approx(expect).margin(1e-6));
    }
}

TEST_CASE("filtering is zero-phase for a band-interior tone") {
    EcgRecord rec = tone(10.0, 500.0, 10.0);
    EcgRecord out = bandlimit(rec, FilterSpec{});
    const auto& a = rec.leads[0];
    const auto& b = out.leads[0];
    double best = -1e300;
    int best_lag = -999;
    for (int lag = -20; lag <= 20; ++lag) {
        double s = 0.0;
        for (std::size_t i = 100; i + 100 < a.size(); ++i)
            s += a[i] * b[static_cast<std::size_t>(static_cast<int>(i) + lag)];
        if (s > best) {
            best = s;
            best_lag = lag;
        }
    }
    REQUIRE(best_lag == 0);
}

TEST_CASE("unstable or invalid filter designs are rejected") {
    EcgRecord rec = noise_record(10, 100.0, 500);
    FilterSpec spec;  // lowpass 100 Hz at fs=100 violates lowpass < fs/2
    REQUIRE_THROWS_AS(bandlimit(rec, spec), std::invalid_argument);
    FilterSpec inverted;
    inverted.highpass_hz = 120.0;
    EcgRecord rec500 = noise_record(11, 500.0, 500);
    REQUIRE_THROWS_AS(bandlimit(rec500, inverted), std::invalid_argument);
}

TEST_CASE("p2p stats take the per-lead median across records") {
    auto with_lead0_range = [](double lo, double hi, std::uint64_t seed) {
        EcgRecord rec = noise_record(seed, 500.0, 100);
        rec.leads[0].front() = lo;
        for (auto& v : rec.leads[0]) v = std::clamp(v, lo, hi);
        rec.leads[0][10] = lo;
        rec.leads[0][20] = hi;
        return rec;
    };
    std::vector<EcgRecord> cohort = {with_lead0_range(0.0, 1.0, 21), with_lead0_range(-1.0, 1.0, 22),
                                     with_lead0_range(-4.0, 5.0, 23)};
    AmplitudeStats stats = compute_p2p_stats(cohort);
    REQUIRE(stats.p2p_median[0] == Catch::Approx(2.0).margin(1e-12));

    EcgRecord one = noise_record(24, 500.0, 100);
    one.leads[5].assign(100, 0.0);
    one.leads[5][3] = -1.0;
    one.leads[5][4] = 2.0;
    REQUIRE(compute_p2p_stats(std::vector<EcgRecord>{one}).p2p_median[5] ==
            Catch::Approx(3.0).margin(1e-12));

    EcgRecord flat;
    flat.id = "flat";
    flat.fs = 500.0;
    for (auto& lead : flat.leads) lead.assign(100, 2.5);
    AmplitudeStats degenerate = compute_p2p_stats(std::vector<EcgRecord>{flat});
    REQUIRE(degenerate.p2p_median[0] == 0.0);
    REQUIRE(degenerate.degenerate(0));
}

TEST_CASE("calibrating against identical stats is the identity") {
    EcgRecord rec = noise_record(31, 500.0, 400);
    AmplitudeStats own = compute_p2p_stats(std::vector<EcgRecord>{rec});
    EcgRecord out = calibrate_amplitude(rec, own, own);
    for (std::size_t i = 0; i < 400; ++i)
        REQUIRE(out.leads[0][i] == Catch::Approx(rec.leads[0][i]).margin(1e-9));
}

TEST_CASE("calibration scales each lead by its ref/own ratio") {
    EcgRecord rec = noise_record(32, 500.0, 300);
    AmplitudeStats own = compute_p2p_stats(std::vector<EcgRecord>{rec});
    AmplitudeStats ref = own;
    for (auto& v : ref.p2p_median) v *= 2.0;
    EcgRecord out = calibrate_amplitude(rec, ref, own);
    for (std::size_t i = 0; i < 300; ++i)
        REQUIRE(out.leads[4][i] == Catch::Approx(2.0 * rec.leads[4][i]).margin(1e-12));

    AmplitudeStats broken = own;
    broken.p2p_median[2] = 0.0;
    REQUIRE_THROWS_AS(calibrate_amplitude(rec, ref, broken), std::invalid_argument);
}

TEST_CASE("cohort p2p medians equal the reference after calibration") {
    std::vector<EcgRecord> cohort;
    for (std::uint64_t s = 40; s < 47; ++s) {
        EcgRecord rec = noise_record(s, 500.0, 200);
        for (int l = 0; l < kNumLeads; ++l)
            for (auto& v : rec.leads[static_cast<std::size_t>(l)])
                v *= 0.3 + 0.1 * static_cast<double>(l);
        cohort.push_back(rec);
    }
    AmplitudeStats own = compute_p2p_stats(cohort);
    AmplitudeStats ref;
    for (int l = 0; l < kNumLeads; ++l)
        ref.p2p_median[static_cast<std::size_t>(l)] = 1.0 + 0.25 * static_cast<double>(l);
    std::vector<EcgRecord> calibrated;
    for (const auto& rec : cohort) calibrated.push_back(calibrate_amplitude(rec, ref, own));
    AmplitudeStats after = compute_p2p_stats(calibrated);
    for (int l = 0; l < kNumLeads; ++l)
        REQUIRE(after.p2p_median[static_cast<std::size_t>(l)] ==
                Catch::Approx(ref.p2p_median[static_cast<std::size_t>(l)]).margin(1e-6));
}

TEST_CASE("scaler matches the two-point hand computation") {
    EcgRecord rec;
    rec.id = "two";
    rec.fs = 500.0;
    for (auto& lead : rec.leads) lead = {1.0, 3.0};
    ScalerStats stats = fit_scaler(std::vector<EcgRecord>{rec});
    REQUIRE(stats.mean[0] == Catch::Approx(2.0).margin(1e-12));
    REQUIRE(stats.std[0] == Catch::Approx(1.0).margin(1e-12));
    EcgRecord out = standardize(rec, stats);
    REQUIRE(out.leads[0][0] == Catch::Approx(-1.0).margin(1e-12));
    REQUIRE(out.leads[0][1] == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("standardized training cohort is zero-mean unit-std and a fixed point") {
    std::vector<EcgRecord> cohort;
    for (std::uint64_t s = 60; s < 65; ++s) {
        EcgRecord rec = noise_record(s, 500.0, 500);
        for (auto& lead : rec.leads)
            for (auto& v : lead) v = 3.0 * v + 1.5;
        cohort.push_back(rec);
    }
    ScalerStats stats = fit_scaler(cohort);
    std::vector<EcgRecord> standardized;
    for (const auto& rec : cohort) standardized.push_back(standardize(rec, stats));
    ScalerStats refit = fit_scaler(standardized);
    for (int l = 0; l < kNumLeads; ++l) {
        REQUIRE(refit.mean[static_cast<std::size_t>(l)] == Catch::Approx(0.0).margin(1e-6));
        REQUIRE(refit.std[static_cast<std::size_t>(l)] == Catch::Approx(1.0).margin(1e-6));
    }
}

TEST_CASE("a constant lead standardizes with std forced to 1") {
    EcgRecord rec;
    rec.id = "const";
    rec.fs = 500.0;
    for (auto& lead : rec.leads) lead.assign(50, 7.0);
    ScalerStats stats = fit_scaler(std::vector<EcgRecord>{rec});
    REQUIRE(stats.std[0] == 1.0);
    EcgRecord out = standardize(rec, stats);
    for (double v : out.leads[0]) REQUIRE(v == 0.0);
}

TEST_CASE("standardize with identity stats is the identity") {
    EcgRecord rec = noise_record(70, 500.0, 100);
    ScalerStats ident;
    ident.mean.fill(0.0);
    ident.std.fill(1.0);
    EcgRecord out = standardize(rec, ident);
    REQUIRE(out.leads[7] == rec.leads[7]);
}
