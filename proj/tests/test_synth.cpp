#include <doctest.h>

#include <cmath>
#include <sstream>

#include "helpers.hpp"
#include "ppgfuse/beats.hpp"
#include "ppgfuse/dsp.hpp"
#include "ppgfuse/error.hpp"
#include "ppgfuse/synth.hpp"

using namespace ppgfuse;

namespace {

synth::SiteSpec site_of(const char* label, double lag_ms = 0.0)
{
    synth::SiteSpec s;
    s.site = Site::parse(label);
    s.lag_ms = lag_ms;
    return s;
}

ErrorCode code_of(const synth::SynthScenario& sc)
{
    try {
        sc.validate();
    } catch (const Error& e) {
        return e.code();
    }
    return ErrorCode::IoError;
}

// Trapezoid integral of the HR profile in beats.
double integral_beats(const std::vector<synth::HrKnot>& profile, double duration)
{
    const int steps = 200000;
    double acc = 0.0;
    for (int i = 0; i < steps; ++i) {
        const double a = duration * i / steps;
        const double b = duration * (i + 1) / steps;
        acc += 0.5 * (synth::hr_at(profile, a) + synth::hr_at(profile, b)) * (b - a) / 60.0;
    }
    return acc;
}

} // namespace

TEST_CASE("constant 60 bpm for 60 s gives 60 beats")
{
    synth::SynthScenario sc;
    sc.sites = {site_of("head")};
    const auto rec = synth::generate(sc);
    CHECK(rec.beat_times_s.size() == 60);
    REQUIRE(rec.truth_hr.size() > 0);
    for (const auto& v : rec.truth_hr.hr_bpm) {
        REQUIRE(v.has_value());
        CHECK(*v == doctest::Approx(60.0));
    }
    CHECK(rec.signals.front().size() == 60 * 128);
    CHECK(rec.ecg.signal.size() == 60 * 128);
}

TEST_CASE("a lagged site trails the reference")
{
    synth::SynthScenario sc;
    sc.duration_s = 90.0;
    sc.hr_profile = {{0.0, 70.0}};
    sc.sites = {site_of("head"), site_of("ankle", 100.0)};
    const auto rec = synth::generate(sc);
    const auto& a = rec.truth_beats[0].peak_indices;
    const auto& b = rec.truth_beats[1].peak_indices;
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i)
        CHECK(std::abs(static_cast<long>(b[i]) - static_cast<long>(a[i]) - 13) <= 1);

    // The rendered waveforms agree with the truth indices.
    const auto pa = beats::detect_peaks(dsp::bandpass(rec.signals[0])).peak_indices;
    const auto pb = beats::detect_peaks(dsp::bandpass(rec.signals[1])).peak_indices;
    const auto m = testing::match_peaks(pa, pb, 20);
    CHECK(m.sensitivity() > 0.98);
    std::vector<double> diffs;
    for (std::size_t i = 0; i < std::min(pa.size(), pb.size()); ++i)
        diffs.push_back(static_cast<double>(pb[i]) - static_cast<double>(pa[i]));
    CHECK(std::abs(dsp::median(diffs) - 12.8) <= 1.0);
}

TEST_CASE("white burst is scaled to the requested in-band SNR")
{
    synth::SynthScenario sc;
    sc.duration_s = 90.0;
    sc.hr_profile = {{0.0, 75.0}};
    sc.sites = {site_of("wrist")};
    const auto clean = synth::generate(sc).signals.front().samples();
    synth::NoiseEvent ev;
    ev.site = Site::parse("wrist");
    ev.start_s = 30.0;
    ev.end_s = 60.0;
    ev.snr_db = -10.0;
    sc.noise_events = {ev};
    const auto noisy = synth::generate(sc).signals.front().samples();

    std::vector<double> s(clean.begin() + 30 * 128, clean.begin() + 60 * 128);
    std::vector<double> n(s.size());
    for (std::size_t i = 0; i < s.size(); ++i)
        n[i] = noisy[30 * 128 + i] - s[i];
    const double ratio_db =
        10.0 * std::log10(testing::dft_band_power(n, 128.0, 0.6, 3.3) / testing::dft_band_power(s, 128.0, 0.6, 3.3));
    CHECK(ratio_db == doctest::Approx(10.0).epsilon(0.05));

    // Samples outside the burst are untouched.
    for (std::size_t i = 0; i < 30 * 128; ++i)
        CHECK(noisy[i] == clean[i]);
}

TEST_CASE("generation is bit-identical for a seed and differs across seeds")
{
    const auto a = synth::generate(synth::burst_scenario(3, {.duration_s = 180.0}));
    const auto b = synth::generate(synth::burst_scenario(3, {.duration_s = 180.0}));
    const auto c = synth::generate(synth::burst_scenario(4, {.duration_s = 180.0}));
    REQUIRE(a.signals.size() == 4);
    for (std::size_t i = 0; i < a.signals.size(); ++i) {
        CHECK(a.signals[i].samples() == b.signals[i].samples());
        CHECK(a.signals[i].samples() != c.signals[i].samples());
    }
    CHECK(a.ecg.signal.samples() == b.ecg.signal.samples());
}

TEST_CASE("beat count follows the integral of the HR profile")
{
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const auto sc = synth::burst_scenario(seed, {.duration_s = 600.0});
        auto plain = sc;
        plain.ibi_jitter = 0.0;
        const auto times = synth::beat_times(plain);
        CHECK(std::abs(static_cast<double>(times.size()) - integral_beats(sc.hr_profile, sc.duration_s)) <= 1.0);
        for (std::size_t i = 1; i < times.size(); ++i)
            CHECK(times[i] > times[i - 1]);
    }
}

TEST_CASE("burst suite layout")
{
    const auto sc = synth::burst_scenario(7);
    CHECK(sc.duration_s == 1200.0);
    CHECK(sc.sites.size() == 4);
    for (const auto& k : sc.hr_profile) {
        CHECK(k.bpm >= 55.0);
        CHECK(k.bpm <= 130.0);
    }
    for (const auto& s : sc.sites) {
        const double cover = synth::noise_coverage(sc, s.site);
        CHECK(cover > 0.15);
        CHECK(cover < 0.35);
    }
    // Bursts never overlap across sites.
    for (std::size_t i = 0; i < sc.noise_events.size(); ++i)
        for (std::size_t j = i + 1; j < sc.noise_events.size(); ++j) {
            const auto& a = sc.noise_events[i];
            const auto& b = sc.noise_events[j];
            CHECK((a.end_s <= b.start_s || b.end_s <= a.start_s));
        }
    CHECK_NOTHROW(sc.validate());
}

TEST_CASE("scenario text round trip")
{
    const auto sc = synth::burst_scenario(11, {.duration_s = 300.0});
    std::stringstream ss;
    synth::write_scenario(ss, sc);
    const auto back = synth::parse_scenario(ss);
    std::stringstream again;
    synth::write_scenario(again, back);
    CHECK(again.str() == ss.str());
    CHECK(synth::generate(back).signals.front().samples() == synth::generate(sc).signals.front().samples());
}

TEST_CASE("invalid scenarios are rejected")
{
    synth::SynthScenario sc;
    sc.sites = {site_of("head")};
    CHECK_NOTHROW(sc.validate());

    auto bad = sc;
    bad.hr_profile = {{0.0, 200.0}};
    CHECK(code_of(bad) == ErrorCode::InvalidScenario);
    bad = sc;
    bad.sites.front().lag_ms = 151.0;
    CHECK(code_of(bad) == ErrorCode::InvalidScenario);
    bad = sc;
    bad.noise_events = {{Site::parse("head"), 50.0, 70.0, synth::NoiseKind::White, 0.0}};
    CHECK(code_of(bad) == ErrorCode::InvalidScenario);
    bad = sc;
    bad.noise_events = {{Site::parse("wrist"), 5.0, 10.0, synth::NoiseKind::White, 0.0}};
    CHECK(code_of(bad) == ErrorCode::InvalidScenario);
    bad = sc;
    bad.sites.clear();
    CHECK(code_of(bad) == ErrorCode::InvalidScenario);

    std::stringstream unknown("[scenario]\nduration_s = 60\nbogus = 1\n[site.head]\n");
    CHECK_THROWS_AS(synth::parse_scenario(unknown), Error);
    CHECK_THROWS_AS(synth::load_scenario("/nonexistent/scenario.ini"), Error);
}

TEST_CASE("noise kinds round trip")
{
    for (auto k : {synth::NoiseKind::White, synth::NoiseKind::MotionSine, synth::NoiseKind::Dropout})
        CHECK(synth::parse_noise_kind(synth::to_string(k)) == k);
    CHECK_THROWS_AS(synth::parse_noise_kind("earthquake"), Error);
}
