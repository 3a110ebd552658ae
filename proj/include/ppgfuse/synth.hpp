#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "ppgfuse/signal.hpp"

namespace ppgfuse::synth {

/// Two-component pulse: an asymmetric systolic Gaussian (separate rise and
/// decay widths) plus a dicrotic Gaussian. Widths are for a 1 s beat interval
/// and scale with sqrt(IBI).
struct PulseShape {
    double rise_s = 0.07;
    double decay_s = 0.17;
    double dicrotic_amp = 0.3;
    /// Dicrotic wave delay as a fraction of the beat interval.
    double dicrotic_delay = 0.38;
    double dicrotic_width_s = 0.07;
};

struct SiteSpec {
    Site site;
    PulseShape shape;
    double amplitude = 1.0;
    double lag_ms = 0.0;
    double baseline = 0.0;
    /// Amplitude of a 0.25 Hz respiratory baseline wander.
    double wander = 0.0;
    /// In-band SNR of continuous white sensor noise; nullopt for none.
    std::optional<double> sensor_snr_db;
};

enum class NoiseKind { White, MotionSine, Dropout };

struct NoiseEvent {
    Site site;
    double start_s = 0.0;
    double end_s = 0.0;
    NoiseKind kind = NoiseKind::White;
    /// In-band (0.6-3.3 Hz) signal-to-noise ratio inside the event.
    double snr_db = 0.0;
};

struct HrKnot {
    double time_s = 0.0;
    double bpm = 60.0;
};

struct SynthScenario {
    double duration_s = 60.0;
    double rate_hz = kDefaultRateHz;
    /// Piecewise-linear HR profile; constant before the first and after the last knot.
    std::vector<HrKnot> hr_profile{{0.0, 60.0}};
    std::vector<SiteSpec> sites;
    std::vector<NoiseEvent> noise_events;
    std::uint64_t seed = 1;
    /// Relative std of per-beat interval jitter.
    double ibi_jitter = 0.0;
    /// SNR of white noise added to the ECG (total power); nullopt for none.
    std::optional<double> ecg_snr_db;

    /// Throws InvalidScenario.
    void validate() const;
};

struct SynthRecording {
    std::vector<Signal> signals;
    EcgSignal ecg;
    std::vector<double> beat_times_s;
    /// Per site: sample index of each rendered systolic peak.
    std::vector<BeatSeries> truth_beats;
    /// R-peak sample indices of the rendered ECG.
    BeatSeries truth_rpeaks;
    HrSeries truth_hr;
};

/// Deterministic given scenario.seed.
SynthRecording generate(const SynthScenario& scenario);

/// Beat times from integrating the HR profile: a beat whenever the cumulative
/// phase crosses k + 0.5.
std::vector<double> beat_times(const SynthScenario& scenario);

double hr_at(const std::vector<HrKnot>& profile, double t);

/// Four-site scenario with a random HR sweep and disjoint motion bursts; the
/// layout used by the evaluation suite.
struct BurstSuiteOptions {
    double duration_s = 1200.0;
    double min_bpm = 55.0;
    double max_bpm = 130.0;
    double burst_min_s = 20.0;
    double burst_max_s = 40.0;
    double gap_max_s = 6.0;
    double burst_snr_db = -5.0;
    std::optional<double> sensor_snr_db = 12.0;
    bool with_bursts = true;
};
SynthScenario burst_scenario(std::uint64_t seed, const BurstSuiteOptions& opts = {});

/// Fraction of the recording covered by noise events of `site`.
double noise_coverage(const SynthScenario& scenario, const Site& site);

/// INI scenario format; see README for the keys.
SynthScenario parse_scenario(std::istream& is);
SynthScenario load_scenario(const std::string& path);
void write_scenario(std::ostream& os, const SynthScenario& scenario);

std::string to_string(NoiseKind kind);
NoiseKind parse_noise_kind(const std::string& text);

} // namespace ppgfuse::synth
