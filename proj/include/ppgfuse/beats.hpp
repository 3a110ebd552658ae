#pragma once

#include <vector>

#include "ppgfuse/dsp.hpp"
#include "ppgfuse/signal.hpp"

namespace ppgfuse::beats {

/// Moving-average threshold peak detector with per-window offset search.
struct PeakDetectConfig {
    double ma_window_s = 0.75;
    /// Offsets as multiples of the optimization window's signal std.
    std::vector<double> offset_candidates = default_offsets();
    double opt_window_s = 60.0;
    double max_hr_bpm = 185.0;
    double min_hr_bpm = 40.0;

    static std::vector<double> default_offsets();
    /// Throws InvalidConfig on an inconsistent configuration.
    void validate() const;
};

struct IbiGateConfig {
    std::size_t run_length = 5;
    double ratio_threshold = 0.51;

    void validate() const;
};

struct HrWindowConfig {
    double window_len_s = 30.0;
    double step_s = 5.0;
    std::size_t min_valid_ibis = 3;
    double min_hr_bpm = 40.0;
    double max_hr_bpm = 185.0;
};

/// Peaks of a bandpassed signal. Every returned peak is marked valid and all
/// consecutive intervals are at least 60/max_hr_bpm seconds. An input with no
/// threshold crossings yields an empty series with no_peaks set.
/// Throws TooShort when the signal is shorter than opt_window_s.
BeatSeries detect_peaks(const Signal& bandpassed, const PeakDetectConfig& cfg = {});

/// Removes peaks closer than 60/max_hr_bpm s to the last kept peak (the later
/// peak of each offending pair is dropped).
std::vector<std::size_t> enforce_min_interval(const std::vector<std::size_t>& peaks, std::size_t min_interval);

/// An IBI is valid iff it lies in a run of run_length consecutive IBIs whose
/// min/max ratio exceeds ratio_threshold. A peak is valid iff it bounds a valid
/// IBI.
BeatSeries gate_ibis(BeatSeries beats, const IbiGateConfig& cfg = {});

/// Validity mask over raw IBI values; exposed for property testing.
std::vector<bool> gate_ibi_values(const std::vector<double>& ibis, const IbiGateConfig& cfg = {});

/// Windowed HR: HR = 60 / mean(valid IBIs overlapping the window). The window
/// grid starts at the series start time and only covers complete windows.
/// Windows with fewer than min_valid_ibis valid IBIs or an HR outside
/// [min_hr, max_hr] are missing.
HrSeries hr_from_beats(const BeatSeries& beats, const HrWindowConfig& cfg = {});

/// Bandpass, detect, gate and window: the per-channel HR pipeline.
struct PipelineConfig {
    dsp::BandpassSpec bandpass;
    PeakDetectConfig peaks;
    IbiGateConfig gate;
    HrWindowConfig hr;
};

struct ChannelBeats {
    Signal filtered;
    BeatSeries beats;
};

/// Bandpass + detect + gate.
ChannelBeats process_channel(const Signal& raw, const PipelineConfig& cfg = {});

HrSeries hr_pipeline(const Signal& raw, const PipelineConfig& cfg = {});

} // namespace ppgfuse::beats
