#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "ppgfuse/signal.hpp"

namespace ppgfuse::io {

/// Longest run of missing samples that is repaired by interpolation.
inline constexpr double kMaxGapS = 0.25;
/// Largest tolerated relative deviation of a timestamp step from the median.
inline constexpr double kRateJitter = 0.01;

struct Recording {
    std::vector<Signal> signals;
    std::optional<EcgSignal> ecg;
    /// Repairs made while loading (interpolated gaps, resampling).
    std::vector<std::string> warnings;
};

/// CSV with header `time_s,site_1:<label>,...,site_n:<label>[,ecg]`.
/// Empty or "nan" cells are missing samples. Channels are resampled to
/// `target_rate_hz` when the inferred rate differs.
/// Throws ParseError (with line and column), RateInferenceError or
/// NonFiniteSample (a gap longer than kMaxGapS).
Recording parse_recording(std::istream& is, double target_rate_hz = kDefaultRateHz);
Recording load_recording(const std::string& path, double target_rate_hz = kDefaultRateHz);

/// All channels must share rate, start and length.
void write_recording(std::ostream& os, const std::vector<Signal>& signals, const std::optional<EcgSignal>& ecg);

/// `time_s,hr_bpm`; missing windows are empty cells.
void write_hr(std::ostream& os, const HrSeries& hr);
HrSeries parse_hr(std::istream& is, double window_len_s = 30.0, double step_s = 5.0);

/// `site,sample_index,time_s,valid`.
void write_beats(std::ostream& os, const std::vector<BeatSeries>& series);

/// Writes to a temporary sibling and renames it over `path`.
void write_file_atomic(const std::string& path, const std::string& content);

std::string format_fixed(double v, int decimals);
/// Shortest text that parses back to the same double.
std::string format_exact(double v);

} // namespace ppgfuse::io
