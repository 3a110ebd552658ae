#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace ppgfuse {

/// Default common sample rate every channel is brought to at ingestion.
inline constexpr double kDefaultRateHz = 128.0;

/// Body location of a sensor. Known sites have fixed labels; anything else is
/// carried verbatim as an "Other" site.
class Site {
public:
    enum class Kind { Head, Sternum, Wrist, Ankle, Other };

    Site() = default;
    explicit Site(Kind kind, std::string other_name = {});

    /// Parses "head", "sternum", "wrist", "ankle" (case-insensitive); any other
    /// non-empty label becomes Other(label).
    static Site parse(const std::string& label);

    [[nodiscard]] Kind kind() const noexcept { return kind_; }
    [[nodiscard]] std::string label() const;

    friend bool operator==(const Site& a, const Site& b) { return a.label() == b.label(); }
    friend bool operator<(const Site& a, const Site& b) { return a.label() < b.label(); }

private:
    Kind kind_ = Kind::Other;
    std::string name_;
};

/// Uniformly sampled single-channel waveform. Validated on construction:
/// positive rate and finite samples.
class Signal {
public:
    Signal() = default;
    Signal(std::vector<double> samples, double sample_rate_hz, Site site = {}, double start_time_s = 0.0);

    [[nodiscard]] const std::vector<double>& samples() const noexcept { return samples_; }
    [[nodiscard]] double sample_rate_hz() const noexcept { return rate_; }
    [[nodiscard]] const Site& site() const noexcept { return site_; }
    [[nodiscard]] double start_time_s() const noexcept { return start_; }
    [[nodiscard]] std::size_t size() const noexcept { return samples_.size(); }
    [[nodiscard]] double duration_s() const noexcept { return static_cast<double>(samples_.size()) / rate_; }
    [[nodiscard]] double end_time_s() const noexcept { return start_ + duration_s(); }

    /// Same metadata, new samples.
    [[nodiscard]] Signal with_samples(std::vector<double> samples) const;

private:
    std::vector<double> samples_;
    double rate_ = kDefaultRateHz;
    Site site_;
    double start_ = 0.0;
};

/// ECG channel; same shape as Signal, distinct role.
struct EcgSignal {
    Signal signal;
};

/// Signals guaranteed to share start time, length and sample rate.
class AlignedSet {
public:
    AlignedSet() = default;

    [[nodiscard]] const std::vector<Signal>& signals() const noexcept { return signals_; }
    [[nodiscard]] std::size_t channel_count() const noexcept { return signals_.size(); }
    [[nodiscard]] std::size_t length() const noexcept { return signals_.empty() ? 0 : signals_.front().size(); }
    [[nodiscard]] double sample_rate_hz() const noexcept { return signals_.empty() ? kDefaultRateHz : signals_.front().sample_rate_hz(); }
    [[nodiscard]] double start_time_s() const noexcept { return signals_.empty() ? 0.0 : signals_.front().start_time_s(); }
    [[nodiscard]] const Signal& operator[](std::size_t i) const { return signals_.at(i); }

private:
    friend AlignedSet validate_aligned_set(const std::vector<Signal>& signals);
    friend AlignedSet make_aligned_unchecked(std::vector<Signal> signals);
    std::vector<Signal> signals_;
};

/// Minimum common overlap accepted by validate_aligned_set.
inline constexpr double kMinOverlapS = 60.0;

/// Trims all signals to their common time range. Throws EmptySet, RateMismatch
/// or NoOverlap (< 60 s common range).
AlignedSet validate_aligned_set(const std::vector<Signal>& signals);

/// Wraps signals already known to be aligned (same start, rate, length).
/// Throws LengthMismatch / RateMismatch if they are not.
AlignedSet make_aligned_unchecked(std::vector<Signal> signals);

/// Detected systolic (or R) peaks of one channel plus IBI gating results.
///
/// ibi_valid has peak_indices.size()-1 entries (one per interval, empty when
/// fewer than two peaks); valid has one entry per peak.
struct BeatSeries {
    std::vector<std::size_t> peak_indices;
    std::vector<bool> valid;
    std::vector<bool> ibi_valid;
    Site source_site;
    double sample_rate_hz = kDefaultRateHz;
    double start_time_s = 0.0;
    std::size_t signal_length = 0;
    bool no_peaks = false;

    [[nodiscard]] std::size_t size() const noexcept { return peak_indices.size(); }
    [[nodiscard]] double time_of(std::size_t ordinal) const {
        return start_time_s + static_cast<double>(peak_indices.at(ordinal)) / sample_rate_hz;
    }
};

/// Per-sample quality weights bounded to [delta, 1].
struct QualityTrace {
    std::vector<double> q;
    double delta = 1e-3;
    std::vector<double> window_centers_s; // relative to the signal start
    std::vector<double> window_values;
};

/// Windowed HR estimates; missing windows hold std::nullopt.
struct HrSeries {
    std::vector<double> timestamps_s;
    std::vector<std::optional<double>> hr_bpm;
    double window_len_s = 30.0;
    double step_s = 5.0;

    [[nodiscard]] std::size_t size() const noexcept { return timestamps_s.size(); }
    [[nodiscard]] std::size_t missing_count() const;
};

/// Averaged, z-scored two-interval beat shape of one site.
struct BeatTemplate {
    std::vector<double> values;
    Site site;
    std::size_t n_contributing = 0;
};

} // namespace ppgfuse
