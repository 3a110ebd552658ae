#pragma once

#include <vector>

#include "ppgfuse/beats.hpp"
#include "ppgfuse/signal.hpp"
#include "ppgfuse/sqi.hpp"

namespace ppgfuse::fusion {

enum class AlignMode {
    /// One lag per channel for the whole recording.
    ConstantLag,
    /// One lag per channel per quality window.
    PerWindow,
};

struct FusionConfig {
    double align_window_ms = 150.0;
    double quality_window_s = 30.0;
    int power = 6;
    double delta = 1e-3;
    AlignMode align_mode = AlignMode::ConstantLag;
    /// Z-score each channel per quality window before mixing.
    bool normalize_windows = true;

    void validate() const;
};

struct LagEstimate {
    long lag_samples = 0;
    std::size_t matched = 0;
    /// Best lag sits on the edge of the search window: the true offset may be
    /// larger than the window allows.
    bool clamped = false;
};

/// Lag that, added to `peaks`, maximizes how many land within
/// +-tolerance of a reference peak. Ties go to the smaller summed squared
/// residual, then to the smaller |lag|.
LagEstimate estimate_lag(const std::vector<std::size_t>& reference_peaks, const std::vector<std::size_t>& peaks,
                         long max_lag, long tolerance);

/// out[t] = x[t - lag], with edges held at the first/last sample.
std::vector<double> shift_samples(const std::vector<double>& x, long lag);

struct Alignment {
    AlignedSet signals;
    std::vector<BeatSeries> beats;
    std::size_t reference = 0;
    /// Recording-level lag per channel (samples).
    std::vector<long> lags;
    /// Per-window lags (PerWindow mode only), [channel][window].
    std::vector<std::vector<long>> window_lags;
    std::vector<bool> clamped;
};

/// Index of the channel with the highest mean beat quality.
std::size_t choose_reference(const std::vector<std::vector<sqi::BeatQuality>>& scores);

/// Shifts every non-reference channel so its peaks line up with the
/// reference's. Throws NoReferenceBeats if the reference has no peaks.
Alignment align_channels(const AlignedSet& signals, const std::vector<BeatSeries>& beats, std::size_t reference,
                         const FusionConfig& cfg = {});

/// Mean beat correlation per window, clamped to [delta, 1] (delta for empty
/// windows), interpolated linearly between window centers.
QualityTrace window_quality(const std::vector<sqi::BeatQuality>& scores, std::size_t signal_len, double rate_hz,
                            const FusionConfig& cfg = {});

/// Z-scores x independently over consecutive windows; constant windows map to
/// zeros.
std::vector<double> normalize_windows(const std::vector<double>& x, double rate_hz, double window_s);

struct FusedSignal {
    Signal signal;
    /// Mean normalized weight per quality window, [window][channel].
    std::vector<std::vector<double>> contributors;
    double window_s = 30.0;
};

/// Normalized weights max(delta, q_i[t])^power / sum_j max(delta, q_j[t])^power.
std::vector<double> fusion_weights(const std::vector<QualityTrace>& traces, std::size_t t, const FusionConfig& cfg = {});

/// Quality-weighted mean of the channels, sample by sample.
FusedSignal fuse(const AlignedSet& signals, const std::vector<QualityTrace>& traces, const FusionConfig& cfg = {});

HrSeries fused_hr(const FusedSignal& fused, const beats::PipelineConfig& cfg = {});

struct PipelineConfig {
    beats::PipelineConfig beats;
    sqi::TemplateConfig tmpl;
    FusionConfig fusion;
};

/// Per-site intermediate products of a fusion run.
struct SiteAnalysis {
    Signal filtered;
    BeatSeries beats;
    std::optional<BeatTemplate> tmpl;
    std::vector<sqi::BeatQuality> scores;
    double mean_quality = 0.0;
};

SiteAnalysis analyze_site(const Signal& raw, const sqi::TemplateConfig& tmpl_cfg, const beats::PipelineConfig& cfg);

struct FusionRun {
    std::vector<SiteAnalysis> sites;
    Alignment alignment;
    std::vector<QualityTrace> traces;
    FusedSignal fused;
    HrSeries hr;
};

/// Whole chain: per-site beats and templates, alignment, quality traces,
/// fusion, and HR of the fused waveform.
FusionRun run_fusion(const AlignedSet& raw, const PipelineConfig& cfg = {});

} // namespace ppgfuse::fusion
