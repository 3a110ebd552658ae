#pragma once

#include "ppgfuse/beats.hpp"
#include "ppgfuse/signal.hpp"

namespace ppgfuse::ecg {

/// Pan-Tompkins constants; defaults follow the original formulation.
struct PanTompkinsConfig {
    double band_low_hz = 5.0;
    double band_high_hz = 15.0;
    double integration_window_s = 0.150;
    double refractory_s = 0.200;
    /// Candidates closer than this to the previous QRS need a steep slope.
    double twave_window_s = 0.360;
    double refine_window_s = 0.025;
    double learning_s = 2.0;
    double min_duration_s = 10.0;
};

/// Bandpass, derivative, squaring, moving-window integration, adaptive
/// dual thresholds with search-back. R peaks are refined to the raw-signal
/// maximum within +-refine_window_s. Throws TooShort below min_duration_s.
BeatSeries pan_tompkins_rpeaks(const EcgSignal& ecg, const PanTompkinsConfig& cfg = {});

/// R peaks -> IBI gate -> the same windowed aggregation used for PPG.
HrSeries ground_truth_hr(const EcgSignal& ecg, const beats::IbiGateConfig& gate = {},
                         const beats::HrWindowConfig& hr = {}, const PanTompkinsConfig& cfg = {});

HrSeries hr_from_rpeaks(const BeatSeries& rpeaks, const beats::IbiGateConfig& gate = {},
                        const beats::HrWindowConfig& hr = {});

} // namespace ppgfuse::ecg
