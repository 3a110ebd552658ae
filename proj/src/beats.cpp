#include "ppgfuse/beats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ppgfuse/error.hpp"

namespace ppgfuse::beats {

std::vector<double> PeakDetectConfig::default_offsets()
{
    std::vector<double> out;
    for (int i = 0; i <= 20; ++i)
        out.push_back(i / 20.0);
    return out;
}

void PeakDetectConfig::validate() const
{
    if (offset_candidates.empty() || !std::is_sorted(offset_candidates.begin(), offset_candidates.end()))
        throw Error(ErrorCode::InvalidConfig, "offset candidates must be non-empty and sorted");
    if (offset_candidates.front() < 0.0)
        throw Error(ErrorCode::InvalidConfig, "offset candidates must be non-negative");
    if (!(ma_window_s > 0.0) || !(opt_window_s > 0.0))
        throw Error(ErrorCode::InvalidConfig, "window lengths must be positive");
    if (!(min_hr_bpm > 0.0 && min_hr_bpm < max_hr_bpm))
        throw Error(ErrorCode::InvalidConfig, "HR bounds must satisfy 0 < min < max");
}

void IbiGateConfig::validate() const
{
    if (run_length < 2)
        throw Error(ErrorCode::InvalidConfig, "run_length must be at least 2");
    if (!(ratio_threshold > 0.0 && ratio_threshold < 1.0))
        throw Error(ErrorCode::InvalidConfig, "ratio_threshold must lie in (0, 1)");
}

std::vector<std::size_t> enforce_min_interval(const std::vector<std::size_t>& peaks, std::size_t min_interval)
{
    std::vector<std::size_t> kept;
    kept.reserve(peaks.size());
    for (std::size_t p : peaks) {
        if (!kept.empty() && p - kept.back() < min_interval)
            continue;
        kept.push_back(p);
    }
    return kept;
}

namespace {

// Argmax of every run of samples strictly above threshold inside [lo, hi).
// Runs touching lo or hi are discarded because their maximum may lie outside.
std::vector<std::size_t> crossing_peaks(std::span<const double> x, std::span<const double> threshold,
                                        std::size_t lo, std::size_t hi)
{
    std::vector<std::size_t> peaks;
    std::size_t i = lo;
    while (i < hi) {
        if (x[i] <= threshold[i]) {
            ++i;
            continue;
        }
        const std::size_t begin = i;
        std::size_t best = i;
        while (i < hi && x[i] > threshold[i]) {
            if (x[i] > x[best])
                best = i;
            ++i;
        }
        if (begin > lo && i < hi)
            peaks.push_back(best);
    }
    return peaks;
}

double interval_variance(const std::vector<std::size_t>& peaks, double rate, const PeakDetectConfig& cfg)
{
    constexpr double inf = std::numeric_limits<double>::infinity();
    if (peaks.size() < 4)
        return inf;
    std::vector<double> ibis;
    for (std::size_t i = 1; i < peaks.size(); ++i)
        ibis.push_back(static_cast<double>(peaks[i] - peaks[i - 1]) / rate);
    const double m = dsp::mean(ibis);
    const double hr = 60.0 / m;
    if (hr < cfg.min_hr_bpm || hr > cfg.max_hr_bpm)
        return inf;
    const double sd = dsp::stddev(ibis);
    return sd * sd;
}

} // namespace

BeatSeries detect_peaks(const Signal& bandpassed, const PeakDetectConfig& cfg)
{
    cfg.validate();
    const double rate = bandpassed.sample_rate_hz();
    const auto& x = bandpassed.samples();
    const std::size_t n = x.size();
    if (bandpassed.duration_s() + 1e-9 < cfg.opt_window_s)
        throw Error(ErrorCode::TooShort, "signal shorter than the offset optimization window");

    BeatSeries out;
    out.source_site = bandpassed.site();
    out.sample_rate_hz = rate;
    out.start_time_s = bandpassed.start_time_s();
    out.signal_length = n;

    const auto min_interval = static_cast<std::size_t>(std::ceil(60.0 / cfg.max_hr_bpm * rate - 1e-9));
    const auto ma = dsp::moving_average(x, cfg.ma_window_s, rate);
    const auto window = static_cast<std::size_t>(std::round(cfg.opt_window_s * rate));
    const std::size_t n_windows = std::max<std::size_t>(1, n / window);

    std::vector<double> threshold(n);
    std::vector<double> candidate(n);
    for (std::size_t w = 0; w < n_windows; ++w) {
        const std::size_t lo = w * window;
        const std::size_t hi = (w + 1 == n_windows) ? n : lo + window;
        const std::span<const double> seg(x.data() + lo, hi - lo);
        const double sd = dsp::stddev(seg);

        double best_score = std::numeric_limits<double>::infinity();
        double best_offset = cfg.offset_candidates.front();
        for (double k : cfg.offset_candidates) {
            for (std::size_t i = lo; i < hi; ++i)
                candidate[i] = ma[i] + k * sd;
            auto peaks = enforce_min_interval(crossing_peaks(x, candidate, lo, hi), min_interval);
            const double score = interval_variance(peaks, rate, cfg);
            if (score < best_score) {
                best_score = score;
                best_offset = k;
            }
        }
        for (std::size_t i = lo; i < hi; ++i)
            threshold[i] = ma[i] + best_offset * sd;
    }

    out.peak_indices = enforce_min_interval(crossing_peaks(x, threshold, 0, n), min_interval);
    out.valid.assign(out.peak_indices.size(), true);
    if (out.peak_indices.size() >= 2)
        out.ibi_valid.assign(out.peak_indices.size() - 1, true);
    out.no_peaks = out.peak_indices.empty();
    return out;
}

std::vector<bool> gate_ibi_values(const std::vector<double>& ibis, const IbiGateConfig& cfg)
{
    cfg.validate();
    const std::size_t m = ibis.size();
    const std::size_t run = cfg.run_length;
    std::vector<bool> ok(m, false);
    if (m < run)
        return ok;
    for (std::size_t s = 0; s + run <= m; ++s) {
        const auto [lo, hi] = std::minmax_element(ibis.begin() + static_cast<std::ptrdiff_t>(s),
                                                  ibis.begin() + static_cast<std::ptrdiff_t>(s + run));
        if (*hi > 0.0 && *lo / *hi > cfg.ratio_threshold)
            std::fill(ok.begin() + static_cast<std::ptrdiff_t>(s), ok.begin() + static_cast<std::ptrdiff_t>(s + run), true);
    }
    return ok;
}

BeatSeries gate_ibis(BeatSeries beats, const IbiGateConfig& cfg)
{
    const std::size_t n = beats.peak_indices.size();
    std::vector<double> ibis;
    for (std::size_t i = 1; i < n; ++i)
        ibis.push_back(static_cast<double>(beats.peak_indices[i] - beats.peak_indices[i - 1]) / beats.sample_rate_hz);
    beats.ibi_valid = gate_ibi_values(ibis, cfg);
    beats.valid.assign(n, false);
    for (std::size_t j = 0; j < beats.ibi_valid.size(); ++j) {
        if (beats.ibi_valid[j]) {
            beats.valid[j] = true;
            beats.valid[j + 1] = true;
        }
    }
    return beats;
}

HrSeries hr_from_beats(const BeatSeries& beats, const HrWindowConfig& cfg)
{
    HrSeries out;
    out.window_len_s = cfg.window_len_s;
    out.step_s = cfg.step_s;
    const double rate = beats.sample_rate_hz;
    const double duration = static_cast<double>(beats.signal_length) / rate;

    std::vector<double> t;
    for (std::size_t p : beats.peak_indices)
        t.push_back(static_cast<double>(p) / rate);

    std::size_t first = 0;
    for (std::size_t k = 0;; ++k) {
        const double ws = static_cast<double>(k) * cfg.step_s;
        const double we = ws + cfg.window_len_s;
        if (we > duration + 1e-9)
            break;
        out.timestamps_s.push_back(beats.start_time_s + ws + cfg.window_len_s / 2.0);

        while (first + 1 < t.size() && t[first + 1] <= ws)
            ++first;
        double sum = 0.0;
        std::size_t count = 0;
        for (std::size_t j = first; j + 1 < t.size() && t[j] < we; ++j) {
            if (t[j + 1] > ws && j < beats.ibi_valid.size() && beats.ibi_valid[j]) {
                sum += t[j + 1] - t[j];
                ++count;
            }
        }
        std::optional<double> hr;
        if (count >= cfg.min_valid_ibis && count > 0) {
            const double bpm = 60.0 / (sum / static_cast<double>(count));
            if (bpm >= cfg.min_hr_bpm && bpm <= cfg.max_hr_bpm)
                hr = bpm;
        }
        out.hr_bpm.push_back(hr);
    }
    return out;
}

ChannelBeats process_channel(const Signal& raw, const PipelineConfig& cfg)
{
    auto filtered = dsp::bandpass(raw, cfg.bandpass);
    auto detected = detect_peaks(filtered, cfg.peaks);
    return {std::move(filtered), gate_ibis(std::move(detected), cfg.gate)};
}

HrSeries hr_pipeline(const Signal& raw, const PipelineConfig& cfg)
{
    return hr_from_beats(process_channel(raw, cfg).beats, cfg.hr);
}

} // namespace ppgfuse::beats
