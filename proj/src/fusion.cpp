#include "ppgfuse/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ppgfuse/dsp.hpp"
#include "ppgfuse/error.hpp"

namespace ppgfuse::fusion {

void FusionConfig::validate() const
{
    if (!(align_window_ms > 0.0))
        throw Error(ErrorCode::InvalidConfig, "align_window_ms must be positive");
    if (!(quality_window_s > 0.0))
        throw Error(ErrorCode::InvalidConfig, "quality_window_s must be positive");
    if (power < 1)
        throw Error(ErrorCode::InvalidConfig, "power must be at least 1");
    if (!(delta > 0.0 && delta < 1.0))
        throw Error(ErrorCode::InvalidConfig, "delta must lie in (0, 1)");
}

namespace {

// Distance from `p` to the nearest element of sorted `ref`.
long nearest_distance(const std::vector<std::size_t>& ref, long p)
{
    auto it = std::lower_bound(ref.begin(), ref.end(), p, [](std::size_t r, long v) { return static_cast<long>(r) < v; });
    long best = std::numeric_limits<long>::max();
    if (it != ref.end())
        best = std::abs(static_cast<long>(*it) - p);
    if (it != ref.begin())
        best = std::min(best, std::abs(static_cast<long>(*std::prev(it)) - p));
    return best;
}

std::vector<std::size_t> peaks_in(const std::vector<std::size_t>& peaks, std::size_t lo, std::size_t hi)
{
    std::vector<std::size_t> out;
    for (std::size_t p : peaks)
        if (p >= lo && p < hi)
            out.push_back(p);
    return out;
}

long samples_of(double ms, double rate) { return static_cast<long>(std::llround(ms * 1e-3 * rate)); }

} // namespace

LagEstimate estimate_lag(const std::vector<std::size_t>& reference_peaks, const std::vector<std::size_t>& peaks,
                         long max_lag, long tolerance)
{
    LagEstimate best;
    if (reference_peaks.empty() || peaks.empty())
        return best;
    double best_residual = std::numeric_limits<double>::infinity();
    bool have = false;
    for (long lag = -max_lag; lag <= max_lag; ++lag) {
        std::size_t matched = 0;
        double residual = 0.0;
        for (std::size_t p : peaks) {
            const long d = nearest_distance(reference_peaks, static_cast<long>(p) + lag);
            if (d <= tolerance) {
                ++matched;
                residual += static_cast<double>(d) * static_cast<double>(d);
            }
        }
        const bool better = !have || matched > best.matched ||
                            (matched == best.matched && residual < best_residual) ||
                            (matched == best.matched && residual == best_residual && std::abs(lag) < std::abs(best.lag_samples));
        if (better) {
            have = true;
            best.lag_samples = lag;
            best.matched = matched;
            best_residual = residual;
        }
    }
    best.clamped = max_lag > 0 && std::abs(best.lag_samples) >= max_lag;
    return best;
}

std::vector<double> shift_samples(const std::vector<double>& x, long lag)
{
    const auto n = static_cast<long>(x.size());
    std::vector<double> out(x.size());
    for (long t = 0; t < n; ++t)
        out[static_cast<std::size_t>(t)] = x[static_cast<std::size_t>(std::clamp(t - lag, 0L, n - 1))];
    return out;
}

std::size_t choose_reference(const std::vector<std::vector<sqi::BeatQuality>>& scores)
{
    std::size_t best = 0;
    double best_mean = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < scores.size(); ++i) {
        double m = -2.0;
        if (!scores[i].empty()) {
            double sum = 0.0;
            for (const auto& s : scores[i])
                sum += s.r;
            m = sum / static_cast<double>(scores[i].size());
        }
        if (m > best_mean) {
            best_mean = m;
            best = i;
        }
    }
    return best;
}

Alignment align_channels(const AlignedSet& signals, const std::vector<BeatSeries>& beats, std::size_t reference,
                         const FusionConfig& cfg)
{
    cfg.validate();
    if (beats.size() != signals.channel_count())
        throw Error(ErrorCode::LengthMismatch, "one beat series per channel required");
    if (reference >= beats.size() || beats[reference].peak_indices.empty())
        throw Error(ErrorCode::NoReferenceBeats, "reference channel has no beats");

    const double rate = signals.sample_rate_hz();
    const std::size_t n = signals.length();
    const long max_lag = samples_of(cfg.align_window_ms, rate);
    const long tolerance = samples_of(cfg.align_window_ms / 2.0, rate);
    const auto& ref = beats[reference].peak_indices;
    const auto window = static_cast<std::size_t>(std::llround(cfg.quality_window_s * rate));
    const std::size_t n_windows = (n + window - 1) / window;

    Alignment out;
    out.reference = reference;
    std::vector<Signal> shifted;
    for (std::size_t c = 0; c < signals.channel_count(); ++c) {
        const auto& x = signals[c].samples();
        const auto est = c == reference ? LagEstimate{} : estimate_lag(ref, beats[c].peak_indices, max_lag, tolerance);
        out.lags.push_back(est.lag_samples);
        out.clamped.push_back(est.clamped);

        std::vector<long> per_window(n_windows, est.lag_samples);
        if (cfg.align_mode == AlignMode::PerWindow && c != reference) {
            for (std::size_t w = 0; w < n_windows; ++w) {
                const std::size_t lo = w * window;
                const std::size_t hi = std::min(n, lo + window);
                const auto mine = peaks_in(beats[c].peak_indices, lo, hi);
                const auto theirs = peaks_in(ref, lo > static_cast<std::size_t>(max_lag) ? lo - static_cast<std::size_t>(max_lag) : 0,
                                             std::min(n, hi + static_cast<std::size_t>(max_lag)));
                if (!mine.empty() && !theirs.empty())
                    per_window[w] = estimate_lag(theirs, mine, max_lag, tolerance).lag_samples;
            }
            out.window_lags.push_back(per_window);
        } else if (cfg.align_mode == AlignMode::PerWindow) {
            out.window_lags.push_back(per_window);
        }

        std::vector<double> y(n);
        const auto len = static_cast<long>(n);
        for (std::size_t t = 0; t < n; ++t) {
            const long lag = per_window[std::min(t / window, n_windows - 1)];
            y[t] = x[static_cast<std::size_t>(std::clamp(static_cast<long>(t) - lag, 0L, len - 1))];
        }
        shifted.push_back(signals[c].with_samples(std::move(y)));

        BeatSeries moved = beats[c];
        moved.peak_indices.clear();
        moved.valid.clear();
        for (std::size_t k = 0; k < beats[c].peak_indices.size(); ++k) {
            const std::size_t p = beats[c].peak_indices[k];
            const long q = static_cast<long>(p) + per_window[std::min(p / window, n_windows - 1)];
            if (q < 0 || q >= len)
                continue;
            if (!moved.peak_indices.empty() && static_cast<std::size_t>(q) <= moved.peak_indices.back())
                continue;
            moved.peak_indices.push_back(static_cast<std::size_t>(q));
            moved.valid.push_back(beats[c].valid.empty() || beats[c].valid[k]);
        }
        moved.ibi_valid.assign(moved.peak_indices.size() > 1 ? moved.peak_indices.size() - 1 : 0, false);
        for (std::size_t k = 0; k + 1 < moved.peak_indices.size(); ++k)
            moved.ibi_valid[k] = moved.valid[k] && moved.valid[k + 1];
        out.beats.push_back(std::move(moved));
    }
    out.signals = make_aligned_unchecked(std::move(shifted));
    return out;
}

QualityTrace window_quality(const std::vector<sqi::BeatQuality>& scores, std::size_t signal_len, double rate_hz,
                            const FusionConfig& cfg)
{
    cfg.validate();
    QualityTrace out;
    out.delta = cfg.delta;
    if (signal_len == 0)
        return out;
    const auto window = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(cfg.quality_window_s * rate_hz)));
    const std::size_t n_windows = (signal_len + window - 1) / window;
    std::vector<double> sum(n_windows, 0.0);
    std::vector<std::size_t> count(n_windows, 0);
    for (const auto& s : scores) {
        if (s.peak_index >= signal_len)
            continue;
        sum[s.peak_index / window] += s.r;
        ++count[s.peak_index / window];
    }
    for (std::size_t w = 0; w < n_windows; ++w) {
        const std::size_t lo = w * window;
        const std::size_t hi = std::min(signal_len, lo + window);
        out.window_centers_s.push_back(0.5 * static_cast<double>(lo + hi) / rate_hz);
        const double q = count[w] ? sum[w] / static_cast<double>(count[w]) : cfg.delta;
        out.window_values.push_back(std::clamp(q, cfg.delta, 1.0));
    }
    out.q = dsp::interpolate_knots(out.window_centers_s, out.window_values, signal_len, rate_hz);
    return out;
}

std::vector<double> normalize_windows(const std::vector<double>& x, double rate_hz, double window_s)
{
    const auto window = std::max<std::size_t>(2, static_cast<std::size_t>(std::llround(window_s * rate_hz)));
    std::vector<double> out(x.size(), 0.0);
    for (std::size_t lo = 0; lo < x.size(); lo += window) {
        std::size_t hi = std::min(x.size(), lo + window);
        // A short tail is normalized together with the previous window.
        if (x.size() - hi < window / 2)
            hi = x.size();
        const std::span<const double> seg(x.data() + lo, hi - lo);
        const double m = dsp::mean(seg);
        const double sd = dsp::stddev(seg);
        if (sd > 0.0)
            for (std::size_t i = lo; i < hi; ++i)
                out[i] = (x[i] - m) / sd;
        if (hi == x.size())
            break;
    }
    return out;
}

std::vector<double> fusion_weights(const std::vector<QualityTrace>& traces, std::size_t t, const FusionConfig& cfg)
{
    std::vector<double> w(traces.size());
    double total = 0.0;
    for (std::size_t i = 0; i < traces.size(); ++i) {
        w[i] = std::pow(std::max(cfg.delta, traces[i].q.at(t)), cfg.power);
        total += w[i];
    }
    for (double& v : w)
        v /= total;
    return w;
}

FusedSignal fuse(const AlignedSet& signals, const std::vector<QualityTrace>& traces, const FusionConfig& cfg)
{
    cfg.validate();
    const std::size_t n = signals.length();
    const std::size_t channels = signals.channel_count();
    if (channels == 0)
        throw Error(ErrorCode::EmptySet, "nothing to fuse");
    if (traces.size() != channels)
        throw Error(ErrorCode::LengthMismatch, "one quality trace per channel required");
    for (const auto& tr : traces)
        if (tr.q.size() != n)
            throw Error(ErrorCode::LengthMismatch, "quality trace length differs from signal length");

    const double rate = signals.sample_rate_hz();
    const auto window = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(cfg.quality_window_s * rate)));
    const std::size_t n_windows = (n + window - 1) / window;

    FusedSignal out;
    out.window_s = cfg.quality_window_s;
    out.contributors.assign(n_windows, std::vector<double>(channels, 0.0));
    std::vector<double> fused(n);
    std::vector<double> w(channels);
    for (std::size_t t = 0; t < n; ++t) {
        double total = 0.0;
        for (std::size_t i = 0; i < channels; ++i) {
            w[i] = std::pow(std::max(cfg.delta, traces[i].q[t]), cfg.power);
            total += w[i];
        }
        double acc = 0.0;
        for (std::size_t i = 0; i < channels; ++i)
            acc += signals[i].samples()[t] * w[i];
        fused[t] = acc / total;
        auto& row = out.contributors[t / window];
        for (std::size_t i = 0; i < channels; ++i)
            row[i] += w[i] / total;
    }
    for (std::size_t k = 0; k < n_windows; ++k) {
        const std::size_t span = std::min(n, (k + 1) * window) - k * window;
        for (double& v : out.contributors[k])
            v /= static_cast<double>(span);
    }
    out.signal = Signal(std::move(fused), rate, Site::parse("fused"), signals.start_time_s());
    return out;
}

HrSeries fused_hr(const FusedSignal& fused, const beats::PipelineConfig& cfg)
{
    return beats::hr_pipeline(fused.signal, cfg);
}

SiteAnalysis analyze_site(const Signal& raw, const sqi::TemplateConfig& tmpl_cfg, const beats::PipelineConfig& cfg)
{
    auto channel = beats::process_channel(raw, cfg);
    SiteAnalysis out{std::move(channel.filtered), std::move(channel.beats), std::nullopt, {}, 0.0};
    try {
        out.tmpl = sqi::build_template(sqi::extract_segments(out.filtered, out.beats, tmpl_cfg), tmpl_cfg, raw.site());
    } catch (const Error& e) {
        if (e.code() != ErrorCode::NoCleanSegments)
            throw;
    }
    if (out.tmpl) {
        out.scores = sqi::score_beats(out.filtered, out.beats, *out.tmpl, tmpl_cfg);
        double sum = 0.0;
        for (const auto& s : out.scores)
            sum += s.r;
        out.mean_quality = out.scores.empty() ? 0.0 : sum / static_cast<double>(out.scores.size());
    }
    return out;
}

FusionRun run_fusion(const AlignedSet& raw, const PipelineConfig& cfg)
{
    cfg.fusion.validate();
    FusionRun run;
    std::vector<Signal> filtered;
    std::vector<BeatSeries> beats;
    std::vector<std::vector<sqi::BeatQuality>> scores;
    for (const auto& s : raw.signals()) {
        run.sites.push_back(analyze_site(s, cfg.tmpl, cfg.beats));
        filtered.push_back(run.sites.back().filtered);
        beats.push_back(run.sites.back().beats);
        scores.push_back(run.sites.back().scores);
    }

    const auto filtered_set = make_aligned_unchecked(std::move(filtered));
    std::size_t reference = choose_reference(scores);
    if (beats[reference].peak_indices.empty()) {
        for (std::size_t i = 0; i < beats.size(); ++i)
            if (!beats[i].peak_indices.empty())
                reference = i;
    }
    if (beats[reference].peak_indices.empty()) {
        // Nothing to align against: keep channels as they are.
        run.alignment.signals = filtered_set;
        run.alignment.beats = beats;
        run.alignment.reference = reference;
        run.alignment.lags.assign(beats.size(), 0);
        run.alignment.clamped.assign(beats.size(), false);
    } else {
        run.alignment = align_channels(filtered_set, beats, reference, cfg.fusion);
    }

    const double rate = raw.sample_rate_hz();
    const std::size_t n = raw.length();
    const auto window = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(cfg.fusion.quality_window_s * rate)));
    std::vector<Signal> mixed;
    for (std::size_t c = 0; c < raw.channel_count(); ++c) {
        auto moved = scores[c];
        for (auto& s : moved) {
            long lag = run.alignment.lags[c];
            if (!run.alignment.window_lags.empty()) {
                const auto& wl = run.alignment.window_lags[c];
                lag = wl[std::min(s.peak_index / window, wl.size() - 1)];
            }
            s.peak_index = static_cast<std::size_t>(std::clamp(static_cast<long>(s.peak_index) + lag, 0L,
                                                               static_cast<long>(n) - 1));
        }
        run.traces.push_back(window_quality(moved, n, rate, cfg.fusion));

        const auto& x = run.alignment.signals[c];
        mixed.push_back(cfg.fusion.normalize_windows
                            ? x.with_samples(normalize_windows(x.samples(), rate, cfg.fusion.quality_window_s))
                            : x);
    }
    run.fused = fuse(make_aligned_unchecked(std::move(mixed)), run.traces, cfg.fusion);
    run.hr = fused_hr(run.fused, cfg.beats);
    return run;
}

} // namespace ppgfuse::fusion
