#include "ppgfuse/ecg.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>

#include "ppgfuse/dsp.hpp"
#include "ppgfuse/error.hpp"

namespace ppgfuse::ecg {

namespace {

struct Candidate {
    std::size_t index;   // integrator peak
    double integrated;   // integrator value
    double filtered;     // max |bandpassed| near the peak
    double slope;        // max |derivative| near the peak
};

double max_abs_in(const std::vector<double>& x, std::size_t center, std::size_t half)
{
    const std::size_t lo = center > half ? center - half : 0;
    const std::size_t hi = std::min(x.size() - 1, center + half);
    double m = 0.0;
    for (std::size_t i = lo; i <= hi; ++i)
        m = std::max(m, std::abs(x[i]));
    return m;
}

std::size_t argmax_in(const std::vector<double>& x, std::size_t center, std::size_t half, bool absolute)
{
    const std::size_t lo = center > half ? center - half : 0;
    const std::size_t hi = std::min(x.size() - 1, center + half);
    std::size_t best = lo;
    for (std::size_t i = lo; i <= hi; ++i) {
        const double v = absolute ? std::abs(x[i]) : x[i];
        const double b = absolute ? std::abs(x[best]) : x[best];
        if (v > b)
            best = i;
    }
    return best;
}

// Running RR statistics of the detector (all RR and the "regular" RR).
struct RrTracker {
    std::deque<double> recent;
    std::deque<double> regular;

    [[nodiscard]] double avg_regular(double fallback) const
    {
        if (regular.empty())
            return fallback;
        return std::accumulate(regular.begin(), regular.end(), 0.0) / static_cast<double>(regular.size());
    }

    void add(double rr)
    {
        const double avg2 = avg_regular(rr);
        recent.push_back(rr);
        if (recent.size() > 8)
            recent.pop_front();
        if (regular.empty() || (rr > 0.92 * avg2 && rr < 1.16 * avg2)) {
            regular.push_back(rr);
            if (regular.size() > 8)
                regular.pop_front();
        }
    }
};

} // namespace

BeatSeries pan_tompkins_rpeaks(const EcgSignal& ecg, const PanTompkinsConfig& cfg)
{
    const auto& sig = ecg.signal;
    const double rate = sig.sample_rate_hz();
    if (sig.duration_s() < cfg.min_duration_s)
        throw Error(ErrorCode::TooShort, "ECG shorter than " + std::to_string(cfg.min_duration_s) + " s");

    BeatSeries out;
    out.source_site = Site::parse("ecg");
    out.sample_rate_hz = rate;
    out.start_time_s = sig.start_time_s();
    out.signal_length = sig.size();

    const auto& raw = sig.samples();
    const std::size_t n = raw.size();
    const auto filtered = dsp::bandpass(raw, rate, {cfg.band_low_hz, cfg.band_high_hz, 2});

    // Five-point derivative, centered so the chain stays zero-phase.
    std::vector<double> deriv(n, 0.0);
    for (std::size_t i = 2; i + 2 < n; ++i)
        deriv[i] = (2.0 * filtered[i + 1] + filtered[i + 2] - filtered[i - 2] - 2.0 * filtered[i - 1]) * rate / 8.0;
    std::vector<double> squared(n);
    std::transform(deriv.begin(), deriv.end(), squared.begin(), [](double v) { return v * v; });
    const auto integrated = dsp::moving_average(squared, cfg.integration_window_s, rate);

    const auto half_window = static_cast<std::size_t>(std::llround(cfg.integration_window_s * rate / 2.0));
    const auto refractory = static_cast<std::size_t>(std::llround(cfg.refractory_s * rate));
    const auto twave = static_cast<std::size_t>(std::llround(cfg.twave_window_s * rate));

    std::vector<Candidate> cands;
    for (std::size_t i = 1; i + 1 < n; ++i) {
        if (!(integrated[i] > integrated[i - 1] && integrated[i] >= integrated[i + 1]))
            continue;
        Candidate c{i, integrated[i], max_abs_in(filtered, i, half_window), max_abs_in(deriv, i, half_window)};
        if (!cands.empty() && i - cands.back().index < refractory) {
            if (c.integrated > cands.back().integrated)
                cands.back() = c;
            continue;
        }
        cands.push_back(c);
    }
    if (cands.empty())
        return out;

    const auto learn = std::min(n, static_cast<std::size_t>(std::llround(cfg.learning_s * rate)));
    const auto learn_end = integrated.begin() + static_cast<std::ptrdiff_t>(learn);
    double spki = *std::max_element(integrated.begin(), learn_end) / 3.0;
    double npki = std::accumulate(integrated.begin(), learn_end, 0.0) / static_cast<double>(learn) / 2.0;
    double spkf = 0.0;
    double npkf = 0.0;
    for (std::size_t i = 0; i < learn; ++i) {
        spkf = std::max(spkf, std::abs(filtered[i]));
        npkf += std::abs(filtered[i]);
    }
    spkf /= 3.0;
    npkf /= 2.0 * static_cast<double>(learn);

    RrTracker rr;
    std::vector<std::size_t> qrs;       // candidate ordinals accepted as QRS
    std::vector<double> qrs_slope;
    std::size_t last_qrs_cand = 0;
    bool have_qrs = false;

    auto thresholds = [&](double& ti1, double& tf1) {
        ti1 = npki + 0.25 * (spki - npki);
        tf1 = npkf + 0.25 * (spkf - npkf);
        // Irregular rhythm: be more permissive.
        if (!rr.recent.empty() && !rr.regular.empty()) {
            const double avg1 = std::accumulate(rr.recent.begin(), rr.recent.end(), 0.0) / static_cast<double>(rr.recent.size());
            const double avg2 = rr.avg_regular(avg1);
            if (avg1 < 0.92 * avg2 || avg1 > 1.16 * avg2) {
                ti1 *= 0.5;
                tf1 *= 0.5;
            }
        }
    };

    auto accept = [&](std::size_t k, double weight) {
        const auto& c = cands[k];
        if (have_qrs)
            rr.add(static_cast<double>(c.index - cands[last_qrs_cand].index));
        spki = weight * c.integrated + (1.0 - weight) * spki;
        spkf = weight * c.filtered + (1.0 - weight) * spkf;
        qrs.push_back(k);
        qrs_slope.push_back(c.slope);
        last_qrs_cand = k;
        have_qrs = true;
    };

    for (std::size_t k = 0; k < cands.size(); ++k) {
        const auto& c = cands[k];
        double ti1 = 0.0;
        double tf1 = 0.0;
        thresholds(ti1, tf1);

        // Search back for a missed beat when the gap grew too long.
        if (have_qrs && !rr.regular.empty()) {
            const double miss = 1.66 * rr.avg_regular(0.0);
            if (static_cast<double>(c.index - cands[last_qrs_cand].index) > miss) {
                std::size_t best = cands.size();
                for (std::size_t j = last_qrs_cand + 1; j < k; ++j) {
                    if (cands[j].index - cands[last_qrs_cand].index < refractory || c.index - cands[j].index < refractory)
                        continue;
                    if (cands[j].integrated > 0.5 * ti1 && cands[j].filtered > 0.5 * tf1 &&
                        (best == cands.size() || cands[j].integrated > cands[best].integrated))
                        best = j;
                }
                if (best != cands.size()) {
                    accept(best, 0.25);
                    thresholds(ti1, tf1);
                }
            }
        }

        bool is_qrs = c.integrated > ti1 && c.filtered > tf1;
        if (is_qrs && have_qrs) {
            const std::size_t gap = c.index - cands[last_qrs_cand].index;
            if (gap < refractory)
                is_qrs = false;
            else if (gap < twave && c.slope < 0.5 * qrs_slope.back())
                is_qrs = false;
        }
        if (is_qrs) {
            accept(k, 0.125);
        } else {
            npki = 0.125 * c.integrated + 0.875 * npki;
            npkf = 0.125 * c.filtered + 0.875 * npkf;
        }
    }

    const auto refine = static_cast<std::size_t>(std::llround(cfg.refine_window_s * rate));
    for (std::size_t k : qrs) {
        const std::size_t coarse = argmax_in(filtered, cands[k].index, half_window, false);
        const std::size_t r = argmax_in(raw, coarse, refine, false);
        if (!out.peak_indices.empty() && r < out.peak_indices.back() + refractory)
            continue;
        out.peak_indices.push_back(r);
    }
    out.valid.assign(out.peak_indices.size(), true);
    if (out.peak_indices.size() > 1)
        out.ibi_valid.assign(out.peak_indices.size() - 1, true);
    out.no_peaks = out.peak_indices.empty();
    return out;
}

HrSeries hr_from_rpeaks(const BeatSeries& rpeaks, const beats::IbiGateConfig& gate, const beats::HrWindowConfig& hr)
{
    return beats::hr_from_beats(beats::gate_ibis(rpeaks, gate), hr);
}

HrSeries ground_truth_hr(const EcgSignal& ecg, const beats::IbiGateConfig& gate, const beats::HrWindowConfig& hr,
                         const PanTompkinsConfig& cfg)
{
    return hr_from_rpeaks(pan_tompkins_rpeaks(ecg, cfg), gate, hr);
}

} // namespace ppgfuse::ecg
