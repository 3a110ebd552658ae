#include "ppgfuse/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>

#include "ppgfuse/beats.hpp"
#include "ppgfuse/config.hpp"
#include "ppgfuse/dsp.hpp"
#include "ppgfuse/error.hpp"
#include "ppgfuse/io.hpp"

namespace ppgfuse::synth {

namespace {

constexpr double kBandLow = 0.6;
constexpr double kBandHigh = 3.3;

// Independent, reproducible stream per (seed, purpose, index).
std::mt19937_64 stream(std::uint64_t seed, std::uint64_t purpose, std::uint64_t index)
{
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(purpose), static_cast<std::uint32_t>(index)};
    return std::mt19937_64(seq);
}

double band_power(std::span<const double> x, double rate)
{
    return dsp::power_spectrum(x, rate).band_power(kBandLow, kBandHigh);
}

// Scales `noise` so that band_power(signal) / band_power(noise) = 10^(snr/10).
void scale_to_snr(std::vector<double>& noise, std::span<const double> signal, double rate, double snr_db)
{
    const double ps = band_power(signal, rate);
    const double pn = band_power(noise, rate);
    if (!(pn > 0.0) || !(ps > 0.0))
        return;
    const double gain = std::sqrt(ps / pn * std::pow(10.0, -snr_db / 10.0));
    for (double& v : noise)
        v *= gain;
}

// Raised-cosine ramps of `ramp` samples at both ends.
double taper(std::size_t i, std::size_t len, std::size_t ramp)
{
    if (ramp == 0)
        return 1.0;
    const std::size_t edge = std::min(i, len - 1 - i);
    if (edge >= ramp)
        return 1.0;
    return 0.5 - 0.5 * std::cos(std::numbers::pi * static_cast<double>(edge) / static_cast<double>(ramp));
}

void render_pulse(std::vector<double>& out, double rate, double center_s, double ibi_s, const PulseShape& shape,
                  double amplitude)
{
    const double k = std::sqrt(ibi_s);
    const double rise = shape.rise_s * k;
    const double decay = shape.decay_s * k;
    const double d_center = shape.dicrotic_delay * ibi_s;
    const double d_width = shape.dicrotic_width_s * k;
    const double lo_s = center_s - 6.0 * rise;
    const double hi_s = center_s + std::max(6.0 * decay, d_center + 6.0 * d_width);
    const auto n = static_cast<long>(out.size());
    const long lo = std::max(0L, static_cast<long>(std::floor(lo_s * rate)));
    const long hi = std::min(n - 1, static_cast<long>(std::ceil(hi_s * rate)));
    for (long i = lo; i <= hi; ++i) {
        const double tau = static_cast<double>(i) / rate - center_s;
        const double w = tau < 0.0 ? rise : decay;
        double v = std::exp(-0.5 * tau * tau / (w * w));
        const double dt = tau - d_center;
        v += shape.dicrotic_amp * std::exp(-0.5 * dt * dt / (d_width * d_width));
        out[static_cast<std::size_t>(i)] += amplitude * v;
    }
}

void render_ecg_beat(std::vector<double>& out, double rate, double t, double ibi_s)
{
    struct Wave {
        double offset, amp, width;
    };
    const double qt = 0.25 * std::sqrt(ibi_s);
    const Wave waves[] = {
        {-0.16, 0.10, 0.025}, {-0.03, -0.10, 0.010}, {0.0, 1.0, 0.010}, {0.03, -0.15, 0.010}, {qt, 0.25, 0.04},
    };
    const auto n = static_cast<long>(out.size());
    for (const auto& w : waves) {
        const double c = t + w.offset;
        const long lo = std::max(0L, static_cast<long>(std::floor((c - 6.0 * w.width) * rate)));
        const long hi = std::min(n - 1, static_cast<long>(std::ceil((c + 6.0 * w.width) * rate)));
        for (long i = lo; i <= hi; ++i) {
            const double tau = static_cast<double>(i) / rate - c;
            out[static_cast<std::size_t>(i)] += w.amp * std::exp(-0.5 * tau * tau / (w.width * w.width));
        }
    }
}

std::size_t to_index(double t, double rate) { return static_cast<std::size_t>(std::llround(t * rate)); }

BeatSeries truth_series(const std::vector<double>& times, double shift_s, double rate, std::size_t n, Site site)
{
    BeatSeries b;
    b.source_site = std::move(site);
    b.sample_rate_hz = rate;
    b.signal_length = n;
    for (double t : times) {
        const double s = t + shift_s;
        if (s < 0.0)
            continue;
        const std::size_t i = to_index(s, rate);
        if (i >= n || (!b.peak_indices.empty() && i <= b.peak_indices.back()))
            continue;
        b.peak_indices.push_back(i);
    }
    b.valid.assign(b.peak_indices.size(), true);
    if (b.peak_indices.size() > 1)
        b.ibi_valid.assign(b.peak_indices.size() - 1, true);
    return b;
}

} // namespace

void SynthScenario::validate() const
{
    auto fail = [](const std::string& what) { throw Error(ErrorCode::InvalidScenario, what); };
    if (!(duration_s > 0.0))
        fail("duration_s must be positive");
    if (!(rate_hz > 2.0 * kBandHigh))
        fail("rate_hz too low");
    if (hr_profile.empty())
        fail("hr_profile is empty");
    for (std::size_t i = 0; i < hr_profile.size(); ++i) {
        if (hr_profile[i].bpm < 40.0 || hr_profile[i].bpm > 185.0)
            fail("hr_profile values must lie within [40, 185] bpm");
        if (i > 0 && !(hr_profile[i].time_s > hr_profile[i - 1].time_s))
            fail("hr_profile times must be increasing");
    }
    if (sites.empty())
        fail("at least one site is required");
    for (const auto& s : sites) {
        if (std::abs(s.lag_ms) > 150.0)
            fail("lag_ms of " + s.site.label() + " exceeds +-150 ms");
        if (!(s.shape.rise_s > 0.0 && s.shape.decay_s > 0.0 && s.shape.dicrotic_width_s > 0.0))
            fail("pulse widths of " + s.site.label() + " must be positive");
    }
    for (const auto& e : noise_events) {
        if (!(e.start_s >= 0.0 && e.end_s > e.start_s && e.end_s <= duration_s + 1e-9))
            fail("noise window must lie within the recording");
        if (std::none_of(sites.begin(), sites.end(), [&](const SiteSpec& s) { return s.site == e.site; }))
            fail("noise event references unknown site " + e.site.label());
    }
    if (ibi_jitter < 0.0 || ibi_jitter > 0.2)
        fail("ibi_jitter must lie within [0, 0.2]");
}

double hr_at(const std::vector<HrKnot>& profile, double t)
{
    if (t <= profile.front().time_s)
        return profile.front().bpm;
    for (std::size_t i = 1; i < profile.size(); ++i) {
        if (t <= profile[i].time_s) {
            const auto& a = profile[i - 1];
            const auto& b = profile[i];
            return a.bpm + (b.bpm - a.bpm) * (t - a.time_s) / (b.time_s - a.time_s);
        }
    }
    return profile.back().bpm;
}

std::vector<double> beat_times(const SynthScenario& scenario)
{
    // Trapezoidal phase integration on a fine grid; crossings are located by
    // linear interpolation.
    const double dt = 1e-3;
    std::vector<double> out;
    double phase = 0.0;
    double next = 0.5;
    double prev_rate = hr_at(scenario.hr_profile, 0.0) / 60.0;
    const auto steps = static_cast<long>(std::ceil(scenario.duration_s / dt));
    for (long i = 1; i <= steps; ++i) {
        const double t = std::min(scenario.duration_s, static_cast<double>(i) * dt);
        const double t0 = static_cast<double>(i - 1) * dt;
        const double rate = hr_at(scenario.hr_profile, t) / 60.0;
        const double advance = 0.5 * (prev_rate + rate) * (t - t0);
        while (phase + advance >= next) {
            out.push_back(t0 + (next - phase) / advance * (t - t0));
            next += 1.0;
        }
        phase += advance;
        prev_rate = rate;
    }

    if (scenario.ibi_jitter > 0.0 && out.size() > 2) {
        auto rng = stream(scenario.seed, 1, 0);
        std::normal_distribution<double> normal(0.0, 1.0);
        std::vector<double> jittered(out);
        for (std::size_t k = 1; k + 1 < out.size(); ++k) {
            const double ibi = 0.5 * (out[k + 1] - out[k - 1]);
            const double shift = std::clamp(normal(rng) * scenario.ibi_jitter * ibi, -0.25 * ibi, 0.25 * ibi);
            jittered[k] = out[k] + shift;
        }
        out = std::move(jittered);
    }
    return out;
}

SynthRecording generate(const SynthScenario& scenario)
{
    scenario.validate();
    const double rate = scenario.rate_hz;
    const auto n = static_cast<std::size_t>(std::llround(scenario.duration_s * rate));
    const auto times = beat_times(scenario);

    auto ibi_of = [&](std::size_t k) {
        if (times.size() < 2)
            return 60.0 / hr_at(scenario.hr_profile, times[k]);
        return k + 1 < times.size() ? times[k + 1] - times[k] : times[k] - times[k - 1];
    };

    SynthRecording rec;
    rec.beat_times_s = times;
    const auto ramp = static_cast<std::size_t>(std::llround(0.25 * rate));

    for (std::size_t s = 0; s < scenario.sites.size(); ++s) {
        const auto& spec = scenario.sites[s];
        const double lag = spec.lag_ms * 1e-3;
        std::vector<double> pulse(n, 0.0);
        for (std::size_t k = 0; k < times.size(); ++k)
            render_pulse(pulse, rate, times[k] + lag, ibi_of(k), spec.shape, spec.amplitude);

        std::vector<double> out(pulse);
        for (std::size_t i = 0; i < n; ++i) {
            const double t = static_cast<double>(i) / rate;
            out[i] += spec.baseline + spec.wander * std::sin(2.0 * std::numbers::pi * 0.25 * t);
        }

        if (spec.sensor_snr_db) {
            auto rng = stream(scenario.seed, 2, s);
            std::normal_distribution<double> normal(0.0, 1.0);
            std::vector<double> noise(n);
            for (double& v : noise)
                v = normal(rng);
            scale_to_snr(noise, pulse, rate, *spec.sensor_snr_db);
            for (std::size_t i = 0; i < n; ++i)
                out[i] += noise[i];
        }

        for (std::size_t e = 0; e < scenario.noise_events.size(); ++e) {
            const auto& ev = scenario.noise_events[e];
            if (!(ev.site == spec.site))
                continue;
            const std::size_t lo = std::min(n, to_index(ev.start_s, rate));
            const std::size_t hi = std::min(n, to_index(ev.end_s, rate));
            if (hi <= lo + 1)
                continue;
            const std::size_t len = hi - lo;
            const std::span<const double> clean(pulse.data() + lo, len);
            auto rng = stream(scenario.seed, 3, e);

            switch (ev.kind) {
            case NoiseKind::Dropout:
                for (std::size_t i = lo; i < hi; ++i)
                    out[i] = spec.baseline;
                break;
            case NoiseKind::White: {
                std::normal_distribution<double> normal(0.0, 1.0);
                std::vector<double> noise(len);
                for (double& v : noise)
                    v = normal(rng);
                scale_to_snr(noise, clean, rate, ev.snr_db);
                for (std::size_t i = 0; i < len; ++i)
                    out[lo + i] += noise[i] * taper(i, len, ramp);
                break;
            }
            case NoiseKind::MotionSine: {
                std::uniform_real_distribution<double> freq(0.5, 3.0);
                std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
                const double f0 = freq(rng);
                const double drift_period = 8.0 + 8.0 * std::uniform_real_distribution<double>(0.0, 1.0)(rng);
                const double phi0 = angle(rng);
                std::vector<double> noise(len);
                std::vector<double> modulation(len);
                double phase = phi0;
                for (std::size_t i = 0; i < len; ++i) {
                    const double t = static_cast<double>(i) / rate;
                    const double f = f0 * (1.0 + 0.1 * std::sin(2.0 * std::numbers::pi * t / drift_period));
                    phase += 2.0 * std::numbers::pi * f / rate;
                    noise[i] = std::sin(phase) + 0.5 * std::sin(2.0 * phase + 0.7);
                    modulation[i] = 0.3 * std::sin(phase + 1.3);
                }
                scale_to_snr(noise, clean, rate, ev.snr_db);
                for (std::size_t i = 0; i < len; ++i) {
                    const double w = taper(i, len, ramp);
                    out[lo + i] += w * (noise[i] + modulation[i] * clean[i]);
                }
                break;
            }
            }
        }

        rec.signals.emplace_back(std::move(out), rate, spec.site, 0.0);
        rec.truth_beats.push_back(truth_series(times, lag, rate, n, spec.site));
    }

    std::vector<double> ecg(n, 0.0);
    for (std::size_t k = 0; k < times.size(); ++k)
        render_ecg_beat(ecg, rate, times[k], ibi_of(k));
    if (scenario.ecg_snr_db) {
        double power = 0.0;
        for (double v : ecg)
            power += v * v;
        power /= static_cast<double>(std::max<std::size_t>(n, 1));
        const double sd = std::sqrt(power * std::pow(10.0, -*scenario.ecg_snr_db / 10.0));
        auto rng = stream(scenario.seed, 4, 0);
        std::normal_distribution<double> normal(0.0, sd);
        for (double& v : ecg)
            v += normal(rng);
    }
    rec.ecg = EcgSignal{Signal(std::move(ecg), rate, Site::parse("ecg"), 0.0)};
    rec.truth_rpeaks = truth_series(times, 0.0, rate, n, Site::parse("ecg"));
    rec.truth_hr = beats::hr_from_beats(rec.truth_rpeaks);
    return rec;
}

SynthScenario burst_scenario(std::uint64_t seed, const BurstSuiteOptions& opts)
{
    SynthScenario sc;
    sc.duration_s = opts.duration_s;
    sc.seed = seed;
    sc.ibi_jitter = 0.02;

    auto rng = stream(seed, 10, 0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    // HR sweep: a triangle from min_bpm up to max_bpm and back, with random
    // knots every 60-180 s perturbing it by up to +-8 bpm.
    sc.hr_profile.clear();
    const double span = opts.max_bpm - opts.min_bpm;
    auto sweep = [&](double t) {
        const double u = t / opts.duration_s;
        return opts.min_bpm + span * (u < 0.5 ? 2.0 * u : 2.0 - 2.0 * u);
    };
    double t = 0.0;
    sc.hr_profile.push_back({0.0, opts.min_bpm});
    while (t < opts.duration_s) {
        t = std::min(opts.duration_s, t + 60.0 + 120.0 * unit(rng));
        const double bpm = std::clamp(sweep(t) + 16.0 * (unit(rng) - 0.5), opts.min_bpm, opts.max_bpm);
        sc.hr_profile.push_back({t, bpm});
    }
    // Make sure the sweep actually reaches the top of the range.
    std::erase_if(sc.hr_profile, [&](const HrKnot& k) { return std::abs(k.time_s - opts.duration_s / 2.0) < 1.0; });
    sc.hr_profile.insert(std::upper_bound(sc.hr_profile.begin(), sc.hr_profile.end(), opts.duration_s / 2.0,
                                          [](double v, const HrKnot& k) { return v < k.time_s; }),
                         HrKnot{opts.duration_s / 2.0, opts.max_bpm});

    const auto site = [](const char* label) { return Site::parse(label); };
    SiteSpec head{site("head"), {0.06, 0.16, 0.35, 0.38, 0.06}, 1.0, 0.0, 2.0, 0.3, opts.sensor_snr_db};
    SiteSpec sternum{site("sternum"), {0.07, 0.18, 0.25, 0.40, 0.07}, 0.6, -30.0, -1.0, 0.5, opts.sensor_snr_db};
    SiteSpec wrist{site("wrist"), {0.08, 0.20, 0.20, 0.42, 0.08}, 1.5, 40.0, 0.5, 0.4, opts.sensor_snr_db};
    SiteSpec ankle{site("ankle"), {0.09, 0.22, 0.15, 0.45, 0.09}, 0.8, 70.0, 3.0, 0.2, opts.sensor_snr_db};
    sc.sites = {head, sternum, wrist, ankle};

    if (opts.with_bursts) {
        // Back-to-back bursts, each on one site; sites rotate in a freshly
        // shuffled order every cycle so no two bursts overlap.
        std::vector<std::size_t> order{0, 1, 2, 3};
        std::size_t slot = order.size();
        double cursor = unit(rng) * opts.gap_max_s;
        while (true) {
            const double len = opts.burst_min_s + (opts.burst_max_s - opts.burst_min_s) * unit(rng);
            if (cursor + len > opts.duration_s)
                break;
            if (slot == order.size()) {
                std::shuffle(order.begin(), order.end(), rng);
                slot = 0;
            }
            sc.noise_events.push_back({sc.sites[order[slot++]].site, cursor, cursor + len, NoiseKind::MotionSine,
                                       opts.burst_snr_db});
            cursor += len + unit(rng) * opts.gap_max_s;
        }
    }
    return sc;
}

double noise_coverage(const SynthScenario& scenario, const Site& site)
{
    double covered = 0.0;
    for (const auto& e : scenario.noise_events)
        if (e.site == site)
            covered += e.end_s - e.start_s;
    return covered / scenario.duration_s;
}

std::string to_string(NoiseKind kind)
{
    switch (kind) {
    case NoiseKind::White: return "white";
    case NoiseKind::MotionSine: return "motion_sine";
    case NoiseKind::Dropout: return "dropout";
    }
    return "white";
}

NoiseKind parse_noise_kind(const std::string& text)
{
    if (text == "white")
        return NoiseKind::White;
    if (text == "motion_sine")
        return NoiseKind::MotionSine;
    if (text == "dropout")
        return NoiseKind::Dropout;
    throw Error(ErrorCode::InvalidScenario, "unknown noise kind '" + text + "'");
}

namespace {

std::vector<HrKnot> parse_profile(const std::string& text)
{
    std::vector<HrKnot> out;
    std::istringstream is(text);
    std::string token;
    while (is >> token) {
        if (token.back() == ',')
            token.pop_back();
        const auto colon = token.find(':');
        if (colon == std::string::npos)
            throw Error(ErrorCode::InvalidScenario, "hr_profile entries must be time:bpm, got '" + token + "'");
        try {
            out.push_back({std::stod(token.substr(0, colon)), std::stod(token.substr(colon + 1))});
        } catch (const std::exception&) {
            throw Error(ErrorCode::InvalidScenario, "bad hr_profile entry '" + token + "'");
        }
    }
    return out;
}

std::optional<double> optional_db(const config::IniDocument& doc, const std::string& key)
{
    if (!doc.has(key))
        return std::nullopt;
    const auto text = doc.get<std::string>(key);
    if (text == "none" || text == "inf")
        return std::nullopt;
    return doc.get<double>(key);
}

std::string format_double(double v)
{
    return io::format_exact(v);
}

} // namespace

SynthScenario parse_scenario(std::istream& is)
{
    config::IniDocument doc;
    try {
        doc = config::IniDocument::parse(is);
    } catch (const Error& e) {
        throw Error(ErrorCode::InvalidScenario, e.detail());
    }
    SynthScenario sc;
    try {
        sc.duration_s = doc.get<double>("scenario.duration_s", sc.duration_s);
        sc.rate_hz = doc.get<double>("scenario.rate_hz", sc.rate_hz);
        sc.seed = doc.get<std::uint64_t>("scenario.seed", sc.seed);
        sc.ibi_jitter = doc.get<double>("scenario.ibi_jitter", sc.ibi_jitter);
        sc.ecg_snr_db = optional_db(doc, "scenario.ecg_snr_db");
        if (doc.has("scenario.hr_profile"))
            sc.hr_profile = parse_profile(doc.get<std::string>("scenario.hr_profile"));

        for (const auto& section : doc.sections()) {
            if (section.rfind("site.", 0) == 0) {
                SiteSpec spec;
                spec.site = Site::parse(section.substr(5));
                const auto key = [&](const char* k) { return section + "." + k; };
                spec.amplitude = doc.get<double>(key("amplitude"), spec.amplitude);
                spec.lag_ms = doc.get<double>(key("lag_ms"), spec.lag_ms);
                spec.baseline = doc.get<double>(key("baseline"), spec.baseline);
                spec.wander = doc.get<double>(key("wander"), spec.wander);
                spec.sensor_snr_db = optional_db(doc, key("sensor_snr_db"));
                spec.shape.rise_s = doc.get<double>(key("rise_s"), spec.shape.rise_s);
                spec.shape.decay_s = doc.get<double>(key("decay_s"), spec.shape.decay_s);
                spec.shape.dicrotic_amp = doc.get<double>(key("dicrotic_amp"), spec.shape.dicrotic_amp);
                spec.shape.dicrotic_delay = doc.get<double>(key("dicrotic_delay"), spec.shape.dicrotic_delay);
                spec.shape.dicrotic_width_s = doc.get<double>(key("dicrotic_width_s"), spec.shape.dicrotic_width_s);
                sc.sites.push_back(spec);
            } else if (section.rfind("noise.", 0) == 0) {
                NoiseEvent ev;
                const auto key = [&](const char* k) { return section + "." + k; };
                ev.site = Site::parse(doc.get<std::string>(key("site")));
                ev.start_s = doc.get<double>(key("start_s"));
                ev.end_s = doc.get<double>(key("end_s"));
                ev.kind = parse_noise_kind(doc.get<std::string>(key("kind"), "white"));
                ev.snr_db = doc.get<double>(key("snr_db"), 0.0);
                sc.noise_events.push_back(ev);
            }
        }
    } catch (const Error& e) {
        if (e.code() == ErrorCode::InvalidScenario)
            throw;
        throw Error(ErrorCode::InvalidScenario, e.detail());
    }
    sc.validate();
    return sc;
}

SynthScenario load_scenario(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw Error(ErrorCode::InvalidScenario, "cannot open scenario file " + path);
    return parse_scenario(in);
}

void write_scenario(std::ostream& os, const SynthScenario& sc)
{
    os << "[scenario]\n";
    os << "duration_s = " << format_double(sc.duration_s) << '\n';
    os << "rate_hz = " << format_double(sc.rate_hz) << '\n';
    os << "seed = " << sc.seed << '\n';
    os << "ibi_jitter = " << format_double(sc.ibi_jitter) << '\n';
    if (sc.ecg_snr_db)
        os << "ecg_snr_db = " << format_double(*sc.ecg_snr_db) << '\n';
    os << "hr_profile =";
    for (const auto& k : sc.hr_profile)
        os << ' ' << format_double(k.time_s) << ':' << format_double(k.bpm);
    os << '\n';
    for (const auto& s : sc.sites) {
        os << "\n[site." << s.site.label() << "]\n";
        os << "amplitude = " << format_double(s.amplitude) << '\n';
        os << "lag_ms = " << format_double(s.lag_ms) << '\n';
        os << "baseline = " << format_double(s.baseline) << '\n';
        os << "wander = " << format_double(s.wander) << '\n';
        if (s.sensor_snr_db)
            os << "sensor_snr_db = " << format_double(*s.sensor_snr_db) << '\n';
        os << "rise_s = " << format_double(s.shape.rise_s) << '\n';
        os << "decay_s = " << format_double(s.shape.decay_s) << '\n';
        os << "dicrotic_amp = " << format_double(s.shape.dicrotic_amp) << '\n';
        os << "dicrotic_delay = " << format_double(s.shape.dicrotic_delay) << '\n';
        os << "dicrotic_width_s = " << format_double(s.shape.dicrotic_width_s) << '\n';
    }
    for (std::size_t i = 0; i < sc.noise_events.size(); ++i) {
        const auto& e = sc.noise_events[i];
        os << "\n[noise." << i << "]\n";
        os << "site = " << e.site.label() << '\n';
        os << "start_s = " << format_double(e.start_s) << '\n';
        os << "end_s = " << format_double(e.end_s) << '\n';
        os << "kind = " << to_string(e.kind) << '\n';
        os << "snr_db = " << format_double(e.snr_db) << '\n';
    }
}

} // namespace ppgfuse::synth
