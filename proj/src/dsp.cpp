#include "ppgfuse/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <numeric>

#include <unsupported/Eigen/FFT>

#include "ppgfuse/error.hpp"

namespace ppgfuse::dsp {

namespace {

using cd = std::complex<double>;

cd section_response(const Biquad& s, double omega)
{
    const cd z1 = std::polar(1.0, -omega);
    const cd z2 = z1 * z1;
    return (s.b[0] + s.b[1] * z1 + s.b[2] * z2) / (s.a[0] + s.a[1] * z1 + s.a[2] * z2);
}

// Transposed direct form II over a buffer, in place, with initial state.
void run_section(const Biquad& s, std::vector<double>& x, double z1, double z2)
{
    for (double& v : x) {
        const double in = v;
        const double out = s.b[0] * in + z1;
        z1 = s.b[1] * in - s.a[1] * out + z2;
        z2 = s.b[2] * in - s.a[2] * out;
        v = out;
    }
}

// Runs the cascade with each section started in the steady state it would
// reach for a constant input equal to x[0].
void run_cascade(std::span<const Biquad> sections, std::vector<double>& x)
{
    if (x.empty())
        return;
    double level = x.front();
    for (const auto& s : sections) {
        const double dc = (s.b[0] + s.b[1] + s.b[2]) / (s.a[0] + s.a[1] + s.a[2]);
        const double out = dc * level;
        const double z1 = out - s.b[0] * level;
        const double z2 = s.b[2] * level - s.a[2] * out;
        run_section(s, x, z1, z2);
        level = out;
    }
}

} // namespace

std::vector<Biquad> design_bandpass(const BandpassSpec& spec, double rate)
{
    if (!(spec.low_hz > 0.0 && spec.low_hz < spec.high_hz && spec.high_hz < rate / 2.0))
        throw Error(ErrorCode::UnstableDesign, "band edges must satisfy 0 < low < high < rate/2");
    if (spec.order < 1 || spec.order > 8)
        throw Error(ErrorCode::UnstableDesign, "order must be within [1, 8]");

    const int n = spec.order;
    const double fs2 = 2.0 * rate;
    const double w1 = fs2 * std::tan(std::numbers::pi * spec.low_hz / rate);
    const double w2 = fs2 * std::tan(std::numbers::pi * spec.high_hz / rate);
    const double bw = w2 - w1;
    const double w0 = std::sqrt(w1 * w2);

    std::vector<cd> digital_poles;
    for (int k = 0; k < n; ++k) {
        const cd proto = std::polar(1.0, std::numbers::pi * (2.0 * k + n + 1.0) / (2.0 * n));
        const cd half = proto * bw / 2.0;
        const cd root = std::sqrt(half * half - w0 * w0);
        for (const cd s : {half + root, half - root})
            digital_poles.push_back((fs2 + s) / (fs2 - s));
    }

    const double omega0 = 2.0 * std::atan(w0 / fs2);
    std::vector<Biquad> sections;
    for (const cd p : digital_poles) {
        if (p.imag() <= 0.0)
            continue;
        Biquad s;
        s.b = {1.0, 0.0, -1.0};
        s.a = {1.0, -2.0 * p.real(), std::norm(p)};
        const double gain = std::abs(section_response(s, omega0));
        for (double& c : s.b)
            c /= gain;
        sections.push_back(s);
    }
    if (sections.size() != static_cast<std::size_t>(n))
        throw Error(ErrorCode::UnstableDesign, "band too narrow for a biquad realization");
    for (const auto& s : sections) {
        if (s.a[2] >= 1.0)
            throw Error(ErrorCode::UnstableDesign, "pole on or outside the unit circle");
    }
    return sections;
}

std::size_t bandpass_pad_length(const BandpassSpec& spec, double rate)
{
    return 3 * static_cast<std::size_t>(std::ceil(rate / spec.low_hz));
}

std::vector<double> filtfilt(std::span<const Biquad> sections, std::span<const double> x, std::size_t pad)
{
    const std::size_t n = x.size();
    if (n <= pad || n < 2)
        throw Error(ErrorCode::TooShort, "need more than " + std::to_string(pad) + " samples, got " + std::to_string(n));

    std::vector<double> ext;
    ext.reserve(n + 2 * pad);
    for (std::size_t i = pad; i >= 1; --i)
        ext.push_back(2.0 * x[0] - x[i]);
    ext.insert(ext.end(), x.begin(), x.end());
    for (std::size_t i = 1; i <= pad; ++i)
        ext.push_back(2.0 * x[n - 1] - x[n - 1 - i]);

    run_cascade(sections, ext);
    std::reverse(ext.begin(), ext.end());
    run_cascade(sections, ext);
    std::reverse(ext.begin(), ext.end());

    return {ext.begin() + static_cast<std::ptrdiff_t>(pad), ext.begin() + static_cast<std::ptrdiff_t>(pad + n)};
}

std::vector<double> bandpass(std::span<const double> x, double rate, const BandpassSpec& spec)
{
    const auto sections = design_bandpass(spec, rate);
    return filtfilt(sections, x, bandpass_pad_length(spec, rate));
}

Signal bandpass(const Signal& signal, const BandpassSpec& spec)
{
    return signal.with_samples(bandpass(signal.samples(), signal.sample_rate_hz(), spec));
}

std::vector<double> moving_average_samples(std::span<const double> x, std::size_t window)
{
    const std::size_t n = x.size();
    window = std::max<std::size_t>(window, 1);
    std::vector<double> prefix(n + 1, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        prefix[i + 1] = prefix[i] + x[i];

    const auto left = static_cast<std::ptrdiff_t>((window - 1) / 2);
    const auto right = static_cast<std::ptrdiff_t>(window / 2);
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto c = static_cast<std::ptrdiff_t>(i);
        const auto lo = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, c - left));
        const auto hi = static_cast<std::size_t>(std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(n) - 1, c + right));
        out[i] = (prefix[hi + 1] - prefix[lo]) / static_cast<double>(hi - lo + 1);
    }
    return out;
}

std::vector<double> moving_average(std::span<const double> x, double window_s, double rate_hz)
{
    const auto window = static_cast<std::size_t>(std::max(1.0, std::round(window_s * rate_hz)));
    return moving_average_samples(x, window);
}

std::vector<double> resample_to_n(std::span<const double> x, std::size_t n)
{
    if (x.size() < 2 || n < 2)
        throw Error(ErrorCode::TooShort, "resampling needs at least two input and output points");
    if (x.size() == n)
        return {x.begin(), x.end()};
    std::vector<double> out(n);
    const double scale = static_cast<double>(x.size() - 1) / static_cast<double>(n - 1);
    for (std::size_t k = 0; k < n; ++k) {
        const double pos = static_cast<double>(k) * scale;
        const auto i = std::min(static_cast<std::size_t>(pos), x.size() - 2);
        const double frac = pos - static_cast<double>(i);
        out[k] = x[i] + frac * (x[i + 1] - x[i]);
    }
    out.back() = x.back();
    return out;
}

std::vector<double> resample_rate(std::span<const double> x, double from_hz, double to_hz)
{
    if (x.size() < 2 || from_hz == to_hz)
        return {x.begin(), x.end()};
    const double step = from_hz / to_hz;
    const auto n = static_cast<std::size_t>(std::floor(static_cast<double>(x.size() - 1) / step + 1e-9)) + 1;
    std::vector<double> out(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double pos = static_cast<double>(k) * step;
        const auto i = std::min(static_cast<std::size_t>(pos), x.size() - 2);
        const double frac = pos - static_cast<double>(i);
        out[k] = x[i] + frac * (x[i + 1] - x[i]);
    }
    return out;
}

double mean(std::span<const double> x)
{
    if (x.empty())
        return 0.0;
    return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double stddev(std::span<const double> x)
{
    if (x.empty())
        return 0.0;
    const double m = mean(x);
    double ss = 0.0;
    for (double v : x)
        ss += (v - m) * (v - m);
    return std::sqrt(ss / static_cast<double>(x.size()));
}

namespace {
bool is_degenerate(std::span<const double> x, double sd)
{
    double scale = 0.0;
    for (double v : x)
        scale = std::max(scale, std::abs(v));
    return sd <= 1e-12 * std::max(scale, 1e-300);
}
} // namespace

std::vector<double> zscore(std::span<const double> x)
{
    if (x.size() < 2)
        throw Error(ErrorCode::TooShort, "z-score needs at least two samples");
    const double m = mean(x);
    const double sd = stddev(x);
    if (is_degenerate(x, sd))
        throw Error(ErrorCode::ZeroVariance, "constant segment");
    std::vector<double> out(x.size());
    std::transform(x.begin(), x.end(), out.begin(), [&](double v) { return (v - m) / sd; });
    return out;
}

double pearson(std::span<const double> a, std::span<const double> b)
{
    if (a.size() != b.size())
        throw Error(ErrorCode::LengthMismatch, "pearson inputs differ in length");
    if (a.size() < 2)
        throw Error(ErrorCode::TooShort, "pearson needs at least two samples");
    const double ma = mean(a);
    const double mb = mean(b);
    double sab = 0.0;
    double saa = 0.0;
    double sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double da = a[i] - ma;
        const double db = b[i] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    const auto n = static_cast<double>(a.size());
    if (is_degenerate(a, std::sqrt(saa / n)) || is_degenerate(b, std::sqrt(sbb / n)))
        throw Error(ErrorCode::ZeroVariance, "pearson input is constant");
    return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

std::vector<double> interpolate_knots(std::span<const double> centers_s, std::span<const double> values,
                                      std::size_t n, double rate_hz)
{
    if (centers_s.size() != values.size())
        throw Error(ErrorCode::LengthMismatch, "knot centers and values differ in length");
    std::vector<double> out(n, 0.0);
    if (centers_s.empty())
        return out;
    std::size_t k = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / rate_hz;
        while (k + 1 < centers_s.size() && centers_s[k + 1] <= t)
            ++k;
        if (t <= centers_s.front()) {
            out[i] = values.front();
        } else if (k + 1 >= centers_s.size()) {
            out[i] = values.back();
        } else {
            const double frac = (t - centers_s[k]) / (centers_s[k + 1] - centers_s[k]);
            out[i] = values[k] + frac * (values[k + 1] - values[k]);
        }
    }
    return out;
}

double percentile(std::vector<double> values, double pct)
{
    if (values.empty())
        return std::nan("");
    std::sort(values.begin(), values.end());
    const double pos = std::clamp(pct, 0.0, 100.0) / 100.0 * static_cast<double>(values.size() - 1);
    const auto i = static_cast<std::size_t>(std::floor(pos));
    if (i + 1 >= values.size())
        return values.back();
    const double frac = pos - static_cast<double>(i);
    return values[i] + frac * (values[i + 1] - values[i]);
}

double median(std::vector<double> values)
{
    return percentile(std::move(values), 50.0);
}

double Spectrum::band_power(double low_hz, double high_hz) const
{
    double total = 0.0;
    for (std::size_t k = 0; k < freq_hz.size(); ++k) {
        if (freq_hz[k] >= low_hz && freq_hz[k] <= high_hz)
            total += power[k];
    }
    return total;
}

Spectrum power_spectrum(std::span<const double> x, double rate_hz)
{
    Spectrum out;
    if (x.empty())
        return out;
    Eigen::FFT<double> fft;
    std::vector<double> in(x.begin(), x.end());
    std::vector<std::complex<double>> bins;
    fft.fwd(bins, in);
    const std::size_t n = in.size();
    const std::size_t half = n / 2;
    out.freq_hz.resize(half + 1);
    out.power.resize(half + 1);
    for (std::size_t k = 0; k <= half; ++k) {
        out.freq_hz[k] = static_cast<double>(k) * rate_hz / static_cast<double>(n);
        out.power[k] = std::norm(bins[k]) / static_cast<double>(n);
    }
    return out;
}

} // namespace ppgfuse::dsp
