#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "ppgfuse/signal.hpp"

namespace ppgfuse::dsp {

/// Butterworth bandpass. `order` is the order of the lowpass prototype; the
/// digital filter has 2*order poles realized as `order` biquad sections and is
/// applied forward-backward.
struct BandpassSpec {
    double low_hz = 0.6;
    double high_hz = 3.3;
    int order = 2;
};

/// Second-order section in transposed direct form II, a0 normalized to 1.
struct Biquad {
    std::array<double, 3> b{};
    std::array<double, 3> a{1.0, 0.0, 0.0};
};

/// Designs the cascade via the bilinear transform with prewarped band edges.
/// Each section is scaled to unit magnitude at the geometric centre frequency.
/// Throws UnstableDesign when 0 < low < high < rate/2 does not hold.
std::vector<Biquad> design_bandpass(const BandpassSpec& spec, double sample_rate_hz);

/// Samples of reflect padding used on each side by the zero-phase pass.
std::size_t bandpass_pad_length(const BandpassSpec& spec, double sample_rate_hz);

/// Zero-phase bandpass: odd-reflection padding of 3x the low-cutoff period,
/// steady-state initial conditions, forward then backward pass.
/// Throws TooShort if the input is not longer than the padding.
std::vector<double> filtfilt(std::span<const Biquad> sections, std::span<const double> x, std::size_t pad);

Signal bandpass(const Signal& signal, const BandpassSpec& spec = {});
std::vector<double> bandpass(std::span<const double> x, double sample_rate_hz, const BandpassSpec& spec = {});

/// Centered moving mean; the window shrinks at the edges. Even windows extend
/// one sample further to the right than to the left.
std::vector<double> moving_average(std::span<const double> x, double window_s, double rate_hz);
std::vector<double> moving_average_samples(std::span<const double> x, std::size_t window);

/// Linear interpolation to n points over the normalized index axis. Endpoints
/// are preserved. Throws TooShort if len(x) < 2 or n < 2.
std::vector<double> resample_to_n(std::span<const double> x, std::size_t n);

/// Linear-interpolation rate conversion, keeping the first sample time.
std::vector<double> resample_rate(std::span<const double> x, double from_hz, double to_hz);

double mean(std::span<const double> x);
/// Population standard deviation (divides by N).
double stddev(std::span<const double> x);

/// (x - mean) / std with the population std. Throws ZeroVariance for constant
/// input and TooShort for fewer than two samples.
std::vector<double> zscore(std::span<const double> x);

/// Pearson correlation. Throws LengthMismatch, TooShort or ZeroVariance.
double pearson(std::span<const double> a, std::span<const double> b);

/// Per-sample piecewise-linear interpolation through (center, value) knots,
/// held constant before the first and after the last knot. Centers are in
/// seconds from sample 0 and must be increasing.
std::vector<double> interpolate_knots(std::span<const double> centers_s, std::span<const double> values,
                                      std::size_t n, double rate_hz);

/// Linear-interpolation percentile (same convention as numpy's default).
double percentile(std::vector<double> values, double pct);
double median(std::vector<double> values);

/// One-sided periodogram |X(f)|^2 / N at bins k * rate / N for k <= N/2.
struct Spectrum {
    std::vector<double> freq_hz;
    std::vector<double> power;
    /// Sum of power over bins with low <= f <= high.
    [[nodiscard]] double band_power(double low_hz, double high_hz) const;
};
Spectrum power_spectrum(std::span<const double> x, double rate_hz);

} // namespace ppgfuse::dsp
