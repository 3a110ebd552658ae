#pragma once

#include <cmath>
#include <algorithm>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <numbers>
#include <random>
#include <vector>

#include <Eigen/Dense>

namespace testing {

inline std::vector<double> sine(double freq_hz, double rate_hz, std::size_t n, double amp = 1.0, double phase = 0.0)
{
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i)
        x[i] = amp * std::sin(2.0 * std::numbers::pi * freq_hz * static_cast<double>(i) / rate_hz + phase);
    return x;
}

inline std::vector<double> gaussian_noise(std::size_t n, std::uint64_t seed, double sd = 1.0)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> d(0.0, sd);
    std::vector<double> x(n);
    for (double& v : x)
        v = d(rng);
    return x;
}

struct SineFit {
    double amplitude;
    double phase;  // of a*sin(wt + phase)
};

/// Least-squares fit of a*sin(wt) + b*cos(wt) + c over samples [lo, hi).
inline SineFit fit_sine(const std::vector<double>& x, double freq_hz, double rate_hz, std::size_t lo, std::size_t hi)
{
    const auto m = static_cast<Eigen::Index>(hi - lo);
    Eigen::MatrixXd a(m, 3);
    Eigen::VectorXd y(m);
    for (Eigen::Index r = 0; r < m; ++r) {
        const double t = static_cast<double>(lo + static_cast<std::size_t>(r)) / rate_hz;
        a(r, 0) = std::sin(2.0 * std::numbers::pi * freq_hz * t);
        a(r, 1) = std::cos(2.0 * std::numbers::pi * freq_hz * t);
        a(r, 2) = 1.0;
        y(r) = x[lo + static_cast<std::size_t>(r)];
    }
    const Eigen::VectorXd c = a.colPivHouseholderQr().solve(y);
    return {std::hypot(c(0), c(1)), std::atan2(c(1), c(0))};
}

/// Direct O(N*K) DFT power |X_k|^2 / N summed over bins with lo <= f_k <= hi.
inline double dft_band_power(const std::vector<double>& x, double rate_hz, double lo, double hi)
{
    const std::size_t n = x.size();
    double total = 0.0;
    for (std::size_t k = 0; k <= n / 2; ++k) {
        const double f = static_cast<double>(k) * rate_hz / static_cast<double>(n);
        if (f < lo || f > hi)
            continue;
        std::complex<double> acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double ang = -2.0 * std::numbers::pi * static_cast<double>(k * i % n) / static_cast<double>(n);
            acc += x[i] * std::complex<double>(std::cos(ang), std::sin(ang));
        }
        total += std::norm(acc) / static_cast<double>(n);
    }
    return total;
}

/// |X(f)| at one frequency by direct projection.
inline double dft_magnitude(const std::vector<double>& x, double freq_hz, double rate_hz)
{
    std::complex<double> acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double ang = -2.0 * std::numbers::pi * freq_hz * static_cast<double>(i) / rate_hz;
        acc += x[i] * std::complex<double>(std::cos(ang), std::sin(ang));
    }
    return std::abs(acc);
}

inline double mean_of(const std::vector<double>& x)
{
    double s = 0.0;
    for (double v : x)
        s += v;
    return s / static_cast<double>(x.size());
}

inline double pop_std(const std::vector<double>& x)
{
    const double m = mean_of(x);
    double s = 0.0;
    for (double v : x)
        s += (v - m) * (v - m);
    return std::sqrt(s / static_cast<double>(x.size()));
}

inline double corr(const std::vector<double>& a, const std::vector<double>& b)
{
    const double ma = mean_of(a);
    const double mb = mean_of(b);
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    return sab / std::sqrt(saa * sbb);
}

struct MatchCounts {
    std::size_t true_positive = 0;
    std::size_t truth = 0;
    std::size_t detected = 0;

    [[nodiscard]] double sensitivity() const { return truth ? double(true_positive) / double(truth) : 1.0; }
    [[nodiscard]] double predictivity() const { return detected ? double(true_positive) / double(detected) : 1.0; }
};

/// One-to-one matching of sorted peak indices within +-tolerance samples,
/// each truth peak taking the closest unused detection.
inline MatchCounts match_peaks(const std::vector<std::size_t>& truth, const std::vector<std::size_t>& detected,
                               std::size_t tolerance)
{
    MatchCounts m{0, truth.size(), detected.size()};
    std::vector<bool> used(detected.size(), false);
    for (std::size_t t : truth) {
        std::size_t best = detected.size();
        std::size_t best_d = tolerance + 1;
        for (std::size_t k = 0; k < detected.size(); ++k) {
            const std::size_t d = detected[k] > t ? detected[k] - t : t - detected[k];
            if (!used[k] && d < best_d) {
                best_d = d;
                best = k;
            }
        }
        if (best < detected.size()) {
            used[best] = true;
            ++m.true_positive;
        }
    }
    return m;
}

/// Fresh directory under the system temp path, removed on destruction.
struct TempDir {
    std::filesystem::path path;
    TempDir()
    {
        std::random_device rd;
        path = std::filesystem::temp_directory_path() / ("ppgfuse-test-" + std::to_string(rd()) + std::to_string(rd()));
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    [[nodiscard]] std::string operator/(const std::string& name) const { return (path / name).string(); }
};

inline std::string slurp(const std::string& path)
{
    std::ifstream f(path, std::ios::binary);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

} // namespace testing
