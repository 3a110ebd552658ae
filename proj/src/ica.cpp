#include "ppgfuse/ica.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "ppgfuse/dsp.hpp"
#include "ppgfuse/error.hpp"

namespace ppgfuse::ica {

namespace {

// W <- (W W^T)^{-1/2} W
Eigen::MatrixXd symmetric_decorrelation(const Eigen::MatrixXd& w)
{
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(w * w.transpose());
    const Eigen::VectorXd inv_sqrt = eig.eigenvalues().cwiseMax(1e-300).cwiseSqrt().cwiseInverse();
    return eig.eigenvectors() * inv_sqrt.asDiagonal() * eig.eigenvectors().transpose() * w;
}

} // namespace

IcaResult ica_unmix(const Eigen::MatrixXd& data, std::size_t n_components, std::uint64_t seed, const IcaConfig& cfg)
{
    const auto m = data.rows();
    const auto samples = data.cols();
    if (m < 1 || samples < 2)
        throw Error(ErrorCode::TooShort, "ICA needs at least one channel and two samples");
    const auto n = static_cast<Eigen::Index>(n_components == 0 ? static_cast<std::size_t>(m) : n_components);
    if (n > m)
        throw Error(ErrorCode::InvalidConfig, "more components requested than channels");

    const Eigen::VectorXd means = data.rowwise().mean();
    const Eigen::MatrixXd centered = data.colwise() - means;
    const Eigen::MatrixXd cov = centered * centered.transpose() / static_cast<double>(samples);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    const Eigen::VectorXd values = eig.eigenvalues();     // ascending
    const double largest = values(m - 1);
    if (!(largest > 0.0) || values(m - n) < cfg.rank_tolerance * largest)
        throw Error(ErrorCode::SingularWhitening, "channel covariance is rank deficient");

    // Keep the n leading principal directions.
    const Eigen::MatrixXd basis = eig.eigenvectors().rightCols(n);
    const Eigen::VectorXd scale = values.tail(n).cwiseSqrt().cwiseInverse();
    const Eigen::MatrixXd whitening = scale.asDiagonal() * basis.transpose();
    const Eigen::MatrixXd z = whitening * centered;

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::MatrixXd w(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
            w(i, j) = normal(rng);
    w = symmetric_decorrelation(w);

    IcaResult out;
    Eigen::MatrixXd best_w = w;
    double best_lim = std::numeric_limits<double>::infinity();
    const double inv_samples = 1.0 / static_cast<double>(samples);
    for (int it = 1; it <= cfg.max_iterations; ++it) {
        const Eigen::MatrixXd wz = w * z;
        const Eigen::MatrixXd g = wz.array().tanh().matrix();
        const Eigen::VectorXd g_prime_mean = (1.0 - g.array().square()).rowwise().mean();
        Eigen::MatrixXd w_next = g * z.transpose() * inv_samples - g_prime_mean.asDiagonal() * w;
        w_next = symmetric_decorrelation(w_next);

        const double lim = ((w_next * w.transpose()).diagonal().cwiseAbs().array() - 1.0).abs().maxCoeff();
        w = w_next;
        out.iterations = it;
        if (lim < best_lim) {
            best_lim = lim;
            best_w = w;
        }
        if (lim < cfg.tolerance) {
            out.converged = true;
            break;
        }
    }
    if (!out.converged)
        w = best_w;

    out.unmixing = w * whitening;
    out.components = out.unmixing * centered;
    out.mixing = out.unmixing.completeOrthogonalDecomposition().pseudoInverse();
    return out;
}

IcaResult ica_unmix(const AlignedSet& signals, std::size_t n_components, std::uint64_t seed, const IcaConfig& cfg)
{
    if (signals.channel_count() < 2)
        throw Error(ErrorCode::EmptySet, "ICA needs at least two channels");
    Eigen::MatrixXd data(static_cast<Eigen::Index>(signals.channel_count()), static_cast<Eigen::Index>(signals.length()));
    for (std::size_t c = 0; c < signals.channel_count(); ++c)
        for (std::size_t t = 0; t < signals.length(); ++t)
            data(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(t)) = signals[c].samples()[t];
    return ica_unmix(data, n_components, seed, cfg);
}

double spectral_concentration(std::span<const double> x, double rate_hz, double low_hz, double high_hz)
{
    const double m = dsp::mean(x);
    std::vector<double> centered(x.begin(), x.end());
    for (double& v : centered)
        v -= m;
    const auto spec = dsp::power_spectrum(centered, rate_hz);
    double total = 0.0;
    std::size_t peak = spec.freq_hz.size();
    for (std::size_t k = 0; k < spec.freq_hz.size(); ++k) {
        if (spec.freq_hz[k] < low_hz || spec.freq_hz[k] > high_hz)
            continue;
        total += spec.power[k];
        if (peak == spec.freq_hz.size() || spec.power[k] > spec.power[peak])
            peak = k;
    }
    if (!(total > 0.0) || peak == spec.freq_hz.size())
        return 0.0;
    const double f0 = spec.freq_hz[peak];
    return spec.band_power(std::max(low_hz, f0 - 0.1), std::min(high_hz, f0 + 0.1)) / total;
}

double windowed_concentration(std::span<const double> x, double rate_hz, double window_s, double low_hz, double high_hz)
{
    const auto w = static_cast<std::size_t>(std::llround(window_s * rate_hz));
    if (w < 2 || x.size() < 2 * w)
        return spectral_concentration(x, rate_hz, low_hz, high_hz);
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i + w <= x.size(); i += w, ++count)
        sum += spectral_concentration(x.subspan(i, w), rate_hz, low_hz, high_hz);
    return sum / static_cast<double>(count);
}

std::size_t select_best_component(IcaResult& result, double rate_hz, const SelectionRule& rule)
{
    const SelectionRule score = rule ? rule : SelectionRule([](std::span<const double> x, double rate) {
        return windowed_concentration(x, rate);
    });
    std::size_t best = 0;
    double best_score = -std::numeric_limits<double>::infinity();
    std::vector<double> row;
    for (Eigen::Index c = 0; c < result.components.rows(); ++c) {
        row.resize(static_cast<std::size_t>(result.components.cols()));
        for (Eigen::Index t = 0; t < result.components.cols(); ++t)
            row[static_cast<std::size_t>(t)] = result.components(c, t);
        const double s = score(row, rate_hz);
        if (s > best_score) {
            best_score = s;
            best = static_cast<std::size_t>(c);
        }
    }
    result.chosen = best;
    result.score = best_score;
    return best;
}

IcaHrRun ica_hr(const AlignedSet& raw, const IcaHrConfig& cfg)
{
    const double rate = raw.sample_rate_hz();
    const std::size_t n = raw.length();
    const std::size_t channels = raw.channel_count();
    if (channels < 2)
        throw Error(ErrorCode::EmptySet, "ICA baseline needs at least two channels");

    std::vector<std::vector<double>> filtered;
    for (const auto& s : raw.signals())
        filtered.push_back(dsp::bandpass(s.samples(), rate, cfg.pipeline.bandpass));

    const auto chunk = std::max<std::size_t>(2, static_cast<std::size_t>(std::llround(cfg.chunk_s * rate)));
    const std::size_t n_chunks = std::max<std::size_t>(1, n / chunk);

    IcaHrRun out;
    std::vector<double> best(n, 0.0);
    for (std::size_t k = 0; k < n_chunks; ++k) {
        const std::size_t lo = k * chunk;
        const std::size_t hi = (k + 1 == n_chunks) ? n : lo + chunk;
        const auto len = static_cast<Eigen::Index>(hi - lo);
        Eigen::MatrixXd data(static_cast<Eigen::Index>(channels), len);
        Eigen::VectorXd common = Eigen::VectorXd::Zero(len);
        for (std::size_t c = 0; c < channels; ++c) {
            const std::span<const double> seg(filtered[c].data() + lo, hi - lo);
            const double m = dsp::mean(seg);
            const double sd = dsp::stddev(seg);
            for (Eigen::Index t = 0; t < len; ++t) {
                data(static_cast<Eigen::Index>(c), t) = seg[static_cast<std::size_t>(t)];
                if (sd > 0.0)
                    common(t) += (seg[static_cast<std::size_t>(t)] - m) / sd;
            }
        }

        IcaResult res;
        try {
            res = ica_unmix(data, channels, cfg.seed + k, cfg.ica);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::SingularWhitening)
                throw;
            // Degenerate chunk: fall back to the channel average.
            res.components = common.transpose();
            res.converged = false;
        }
        select_best_component(res, rate, {});
        out.chunk_scores.push_back(res.score);
        out.chunk_converged.push_back(res.converged);

        Eigen::VectorXd comp = res.components.row(static_cast<Eigen::Index>(res.chosen)).transpose();
        comp.array() -= comp.mean();
        const double sd = std::sqrt(comp.squaredNorm() / static_cast<double>(len));
        if (sd > 0.0)
            comp /= sd;
        if (comp.dot(common) < 0.0)
            comp = -comp;
        for (Eigen::Index t = 0; t < len; ++t)
            best[lo + static_cast<std::size_t>(t)] = comp(t);
    }

    out.best = Signal(std::move(best), rate, Site::parse("ica"), raw.start_time_s());
    out.hr = beats::hr_pipeline(out.best, cfg.pipeline);
    return out;
}

} // namespace ppgfuse::ica
