#include "ppgfuse/sqi.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

#include "ppgfuse/dsp.hpp"
#include "ppgfuse/error.hpp"

namespace ppgfuse::sqi {

void TemplateConfig::validate() const
{
    if (n_samples < 8)
        throw Error(ErrorCode::InvalidConfig, "template needs at least 8 samples");
    if (!(triangle_gate_r > 0.0 && triangle_gate_r < 1.0))
        throw Error(ErrorCode::InvalidConfig, "triangle gate must lie in (0, 1)");
    if (target_pool < 2)
        throw Error(ErrorCode::InvalidConfig, "target pool must be at least 2");
    if (!(rise_fraction > 0.0 && rise_fraction < 1.0))
        throw Error(ErrorCode::InvalidConfig, "rise fraction must lie in (0, 1)");
    if (!(min_hr > 0.0 && min_hr < max_hr))
        throw Error(ErrorCode::InvalidConfig, "HR bounds must satisfy 0 < min < max");
}

Segment extract_segment(const Signal& signal, const BeatSeries& beats, std::size_t ordinal, const TemplateConfig& cfg)
{
    if (ordinal == 0 || ordinal + 1 >= beats.peak_indices.size())
        return {{}, Rejection::NoNeighbors};
    const std::size_t prev = beats.peak_indices[ordinal - 1];
    const std::size_t here = beats.peak_indices[ordinal];
    const std::size_t next = beats.peak_indices[ordinal + 1];
    const double rate = signal.sample_rate_hz();
    for (const std::size_t gap : {here - prev, next - here}) {
        const double hr = 60.0 * rate / static_cast<double>(gap);
        if (hr < cfg.min_hr || hr > cfg.max_hr)
            return {{}, Rejection::HrOutOfRange};
    }
    if (next >= signal.size())
        return {{}, Rejection::NoNeighbors};

    const std::span<const double> raw(signal.samples().data() + prev, next - prev + 1);
    auto resampled = dsp::resample_to_n(raw, cfg.n_samples);
    try {
        return {dsp::zscore(resampled), Rejection::None};
    } catch (const Error& e) {
        if (e.code() != ErrorCode::ZeroVariance)
            throw;
        return {{}, Rejection::ZeroVariance};
    }
}

std::vector<std::vector<double>> extract_segments(const Signal& signal, const BeatSeries& beats,
                                                  const TemplateConfig& cfg)
{
    std::vector<std::vector<double>> out;
    for (std::size_t k = 1; k + 1 < beats.peak_indices.size(); ++k) {
        auto seg = extract_segment(signal, beats, k, cfg);
        if (seg.ok())
            out.push_back(std::move(seg.values));
    }
    return out;
}

std::vector<double> leaning_triangle(std::size_t n, double rise_fraction)
{
    if (n < 8)
        throw Error(ErrorCode::InvalidConfig, "triangle needs at least 8 samples");
    const double fall = 1.0 - rise_fraction;
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / static_cast<double>(n - 1);
        double u = 2.0 * t;
        u -= std::floor(u);
        if (i + 1 == n)
            u = 0.0;
        out[i] = u < fall ? 1.0 - u / fall : (u - fall) / rise_fraction;
    }
    return dsp::zscore(out);
}

TemplateBuild build_template_detailed(const std::vector<std::vector<double>>& segments, const TemplateConfig& cfg,
                                      Site site)
{
    cfg.validate();
    const std::size_t n = cfg.n_samples;
    const auto triangle = leaning_triangle(n, cfg.rise_fraction);

    std::vector<std::vector<double>> pool;
    std::vector<std::size_t> origin;
    for (std::size_t i = 0; i < segments.size(); ++i) {
        const auto& s = segments[i];
        if (s.size() != n)
            throw Error(ErrorCode::LengthMismatch, "segment length differs from the template length");
        std::vector<double> z;
        try {
            z = dsp::zscore(s);
        } catch (const Error&) {
            continue;
        }
        if (dsp::pearson(z, triangle) > cfg.triangle_gate_r) {
            pool.push_back(std::move(z));
            origin.push_back(i);
        }
    }
    if (pool.empty())
        throw Error(ErrorCode::NoCleanSegments, "no segment passed the triangle gate");

    TemplateBuild out;
    out.passed_gate = pool.size();

    std::vector<bool> alive(pool.size(), true);
    std::size_t count = pool.size();
    std::vector<double> sum(n, 0.0);
    for (const auto& s : pool)
        for (std::size_t j = 0; j < n; ++j)
            sum[j] += s[j];

    std::vector<double> avg(n);
    while (count > cfg.target_pool) {
        for (std::size_t j = 0; j < n; ++j)
            avg[j] = sum[j] / static_cast<double>(count);
        const auto tmpl = dsp::zscore(avg);
        // Pool members are z-scored, so r = <s, tmpl> / n.
        std::size_t worst = 0;
        double worst_r = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < pool.size(); ++i) {
            if (!alive[i])
                continue;
            const double r = std::inner_product(pool[i].begin(), pool[i].end(), tmpl.begin(), 0.0);
            if (r < worst_r || (r == worst_r && pool[i] < pool[worst])) {
                worst_r = r;
                worst = i;
            }
        }
        alive[worst] = false;
        --count;
        for (std::size_t j = 0; j < n; ++j)
            sum[j] -= pool[worst][j];
    }

    std::fill(avg.begin(), avg.end(), 0.0);
    for (std::size_t i = 0; i < pool.size(); ++i) {
        if (!alive[i])
            continue;
        out.survivors.push_back(origin[i]);
        for (std::size_t j = 0; j < n; ++j)
            avg[j] += pool[i][j];
    }
    for (double& v : avg)
        v /= static_cast<double>(count);

    out.tmpl.values = dsp::zscore(avg);
    out.tmpl.site = std::move(site);
    out.tmpl.n_contributing = count;
    return out;
}

BeatTemplate build_template(const std::vector<std::vector<double>>& segments, const TemplateConfig& cfg, Site site)
{
    return build_template_detailed(segments, cfg, std::move(site)).tmpl;
}

std::vector<BeatQuality> score_beats(const Signal& signal, const BeatSeries& beats, const BeatTemplate& tmpl,
                                     const TemplateConfig& cfg)
{
    std::vector<BeatQuality> out;
    for (std::size_t k = 1; k + 1 < beats.peak_indices.size(); ++k) {
        const auto seg = extract_segment(signal, beats, k, cfg);
        const double r = seg.ok() ? dsp::pearson(seg.values, tmpl.values) : 0.0;
        out.push_back({beats.peak_indices[k], r});
    }
    return out;
}

void write_template(std::ostream& os, const BeatTemplate& tmpl)
{
    os << "site " << tmpl.site.label() << '\n';
    os << "n " << tmpl.values.size() << '\n';
    os << "contributing " << tmpl.n_contributing << '\n';
    char buf[64];
    for (double v : tmpl.values) {
        std::snprintf(buf, sizeof buf, "%.17g\n", v);
        os << buf;
    }
}

BeatTemplate read_template(std::istream& is)
{
    BeatTemplate out;
    std::string key;
    std::string label;
    std::size_t n = 0;
    if (!(is >> key >> label) || key != "site")
        throw Error(ErrorCode::ParseError, "template: expected 'site <label>'");
    if (!(is >> key >> n) || key != "n")
        throw Error(ErrorCode::ParseError, "template: expected 'n <count>'");
    if (!(is >> key >> out.n_contributing) || key != "contributing")
        throw Error(ErrorCode::ParseError, "template: expected 'contributing <count>'");
    out.site = Site::parse(label);
    out.values.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (!(is >> out.values[i]))
            throw Error(ErrorCode::ParseError, "template: expected " + std::to_string(n) + " values");
    }
    return out;
}

} // namespace ppgfuse::sqi
