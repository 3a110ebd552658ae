#include "ppgfuse/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <map>
#include <ostream>
#include <sstream>
#include <thread>

#include "ppgfuse/beats.hpp"
#include "ppgfuse/dsp.hpp"
#include "ppgfuse/ecg.hpp"
#include "ppgfuse/error.hpp"
#include "ppgfuse/fusion.hpp"
#include "ppgfuse/ica.hpp"

namespace ppgfuse::eval {

std::vector<double> hr_error(const HrSeries& est, const HrSeries& truth)
{
    constexpr double eps = 1e-6;
    if (std::abs(est.step_s - truth.step_s) > eps || std::abs(est.window_len_s - truth.window_len_s) > eps)
        throw Error(ErrorCode::GridMismatch, "window length or step differ");
    if (!(truth.step_s > 0.0))
        throw Error(ErrorCode::GridMismatch, "step must be positive");
    if (est.timestamps_s.empty() || truth.timestamps_s.empty())
        return {};
    const double origin = truth.timestamps_s.front();
    auto slot = [&](double t) {
        const double k = (t - origin) / truth.step_s;
        if (std::abs(k - std::round(k)) > 1e-6)
            throw Error(ErrorCode::GridMismatch, "timestamp " + io::format_exact(t) + " is off the truth grid");
        return static_cast<long>(std::llround(k));
    };

    std::map<long, double> reference;
    for (std::size_t i = 0; i < truth.timestamps_s.size(); ++i)
        if (truth.hr_bpm[i])
            reference.emplace(slot(truth.timestamps_s[i]), *truth.hr_bpm[i]);
    std::vector<double> out;
    for (std::size_t i = 0; i < est.timestamps_s.size(); ++i) {
        const long k = slot(est.timestamps_s[i]);
        if (!est.hr_bpm[i])
            continue;
        const auto it = reference.find(k);
        if (it != reference.end())
            out.push_back(std::abs(*est.hr_bpm[i] - it->second));
    }
    return out;
}

std::string to_string(Method m)
{
    switch (m) {
    case Method::Single: return "single";
    case Method::Fusion: return "fusion";
    case Method::Ica: return "ica";
    }
    return "single";
}

Method parse_method(const std::string& text)
{
    if (text == "single")
        return Method::Single;
    if (text == "fusion")
        return Method::Fusion;
    if (text == "ica")
        return Method::Ica;
    throw Error(ErrorCode::InvalidConfig, "unknown method '" + text + "' (expected single, fusion or ica)");
}

std::vector<Configuration> default_configurations()
{
    const std::vector<Site> all{Site::parse("head"), Site::parse("sternum"), Site::parse("wrist"), Site::parse("ankle")};
    std::vector<Configuration> out;
    for (const auto& s : all)
        out.push_back({s.label(), Method::Single, {s}});
    out.push_back({"fusion-all", Method::Fusion, all});
    out.push_back({"ica-all", Method::Ica, all});
    return out;
}

namespace {

std::vector<Signal> select_sites(const std::vector<Signal>& signals, const std::vector<Site>& sites)
{
    std::vector<Signal> out;
    for (const auto& want : sites) {
        const auto it = std::find_if(signals.begin(), signals.end(), [&](const Signal& s) { return s.site() == want; });
        if (it == signals.end()) {
            std::string labels;
            for (const auto& s : signals)
                labels += (labels.empty() ? "" : ", ") + s.site().label();
            throw Error(ErrorCode::InvalidConfig, "unknown site '" + want.label() + "'; valid sites: " + labels);
        }
        out.push_back(*it);
    }
    return out;
}

std::string join_sites(const std::vector<Site>& sites)
{
    std::string out;
    for (const auto& s : sites)
        out += (out.empty() ? "" : "+") + s.label();
    return out;
}

double sample_std(const std::vector<double>& v)
{
    if (v.size() < 2)
        return 0.0;
    const double m = dsp::mean(v);
    double ss = 0.0;
    for (double x : v)
        ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

RecordingResult score_recording(const std::string& name, const io::Recording& rec,
                                const std::vector<Configuration>& configurations, const config::AppConfig& cfg)
{
    RecordingResult out;
    out.name = name;
    out.cells.resize(configurations.size());
    HrSeries truth;
    try {
        if (!rec.ecg)
            throw Error(ErrorCode::InvalidConfig, "recording has no ecg column");
        truth = ecg::ground_truth_hr(*rec.ecg, cfg.pipeline.beats.gate, cfg.pipeline.beats.hr, cfg.ecg);
    } catch (const std::exception& e) {
        out.error = e.what();
        for (auto& c : out.cells)
            c.error = out.error;
        return out;
    }
    for (std::size_t k = 0; k < configurations.size(); ++k) {
        auto& cell = out.cells[k];
        try {
            const auto hr = estimate_hr(rec.signals, configurations[k].method, configurations[k].sites, cfg);
            cell.errors = hr_error(hr, truth);
            if (cell.errors.empty())
                throw Error(ErrorCode::NoOverlap, "no window scored by both estimate and truth");
            cell.mean = dsp::mean(cell.errors);
            cell.median = dsp::median(cell.errors);
            cell.ok = true;
        } catch (const std::exception& e) {
            cell.error = e.what();
        }
    }
    return out;
}

void parallel_for(std::size_t count, unsigned jobs, const std::function<void(std::size_t)>& body)
{
    const unsigned workers = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(count)));
    if (workers <= 1) {
        for (std::size_t i = 0; i < count; ++i)
            body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < count; i = next++)
                body(i);
        });
    for (auto& t : pool)
        t.join();
}

Report reduce(std::vector<RecordingResult> results, const std::vector<Configuration>& configurations)
{
    Report report;
    for (std::size_t k = 0; k < configurations.size(); ++k) {
        ReportRow row;
        row.name = configurations[k].name;
        row.sites = join_sites(configurations[k].sites);
        row.method = to_string(configurations[k].method);
        std::vector<double> means;
        std::vector<double> medians;
        std::vector<double> pooled;
        for (const auto& r : results) {
            const auto& cell = r.cells[k];
            ++row.recordings;
            if (!cell.ok) {
                ++row.failed;
                continue;
            }
            means.push_back(cell.mean);
            medians.push_back(cell.median);
            pooled.insert(pooled.end(), cell.errors.begin(), cell.errors.end());
        }
        row.windows = pooled.size();
        if (!means.empty()) {
            row.mean_abs_err_bpm = dsp::mean(means);
            row.std_of_mean = sample_std(means);
            row.median_abs_err_bpm = dsp::mean(medians);
            row.std_of_median = sample_std(medians);
        }
        PercentileCurve curve;
        curve.name = row.name;
        if (!pooled.empty()) {
            std::sort(pooled.begin(), pooled.end());
            for (int p = 0; p <= 100; ++p)
                curve.values.push_back(dsp::percentile(pooled, static_cast<double>(p)));
        }
        report.rows.push_back(row);
        report.curves.push_back(std::move(curve));
    }
    report.recordings = std::move(results);
    return report;
}

} // namespace

HrSeries estimate_hr(const std::vector<Signal>& signals, Method method, const std::vector<Site>& sites,
                     const config::AppConfig& cfg)
{
    if (sites.empty())
        throw Error(ErrorCode::EmptySet, "no sites selected");
    auto chosen = select_sites(signals, sites);
    switch (method) {
    case Method::Single:
        if (chosen.size() != 1)
            throw Error(ErrorCode::InvalidConfig, "single method takes exactly one site");
        return beats::hr_pipeline(chosen.front(), cfg.pipeline.beats);
    case Method::Fusion:
        return fusion::run_fusion(validate_aligned_set(chosen), cfg.pipeline).hr;
    case Method::Ica:
        return ica::ica_hr(validate_aligned_set(chosen), cfg.ica_hr()).hr;
    }
    throw Error(ErrorCode::InvalidConfig, "unknown method");
}

Report build_report(const std::vector<RecordingInput>& recordings, const std::vector<Configuration>& configurations,
                    const config::AppConfig& cfg, unsigned jobs)
{
    if (recordings.empty())
        throw Error(ErrorCode::EmptySet, "no recordings to evaluate");
    if (configurations.empty())
        throw Error(ErrorCode::EmptySet, "no configurations to evaluate");
    std::vector<RecordingResult> results(recordings.size());
    parallel_for(recordings.size(), jobs, [&](std::size_t i) {
        results[i] = score_recording(recordings[i].name, recordings[i].recording, configurations, cfg);
    });
    return reduce(std::move(results), configurations);
}

Report build_report_from_files(const std::vector<std::string>& paths, const std::vector<Configuration>& configurations,
                               const config::AppConfig& cfg, unsigned jobs)
{
    if (paths.empty())
        throw Error(ErrorCode::EmptySet, "no recordings to evaluate");
    if (configurations.empty())
        throw Error(ErrorCode::EmptySet, "no configurations to evaluate");
    std::vector<RecordingResult> results(paths.size());
    parallel_for(paths.size(), jobs, [&](std::size_t i) {
        try {
            const auto rec = io::load_recording(paths[i]);
            results[i] = score_recording(paths[i], rec, configurations, cfg);
        } catch (const std::exception& e) {
            results[i].name = paths[i];
            results[i].error = e.what();
            results[i].cells.assign(configurations.size(), Cell{false, e.what(), {}, 0.0, 0.0});
        }
    });
    return reduce(std::move(results), configurations);
}

void write_report_csv(std::ostream& os, const Report& report)
{
    os << "config,method,sites,mean_abs_err_bpm,std_of_mean,median_abs_err_bpm,std_of_median,recordings,failed,windows,"
          "status\n";
    for (const auto& r : report.rows) {
        const bool any = r.failed < r.recordings;
        os << r.name << ',' << r.method << ',' << r.sites << ',';
        if (any)
            os << io::format_fixed(r.mean_abs_err_bpm, 4) << ',' << io::format_fixed(r.std_of_mean, 4) << ','
               << io::format_fixed(r.median_abs_err_bpm, 4) << ',' << io::format_fixed(r.std_of_median, 4);
        else
            os << ",,,";
        os << ',' << r.recordings << ',' << r.failed << ',' << r.windows << ','
           << (r.failed == 0 ? "ok" : (any ? "partial" : "failed")) << '\n';
    }
}

void write_percentiles_csv(std::ostream& os, const Report& report)
{
    os << "percentile";
    for (const auto& c : report.curves)
        os << ',' << c.name;
    os << '\n';
    for (int p = 0; p <= 100; ++p) {
        os << p;
        for (const auto& c : report.curves) {
            os << ',';
            if (!c.values.empty())
                os << io::format_fixed(c.values[static_cast<std::size_t>(p)], 4);
        }
        os << '\n';
    }
}

void write_recordings_csv(std::ostream& os, const Report& report, const std::vector<Configuration>& configurations)
{
    os << "recording,config,mean_abs_err_bpm,median_abs_err_bpm,windows,error\n";
    for (const auto& r : report.recordings) {
        for (std::size_t k = 0; k < r.cells.size() && k < configurations.size(); ++k) {
            const auto& c = r.cells[k];
            os << r.name << ',' << configurations[k].name << ',';
            if (c.ok)
                os << io::format_fixed(c.mean, 4) << ',' << io::format_fixed(c.median, 4) << ',' << c.errors.size() << ',';
            else {
                std::string msg = c.error;
                std::replace(msg.begin(), msg.end(), ',', ';');
                std::replace(msg.begin(), msg.end(), '\n', ' ');
                os << ",,0," << msg;
            }
            os << '\n';
        }
    }
}

std::string percentile_svg(const PercentileCurve& curve, double y_max)
{
    const double w = 640.0;
    const double h = 400.0;
    const double left = 60.0;
    const double right = 20.0;
    const double top = 30.0;
    const double bottom = 50.0;
    const double pw = w - left - right;
    const double ph = h - top - bottom;
    if (!(y_max > 0.0))
        y_max = 1.0;
    auto fx = [&](double p) { return left + pw * p / 100.0; };
    auto fy = [&](double v) { return top + ph * (1.0 - std::min(v, y_max) / y_max); };
    auto num = [](double v) { return io::format_fixed(v, 2); };

    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\" viewBox=\"0 0 " << w
       << ' ' << h << "\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << num(w / 2) << "\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">"
       << curve.name << "</text>\n";
    os << "<g stroke=\"#999\" stroke-width=\"1\">\n";
    for (int i = 0; i <= 4; ++i) {
        const double y = top + ph * i / 4.0;
        os << "<line x1=\"" << num(left) << "\" y1=\"" << num(y) << "\" x2=\"" << num(left + pw) << "\" y2=\"" << num(y)
           << "\"/>\n";
    }
    os << "</g>\n<g font-family=\"sans-serif\" font-size=\"11\">\n";
    for (int i = 0; i <= 4; ++i) {
        const double v = y_max * (4 - i) / 4.0;
        os << "<text x=\"" << num(left - 6) << "\" y=\"" << num(top + ph * i / 4.0 + 4) << "\" text-anchor=\"end\">"
           << io::format_fixed(v, 1) << "</text>\n";
    }
    for (int p = 0; p <= 100; p += 20)
        os << "<text x=\"" << num(fx(p)) << "\" y=\"" << num(top + ph + 16) << "\" text-anchor=\"middle\">" << p
           << "</text>\n";
    os << "<text x=\"" << num(left + pw / 2) << "\" y=\"" << num(h - 10)
       << "\" text-anchor=\"middle\">percentile of windows</text>\n";
    os << "<text x=\"14\" y=\"" << num(top + ph / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 14 "
       << num(top + ph / 2) << ")\">|HR error| (bpm)</text>\n</g>\n";
    if (!curve.values.empty()) {
        os << "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\" points=\"";
        for (std::size_t p = 0; p < curve.values.size(); ++p)
            os << (p ? " " : "") << num(fx(static_cast<double>(p))) << ',' << num(fy(curve.values[p]));
        os << "\"/>\n";
    }
    os << "</svg>\n";
    return os.str();
}

} // namespace ppgfuse::eval
