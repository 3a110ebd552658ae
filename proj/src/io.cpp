#include "ppgfuse/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "ppgfuse/dsp.hpp"
#include "ppgfuse/error.hpp"

namespace ppgfuse::io {

namespace {

[[noreturn]] void parse_fail(std::size_t line, std::size_t col, const std::string& what)
{
    throw Error(ErrorCode::ParseError, "line " + std::to_string(line) + ", column " + std::to_string(col) + ": " + what);
}

std::vector<std::string> split(const std::string& line)
{
    std::vector<std::string> out;
    std::string cell;
    std::istringstream is(line);
    while (std::getline(is, cell, ','))
        out.push_back(cell);
    if (!line.empty() && line.back() == ',')
        out.emplace_back();
    return out;
}

std::string trim(std::string s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos)
        return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

bool parse_number(const std::string& cell, double& out)
{
    const char* first = cell.data();
    const char* last = cell.data() + cell.size();
    const auto res = std::from_chars(first, last, out);
    return res.ec == std::errc() && res.ptr == last;
}

// Fills NaN runs. Interior runs up to max_gap samples are interpolated, edge
// runs are held at the nearest sample. Returns the number of repaired runs.
std::size_t repair_gaps(std::vector<double>& x, std::size_t max_gap, const std::string& label, double rate)
{
    const std::size_t n = x.size();
    std::size_t repaired = 0;
    std::size_t i = 0;
    while (i < n) {
        if (!std::isnan(x[i])) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j < n && std::isnan(x[j]))
            ++j;
        const std::size_t len = j - i;
        if (len > max_gap)
            throw Error(ErrorCode::NonFiniteSample, "channel " + label + " has a " +
                                                        format_fixed(static_cast<double>(len) / rate, 3) +
                                                        " s gap of missing samples at t = " +
                                                        format_fixed(static_cast<double>(i) / rate, 3) + " s");
        if (i == 0 && j == n)
            throw Error(ErrorCode::NonFiniteSample, "channel " + label + " has no samples");
        for (std::size_t k = i; k < j; ++k) {
            if (i == 0)
                x[k] = x[j];
            else if (j == n)
                x[k] = x[i - 1];
            else {
                const double f = static_cast<double>(k - i + 1) / static_cast<double>(len + 1);
                x[k] = x[i - 1] + f * (x[j] - x[i - 1]);
            }
        }
        ++repaired;
        i = j;
    }
    return repaired;
}

} // namespace

std::string format_fixed(double v, int decimals)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
    return buf;
}

std::string format_exact(double v)
{
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

Recording parse_recording(std::istream& is, double target_rate_hz)
{
    std::string line;
    if (!std::getline(is, line))
        parse_fail(1, 1, "empty file");
    const auto header = split(line);
    if (header.empty() || trim(header[0]) != "time_s")
        parse_fail(1, 1, "first column must be 'time_s'");

    struct Column {
        Site site;
        bool ecg = false;
    };
    std::vector<Column> columns;
    bool seen_ecg = false;
    for (std::size_t c = 1; c < header.size(); ++c) {
        const auto name = trim(header[c]);
        if (name == "ecg") {
            if (seen_ecg)
                parse_fail(1, c + 1, "duplicate ecg column");
            seen_ecg = true;
            columns.push_back({Site::parse("ecg"), true});
            continue;
        }
        const auto colon = name.find(':');
        if (name.rfind("site_", 0) != 0 || colon == std::string::npos || colon + 1 == name.size())
            parse_fail(1, c + 1, "expected 'site_<k>:<label>' or 'ecg', got '" + name + "'");
        const auto site = Site::parse(name.substr(colon + 1));
        for (const auto& other : columns)
            if (!other.ecg && other.site == site)
                parse_fail(1, c + 1, "duplicate site '" + site.label() + "'");
        columns.push_back({site, false});
    }
    if (columns.empty() || (columns.size() == 1 && seen_ecg))
        parse_fail(1, header.size(), "no PPG channels");

    std::vector<double> times;
    std::vector<std::vector<double>> data(columns.size());
    std::size_t line_no = 1;
    while (std::getline(is, line)) {
        ++line_no;
        if (trim(line).empty())
            continue;
        const auto cells = split(line);
        if (cells.size() != header.size())
            parse_fail(line_no, std::min(cells.size(), header.size()) + 1,
                       "expected " + std::to_string(header.size()) + " cells, got " + std::to_string(cells.size()));
        double t = 0.0;
        if (!parse_number(trim(cells[0]), t) || !std::isfinite(t))
            parse_fail(line_no, 1, "bad timestamp '" + cells[0] + "'");
        if (!times.empty() && !(t > times.back()))
            parse_fail(line_no, 1, "timestamps must increase strictly");
        times.push_back(t);
        for (std::size_t c = 0; c < columns.size(); ++c) {
            const auto cell = trim(cells[c + 1]);
            double v = std::numeric_limits<double>::quiet_NaN();
            if (!cell.empty() && cell != "nan" && cell != "NaN" && (!parse_number(cell, v) || !std::isfinite(v)))
                parse_fail(line_no, c + 2, "bad sample '" + cell + "'");
            data[c].push_back(v);
        }
    }
    if (times.size() < 2)
        parse_fail(line_no, 1, "need at least two samples");

    std::vector<double> steps(times.size() - 1);
    for (std::size_t i = 1; i < times.size(); ++i)
        steps[i - 1] = times[i] - times[i - 1];
    const double step = dsp::median(steps);
    for (std::size_t i = 0; i < steps.size(); ++i)
        if (std::abs(steps[i] - step) > kRateJitter * step)
            throw Error(ErrorCode::RateInferenceError, "timestamp step at line " + std::to_string(i + 3) + " deviates " +
                                                           "more than 1% from the median step " + format_exact(step));
    // The mean step is immune to rounding of individual timestamps.
    double rate = static_cast<double>(times.size() - 1) / (times.back() - times.front());
    if (std::abs(rate - target_rate_hz) <= 1e-4 * target_rate_hz)
        rate = target_rate_hz;

    Recording rec;
    const auto max_gap = static_cast<std::size_t>(std::floor(kMaxGapS * rate + 1e-9));
    const bool resample = rate != target_rate_hz;
    if (resample)
        rec.warnings.push_back("resampled from " + format_fixed(rate, 3) + " Hz to " + format_fixed(target_rate_hz, 3) + " Hz");
    for (std::size_t c = 0; c < columns.size(); ++c) {
        auto& x = data[c];
        const auto repaired = repair_gaps(x, max_gap, columns[c].site.label(), rate);
        if (repaired > 0)
            rec.warnings.push_back("interpolated " + std::to_string(repaired) + " short gap(s) in " + columns[c].site.label());
        if (resample)
            x = dsp::resample_rate(x, rate, target_rate_hz);
        Signal s(std::move(x), resample ? target_rate_hz : rate, columns[c].site, times.front());
        if (columns[c].ecg)
            rec.ecg = EcgSignal{std::move(s)};
        else
            rec.signals.push_back(std::move(s));
    }
    return rec;
}

Recording load_recording(const std::string& path, double target_rate_hz)
{
    std::ifstream in(path);
    if (!in)
        throw Error(ErrorCode::IoError, "cannot open recording " + path);
    try {
        return parse_recording(in, target_rate_hz);
    } catch (const Error& e) {
        throw Error(e.code(), path + ": " + e.detail());
    }
}

void write_recording(std::ostream& os, const std::vector<Signal>& signals, const std::optional<EcgSignal>& ecg)
{
    if (signals.empty())
        throw Error(ErrorCode::EmptySet, "nothing to write");
    const auto& first = signals.front();
    auto check = [&](const Signal& s) {
        if (s.size() != first.size() || s.sample_rate_hz() != first.sample_rate_hz() ||
            s.start_time_s() != first.start_time_s())
            throw Error(ErrorCode::LengthMismatch, "channels must share rate, start and length");
    };
    std::string out = "time_s";
    for (std::size_t c = 0; c < signals.size(); ++c) {
        check(signals[c]);
        out += ",site_" + std::to_string(c + 1) + ":" + signals[c].site().label();
    }
    if (ecg) {
        check(ecg->signal);
        out += ",ecg";
    }
    out += '\n';
    os << out;
    char buf[64];
    for (std::size_t i = 0; i < first.size(); ++i) {
        out.clear();
        std::snprintf(buf, sizeof buf, "%.7f", first.start_time_s() + static_cast<double>(i) / first.sample_rate_hz());
        out += buf;
        for (const auto& s : signals) {
            std::snprintf(buf, sizeof buf, ",%.9g", s.samples()[i]);
            out += buf;
        }
        if (ecg) {
            std::snprintf(buf, sizeof buf, ",%.9g", ecg->signal.samples()[i]);
            out += buf;
        }
        out += '\n';
        os << out;
    }
}

void write_hr(std::ostream& os, const HrSeries& hr)
{
    os << "time_s,hr_bpm\n";
    for (std::size_t i = 0; i < hr.timestamps_s.size(); ++i) {
        os << format_fixed(hr.timestamps_s[i], 3) << ',';
        if (hr.hr_bpm[i])
            os << format_fixed(*hr.hr_bpm[i], 6);
        os << '\n';
    }
}

HrSeries parse_hr(std::istream& is, double window_len_s, double step_s)
{
    HrSeries hr;
    hr.window_len_s = window_len_s;
    hr.step_s = step_s;
    std::string line;
    if (!std::getline(is, line) || trim(line) != "time_s,hr_bpm")
        parse_fail(1, 1, "expected header 'time_s,hr_bpm'");
    std::size_t line_no = 1;
    while (std::getline(is, line)) {
        ++line_no;
        if (trim(line).empty())
            continue;
        const auto cells = split(line);
        if (cells.size() != 2)
            parse_fail(line_no, 1, "expected 2 cells");
        double t = 0.0;
        if (!parse_number(trim(cells[0]), t))
            parse_fail(line_no, 1, "bad timestamp");
        hr.timestamps_s.push_back(t);
        const auto cell = trim(cells[1]);
        if (cell.empty()) {
            hr.hr_bpm.emplace_back();
            continue;
        }
        double v = 0.0;
        if (!parse_number(cell, v))
            parse_fail(line_no, 2, "bad HR value");
        hr.hr_bpm.emplace_back(v);
    }
    return hr;
}

void write_beats(std::ostream& os, const std::vector<BeatSeries>& series)
{
    os << "site,sample_index,time_s,valid\n";
    for (const auto& b : series)
        for (std::size_t k = 0; k < b.size(); ++k)
            os << b.source_site.label() << ',' << b.peak_indices[k] << ',' << format_fixed(b.time_of(k), 6) << ','
               << (b.valid.empty() || b.valid[k] ? 1 : 0) << '\n';
}

void write_file_atomic(const std::string& path, const std::string& content)
{
    namespace fs = std::filesystem;
    const fs::path target(path);
    if (target.has_parent_path())
        fs::create_directories(target.parent_path());
    const fs::path tmp = target.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out)
            throw Error(ErrorCode::IoError, "cannot write " + tmp.string());
        out << content;
        out.flush();
        if (!out)
            throw Error(ErrorCode::IoError, "write failed for " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec)
        throw Error(ErrorCode::IoError, "cannot rename " + tmp.string() + " to " + path + ": " + ec.message());
}

} // namespace ppgfuse::io
