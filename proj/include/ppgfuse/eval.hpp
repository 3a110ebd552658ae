#pragma once

#include <array>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "ppgfuse/config.hpp"
#include "ppgfuse/io.hpp"
#include "ppgfuse/signal.hpp"

namespace ppgfuse::eval {

/// Absolute per-window difference over the windows present in both series.
/// Throws GridMismatch when window length, step or grid phase differ.
std::vector<double> hr_error(const HrSeries& est, const HrSeries& truth);

enum class Method { Single, Fusion, Ica };

std::string to_string(Method m);
/// Throws InvalidConfig.
Method parse_method(const std::string& text);

struct Configuration {
    std::string name;
    Method method = Method::Single;
    std::vector<Site> sites;
};

/// head, sternum, wrist, ankle, fusion-all and ica-all.
std::vector<Configuration> default_configurations();

/// Runs one configuration on a recording. `sites` selects channels by label;
/// Throws InvalidConfig for labels the recording does not contain.
HrSeries estimate_hr(const std::vector<Signal>& signals, Method method, const std::vector<Site>& sites,
                     const config::AppConfig& cfg = {});

struct Cell {
    bool ok = false;
    std::string error;
    std::vector<double> errors;
    double mean = 0.0;
    double median = 0.0;
};

struct RecordingResult {
    std::string name;
    /// Set when the recording itself could not be loaded or scored.
    std::string error;
    std::vector<Cell> cells;  // one per configuration
};

struct ReportRow {
    std::string name;
    std::string sites;
    std::string method;
    double mean_abs_err_bpm = 0.0;
    double std_of_mean = 0.0;
    double median_abs_err_bpm = 0.0;
    double std_of_median = 0.0;
    std::size_t recordings = 0;
    std::size_t failed = 0;
    std::size_t windows = 0;
};

struct PercentileCurve {
    std::string name;
    /// Percentiles 0..100 of the pooled per-window errors; empty if no window
    /// was scored.
    std::vector<double> values;
};

struct Report {
    std::vector<ReportRow> rows;
    std::vector<PercentileCurve> curves;
    std::vector<RecordingResult> recordings;
};

struct RecordingInput {
    std::string name;
    io::Recording recording;
};

/// Truth comes from R peaks of the recording's ECG. Recordings are scored in
/// parallel on up to `jobs` threads; the reduction is in input order.
Report build_report(const std::vector<RecordingInput>& recordings, const std::vector<Configuration>& configurations,
                    const config::AppConfig& cfg = {}, unsigned jobs = 1);

/// As above, but loads each file inside the worker; unreadable files become
/// failed recordings instead of aborting the report.
Report build_report_from_files(const std::vector<std::string>& paths, const std::vector<Configuration>& configurations,
                               const config::AppConfig& cfg = {}, unsigned jobs = 1);

void write_report_csv(std::ostream& os, const Report& report);
void write_percentiles_csv(std::ostream& os, const Report& report);
void write_recordings_csv(std::ostream& os, const Report& report, const std::vector<Configuration>& configurations);
/// Static line plot of one curve.
std::string percentile_svg(const PercentileCurve& curve, double y_max);

} // namespace ppgfuse::eval
