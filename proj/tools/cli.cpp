#include "cli.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "ppgfuse/config.hpp"
#include "ppgfuse/error.hpp"
#include "ppgfuse/eval.hpp"
#include "ppgfuse/fusion.hpp"
#include "ppgfuse/io.hpp"
#include "ppgfuse/sqi.hpp"
#include "ppgfuse/synth.hpp"

#ifndef PPGFUSE_VERSION
#define PPGFUSE_VERSION "0.0.0"
#endif

namespace ppgfuse::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

struct Manifest {
    std::string command;
    std::optional<std::string> config_path;
    std::vector<std::string> inputs;
    std::optional<std::uint64_t> seed;
    std::vector<std::string> outputs;
};

void write_manifest(const std::string& path, const Manifest& m, std::chrono::steady_clock::time_point started)
{
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    json j;
    j["command"] = m.command;
    j["config"] = m.config_path ? json(*m.config_path) : json(nullptr);
    j["inputs"] = m.inputs;
    j["seed"] = m.seed ? json(*m.seed) : json(nullptr);
    j["tool_version"] = PPGFUSE_VERSION;
    j["outputs"] = m.outputs;
    j["wall_time_s"] = wall;
    io::write_file_atomic(path, j.dump(2) + "\n");
}

std::string join(const fs::path& dir, const std::string& name) { return (dir / name).string(); }

config::AppConfig load_app_config(const std::string& path)
{
    return path.empty() ? config::AppConfig{} : config::load_config(path);
}

std::vector<Site> parse_sites(const std::string& text)
{
    std::vector<Site> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty())
            out.push_back(Site::parse(item));
    if (out.empty())
        throw Error(ErrorCode::InvalidConfig, "--sites is empty");
    return out;
}

// "head" or "fusion-all" name a default configuration; "name=method:site+site"
// defines a new one.
std::vector<eval::Configuration> parse_configurations(const std::vector<std::string>& specs)
{
    const auto defaults = eval::default_configurations();
    if (specs.empty())
        return defaults;
    std::vector<eval::Configuration> out;
    for (const auto& spec : specs) {
        const auto eq = spec.find('=');
        if (eq == std::string::npos) {
            const auto it = std::find_if(defaults.begin(), defaults.end(),
                                         [&](const eval::Configuration& c) { return c.name == spec; });
            if (it == defaults.end())
                throw Error(ErrorCode::InvalidConfig, "unknown configuration '" + spec + "'");
            out.push_back(*it);
            continue;
        }
        const auto colon = spec.find(':', eq);
        if (colon == std::string::npos)
            throw Error(ErrorCode::InvalidConfig, "configuration must be name=method:site+site, got '" + spec + "'");
        eval::Configuration c;
        c.name = spec.substr(0, eq);
        c.method = eval::parse_method(spec.substr(eq + 1, colon - eq - 1));
        std::stringstream ss(spec.substr(colon + 1));
        std::string site;
        while (std::getline(ss, site, '+'))
            if (!site.empty())
                c.sites.push_back(Site::parse(site));
        if (c.name.empty() || c.sites.empty())
            throw Error(ErrorCode::InvalidConfig, "configuration '" + spec + "' needs a name and sites");
        out.push_back(std::move(c));
    }
    return out;
}

// A recordings list is a text file (one path per line, '#' comments), a JSON
// array of paths, or a JSON object with a "recordings" array or a synth
// manifest's "outputs". Relative paths resolve against the list's directory.
std::vector<std::string> read_recording_list(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw Error(ErrorCode::IoError, "cannot open recordings list " + path);
    const fs::path base = fs::path(path).parent_path();
    std::vector<std::string> raw;
    if (fs::path(path).extension() == ".json") {
        json j;
        try {
            j = json::parse(in);
        } catch (const json::exception& e) {
            throw Error(ErrorCode::ParseError, path + ": " + e.what());
        }
        const json* list = &j;
        if (j.is_object()) {
            if (j.contains("recordings"))
                list = &j["recordings"];
            else if (j.contains("outputs"))
                list = &j["outputs"];
            else
                throw Error(ErrorCode::ParseError, path + ": expected a 'recordings' or 'outputs' array");
        }
        if (!list->is_array())
            throw Error(ErrorCode::ParseError, path + ": recordings must be an array");
        for (const auto& v : *list) {
            if (!v.is_string())
                throw Error(ErrorCode::ParseError, path + ": recording entries must be strings");
            const auto s = v.get<std::string>();
            if (!j.is_object() || j.contains("recordings") || fs::path(s).filename() == "recording.csv")
                raw.push_back(s);
        }
    } else {
        std::string line;
        while (std::getline(in, line)) {
            const auto b = line.find_first_not_of(" \t\r");
            if (b == std::string::npos || line[b] == '#')
                continue;
            const auto e = line.find_last_not_of(" \t\r");
            raw.push_back(line.substr(b, e - b + 1));
        }
    }
    std::vector<std::string> out;
    for (const auto& r : raw)
        out.push_back(fs::path(r).is_absolute() ? r : (base / r).lexically_normal().string());
    return out;
}

template <typename F>
std::string render(F&& f)
{
    std::ostringstream os;
    f(os);
    return os.str();
}

int cmd_synth(const std::string& scenario_path, const std::string& preset, std::optional<std::uint64_t> seed,
              std::optional<double> duration, const std::string& out_dir, std::ostream& out)
{
    const auto started = std::chrono::steady_clock::now();
    synth::SynthScenario sc;
    if (!scenario_path.empty()) {
        sc = synth::load_scenario(scenario_path);
        if (seed)
            sc.seed = *seed;
    } else {
        synth::BurstSuiteOptions opts;
        if (preset == "clean") {
            opts.with_bursts = false;
            opts.sensor_snr_db.reset();
        } else if (preset != "burst") {
            throw Error(ErrorCode::InvalidScenario, "unknown preset '" + preset + "' (expected burst or clean)");
        }
        if (duration)
            opts.duration_s = *duration;
        sc = synth::burst_scenario(seed.value_or(1), opts);
    }
    if (duration && !scenario_path.empty())
        sc.duration_s = *duration;

    const auto rec = synth::generate(sc);
    const fs::path dir(out_dir);
    Manifest m;
    m.command = "synth";
    if (!scenario_path.empty())
        m.inputs.push_back(scenario_path);
    m.seed = sc.seed;

    const auto recording = join(dir, "recording.csv");
    io::write_file_atomic(recording, render([&](std::ostream& os) { io::write_recording(os, rec.signals, rec.ecg); }));
    const auto truth_hr = join(dir, "truth_hr.csv");
    io::write_file_atomic(truth_hr, render([&](std::ostream& os) { io::write_hr(os, rec.truth_hr); }));
    const auto truth_beats = join(dir, "truth_beats.csv");
    auto series = rec.truth_beats;
    series.push_back(rec.truth_rpeaks);
    io::write_file_atomic(truth_beats, render([&](std::ostream& os) { io::write_beats(os, series); }));
    const auto scenario = join(dir, "scenario.ini");
    io::write_file_atomic(scenario, render([&](std::ostream& os) { synth::write_scenario(os, sc); }));
    m.outputs = {recording, truth_hr, truth_beats, scenario};
    write_manifest(join(dir, "manifest.json"), m, started);
    out << "wrote " << recording << '\n';
    return kExitOk;
}

int cmd_hr(const std::string& recording, const std::string& sites, const std::string& method,
           const std::string& config_path, const std::string& out_path, std::ostream& out, std::ostream& err)
{
    const auto started = std::chrono::steady_clock::now();
    const auto cfg = load_app_config(config_path);
    const auto m = eval::parse_method(method);
    const auto rec = io::load_recording(recording);
    for (const auto& w : rec.warnings)
        err << "warning: " << w << '\n';
    const auto hr = eval::estimate_hr(rec.signals, m, parse_sites(sites), cfg);
    io::write_file_atomic(out_path, render([&](std::ostream& os) { io::write_hr(os, hr); }));
    Manifest man;
    man.command = "hr";
    if (!config_path.empty())
        man.config_path = config_path;
    man.inputs = {recording};
    if (m == eval::Method::Ica)
        man.seed = cfg.ica_seed;
    man.outputs = {out_path};
    write_manifest(out_path + ".manifest.json", man, started);
    out << "wrote " << out_path << " (" << hr.timestamps_s.size() - hr.missing_count() << " of "
        << hr.timestamps_s.size() << " windows)\n";
    return kExitOk;
}

int cmd_eval(std::vector<std::string> recordings, const std::vector<std::string>& lists,
             const std::vector<std::string>& config_specs, const std::string& config_path, const std::string& out_dir,
             unsigned jobs, std::ostream& out, std::ostream& err)
{
    const auto started = std::chrono::steady_clock::now();
    const auto cfg = load_app_config(config_path);
    Manifest man;
    man.command = "eval";
    if (!config_path.empty())
        man.config_path = config_path;
    for (const auto& l : lists) {
        man.inputs.push_back(l);
        for (auto& r : read_recording_list(l))
            recordings.push_back(std::move(r));
    }
    if (recordings.empty())
        throw Error(ErrorCode::EmptySet, "no recordings to evaluate");
    const auto configurations = parse_configurations(config_specs);
    man.inputs.insert(man.inputs.end(), recordings.begin(), recordings.end());
    man.seed = cfg.ica_seed;

    const auto report = eval::build_report_from_files(recordings, configurations, cfg, jobs);
    for (const auto& r : report.recordings) {
        if (!r.error.empty())
            err << "warning: " << r.name << ": " << r.error << '\n';
        else
            for (std::size_t k = 0; k < r.cells.size(); ++k)
                if (!r.cells[k].ok)
                    err << "warning: " << r.name << " [" << configurations[k].name << "]: " << r.cells[k].error << '\n';
    }

    const fs::path dir(out_dir);
    const auto report_csv = join(dir, "report.csv");
    io::write_file_atomic(report_csv, render([&](std::ostream& os) { eval::write_report_csv(os, report); }));
    const auto pct_csv = join(dir, "percentiles.csv");
    io::write_file_atomic(pct_csv, render([&](std::ostream& os) { eval::write_percentiles_csv(os, report); }));
    const auto rec_csv = join(dir, "recordings.csv");
    io::write_file_atomic(rec_csv,
                          render([&](std::ostream& os) { eval::write_recordings_csv(os, report, configurations); }));
    man.outputs = {report_csv, pct_csv, rec_csv};

    // Shared y scale so the plots compare at a glance.
    double y_max = 0.0;
    for (const auto& c : report.curves)
        if (c.values.size() > 95)
            y_max = std::max(y_max, c.values[95]);
    y_max = std::max(1.0, std::ceil(y_max));
    for (const auto& c : report.curves) {
        const auto svg = join(dir / "plots", c.name + ".svg");
        io::write_file_atomic(svg, eval::percentile_svg(c, y_max));
        man.outputs.push_back(svg);
    }
    write_manifest(join(dir, "manifest.json"), man, started);

    for (const auto& r : report.rows) {
        out << r.name << ": ";
        if (r.failed == r.recordings)
            out << "failed\n";
        else
            out << "mean " << io::format_fixed(r.mean_abs_err_bpm, 2) << " (" << io::format_fixed(r.std_of_mean, 2)
                << ") median " << io::format_fixed(r.median_abs_err_bpm, 2) << " ("
                << io::format_fixed(r.std_of_median, 2) << ") bpm\n";
    }
    return kExitOk;
}

int cmd_template(const std::string& recording, const std::string& site, const std::string& config_path,
                 const std::string& out_path, std::ostream& out, std::ostream& err)
{
    const auto started = std::chrono::steady_clock::now();
    const auto cfg = load_app_config(config_path);
    const auto rec = io::load_recording(recording);
    for (const auto& w : rec.warnings)
        err << "warning: " << w << '\n';
    const auto want = Site::parse(site);
    const auto it = std::find_if(rec.signals.begin(), rec.signals.end(), [&](const Signal& s) { return s.site() == want; });
    if (it == rec.signals.end()) {
        std::string labels;
        for (const auto& s : rec.signals)
            labels += (labels.empty() ? "" : ", ") + s.site().label();
        throw Error(ErrorCode::InvalidConfig, "unknown site '" + site + "'; valid sites: " + labels);
    }
    const auto analysis = fusion::analyze_site(*it, cfg.pipeline.tmpl, cfg.pipeline.beats);
    if (!analysis.tmpl)
        throw Error(ErrorCode::NoCleanSegments, "no beat of " + site + " passed the shape gate");
    io::write_file_atomic(out_path, render([&](std::ostream& os) { sqi::write_template(os, *analysis.tmpl); }));
    Manifest man;
    man.command = "template";
    if (!config_path.empty())
        man.config_path = config_path;
    man.inputs = {recording};
    man.outputs = {out_path};
    write_manifest(out_path + ".manifest.json", man, started);
    out << "wrote " << out_path << " (" << analysis.tmpl->n_contributing << " beats, mean quality "
        << io::format_fixed(analysis.mean_quality, 3) << ")\n";
    return kExitOk;
}

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Multi-site PPG heart-rate estimation with quality-weighted fusion", "ppgfuse"};
    app.set_version_flag("--version", PPGFUSE_VERSION);
    app.require_subcommand(1);

    auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic multi-site recording");
    std::string scenario_path;
    std::string preset = "burst";
    std::optional<std::uint64_t> seed;
    std::optional<double> duration;
    std::string synth_out;
    synth_cmd->add_option("--scenario", scenario_path, "Scenario file (INI)");
    synth_cmd->add_option("--preset", preset, "Built-in scenario when no file is given: burst or clean")
        ->capture_default_str();
    synth_cmd->add_option("--seed", seed, "Random seed (overrides the scenario's)");
    synth_cmd->add_option("--duration", duration, "Duration in seconds (overrides the scenario's)");
    synth_cmd->add_option("--out", synth_out, "Output directory")->required();

    auto* hr_cmd = app.add_subcommand("hr", "Estimate windowed heart rate from a recording");
    std::string hr_recording;
    std::string hr_sites;
    std::string hr_method = "fusion";
    std::string hr_config;
    std::string hr_out;
    hr_cmd->add_option("recording", hr_recording, "Recording CSV")->required();
    hr_cmd->add_option("--sites", hr_sites, "Comma-separated site labels")->required();
    hr_cmd->add_option("--method", hr_method, "single, fusion or ica")->capture_default_str();
    hr_cmd->add_option("--config", hr_config, "Pipeline config (INI)");
    hr_cmd->add_option("--out", hr_out, "Output HR CSV")->required();

    auto* eval_cmd = app.add_subcommand("eval", "Score configurations against ECG-derived truth");
    std::vector<std::string> eval_recordings;
    std::vector<std::string> eval_lists;
    std::vector<std::string> eval_configs;
    std::string eval_config;
    std::string eval_out;
    unsigned jobs = std::max(1u, std::thread::hardware_concurrency());
    eval_cmd->add_option("recordings", eval_recordings, "Recording CSVs");
    eval_cmd->add_option("--list", eval_lists, "Recording list (text, JSON, or a synth manifest)");
    eval_cmd->add_option("--configs", eval_configs,
                         "Configurations: default names or name=method:site+site (default: all defaults)")
        ->delimiter(',');
    eval_cmd->add_option("--config", eval_config, "Pipeline config (INI)");
    eval_cmd->add_option("--out", eval_out, "Output directory")->required();
    eval_cmd->add_option("--jobs", jobs, "Parallel recordings")->check(CLI::PositiveNumber)->capture_default_str();

    auto* tmpl_cmd = app.add_subcommand("template", "Build the beat template of one site");
    std::string tmpl_recording;
    std::string tmpl_site;
    std::string tmpl_config;
    std::string tmpl_out;
    tmpl_cmd->add_option("recording", tmpl_recording, "Recording CSV")->required();
    tmpl_cmd->add_option("--site", tmpl_site, "Site label")->required();
    tmpl_cmd->add_option("--config", tmpl_config, "Pipeline config (INI)");
    tmpl_cmd->add_option("--out", tmpl_out, "Output template file")->required();

    std::vector<std::string> reversed;
    for (std::size_t i = args.size(); i > 1; --i)
        reversed.push_back(args[i - 1]);
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (synth_cmd->parsed())
            return cmd_synth(scenario_path, preset, seed, duration, synth_out, out);
        if (hr_cmd->parsed())
            return cmd_hr(hr_recording, hr_sites, hr_method, hr_config, hr_out, out, err);
        if (eval_cmd->parsed())
            return cmd_eval(eval_recordings, eval_lists, eval_configs, eval_config, eval_out, jobs, out, err);
        if (tmpl_cmd->parsed())
            return cmd_template(tmpl_recording, tmpl_site, tmpl_config, tmpl_out, out, err);
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "internal error: " << e.what() << '\n';
        return kExitInternal;
    }
    return kExitUsage;
}

} // namespace ppgfuse::cli
