#include "ppgfuse/config.hpp"

#include "ppgfuse/io.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>

namespace ppgfuse::config {

namespace pt = boost::property_tree;

IniDocument IniDocument::parse(std::istream& is)
{
    IniDocument doc;
    try {
        pt::read_ini(is, doc.tree_);
    } catch (const pt::ini_parser_error& e) {
        throw Error(ErrorCode::ParseError, "line " + std::to_string(e.line()) + ": " + e.message());
    }
    return doc;
}

pt::ptree::path_type IniDocument::path(const std::string& key)
{
    // Section names may contain dots ("site.head"); keys never do.
    const auto dot = key.rfind('.');
    if (dot == std::string::npos)
        return pt::ptree::path_type(key, '\x1f');
    return pt::ptree::path_type(key.substr(0, dot) + '\x1f' + key.substr(dot + 1), '\x1f');
}

bool IniDocument::has(const std::string& key) const { return static_cast<bool>(tree_.get_child_optional(path(key))); }

std::vector<std::string> IniDocument::sections() const
{
    std::vector<std::string> out;
    for (const auto& [name, child] : tree_)
        if (!child.empty())
            out.push_back(name);
    return out;
}

std::vector<std::string> IniDocument::keys(const std::string& section) const
{
    std::vector<std::string> out;
    const auto node = tree_.get_child_optional(pt::ptree::path_type(section, '\x1f'));
    if (node)
        for (const auto& [name, child] : *node)
            out.push_back(name);
    return out;
}

namespace {

std::string fmt(double v)
{
    return io::format_exact(v);
}

struct Field {
    std::string section;
    std::string key;
    std::function<void(AppConfig&, const IniDocument&, const std::string&)> read;
    std::function<std::string(const AppConfig&)> write;
};

template <typename T, typename Ref>
Field scalar(std::string section, std::string key, Ref ref)
{
    Field f;
    f.section = std::move(section);
    f.key = std::move(key);
    f.read = [ref](AppConfig& c, const IniDocument& d, const std::string& k) { ref(c) = d.get<T>(k); };
    f.write = [ref](const AppConfig& c) {
        const auto v = ref(const_cast<AppConfig&>(c));
        if constexpr (std::is_floating_point_v<T>)
            return fmt(v);
        else
            return std::to_string(v);
    };
    return f;
}

std::vector<Field> fields()
{
    using C = AppConfig;
    std::vector<Field> f;
    f.push_back(scalar<double>("bandpass", "low_hz", [](C& c) -> double& { return c.pipeline.beats.bandpass.low_hz; }));
    f.push_back(scalar<double>("bandpass", "high_hz", [](C& c) -> double& { return c.pipeline.beats.bandpass.high_hz; }));
    f.push_back(scalar<int>("bandpass", "order", [](C& c) -> int& { return c.pipeline.beats.bandpass.order; }));

    f.push_back(scalar<double>("peaks", "ma_window_s", [](C& c) -> double& { return c.pipeline.beats.peaks.ma_window_s; }));
    f.push_back(scalar<double>("peaks", "opt_window_s", [](C& c) -> double& { return c.pipeline.beats.peaks.opt_window_s; }));
    f.push_back(scalar<double>("peaks", "min_hr_bpm", [](C& c) -> double& { return c.pipeline.beats.peaks.min_hr_bpm; }));
    f.push_back(scalar<double>("peaks", "max_hr_bpm", [](C& c) -> double& { return c.pipeline.beats.peaks.max_hr_bpm; }));
    {
        Field offsets;
        offsets.section = "peaks";
        offsets.key = "offsets";
        offsets.read = [](C& c, const IniDocument& d, const std::string& k) {
            std::istringstream is(d.get<std::string>(k));
            std::vector<double> v;
            std::string tok;
            while (is >> tok) {
                try {
                    v.push_back(std::stod(tok));
                } catch (const std::exception&) {
                    throw Error(ErrorCode::InvalidConfig, "bad offset '" + tok + "' in " + k);
                }
            }
            c.pipeline.beats.peaks.offset_candidates = std::move(v);
        };
        offsets.write = [](const C& c) {
            std::string s;
            for (double v : c.pipeline.beats.peaks.offset_candidates)
                s += (s.empty() ? "" : " ") + fmt(v);
            return s;
        };
        f.push_back(offsets);
    }

    f.push_back(scalar<std::size_t>("gate", "run_length", [](C& c) -> std::size_t& { return c.pipeline.beats.gate.run_length; }));
    f.push_back(scalar<double>("gate", "ratio_threshold", [](C& c) -> double& { return c.pipeline.beats.gate.ratio_threshold; }));

    f.push_back(scalar<double>("hr", "window_len_s", [](C& c) -> double& { return c.pipeline.beats.hr.window_len_s; }));
    f.push_back(scalar<double>("hr", "step_s", [](C& c) -> double& { return c.pipeline.beats.hr.step_s; }));
    f.push_back(scalar<std::size_t>("hr", "min_valid_ibis", [](C& c) -> std::size_t& { return c.pipeline.beats.hr.min_valid_ibis; }));
    f.push_back(scalar<double>("hr", "min_hr_bpm", [](C& c) -> double& { return c.pipeline.beats.hr.min_hr_bpm; }));
    f.push_back(scalar<double>("hr", "max_hr_bpm", [](C& c) -> double& { return c.pipeline.beats.hr.max_hr_bpm; }));

    f.push_back(scalar<std::size_t>("template", "n_samples", [](C& c) -> std::size_t& { return c.pipeline.tmpl.n_samples; }));
    f.push_back(scalar<double>("template", "triangle_gate_r", [](C& c) -> double& { return c.pipeline.tmpl.triangle_gate_r; }));
    f.push_back(scalar<std::size_t>("template", "target_pool", [](C& c) -> std::size_t& { return c.pipeline.tmpl.target_pool; }));
    f.push_back(scalar<double>("template", "min_hr_bpm", [](C& c) -> double& { return c.pipeline.tmpl.min_hr; }));
    f.push_back(scalar<double>("template", "max_hr_bpm", [](C& c) -> double& { return c.pipeline.tmpl.max_hr; }));
    f.push_back(scalar<double>("template", "rise_fraction", [](C& c) -> double& { return c.pipeline.tmpl.rise_fraction; }));

    f.push_back(scalar<double>("fusion", "align_window_ms", [](C& c) -> double& { return c.pipeline.fusion.align_window_ms; }));
    f.push_back(scalar<double>("fusion", "quality_window_s", [](C& c) -> double& { return c.pipeline.fusion.quality_window_s; }));
    f.push_back(scalar<int>("fusion", "power", [](C& c) -> int& { return c.pipeline.fusion.power; }));
    f.push_back(scalar<double>("fusion", "delta", [](C& c) -> double& { return c.pipeline.fusion.delta; }));
    f.push_back(scalar<bool>("fusion", "normalize_windows", [](C& c) -> bool& { return c.pipeline.fusion.normalize_windows; }));
    {
        Field mode;
        mode.section = "fusion";
        mode.key = "align_mode";
        mode.read = [](C& c, const IniDocument& d, const std::string& k) {
            const auto v = d.get<std::string>(k);
            if (v == "constant")
                c.pipeline.fusion.align_mode = fusion::AlignMode::ConstantLag;
            else if (v == "per_window")
                c.pipeline.fusion.align_mode = fusion::AlignMode::PerWindow;
            else
                throw Error(ErrorCode::InvalidConfig, k + " must be 'constant' or 'per_window'");
        };
        mode.write = [](const C& c) {
            return std::string(c.pipeline.fusion.align_mode == fusion::AlignMode::PerWindow ? "per_window" : "constant");
        };
        f.push_back(mode);
    }

    f.push_back(scalar<double>("ecg", "band_low_hz", [](C& c) -> double& { return c.ecg.band_low_hz; }));
    f.push_back(scalar<double>("ecg", "band_high_hz", [](C& c) -> double& { return c.ecg.band_high_hz; }));
    f.push_back(scalar<double>("ecg", "integration_window_s", [](C& c) -> double& { return c.ecg.integration_window_s; }));
    f.push_back(scalar<double>("ecg", "refractory_s", [](C& c) -> double& { return c.ecg.refractory_s; }));
    f.push_back(scalar<double>("ecg", "twave_window_s", [](C& c) -> double& { return c.ecg.twave_window_s; }));
    f.push_back(scalar<double>("ecg", "refine_window_s", [](C& c) -> double& { return c.ecg.refine_window_s; }));
    f.push_back(scalar<double>("ecg", "learning_s", [](C& c) -> double& { return c.ecg.learning_s; }));

    f.push_back(scalar<double>("ica", "chunk_s", [](C& c) -> double& { return c.ica_chunk_s; }));
    f.push_back(scalar<std::uint64_t>("ica", "seed", [](C& c) -> std::uint64_t& { return c.ica_seed; }));
    f.push_back(scalar<double>("ica", "tolerance", [](C& c) -> double& { return c.ica.tolerance; }));
    f.push_back(scalar<int>("ica", "max_iterations", [](C& c) -> int& { return c.ica.max_iterations; }));
    f.push_back(scalar<double>("ica", "rank_tolerance", [](C& c) -> double& { return c.ica.rank_tolerance; }));
    return f;
}

} // namespace

ica::IcaHrConfig AppConfig::ica_hr() const
{
    ica::IcaHrConfig out;
    out.chunk_s = ica_chunk_s;
    out.seed = ica_seed;
    out.ica = ica;
    out.pipeline = pipeline.beats;
    return out;
}

void AppConfig::validate() const
{
    pipeline.beats.peaks.validate();
    pipeline.beats.gate.validate();
    pipeline.tmpl.validate();
    pipeline.fusion.validate();
    const auto& hr = pipeline.beats.hr;
    if (!(hr.window_len_s > 0.0 && hr.step_s > 0.0 && hr.min_hr_bpm < hr.max_hr_bpm))
        throw Error(ErrorCode::InvalidConfig, "hr window settings are inconsistent");
    if (!(ica_chunk_s > 0.0 && ica.tolerance > 0.0 && ica.max_iterations > 0))
        throw Error(ErrorCode::InvalidConfig, "ica settings must be positive");
    if (!(ecg.band_low_hz > 0.0 && ecg.band_low_hz < ecg.band_high_hz && ecg.refractory_s > 0.0))
        throw Error(ErrorCode::InvalidConfig, "ecg settings are inconsistent");
}

AppConfig parse_config(std::istream& is)
{
    const auto doc = IniDocument::parse(is);
    const auto table = fields();
    std::map<std::string, std::set<std::string>> known;
    for (const auto& f : table)
        known[f.section].insert(f.key);

    AppConfig cfg;
    for (const auto& section : doc.sections())
        if (!known.contains(section))
            throw Error(ErrorCode::InvalidConfig, "unknown section [" + section + "]");
    for (const auto& f : table) {
        const auto key = f.section + "." + f.key;
        if (doc.has(key))
            f.read(cfg, doc, key);
    }
    for (const auto& section : doc.sections())
        for (const auto& key : doc.keys(section))
            if (!known[section].contains(key))
                throw Error(ErrorCode::InvalidConfig, "unknown key '" + key + "' in [" + section + "]");
    cfg.validate();
    return cfg;
}

AppConfig load_config(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw Error(ErrorCode::IoError, "cannot open config file " + path);
    return parse_config(in);
}

void write_config(std::ostream& os, const AppConfig& cfg)
{
    std::string section;
    for (const auto& f : fields()) {
        if (f.section != section) {
            os << (section.empty() ? "" : "\n") << '[' << f.section << "]\n";
            section = f.section;
        }
        os << f.key << " = " << f.write(cfg) << '\n';
    }
}

} // namespace ppgfuse::config
