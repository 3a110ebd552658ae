#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <boost/property_tree/ptree.hpp>

#include "ppgfuse/ecg.hpp"
#include "ppgfuse/error.hpp"
#include "ppgfuse/fusion.hpp"
#include "ppgfuse/ica.hpp"

namespace ppgfuse::config {

/// Flat `key = value` text with [section] headers. Keys are addressed as
/// "section.key". Lines starting with ';' or '#' are comments.
class IniDocument {
public:
    /// Throws ParseError with the offending line.
    static IniDocument parse(std::istream& is);

    [[nodiscard]] bool has(const std::string& key) const;
    [[nodiscard]] std::vector<std::string> sections() const;
    [[nodiscard]] std::vector<std::string> keys(const std::string& section) const;

    /// Throws InvalidConfig when the key is absent or does not convert.
    template <typename T>
    [[nodiscard]] T get(const std::string& key) const
    {
        const auto node = tree_.get_child_optional(path(key));
        if (!node)
            throw Error(ErrorCode::InvalidConfig, "missing key '" + key + "'");
        const auto v = node->get_value_optional<T>();
        if (!v)
            throw Error(ErrorCode::InvalidConfig, "bad value for '" + key + "': '" + node->data() + "'");
        return *v;
    }

    template <typename T>
    [[nodiscard]] T get(const std::string& key, const T& fallback) const
    {
        return has(key) ? get<T>(key) : fallback;
    }

private:
    static boost::property_tree::ptree::path_type path(const std::string& key);
    boost::property_tree::ptree tree_;
};

/// Every tunable of the pipeline, with the library defaults.
struct AppConfig {
    fusion::PipelineConfig pipeline;
    ecg::PanTompkinsConfig ecg;
    double ica_chunk_s = 300.0;
    std::uint64_t ica_seed = 1;
    ica::IcaConfig ica;

    [[nodiscard]] ica::IcaHrConfig ica_hr() const;
    /// Throws InvalidConfig.
    void validate() const;
};

/// Unknown sections or keys are rejected so typos do not pass silently.
AppConfig parse_config(std::istream& is);
AppConfig load_config(const std::string& path);
void write_config(std::ostream& os, const AppConfig& cfg);

} // namespace ppgfuse::config
