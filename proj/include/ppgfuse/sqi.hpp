#pragma once

#include <iosfwd>
#include <optional>
#include <vector>

#include "ppgfuse/signal.hpp"

namespace ppgfuse::sqi {

struct TemplateConfig {
    std::size_t n_samples = 40;
    double triangle_gate_r = 0.8;
    std::size_t target_pool = 500;
    double min_hr = 40.0;
    double max_hr = 185.0;
    /// Fraction of each half of the reference triangle spent on the upstroke.
    double rise_fraction = 0.3;

    void validate() const;
};

enum class Rejection { None, NoNeighbors, HrOutOfRange, ZeroVariance };

/// A two-interval beat section, resampled and z-scored, or the reason it was
/// discarded.
struct Segment {
    std::vector<double> values;
    Rejection rejection = Rejection::None;

    [[nodiscard]] bool ok() const noexcept { return rejection == Rejection::None; }
};

struct BeatQuality {
    std::size_t peak_index = 0;
    double r = 0.0;
};

/// Section from the previous to the next peak around peak `ordinal`.
Segment extract_segment(const Signal& signal, const BeatSeries& beats, std::size_t ordinal,
                        const TemplateConfig& cfg = {});

/// All accepted segments of a channel, in peak order.
std::vector<std::vector<double>> extract_segments(const Signal& signal, const BeatSeries& beats,
                                                  const TemplateConfig& cfg = {});

/// Z-scored reference spanning two beat intervals. Each half starts at a
/// systolic apex, decays linearly over (1 - rise_fraction) of the half and
/// climbs back over the remaining rise_fraction, so apexes sit at the start,
/// the midpoint and the end, matching peak-delimited segments.
std::vector<double> leaning_triangle(std::size_t n, double rise_fraction = 0.3);

struct TemplateBuild {
    BeatTemplate tmpl;
    /// Indices (into the input list) of the segments averaged into tmpl.
    std::vector<std::size_t> survivors;
    std::size_t passed_gate = 0;
};

/// Triangle gate, average, then drop the segment least correlated with the
/// running template one at a time (recomputing after every removal) until at
/// most target_pool remain. Throws NoCleanSegments when nothing passes the
/// gate.
TemplateBuild build_template_detailed(const std::vector<std::vector<double>>& segments, const TemplateConfig& cfg = {},
                                      Site site = {});

BeatTemplate build_template(const std::vector<std::vector<double>>& segments, const TemplateConfig& cfg = {},
                            Site site = {});

/// One score per interior peak; rejected extractions score 0.
std::vector<BeatQuality> score_beats(const Signal& signal, const BeatSeries& beats, const BeatTemplate& tmpl,
                                     const TemplateConfig& cfg = {});

/// Template record: "site <label>", "n <count>", "contributing <count>", then
/// one value per line.
void write_template(std::ostream& os, const BeatTemplate& tmpl);
BeatTemplate read_template(std::istream& is);

} // namespace ppgfuse::sqi
