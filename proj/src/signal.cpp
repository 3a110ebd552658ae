#include "ppgfuse/signal.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "ppgfuse/error.hpp"

namespace ppgfuse {

std::string_view to_string(ErrorCode code) noexcept
{
    switch (code) {
    case ErrorCode::EmptySet: return "EmptySet";
    case ErrorCode::NoOverlap: return "NoOverlap";
    case ErrorCode::RateMismatch: return "RateMismatch";
    case ErrorCode::TooShort: return "TooShort";
    case ErrorCode::UnstableDesign: return "UnstableDesign";
    case ErrorCode::ZeroVariance: return "ZeroVariance";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::NoCleanSegments: return "NoCleanSegments";
    case ErrorCode::NoReferenceBeats: return "NoReferenceBeats";
    case ErrorCode::SingularWhitening: return "SingularWhitening";
    case ErrorCode::InvalidScenario: return "InvalidScenario";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::RateInferenceError: return "RateInferenceError";
    case ErrorCode::GridMismatch: return "GridMismatch";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::NonFiniteSample: return "NonFiniteSample";
    }
    return "Unknown";
}

Site::Site(Kind kind, std::string other_name) : kind_(kind), name_(std::move(other_name)) {}

Site Site::parse(const std::string& label)
{
    std::string lower(label);
    std::transform(lower.begin(), lower.end(), lower.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (lower == "head")
        return Site(Kind::Head);
    if (lower == "sternum")
        return Site(Kind::Sternum);
    if (lower == "wrist")
        return Site(Kind::Wrist);
    if (lower == "ankle")
        return Site(Kind::Ankle);
    return Site(Kind::Other, label);
}

std::string Site::label() const
{
    switch (kind_) {
    case Kind::Head: return "head";
    case Kind::Sternum: return "sternum";
    case Kind::Wrist: return "wrist";
    case Kind::Ankle: return "ankle";
    case Kind::Other: return name_;
    }
    return name_;
}

Signal::Signal(std::vector<double> samples, double sample_rate_hz, Site site, double start_time_s)
    : samples_(std::move(samples)), rate_(sample_rate_hz), site_(std::move(site)), start_(start_time_s)
{
    if (!(rate_ > 0.0) || !std::isfinite(rate_))
        throw Error(ErrorCode::InvalidConfig, "sample rate must be positive");
    for (std::size_t i = 0; i < samples_.size(); ++i) {
        if (!std::isfinite(samples_[i]))
            throw Error(ErrorCode::NonFiniteSample, "sample " + std::to_string(i) + " is not finite");
    }
}

Signal Signal::with_samples(std::vector<double> samples) const
{
    return Signal(std::move(samples), rate_, site_, start_);
}

AlignedSet validate_aligned_set(const std::vector<Signal>& signals)
{
    if (signals.empty())
        throw Error(ErrorCode::EmptySet, "no signals supplied");
    const double rate = signals.front().sample_rate_hz();
    double common_start = signals.front().start_time_s();
    double common_end = signals.front().end_time_s();
    for (const auto& s : signals) {
        if (std::abs(s.sample_rate_hz() - rate) > 1e-9 * rate)
            throw Error(ErrorCode::RateMismatch, "channel " + s.site().label() + " is not at " + std::to_string(rate) + " Hz");
        common_start = std::max(common_start, s.start_time_s());
        common_end = std::min(common_end, s.end_time_s());
    }
    const double overlap = common_end - common_start;
    if (overlap < kMinOverlapS)
        throw Error(ErrorCode::NoOverlap, "common time range is " + std::to_string(std::max(overlap, 0.0)) + " s");

    std::size_t length = static_cast<std::size_t>(std::floor(overlap * rate + 1e-6));
    std::vector<std::size_t> offsets;
    for (const auto& s : signals) {
        auto off = static_cast<std::size_t>(std::llround((common_start - s.start_time_s()) * rate));
        length = std::min(length, s.size() - std::min(off, s.size()));
        offsets.push_back(off);
    }

    AlignedSet out;
    for (std::size_t i = 0; i < signals.size(); ++i) {
        const auto& src = signals[i].samples();
        auto first = src.begin() + static_cast<std::ptrdiff_t>(offsets[i]);
        out.signals_.emplace_back(std::vector<double>(first, first + static_cast<std::ptrdiff_t>(length)), rate,
                                  signals[i].site(), common_start);
    }
    return out;
}

AlignedSet make_aligned_unchecked(std::vector<Signal> signals)
{
    for (const auto& s : signals) {
        if (s.size() != signals.front().size())
            throw Error(ErrorCode::LengthMismatch, "channel lengths differ");
        if (s.sample_rate_hz() != signals.front().sample_rate_hz())
            throw Error(ErrorCode::RateMismatch, "channel rates differ");
    }
    AlignedSet out;
    out.signals_ = std::move(signals);
    return out;
}

std::size_t HrSeries::missing_count() const
{
    return static_cast<std::size_t>(std::count(hr_bpm.begin(), hr_bpm.end(), std::nullopt));
}

} // namespace ppgfuse
