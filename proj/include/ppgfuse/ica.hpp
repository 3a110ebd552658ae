#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "ppgfuse/beats.hpp"
#include "ppgfuse/signal.hpp"

namespace ppgfuse::ica {

struct IcaConfig {
    double tolerance = 1e-6;
    int max_iterations = 500;
    /// Whitening fails when the smallest covariance eigenvalue falls below
    /// this fraction of the largest.
    double rank_tolerance = 1e-10;
};

struct IcaResult {
    /// One row per component, one column per sample.
    Eigen::MatrixXd components;
    /// Mixing matrix A with centered data ~= A * components.
    Eigen::MatrixXd mixing;
    Eigen::MatrixXd unmixing;
    std::size_t chosen = 0;
    double score = 0.0;
    bool converged = false;
    int iterations = 0;
};

/// Symmetric fixed-point ICA with the log-cosh contrast. Rows of `data` are
/// channels. Initialization is drawn from a seeded generator, so results are
/// deterministic. Throws SingularWhitening for rank-deficient input.
IcaResult ica_unmix(const Eigen::MatrixXd& data, std::size_t n_components, std::uint64_t seed,
                    const IcaConfig& cfg = {});

IcaResult ica_unmix(const AlignedSet& signals, std::size_t n_components, std::uint64_t seed, const IcaConfig& cfg = {});

/// Fraction of [low, high] band power within +-0.1 Hz of the dominant in-band
/// peak. Scale invariant.
double spectral_concentration(std::span<const double> x, double rate_hz, double low_hz = 0.6, double high_hz = 3.3);

/// spectral_concentration averaged over consecutive windows of window_s
/// seconds (the whole signal if shorter), so a slowly drifting pulse rate
/// still scores as concentrated.
double windowed_concentration(std::span<const double> x, double rate_hz, double window_s = 30.0,
                              double low_hz = 0.6, double high_hz = 3.3);

using SelectionRule = std::function<double(std::span<const double>, double)>;

/// Picks the highest scoring component (first on ties) and records it in
/// result.chosen / result.score. The default rule is windowed_concentration.
std::size_t select_best_component(IcaResult& result, double rate_hz, const SelectionRule& rule = {});

struct IcaHrConfig {
    double chunk_s = 300.0;
    std::uint64_t seed = 1;
    IcaConfig ica;
    beats::PipelineConfig pipeline;
};

struct IcaHrRun {
    Signal best;               // chunk-wise best components, concatenated
    std::vector<double> chunk_scores;
    std::vector<bool> chunk_converged;
    HrSeries hr;
};

/// Bandpass every channel, unmix each chunk, keep the best component (sign
/// chosen so systolic peaks point up), concatenate and run the HR pipeline.
IcaHrRun ica_hr(const AlignedSet& raw, const IcaHrConfig& cfg = {});

} // namespace ppgfuse::ica
