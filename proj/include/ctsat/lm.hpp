#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ctsat/ct_sim.hpp"
#include "ctsat/waveform.hpp"

namespace ctsat {

struct LmConfig {
    double tau = 1e-3;
    double epsilon_g = 1e-15;
    int max_iters = 200;
    double rho_low = 0.25;
    double rho_high = 0.75;
    double frequency = kDefaultFrequency;
    double sample_rate = kDefaultSampleRate;
    /// compensate() treats unsaturated samples this close to a saturated one as
    /// part of the saturated run: left out of the fit and replaced in the output
    std::size_t guard = 1;

    void validate() const;
    nlohmann::json to_json() const;
};

struct ModelFit {
    ShortCircuitParams params;
    double residual_norm = 0.0;
    double gradient_norm = 0.0;
    int iterations = 0;
    bool converged = false;
    bool condition_warning = false;
    std::string stop_reason;
};

nlohmann::json to_json(const ModelFit& fit);

/// Strictly increasing positions where the mask is false.
std::vector<std::size_t> unsaturated_indices(const SaturationMask& mask);

/// F_j = observed[k_j] - model(k_j / fs). `observed` is the whole record.
std::vector<double> residual(const ShortCircuitParams& x, std::span<const std::size_t> indices,
                             std::span<const double> observed, double fs, double f);

using JacobianRow = std::array<double, 4>;

/// dF/d[A, theta, B, lambda], one row per index.
std::vector<JacobianRow> jacobian(const ShortCircuitParams& x, std::span<const std::size_t> indices, double fs,
                                  double f);

/**
 * @brief Damped Gauss-Newton on 0.5 * ||F||^2 with gain-ratio control of mu.
 *
 * mu starts at tau * max diag(J^T J), doubles when rho < rho_low and halves when
 * rho > rho_high; a step is taken only when rho > 0. Stops on ||g|| < epsilon_g,
 * on a step below machine scale, or after max_iters. The result is canonical
 * (A >= 0, theta in [0, 2 pi)).
 */
ModelFit lm_fit(std::span<const std::size_t> indices, std::span<const double> observed,
                const ShortCircuitParams& x0, const LmConfig& config = {});

/// Seed estimate from the longest unsaturated run: least-squares cosine fit for
/// A and theta, DC level from the earliest samples, lambda = -10 1/s.
ShortCircuitParams initial_guess(std::span<const std::size_t> indices, std::span<const double> observed, double fs,
                                 double f);

struct Compensation {
    SampledWaveform waveform;
    ModelFit fit;
};

/// Fitted model values on the saturated runs widened by config.guard samples,
/// measured values everywhere else.
Compensation compensate(const SampledWaveform& secondary, const SaturationMask& mask, const LmConfig& config = {});

}  // namespace ctsat
