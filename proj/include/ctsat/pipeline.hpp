#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ctsat/fcn.hpp"
#include "ctsat/lm.hpp"

namespace ctsat {

struct Repair {
    Detection detection;
    SampledWaveform waveform;           ///< compensated, or the input when nothing was flagged
    std::optional<ModelFit> fit;        ///< absent when nothing was flagged
};

/// Detect saturated samples and replace them with the fitted short-circuit model.
Repair detect_and_compensate(const FcnModel& model, const SampledWaveform& secondary, const LmConfig& lm = {},
                             double threshold = 0.5);

struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r2 = 0.0;
};

/// Ordinary least squares y = slope x + intercept. Needs two distinct x values.
LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y);

struct RuntimeProfile {
    std::vector<double> window_ms;
    std::vector<std::size_t> samples;
    std::vector<double> seconds;  ///< median wall time of detect + compensate
    LineFit fit;                  ///< seconds against window_ms
};

/// Times detect + compensate on the leading window_ms of `record` for each window.
RuntimeProfile profile_runtime(const FcnModel& model, const SampledWaveform& record,
                               const std::vector<double>& window_ms, int repeats, const LmConfig& lm = {});

nlohmann::json to_json(const RuntimeProfile& p);

}  // namespace ctsat
