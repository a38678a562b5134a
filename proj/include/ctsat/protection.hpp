#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ctsat/ct_sim.hpp"
#include "ctsat/lm.hpp"
#include "ctsat/waveform.hpp"

namespace ctsat {

/// 5 A rms rated secondary current, as a peak value.
inline constexpr double kRatedSecondaryPeak = 5.0 * std::numbers::sqrt2;

struct RelayConfig {
    double restraint_k = 0.3;
    double pickup_io = 0.1 * kRatedSecondaryPeak;  ///< peak amperes, secondary-referred
    double window_ms = 20.0;
    double frequency = kDefaultFrequency;

    void validate() const;
    nlohmann::json to_json() const;
};

/// Full-cycle DFT fundamental, (2/N) sum x[k] exp(-j 2 pi k / N). The window
/// must hold exactly one cycle (N = fs / f samples). Magnitude is a peak value.
std::complex<double> phasor(std::span<const double> window, double sample_rate, double frequency);

/**
 * Sliding one-cycle windows advanced one sample at a time. Both currents are
 * measured flowing into the protected line, so an external fault gives
 * I_ij = -I_ji. I_op = |I_ij + I_ji|, I_re = |I_ij - I_ji|.
 */
struct RelayVerdict {
    std::vector<double> window_end_time;
    std::vector<double> i_op;
    std::vector<double> i_re;
    std::vector<std::uint8_t> trip;
    bool tripped = false;
    std::optional<double> trip_time;
};

RelayVerdict relay_decide(const SampledWaveform& i_side, const SampledWaveform& j_side, const RelayConfig& cfg = {});

struct TimingModel {
    double tau1_window = 0.020;
    double tau2_update = 0.004;
    double tau3_method = 0.0;

    void validate() const;
};

struct TimingReport {
    double t_p = 0.0;        ///< tau1 + tau2
    double t_p_prime = 0.0;  ///< tau1 + tau3 + tau2
    double t_b = 0.0;        ///< t_p + T_delay
    double t_b_prime = 0.0;  ///< t_p' + T_delay
    double update_period = 0.0;           ///< tau2
    double extended_update_period = 0.0;  ///< tau2 + tau3
};

TimingReport timing_report(const TimingModel& timing, double t_delay);
nlohmann::json to_json(const TimingReport& r);

struct StudyScenario {
    std::string id;
    FaultScenario fault;
    CtParameters ct;  ///< the j-side CT; the i-side CT is ideal
    bool internal = false;
};

using Detector = std::function<SaturationMask(const SampledWaveform& secondary)>;

struct StudyConfig {
    RelayConfig relay;
    LmConfig lm;
    double sample_rate = kDefaultSampleRate;
    double duration = 0.06;
    /// detection + compensation latency added to compensated-arm trip times
    double tau3 = 0.0;
};

struct ScenarioOutcome {
    std::string id;
    bool internal = false;
    std::size_t detected_points = 0;
    bool compensation_converged = false;
    std::string compensation_note;
    RelayVerdict raw;
    RelayVerdict compensated;
    /// compensated trip time delayed by tau3
    std::optional<double> compensated_trip_time_effective;

    bool raw_malfunction() const { return !internal && raw.tripped; }
    bool compensated_malfunction() const { return !internal && compensated.tripped; }
};

struct StudyReport {
    std::vector<ScenarioOutcome> outcomes;
    std::size_t external_count = 0;
    std::size_t internal_count = 0;
    std::size_t raw_malfunctions = 0;
    std::size_t compensated_malfunctions = 0;
    std::size_t raw_internal_trips = 0;
    std::size_t compensated_internal_trips = 0;
};

/// For each scenario: simulate the j-side CT, run the relay on the raw secondary
/// and on the detected-and-compensated secondary. Compensation failures are
/// recorded and fall back to the raw current.
StudyReport malfunction_study(const std::vector<StudyScenario>& scenarios, const Detector& detector,
                              const StudyConfig& cfg = {});

nlohmann::json to_json(const RelayVerdict& v);
nlohmann::json summary_json(const StudyReport& r);
/// Table with one row per scenario: id, internal, raw_trip, compensated_trip, ...
std::string summary_csv(const StudyReport& r);
/// Per-window trace: time_s,i_op_raw,i_re_raw,trip_raw,i_op_comp,i_re_comp,trip_comp
std::string trace_csv(const ScenarioOutcome& o);

/// Deterministic study set: heavily saturating external faults (severity 15-20x,
/// T1 0.2-0.3 s, positive remanence) followed by internal faults over a wide
/// severity range. Ids are "ext-NN" and "int-NN".
std::vector<StudyScenario> heavy_study_set(std::size_t externals = 20, std::size_t internals = 10);

StudyScenario study_scenario_from_json(const nlohmann::json& j);
nlohmann::json to_json(const StudyScenario& s);

}  // namespace ctsat
