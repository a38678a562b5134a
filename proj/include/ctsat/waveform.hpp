#pragma once

#include <cstddef>
#include <iosfwd>
#include <numbers>
#include <string>
#include <vector>

#include <json.hpp>

namespace ctsat {

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;
inline constexpr double kDefaultFrequency = 50.0;
inline constexpr double kDefaultSampleRate = 4000.0;

/// Wraps an angle into [0, 2*pi).
double wrap_angle(double radians);

/**
 * @brief Primary-side short-circuit description.
 *
 * amplitude is the peak steady-state fault current in primary amperes.
 * Time in every evaluation is measured from fault onset. Before onset the
 * line carries a sinusoidal load current of peak prefault_amplitude (zero by
 * default, i.e. a no-load system).
 */
struct FaultScenario {
    double amplitude = 0.0;
    double fault_angle = 0.0;
    double time_constant = 0.1;
    double frequency = kDefaultFrequency;
    double onset_time = 0.0;
    double prefault_amplitude = 0.0;

    double omega() const { return kTwoPi * frequency; }

    /// Throws InputError unless amplitude >= 0, T1 > 0, f > 0, onset >= 0.
    void validate() const;

    static FaultScenario make(double amplitude, double fault_angle, double time_constant,
                              double frequency = kDefaultFrequency, double onset_time = 0.0);
};

/// Parameters of A*cos(w t + theta) + B*exp(lambda t).
struct ShortCircuitParams {
    double amplitude = 0.0;
    double phase = 0.0;
    double dc_offset = 0.0;
    double decay_rate = 0.0;

    bool finite() const;

    /// Equivalent parameters with amplitude >= 0 and phase in [0, 2*pi).
    ShortCircuitParams canonical() const;
};

struct SampledWaveform {
    double sample_rate = kDefaultSampleRate;
    double start_time = 0.0;
    std::vector<double> values;

    std::size_t size() const { return values.size(); }
    double time_at(std::size_t k) const {
        return start_time + static_cast<double>(k) / sample_rate;
    }

    /// Throws InputError on fs <= 0, empty values, or non-finite entries.
    void validate() const;
};

/// i1(t) = Im [cos(theta) exp(-t/T1) - cos(w t + theta)], t from onset.
double eval_textbook_fault(const FaultScenario& scenario, double t);

/// Analytic time derivative of eval_textbook_fault.
double textbook_fault_derivative(const FaultScenario& scenario, double t);

/**
 * Primary current at record time t (not onset-relative). Before onset it is
 * the load sinusoid -Ipre cos(w (t - t0) + theta); after onset the DC term
 * decays from (Im - Ipre) cos(theta) so the trace is continuous at t0.
 * With Ipre = 0 and t0 = 0 this equals eval_textbook_fault.
 */
double eval_primary(const FaultScenario& scenario, double t);
double primary_derivative(const FaultScenario& scenario, double t);

/// A cos(w t + theta) + B exp(lambda t) with w = 2*pi*frequency.
double eval_model(const ShortCircuitParams& params, double frequency, double t);

/// values[k] = eval_model(params, f, k / fs), start_time 0.
SampledWaveform sample_model(const ShortCircuitParams& params, double frequency,
                             double sample_rate, std::size_t count);

/// Model parameters reproducing eval_textbook_fault exactly (A = -Im, B = Im cos theta).
ShortCircuitParams textbook_as_model(const FaultScenario& scenario);

// Serialization. CSV is "time_s,current_A" with a header row; JSON is
// {"fs", "start_time", "values"} and round-trips bit-exactly.
void write_waveform_csv(std::ostream& out, const SampledWaveform& waveform);
SampledWaveform read_waveform_csv(std::istream& in);
nlohmann::json to_json(const SampledWaveform& waveform);
SampledWaveform waveform_from_json(const nlohmann::json& j);

nlohmann::json to_json(const FaultScenario& scenario);
FaultScenario scenario_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ShortCircuitParams& params);
ShortCircuitParams params_from_json(const nlohmann::json& j);

}  // namespace ctsat
