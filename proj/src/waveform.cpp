#include "ctsat/waveform.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <string>

#include "ctsat/error.hpp"
#include "ctsat/io.hpp"

namespace ctsat {

double wrap_angle(double radians) {
    double r = std::fmod(radians, kTwoPi);
    if (r < 0.0) r += kTwoPi;
    if (r >= kTwoPi) r = 0.0;
    return r;
}

void FaultScenario::validate() const {
    if (!std::isfinite(amplitude) || amplitude < 0.0)
        throw InputError("fault amplitude must be finite and >= 0");
    if (!std::isfinite(fault_angle)) throw InputError("fault angle must be finite");
    if (!std::isfinite(time_constant) || time_constant <= 0.0)
        throw InputError("time constant T1 must be > 0");
    if (!std::isfinite(frequency) || frequency <= 0.0) throw InputError("frequency must be > 0");
    if (!std::isfinite(onset_time) || onset_time < 0.0) throw InputError("onset time must be >= 0");
    if (!std::isfinite(prefault_amplitude) || prefault_amplitude < 0.0)
        throw InputError("prefault amplitude must be >= 0");
}

FaultScenario FaultScenario::make(double amplitude, double fault_angle, double time_constant,
                                  double frequency, double onset_time) {
    FaultScenario s;
    s.amplitude = amplitude;
    s.fault_angle = wrap_angle(fault_angle);
    s.time_constant = time_constant;
    s.frequency = frequency;
    s.onset_time = onset_time;
    s.validate();
    return s;
}

bool ShortCircuitParams::finite() const {
    return std::isfinite(amplitude) && std::isfinite(phase) && std::isfinite(dc_offset) &&
           std::isfinite(decay_rate);
}

ShortCircuitParams ShortCircuitParams::canonical() const {
    ShortCircuitParams p = *this;
    if (p.amplitude < 0.0) {
        p.amplitude = -p.amplitude;
        p.phase += std::numbers::pi;
    }
    p.phase = wrap_angle(p.phase);
    return p;
}

void SampledWaveform::validate() const {
    if (!std::isfinite(sample_rate) || sample_rate <= 0.0)
        throw InputError("sample rate must be > 0");
    if (values.empty()) throw InputError("waveform has no samples");
    for (std::size_t k = 0; k < values.size(); ++k) {
        if (!std::isfinite(values[k]))
            throw InputError("non-finite sample at index " + std::to_string(k));
    }
}

double eval_textbook_fault(const FaultScenario& s, double t) {
    const double th = s.fault_angle;
    return s.amplitude * (std::cos(th) * std::exp(-t / s.time_constant) - std::cos(s.omega() * t + th));
}

double textbook_fault_derivative(const FaultScenario& s, double t) {
    const double th = s.fault_angle;
    const double w = s.omega();
    return s.amplitude * (-std::cos(th) * std::exp(-t / s.time_constant) / s.time_constant +
                          w * std::sin(w * t + th));
}

double eval_primary(const FaultScenario& s, double t) {
    const double tau = t - s.onset_time;
    const double th = s.fault_angle;
    if (tau < 0.0) return -s.prefault_amplitude * std::cos(s.omega() * tau + th);
    if (s.prefault_amplitude == 0.0) return eval_textbook_fault(s, tau);
    return eval_textbook_fault(s, tau) -
           s.prefault_amplitude * std::cos(th) * std::exp(-tau / s.time_constant);
}

double primary_derivative(const FaultScenario& s, double t) {
    const double tau = t - s.onset_time;
    const double th = s.fault_angle;
    const double w = s.omega();
    if (tau < 0.0) return s.prefault_amplitude * w * std::sin(w * tau + th);
    if (s.prefault_amplitude == 0.0) return textbook_fault_derivative(s, tau);
    return textbook_fault_derivative(s, tau) +
           s.prefault_amplitude * std::cos(th) * std::exp(-tau / s.time_constant) / s.time_constant;
}

double eval_model(const ShortCircuitParams& p, double frequency, double t) {
    return p.amplitude * std::cos(kTwoPi * frequency * t + p.phase) +
           p.dc_offset * std::exp(p.decay_rate * t);
}

SampledWaveform sample_model(const ShortCircuitParams& params, double frequency,
                             double sample_rate, std::size_t count) {
    if (count == 0) throw InputError("sample count must be >= 1");
    if (!(sample_rate > 0.0)) throw InputError("sample rate must be > 0");
    SampledWaveform w;
    w.sample_rate = sample_rate;
    w.start_time = 0.0;
    w.values.resize(count);
    for (std::size_t k = 0; k < count; ++k) {
        w.values[k] = eval_model(params, frequency, static_cast<double>(k) / sample_rate);
    }
    return w;
}

ShortCircuitParams textbook_as_model(const FaultScenario& s) {
    ShortCircuitParams p;
    p.amplitude = -s.amplitude;
    p.phase = s.fault_angle;
    p.dc_offset = s.amplitude * std::cos(s.fault_angle);
    p.decay_rate = -1.0 / s.time_constant;
    return p;
}

void write_waveform_csv(std::ostream& out, const SampledWaveform& w) {
    out << "time_s,current_A\n";
    for (std::size_t k = 0; k < w.size(); ++k) {
        out << io::format_double(w.time_at(k)) << ',' << io::format_double(w.values[k]) << '\n';
    }
}

SampledWaveform read_waveform_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw InputError("waveform CSV is empty");
    const auto header = io::split_csv_line(line);
    if (header.size() < 2 || header[0] != "time_s" || header[1] != "current_A")
        throw InputError("waveform CSV header must start with time_s,current_A");
    std::vector<double> times;
    SampledWaveform w;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty() || line == "\r") continue;
        const auto cells = io::split_csv_line(line);
        if (cells.size() < 2) throw InputError("waveform CSV row " + std::to_string(row) + ": expected 2 columns");
        times.push_back(io::parse_double(cells[0], "time_s at row " + std::to_string(row)));
        w.values.push_back(io::parse_double(cells[1], "current_A at row " + std::to_string(row)));
    }
    if (w.values.empty()) throw InputError("waveform CSV has no data rows");
    w.start_time = times.front();
    if (times.size() > 1) {
        const double span = times.back() - times.front();
        if (!(span > 0.0)) throw InputError("waveform CSV time column must increase");
        double fs = static_cast<double>(times.size() - 1) / span;
        // timestamps are printed from k / fs, so an integral rate is recovered exactly
        const double rounded = std::round(fs);
        if (std::abs(fs - rounded) <= 1e-6 * rounded) fs = rounded;
        w.sample_rate = fs;
    }
    w.validate();
    return w;
}

nlohmann::json to_json(const SampledWaveform& w) {
    return {{"fs", w.sample_rate}, {"start_time", w.start_time}, {"values", w.values}};
}

SampledWaveform waveform_from_json(const nlohmann::json& j) {
    SampledWaveform w;
    try {
        w.sample_rate = j.at("fs").get<double>();
        w.start_time = j.value("start_time", 0.0);
        w.values = j.at("values").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("waveform JSON: ") + e.what());
    }
    w.validate();
    return w;
}

nlohmann::json to_json(const FaultScenario& s) {
    return {{"amplitude", s.amplitude},       {"fault_angle", s.fault_angle},
            {"time_constant", s.time_constant}, {"frequency", s.frequency},
            {"onset_time", s.onset_time},     {"prefault_amplitude", s.prefault_amplitude}};
}

FaultScenario scenario_from_json(const nlohmann::json& j) {
    FaultScenario s;
    try {
        s.amplitude = j.at("amplitude").get<double>();
        s.fault_angle = wrap_angle(j.value("fault_angle", 0.0));
        s.time_constant = j.value("time_constant", s.time_constant);
        s.frequency = j.value("frequency", s.frequency);
        s.onset_time = j.value("onset_time", 0.0);
        s.prefault_amplitude = j.value("prefault_amplitude", 0.0);
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("scenario JSON: ") + e.what());
    }
    s.validate();
    return s;
}

nlohmann::json to_json(const ShortCircuitParams& p) {
    return {{"A", p.amplitude}, {"theta", p.phase}, {"B", p.dc_offset}, {"lambda", p.decay_rate}};
}

ShortCircuitParams params_from_json(const nlohmann::json& j) {
    ShortCircuitParams p;
    try {
        p.amplitude = j.at("A").get<double>();
        p.phase = j.at("theta").get<double>();
        p.dc_offset = j.at("B").get<double>();
        p.decay_rate = j.at("lambda").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("parameter JSON: ") + e.what());
    }
    return p;
}

}  // namespace ctsat
