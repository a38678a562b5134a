#include "ctsat/protection.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "ctsat/error.hpp"
#include "ctsat/io.hpp"

namespace ctsat {

namespace {

std::size_t samples_per_cycle(double fs, double f) {
    const double n = fs / f;
    const double r = std::round(n);
    if (r < 2.0 || std::abs(n - r) > 1e-9 * r)
        throw InputError("sample rate must hold an integer number (>= 2) of samples per cycle");
    return static_cast<std::size_t>(r);
}

}  // namespace

void RelayConfig::validate() const {
    if (!(restraint_k > 0.0 && restraint_k < 1.0)) throw InputError("restraint K must lie in (0, 1)");
    if (!(pickup_io >= 0.0)) throw InputError("pickup current must be >= 0");
    if (!(frequency > 0.0)) throw InputError("frequency must be > 0");
    if (std::abs(window_ms - 1e3 / frequency) > 1e-9)
        throw InputError("the full-cycle DFT needs a window of exactly one cycle");
}

nlohmann::json RelayConfig::to_json() const {
    return {{"restraint_k", restraint_k}, {"pickup_io", pickup_io}, {"window_ms", window_ms}, {"frequency", frequency},
            {"phasor_method", "full-cycle-dft"}};
}

std::complex<double> phasor(std::span<const double> window, double fs, double f) {
    const std::size_t N = samples_per_cycle(fs, f);
    if (window.size() != N)
        throw InputError("phasor window has " + std::to_string(window.size()) + " samples, expected " +
                         std::to_string(N));
    double re = 0.0, im = 0.0;
    for (std::size_t k = 0; k < N; ++k) {
        const double a = kTwoPi * static_cast<double>(k) / static_cast<double>(N);
        re += window[k] * std::cos(a);
        im -= window[k] * std::sin(a);
    }
    const double s = 2.0 / static_cast<double>(N);
    return {s * re, s * im};
}

RelayVerdict relay_decide(const SampledWaveform& i_side, const SampledWaveform& j_side, const RelayConfig& cfg) {
    cfg.validate();
    if (i_side.size() != j_side.size())
        throw InputError("relay inputs differ in length (" + std::to_string(i_side.size()) + " vs " +
                         std::to_string(j_side.size()) + ")");
    if (i_side.sample_rate != j_side.sample_rate) throw InputError("relay inputs differ in sample rate");
    const double fs = i_side.sample_rate;
    const std::size_t N = samples_per_cycle(fs, cfg.frequency);
    if (i_side.size() < N) throw InputError("relay inputs are shorter than one cycle");

    std::vector<double> c(N), s(N);
    for (std::size_t k = 0; k < N; ++k) {
        const double a = kTwoPi * static_cast<double>(k) / static_cast<double>(N);
        c[k] = std::cos(a);
        s[k] = std::sin(a);
    }
    const double scale = 2.0 / static_cast<double>(N);
    RelayVerdict v;
    const std::size_t windows = i_side.size() - N + 1;
    v.window_end_time.resize(windows);
    v.i_op.resize(windows);
    v.i_re.resize(windows);
    v.trip.resize(windows);
    for (std::size_t w = 0; w < windows; ++w) {
        double ar = 0.0, ai = 0.0, br = 0.0, bi = 0.0;
        for (std::size_t k = 0; k < N; ++k) {
            const double x = i_side.values[w + k], y = j_side.values[w + k];
            ar += x * c[k];
            ai -= x * s[k];
            br += y * c[k];
            bi -= y * s[k];
        }
        const std::complex<double> Ii(scale * ar, scale * ai), Ij(scale * br, scale * bi);
        v.i_op[w] = std::abs(Ii + Ij);
        v.i_re[w] = std::abs(Ii - Ij);
        v.window_end_time[w] = i_side.time_at(w + N - 1);
        const bool trip = v.i_op[w] >= cfg.pickup_io && v.i_op[w] >= cfg.restraint_k * v.i_re[w];
        v.trip[w] = trip ? 1 : 0;
        if (trip && !v.tripped) {
            v.tripped = true;
            v.trip_time = v.window_end_time[w];
        }
    }
    return v;
}

void TimingModel::validate() const {
    if (!(tau1_window > 0.0) || !(tau2_update > 0.0) || !(tau3_method >= 0.0))
        throw InputError("timing model needs tau1, tau2 > 0 and tau3 >= 0");
}

TimingReport timing_report(const TimingModel& t, double t_delay) {
    t.validate();
    if (!(t_delay >= 0.0)) throw InputError("T_delay must be >= 0");
    TimingReport r;
    r.t_p = t.tau1_window + t.tau2_update;
    r.t_p_prime = t.tau1_window + t.tau3_method + t.tau2_update;
    r.t_b = r.t_p + t_delay;
    r.t_b_prime = r.t_p_prime + t_delay;
    r.update_period = t.tau2_update;
    r.extended_update_period = t.tau2_update + t.tau3_method;
    return r;
}

nlohmann::json to_json(const TimingReport& r) {
    return {{"t_p", r.t_p},
            {"t_p_prime", r.t_p_prime},
            {"t_b", r.t_b},
            {"t_b_prime", r.t_b_prime},
            {"update_period", r.update_period},
            {"extended_update_period", r.extended_update_period}};
}

StudyReport malfunction_study(const std::vector<StudyScenario>& scenarios, const Detector& detector,
                              const StudyConfig& cfg) {
    if (!detector) throw InputError("malfunction study needs a detector");
    cfg.relay.validate();
    StudyReport rep;
    rep.outcomes.resize(scenarios.size());
    std::vector<std::string> errors(scenarios.size());
    const long long n = static_cast<long long>(scenarios.size());

#pragma omp parallel for schedule(dynamic, 1)
    for (long long ii = 0; ii < n; ++ii) {
        const auto i = static_cast<std::size_t>(ii);
        const auto& sc = scenarios[i];
        auto& o = rep.outcomes[i];
        try {
            const auto sim = simulate(sc.fault, sc.ct, cfg.sample_rate, cfg.duration);
            o.id = sc.id;
            o.internal = sc.internal;
            const double sign = sc.internal ? 1.0 : -1.0;
            auto oriented = [&](const SampledWaveform& w) {
                SampledWaveform out = w;
                for (double& x : out.values) x *= sign;
                return out;
            };
            o.raw = relay_decide(sim.primary, oriented(sim.secondary), cfg.relay);

            SampledWaveform repaired = sim.secondary;
            try {
                const auto mask = detector(sim.secondary);
                o.detected_points = mask.count();
                if (mask.any()) {
                    auto comp = compensate(sim.secondary, mask, cfg.lm);
                    o.compensation_converged = comp.fit.converged;
                    o.compensation_note = comp.fit.stop_reason;
                    repaired = std::move(comp.waveform);
                } else {
                    o.compensation_converged = true;
                    o.compensation_note = "no saturation detected";
                }
            } catch (const InputError& e) {
                o.compensation_note = std::string("compensation skipped: ") + e.what();
            }
            o.compensated = relay_decide(sim.primary, oriented(repaired), cfg.relay);
            if (o.compensated.trip_time) o.compensated_trip_time_effective = *o.compensated.trip_time + cfg.tau3;
        } catch (const std::exception& e) {
            errors[i] = "scenario '" + sc.id + "': " + e.what();
        }
    }
    for (const auto& e : errors)
        if (!e.empty()) throw ComputationError(e);

    for (const auto& o : rep.outcomes) {
        if (o.internal) {
            ++rep.internal_count;
            rep.raw_internal_trips += o.raw.tripped;
            rep.compensated_internal_trips += o.compensated.tripped;
        } else {
            ++rep.external_count;
            rep.raw_malfunctions += o.raw_malfunction();
            rep.compensated_malfunctions += o.compensated_malfunction();
        }
    }
    return rep;
}

nlohmann::json to_json(const RelayVerdict& v) {
    nlohmann::json j = {{"window_end_time", v.window_end_time},
                        {"i_op", v.i_op},
                        {"i_re", v.i_re},
                        {"trip", v.trip},
                        {"tripped", v.tripped}};
    j["trip_time"] = v.trip_time ? nlohmann::json(*v.trip_time) : nlohmann::json(nullptr);
    return j;
}

nlohmann::json summary_json(const StudyReport& r) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& o : r.outcomes) {
        rows.push_back({{"id", o.id},
                        {"internal", o.internal},
                        {"detected_points", o.detected_points},
                        {"compensation_converged", o.compensation_converged},
                        {"compensation_note", o.compensation_note},
                        {"raw_trip", o.raw.tripped},
                        {"compensated_trip", o.compensated.tripped},
                        {"raw_trip_time", o.raw.trip_time ? nlohmann::json(*o.raw.trip_time) : nlohmann::json(nullptr)},
                        {"compensated_trip_time",
                         o.compensated.trip_time ? nlohmann::json(*o.compensated.trip_time) : nlohmann::json(nullptr)},
                        {"compensated_trip_time_effective", o.compensated_trip_time_effective
                                                                ? nlohmann::json(*o.compensated_trip_time_effective)
                                                                : nlohmann::json(nullptr)}});
    }
    return {{"external_count", r.external_count},
            {"internal_count", r.internal_count},
            {"raw_malfunctions", r.raw_malfunctions},
            {"compensated_malfunctions", r.compensated_malfunctions},
            {"raw_internal_trips", r.raw_internal_trips},
            {"compensated_internal_trips", r.compensated_internal_trips},
            {"scenarios", rows}};
}

std::string summary_csv(const StudyReport& r) {
    std::ostringstream out;
    out << "id,internal,detected_points,compensation_converged,raw_trip,compensated_trip,raw_trip_time_s,"
           "compensated_trip_time_s\n";
    auto opt = [](const std::optional<double>& t) { return t ? io::format_double(*t) : std::string(); };
    for (const auto& o : r.outcomes) {
        out << o.id << ',' << (o.internal ? 1 : 0) << ',' << o.detected_points << ','
            << (o.compensation_converged ? 1 : 0) << ',' << (o.raw.tripped ? 1 : 0) << ','
            << (o.compensated.tripped ? 1 : 0) << ',' << opt(o.raw.trip_time) << ',' << opt(o.compensated.trip_time)
            << '\n';
    }
    out << "# external " << r.external_count << ", raw malfunctions " << r.raw_malfunctions
        << ", compensated malfunctions " << r.compensated_malfunctions << "; internal " << r.internal_count
        << ", raw trips " << r.raw_internal_trips << ", compensated trips " << r.compensated_internal_trips << '\n';
    return out.str();
}

std::string trace_csv(const ScenarioOutcome& o) {
    std::ostringstream out;
    out << "time_s,i_op_raw,i_re_raw,trip_raw,i_op_comp,i_re_comp,trip_comp\n";
    for (std::size_t w = 0; w < o.raw.i_op.size(); ++w) {
        out << io::format_double(o.raw.window_end_time[w]) << ',' << io::format_double(o.raw.i_op[w]) << ','
            << io::format_double(o.raw.i_re[w]) << ',' << static_cast<int>(o.raw.trip[w]) << ','
            << io::format_double(o.compensated.i_op[w]) << ',' << io::format_double(o.compensated.i_re[w]) << ','
            << static_cast<int>(o.compensated.trip[w]) << '\n';
    }
    return out.str();
}

StudyScenario study_scenario_from_json(const nlohmann::json& j) {
    StudyScenario s;
    try {
        s.id = j.at("id").get<std::string>();
        s.internal = j.value("internal", false);
        s.fault = scenario_from_json(j.at("fault"));
        s.ct = ct_from_json(j.value("ct", nlohmann::json::object()));
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("scenario entry: ") + e.what());
    }
    return s;
}

nlohmann::json to_json(const StudyScenario& s) {
    return {{"id", s.id}, {"internal", s.internal}, {"fault", to_json(s.fault)}, {"ct", to_json(s.ct)}};
}

std::vector<StudyScenario> heavy_study_set(std::size_t externals, std::size_t internals) {
    constexpr double deg = std::numbers::pi / 180.0;
    auto id = [](const char* prefix, std::size_t i) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%s-%02zu", prefix, i);
        return std::string(buf);
    };
    std::vector<StudyScenario> out;
    for (std::size_t i = 0; i < externals; ++i) {
        StudyScenario s;
        s.id = id("ext", i);
        const double severity = i % 2 ? 15.0 : 20.0;
        const double t1 = 0.2 + 0.05 * static_cast<double>(i % 3);
        s.fault = FaultScenario::make(severity * 2000.0 * std::numbers::sqrt2, static_cast<double>((i * 45) % 360) * deg, t1);
        s.ct = CtParameters{}.with_time_constant(1.0 + 0.5 * static_cast<double>((i / 3) % 3));
        s.ct.remanence_fraction = std::array{0.8, 0.4, 0.6, 0.0}[i % 4];
        out.push_back(s);
    }
    for (std::size_t i = 0; i < internals; ++i) {
        StudyScenario s;
        s.id = id("int", i);
        s.internal = true;
        const double severity = std::array{3.0, 8.0, 15.0, 20.0, 1.5}[i % 5];
        s.fault = FaultScenario::make(severity * 2000.0 * std::numbers::sqrt2, static_cast<double>(i * 36) * deg,
                                      0.1 + 0.05 * static_cast<double>(i % 4));
        s.ct = CtParameters{}.with_time_constant(std::array{0.5, 1.0, 2.0}[i % 3]);
        s.ct.remanence_fraction = std::array{0.0, 0.4, -0.4, 0.8}[i % 4];
        out.push_back(s);
    }
    return out;
}

}  // namespace ctsat
