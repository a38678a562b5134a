#include "ctsat/ct_sim.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <string>

#include "ctsat/error.hpp"
#include "ctsat/io.hpp"

namespace ctsat {

CtParameters CtParameters::with_time_constant(double t2) const {
    CtParameters c = *this;
    c.l_magnetizing = t2 * c.r_secondary - c.l_secondary;
    return c;
}

void CtParameters::validate() const {
    auto need = [](bool ok, const char* msg) {
        if (!ok) throw InputError(msg);
    };
    need(std::isfinite(turns) && turns > 0.0, "turns must be > 0");
    need(std::isfinite(r_secondary) && r_secondary > 0.0, "r_secondary must be > 0");
    need(std::isfinite(l_secondary) && l_secondary >= 0.0, "l_secondary must be >= 0");
    need(std::isfinite(l_magnetizing) && l_magnetizing > 0.0, "l_magnetizing must be > 0");
    need(flux_sat > 0.0 && !std::isnan(flux_sat), "flux_sat must be > 0");
    need(std::isfinite(l_sat) && l_sat > 0.0, "l_sat must be > 0");
    need(l_sat < l_magnetizing / 100.0, "l_sat must be below l_magnetizing / 100");
    need(std::isfinite(remanence_fraction) && std::abs(remanence_fraction) <= 0.8,
         "remanence_fraction must lie in [-0.8, 0.8]");
    need(std::isfinite(ratio) && ratio > 0.0, "ratio must be > 0");
}

std::size_t SaturationMask::count() const {
    return static_cast<std::size_t>(std::count(flags.begin(), flags.end(), std::uint8_t{1}));
}

namespace {

// Single-valued magnetization curve N*phi/L(phi), integrated piecewise.
double core_current(const CtParameters& ct, double phi) {
    const double a = std::abs(phi);
    const double lin = std::min(a, ct.flux_sat);
    const double i = ct.turns * (lin / ct.l_magnetizing + (a - lin) / ct.l_sat);
    return phi < 0.0 ? -i : i;
}

}  // namespace

double magnetizing_current(const CtParameters& ct, double phi) {
    return core_current(ct, phi) - core_current(ct, ct.remanent_flux());
}

SimulationResult simulate(const FaultScenario& scenario, const CtParameters& ct, double fs,
                          double duration, const SimulationOptions& options) {
    scenario.validate();
    ct.validate();
    if (!std::isfinite(fs) || fs <= 0.0) throw InputError("sample rate must be > 0");
    if (!(duration >= 2.0 / scenario.frequency - 0.5 / fs))
        throw InputError("duration must cover at least two fundamental cycles");
    if (options.substeps < 1) throw InputError("substeps must be >= 1");

    const auto n = static_cast<std::size_t>(std::llround(duration * fs));
    const double h = 1.0 / (fs * options.substeps);
    const double inv_ratio = 1.0 / ct.ratio;
    const double i_rem = core_current(ct, ct.remanent_flux());

    auto i1 = [&](double t) { return eval_primary(scenario, t) * inv_ratio; };
    auto di1 = [&](double t) { return primary_derivative(scenario, t) * inv_ratio; };
    auto im = [&](double phi) { return core_current(ct, phi) - i_rem; };
    auto rhs = [&](double t, double phi) {
        const double l = std::abs(phi) < ct.flux_sat ? ct.l_magnetizing : ct.l_sat;
        return (ct.l_secondary * di1(t) + ct.r_secondary * (i1(t) - im(phi))) /
               (ct.turns * (1.0 + ct.l_secondary / l));
    };

    SimulationResult r;
    r.scenario = scenario;
    r.ct = ct;
    r.primary.sample_rate = r.secondary.sample_rate = fs;
    r.primary.values.resize(n);
    r.secondary.values.resize(n);
    r.flux.resize(n);

    double phi = ct.remanent_flux();
    for (std::size_t k = 0; k < n; ++k) {
        const double t = static_cast<double>(k) / fs;
        const double p = i1(t);
        r.primary.values[k] = p;
        r.secondary.values[k] = p - im(phi);
        r.flux[k] = phi;
        if (!std::isfinite(phi) || !std::isfinite(r.secondary.values[k])) throw SimulationDiverged(k);
        for (int j = 0; j < options.substeps; ++j) {
            const double tt = t + j * h;
            const double k1 = rhs(tt, phi);
            const double k2 = rhs(tt + 0.5 * h, phi + 0.5 * h * k1);
            const double k3 = rhs(tt + 0.5 * h, phi + 0.5 * h * k2);
            const double k4 = rhs(tt + h, phi + h * k3);
            phi += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
    }

    const double peak = std::abs(*std::max_element(r.primary.values.begin(), r.primary.values.end(),
                                                   [](double a, double b) { return std::abs(a) < std::abs(b); }));
    if (peak > 0.0) {
        r.mask = label_saturation(r.primary, r.secondary, options.zeta);
    } else {
        r.mask.flags.assign(n, 0);
    }
    return r;
}

namespace {

struct Bracket {
    double prefactor_core;  // multiplies the bracket for i_m
    double bracket;
};

Bracket linear_bracket(const FaultScenario& s, const CtParameters& ct, double t) {
    const double t1 = s.time_constant;
    const double t2 = ct.secondary_time_constant();
    if (t1 == t2) throw InputError("closed form is undefined for T1 == T2");
    const double w = s.omega();
    const double th = s.fault_angle;
    const double im = s.amplitude / ct.ratio;
    const double b = -std::sin(w * t + th) + std::sin(th) * std::exp(-t / t2) +
                     (w * t1 * t2 / (t1 - t2)) * std::cos(th) * (std::exp(-t / t1) - std::exp(-t / t2));
    return {im / (w * t2), b};
}

}  // namespace

double closed_form_magnetizing(const FaultScenario& s, const CtParameters& ct, double t) {
    const auto b = linear_bracket(s, ct, t);
    return b.prefactor_core * b.bracket;
}

double closed_form_flux(const FaultScenario& s, const CtParameters& ct, double t) {
    const auto b = linear_bracket(s, ct, t);
    return ct.l_magnetizing * b.prefactor_core / ct.turns * b.bracket + ct.remanent_flux();
}

SaturationMask label_saturation(const SampledWaveform& primary, const SampledWaveform& secondary,
                                double zeta) {
    if (primary.size() != secondary.size())
        throw InputError("primary and secondary lengths differ (" + std::to_string(primary.size()) +
                         " vs " + std::to_string(secondary.size()) + ")");
    if (!(zeta > 0.0)) throw InputError("zeta must be > 0");
    double peak = 0.0;
    for (double v : primary.values) peak = std::max(peak, std::abs(v));
    if (!(peak > 0.0)) throw UndefinedNormalizer("primary current is identically zero");
    SaturationMask m;
    m.flags.resize(primary.size());
    for (std::size_t k = 0; k < primary.size(); ++k) {
        m.flags[k] = std::abs(primary.values[k] - secondary.values[k]) / peak >= zeta ? 1 : 0;
    }
    return m;
}

nlohmann::json to_json(const CtParameters& c) {
    return {{"turns", c.turns},
            {"r_secondary", c.r_secondary},
            {"l_secondary", c.l_secondary},
            {"l_magnetizing", c.l_magnetizing},
            {"flux_sat", c.flux_sat},
            {"l_sat", c.l_sat},
            {"remanence_fraction", c.remanence_fraction},
            {"ratio", c.ratio}};
}

CtParameters ct_from_json(const nlohmann::json& j) {
    CtParameters c;
    try {
        c.turns = j.value("turns", c.turns);
        c.r_secondary = j.value("r_secondary", c.r_secondary);
        c.l_secondary = j.value("l_secondary", c.l_secondary);
        if (j.contains("t2")) c = c.with_time_constant(j.at("t2").get<double>());
        c.l_magnetizing = j.value("l_magnetizing", c.l_magnetizing);
        c.flux_sat = j.value("flux_sat", c.flux_sat);
        c.l_sat = j.value("l_sat", c.l_sat);
        c.remanence_fraction = j.value("remanence_fraction", c.remanence_fraction);
        c.ratio = j.value("ratio", c.ratio);
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("CT parameter JSON: ") + e.what());
    }
    c.validate();
    return c;
}

nlohmann::json to_json(const SimulationResult& r) {
    return {{"scenario", to_json(r.scenario)},
            {"ct", to_json(r.ct)},
            {"fs", r.primary.sample_rate},
            {"primary", r.primary.values},
            {"secondary", r.secondary.values},
            {"flux", r.flux},
            {"mask", r.mask.flags}};
}

void write_mask_csv(std::ostream& out, const SaturationMask& mask, double fs, double start_time,
                    const std::optional<std::vector<double>>& probability) {
    if (probability && probability->size() != mask.size())
        throw InputError("probability and mask lengths differ");
    out << (probability ? "time_s,saturated,probability\n" : "time_s,saturated\n");
    for (std::size_t k = 0; k < mask.size(); ++k) {
        out << io::format_double(start_time + static_cast<double>(k) / fs) << ','
            << static_cast<int>(mask.flags[k]);
        if (probability) out << ',' << io::format_double((*probability)[k]);
        out << '\n';
    }
}

SaturationMask read_mask_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw InputError("mask CSV is empty");
    const auto header = io::split_csv_line(line);
    if (header.size() < 2 || header[0] != "time_s" || header[1] != "saturated")
        throw InputError("mask CSV header must start with time_s,saturated");
    SaturationMask m;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty() || line == "\r") continue;
        const auto cells = io::split_csv_line(line);
        if (cells.size() < 2 || (cells[1] != "0" && cells[1] != "1"))
            throw InputError("mask CSV row " + std::to_string(row) + ": saturated must be 0 or 1");
        m.flags.push_back(cells[1] == "1" ? 1 : 0);
    }
    if (m.flags.empty()) throw InputError("mask CSV has no data rows");
    return m;
}

}  // namespace ctsat
