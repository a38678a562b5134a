#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

#include <json.hpp>

#include "ctsat/waveform.hpp"

namespace ctsat {

inline constexpr double kDefaultZeta = 0.05;

/**
 * @brief Secondary-referred CT equivalent circuit with a two-slope core.
 *
 * The incremental magnetizing inductance is l_magnetizing while |flux| is
 * below flux_sat and l_sat beyond it. Remanence enters only as initial flux.
 */
struct CtParameters {
    double turns = 400.0;
    double r_secondary = 1.5;
    double l_secondary = 5e-5;
    double l_magnetizing = 1.5 - 5e-5;
    double flux_sat = 2.5e-3;
    double l_sat = 2e-4;
    double remanence_fraction = 0.0;
    double ratio = 400.0;

    /// T2 = (Lm + Ls) / Rs.
    double secondary_time_constant() const { return (l_magnetizing + l_secondary) / r_secondary; }
    double remanent_flux() const { return remanence_fraction * flux_sat; }

    /// Copy with l_magnetizing chosen so that T2 equals `t2`.
    CtParameters with_time_constant(double t2) const;

    void validate() const;
};

struct SaturationMask {
    std::vector<std::uint8_t> flags;

    std::size_t size() const { return flags.size(); }
    std::size_t count() const;
    bool any() const { return count() > 0; }
    bool operator==(const SaturationMask&) const = default;
};

struct SimulationResult {
    FaultScenario scenario;
    CtParameters ct;
    SampledWaveform primary;    ///< i1 / ratio
    SampledWaveform secondary;  ///< i2
    std::vector<double> flux;   ///< webers
    SaturationMask mask;
};

struct SimulationOptions {
    int substeps = 4;
    double zeta = kDefaultZeta;
};

/// Fixed-step RK4 integration of the core flux. The secondary current is
/// recovered algebraically as i2 = i1 - i_m(flux), so Kirchhoff's current law
/// holds exactly at every sample.
SimulationResult simulate(const FaultScenario& scenario, const CtParameters& ct,
                          double sample_rate = kDefaultSampleRate, double duration = 0.06,
                          const SimulationOptions& options = {});

/// Magnetizing current carried by the core at flux `phi` (zero at remanence).
double magnetizing_current(const CtParameters& ct, double phi);

/// Linear-core transient flux, t measured from onset. Throws InputError if T1 == T2.
double closed_form_flux(const FaultScenario& scenario, const CtParameters& ct, double t);

/// Linear-core magnetizing current (secondary amperes), t measured from onset.
double closed_form_magnetizing(const FaultScenario& scenario, const CtParameters& ct, double t);

/// flags[k] = |p[k] - s[k]| / max|p| >= zeta. Throws UndefinedNormalizer for an all-zero primary.
SaturationMask label_saturation(const SampledWaveform& primary, const SampledWaveform& secondary,
                                double zeta = kDefaultZeta);

nlohmann::json to_json(const CtParameters& ct);
CtParameters ct_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SimulationResult& r);

/// CSV "time_s,saturated[,probability]" aligned with the waveform CSV.
void write_mask_csv(std::ostream& out, const SaturationMask& mask, double sample_rate,
                    double start_time = 0.0,
                    const std::optional<std::vector<double>>& probability = std::nullopt);
SaturationMask read_mask_csv(std::istream& in);

}  // namespace ctsat
