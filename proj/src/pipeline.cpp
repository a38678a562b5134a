#include "ctsat/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "ctsat/error.hpp"

namespace ctsat {

Repair detect_and_compensate(const FcnModel& model, const SampledWaveform& secondary, const LmConfig& lm,
                             double threshold) {
    Repair r;
    r.detection = detect(model, secondary, threshold);
    if (!r.detection.mask.any()) {
        r.waveform = secondary;
        return r;
    }
    auto c = compensate(secondary, r.detection.mask, lm);
    r.waveform = std::move(c.waveform);
    r.fit = std::move(c.fit);
    return r;
}

LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw InputError("line fit needs two or more (x, y) pairs");
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (!(sxx > 0.0)) throw InputError("line fit needs two distinct x values");
    LineFit f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    f.r2 = syy > 0.0 ? sxy * sxy / (sxx * syy) : 1.0;
    return f;
}

RuntimeProfile profile_runtime(const FcnModel& model, const SampledWaveform& record,
                               const std::vector<double>& window_ms, int repeats, const LmConfig& lm) {
    if (repeats < 1) throw InputError("repeats must be >= 1");
    record.validate();
    RuntimeProfile p;
    for (double w : window_ms) {
        const auto n = static_cast<std::size_t>(std::llround(w * 1e-3 * record.sample_rate));
        if (n == 0 || n > record.size())
            throw InputError("window of " + std::to_string(w) + " ms does not fit the " +
                             std::to_string(record.size()) + "-sample record");
        SampledWaveform win = record;
        win.values.resize(n);
        std::vector<double> t(static_cast<std::size_t>(repeats));
        for (auto& ti : t) {
            const auto t0 = std::chrono::steady_clock::now();
            const auto r = detect_and_compensate(model, win, lm);
            const auto t1 = std::chrono::steady_clock::now();
            if (r.waveform.size() != n) throw ComputationError("repaired window changed length");
            ti = std::chrono::duration<double>(t1 - t0).count();
        }
        std::nth_element(t.begin(), t.begin() + static_cast<std::ptrdiff_t>(t.size() / 2), t.end());
        p.window_ms.push_back(w);
        p.samples.push_back(n);
        p.seconds.push_back(t[t.size() / 2]);
    }
    if (p.window_ms.size() >= 2) p.fit = fit_line(p.window_ms, p.seconds);
    return p;
}

nlohmann::json to_json(const RuntimeProfile& p) {
    return {{"window_ms", p.window_ms},
            {"samples", p.samples},
            {"seconds", p.seconds},
            {"fit", {{"slope_s_per_ms", p.fit.slope}, {"intercept_s", p.fit.intercept}, {"r2", p.fit.r2}}}};
}

}  // namespace ctsat
