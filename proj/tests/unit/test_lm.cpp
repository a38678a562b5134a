#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "ctsat/ct_sim.hpp"
#include "ctsat/dataset.hpp"
#include "ctsat/error.hpp"
#include "ctsat/lm.hpp"

using namespace ctsat;

namespace {

const ShortCircuitParams kTruth{1.0, 0.7, 0.8, -12.0};

std::vector<double> synth(const ShortCircuitParams& p, std::size_t n) {
    return sample_model(p, 50.0, 4000.0, n).values;
}

std::vector<std::size_t> iota(std::size_t first, std::size_t n) {
    std::vector<std::size_t> v(n);
    std::iota(v.begin(), v.end(), first);
    return v;
}

double rel(double got, double want) { return std::abs(got - want) / std::abs(want); }

double max_rel(const ShortCircuitParams& a, const ShortCircuitParams& b) {
    return std::max({rel(a.amplitude, b.amplitude), rel(a.phase, b.phase), rel(a.dc_offset, b.dc_offset),
                     rel(a.decay_rate, b.decay_rate)});
}

double objective(const ShortCircuitParams& p, std::span<const std::size_t> idx, std::span<const double> obs) {
    double s = 0.0;
    for (double r : residual(p, idx, obs, 4000.0, 50.0)) s += r * r;
    return s;
}

}  // namespace

TEST_CASE("residual is observation minus model") {
    const auto obs = synth(kTruth, 40);
    const auto idx = iota(0, 40);
    for (double r : residual(kTruth, idx, obs, 4000.0, 50.0)) CHECK(std::abs(r) < 1e-15);
    const ShortCircuitParams shifted{1.0, 0.7, 0.8 + 0.25, -12.0};
    const auto r = residual(shifted, std::vector<std::size_t>{0}, obs, 4000.0, 50.0);
    CHECK(r[0] == doctest::Approx(-0.25));
}

TEST_CASE("jacobian matches central differences of the residual") {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> ua(-3, 3), ut(0, 2 * std::numbers::pi), ul(-60, -1);
    const std::vector<double> obs(240, 0.0);
    const auto idx = iota(0, 240);
    for (int trial = 0; trial < 50; ++trial) {
        ShortCircuitParams x{ua(rng), ut(rng), ua(rng), ul(rng)};
        const auto J = jacobian(x, idx, 4000.0, 50.0);
        for (int c = 0; c < 4; ++c) {
            auto get = [c](ShortCircuitParams& p) -> double& {
                switch (c) {
                    case 0: return p.amplitude;
                    case 1: return p.phase;
                    case 2: return p.dc_offset;
                    default: return p.decay_rate;
                }
            };
            auto up = x, down = x;
            const double h = 1e-7 * std::max(1.0, std::abs(get(x)));
            get(up) += h;
            get(down) -= h;
            const auto ru = residual(up, idx, obs, 4000.0, 50.0);
            const auto rd = residual(down, idx, obs, 4000.0, 50.0);
            for (std::size_t j = 0; j < idx.size(); ++j) {
                const double fd = (ru[j] - rd[j]) / (2 * h);
                const double err = std::abs(fd - J[j][static_cast<std::size_t>(c)]);
                CHECK((err <= 1e-6 || err <= 1e-4 * std::abs(fd)));
            }
        }
    }
}

TEST_CASE("jacobian columns vanish with their coefficient") {
    const auto idx = iota(0, 30);
    for (const auto& row : jacobian({2.0, 0.3, 0.0, -8.0}, idx, 4000.0, 50.0)) CHECK(row[3] == 0.0);
    for (const auto& row : jacobian({0.0, 0.3, 1.0, -8.0}, idx, 4000.0, 50.0)) CHECK(row[1] == 0.0);
}

TEST_CASE("noiseless data is recovered from a 20% perturbed start") {
    const auto obs = synth(kTruth, 60);
    const auto idx = iota(0, 60);
    for (double s : {0.8, 1.2}) {
        const ShortCircuitParams x0{kTruth.amplitude * s, kTruth.phase * (2 - s), kTruth.dc_offset * s,
                                    kTruth.decay_rate * (2 - s)};
        const auto fit = lm_fit(idx, obs, x0);
        CHECK(fit.converged);
        CHECK(max_rel(fit.params, kTruth) < 1e-6);
    }
}

TEST_CASE("starting at the truth converges immediately") {
    const auto obs = synth(kTruth, 60);
    const auto idx = iota(0, 60);
    const auto fit = lm_fit(idx, obs, kTruth);
    CHECK(fit.iterations <= 2);
    CHECK(fit.residual_norm < 1e-12);
    CHECK(fit.converged);
}

TEST_CASE("reflected amplitude is canonicalized") {
    const auto obs = synth(kTruth, 60);
    const auto idx = iota(0, 60);
    const auto fit = lm_fit(idx, obs, {-1.1, 0.7 + std::numbers::pi, 0.7, -11.0});
    CHECK(fit.params.amplitude > 0);
    CHECK(max_rel(fit.params, kTruth) < 1e-6);
}

TEST_CASE("noisy observations: 95th percentile parameter error within 2%") {
    std::mt19937_64 rng(2024);
    const auto clean = synth(kTruth, 240);
    double ps = 0.0;
    for (double v : clean) ps += v * v;
    const double sigma = std::sqrt(ps / clean.size() / 1e4);
    std::normal_distribution<double> g(0.0, sigma);
    // scattered unsaturated points, as left by a saturation mask
    std::vector<std::size_t> idx;
    for (std::size_t k = 0; k < 240; ++k)
        if ((k / 10) % 4 != 3) idx.push_back(k);
    std::vector<double> errs;
    for (int seed = 0; seed < 100; ++seed) {
        auto obs = clean;
        for (double& v : obs) v += g(rng);
        const auto fit = lm_fit(idx, obs, initial_guess(idx, obs, 4000.0, 50.0));
        errs.push_back(max_rel(fit.params, kTruth));
        // residual norm consistent with the noise floor
        const double floor = sigma * std::sqrt(static_cast<double>(idx.size()));
        CHECK(fit.residual_norm < 1.3 * floor);
        CHECK(fit.residual_norm > 0.7 * floor);
    }
    std::sort(errs.begin(), errs.end());
    CHECK(errs[94] <= 0.02);
}

TEST_CASE("accepted steps never increase the objective") {
    const auto obs = synth(kTruth, 80);
    const auto idx = iota(0, 80);
    const ShortCircuitParams x0{0.5, 1.5, 0.1, -40.0};
    double prev = objective(x0, idx, obs);
    LmConfig cfg;
    for (int it = 1; it <= 30; ++it) {
        cfg.max_iters = it;
        const auto fit = lm_fit(idx, obs, x0, cfg);
        const double now = fit.residual_norm * fit.residual_norm;
        CHECK(now <= prev * (1 + 1e-12));
        prev = now;
    }
}

TEST_CASE("exhausted iterations report non-convergence with the best parameters") {
    const auto obs = synth(kTruth, 80);
    const auto idx = iota(0, 80);
    LmConfig cfg;
    cfg.max_iters = 1;
    const ShortCircuitParams x0{0.3, 2.5, -1.0, -80.0};
    const auto fit = lm_fit(idx, obs, x0, cfg);
    CHECK_FALSE(fit.converged);
    CHECK(fit.params.finite());
    CHECK(fit.residual_norm <= std::sqrt(objective(x0, idx, obs)));
}

TEST_CASE("too few points are rejected") {
    const auto obs = synth(kTruth, 10);
    CHECK_THROWS_AS(lm_fit(iota(0, 3), obs, kTruth), InputError);
}

TEST_CASE("initial guess") {
    SUBCASE("pure cosine") {
        const auto obs = synth({5.0, 1.2, 0.0, -10.0}, 80);
        const auto x0 = initial_guess(iota(0, 80), obs, 4000.0, 50.0);
        CHECK(rel(x0.amplitude, 5.0) < 0.05);
        CHECK(std::abs(x0.dc_offset) < 0.05 * 5.0);
        CHECK(x0.decay_rate == -10.0);
    }
    SUBCASE("pure decaying DC") {
        const auto obs = synth({0.0, 0.0, 3.0, -20.0}, 80);
        const auto x0 = initial_guess(iota(0, 80), obs, 4000.0, 50.0);
        CHECK(x0.amplitude < 0.05 * 3.0);
    }
    SUBCASE("degenerate input") {
        const auto obs = synth(kTruth, 10);
        CHECK_THROWS_AS(initial_guess(iota(0, 3), obs, 4000.0, 50.0), InsufficientData);
        const std::vector<std::size_t> gaps{0, 2, 4, 6, 8};
        CHECK_THROWS_AS(initial_guess(gaps, obs, 4000.0, 50.0), InsufficientData);
    }
}

TEST_CASE("compensation with an all-clear mask returns the input") {
    SampledWaveform w = sample_model({3.0, 0.2, 1.0, -9.0}, 50.0, 4000.0, 120);
    SaturationMask m;
    m.flags.assign(w.size(), 0);
    const auto c = compensate(w, m);
    CHECK(c.waveform.values == w.values);
    CHECK(c.fit.iterations >= 0);
    CHECK(c.fit.params.finite());
}

TEST_CASE("compensation is idempotent") {
    auto ct = CtParameters{}.with_time_constant(1.0);
    ct.remanence_fraction = 0.4;
    const auto r = simulate(FaultScenario::make(15.0 * kRatedPrimaryPeak, 0.2, 0.2), ct);
    REQUIRE(r.mask.any());
    const auto once = compensate(r.secondary, r.mask);
    const auto twice = compensate(once.waveform, r.mask);
    for (std::size_t k = 0; k < once.waveform.size(); ++k)
        CHECK(twice.waveform.values[k] == doctest::Approx(once.waveform.values[k]).epsilon(1e-9).scale(1e-6));
}

TEST_CASE("guard samples around a saturated run are replaced, the rest kept") {
    auto ct = CtParameters{}.with_time_constant(1.0);
    ct.remanence_fraction = 0.4;
    const auto r = simulate(FaultScenario::make(15.0 * kRatedPrimaryPeak, 0.2, 0.2), ct);
    REQUIRE(r.mask.any());
    for (std::size_t guard : {0u, 1u, 2u}) {
        LmConfig cfg;
        cfg.guard = guard;
        const auto c = compensate(r.secondary, r.mask, cfg);
        const std::size_t n = r.mask.size();
        for (std::size_t k = 0; k < n; ++k) {
            bool near = false;
            for (std::size_t j = k >= guard ? k - guard : 0; j <= std::min(n - 1, k + guard); ++j) near |= r.mask.flags[j] != 0;
            const double model = eval_model(c.fit.params, 50.0, static_cast<double>(k) / 4000.0);
            CHECK(c.waveform.values[k] == (near ? model : r.secondary.values[k]));
        }
    }
}

TEST_CASE("heavy saturation is compensated to within 5% of the peak") {
    auto ct = CtParameters{}.with_time_constant(2.0);
    ct.remanence_fraction = 0.8;
    const auto r = simulate(FaultScenario::make(20.0 * kRatedPrimaryPeak, 0.0, 0.3), ct);
    REQUIRE(r.mask.count() > 20);
    const auto c = compensate(r.secondary, r.mask);
    double worst = 0.0, raw = 0.0, peak = 0.0;
    for (std::size_t k = 0; k < r.primary.size(); ++k) {
        const double p = r.primary.values[k];
        worst = std::max(worst, std::abs(p - c.waveform.values[k]));
        raw = std::max(raw, std::abs(p - r.secondary.values[k]));
        peak = std::max(peak, std::abs(p));
    }
    CHECK(worst / peak < 0.05);
    CHECK(raw / peak > 0.5);
}

TEST_CASE("saturation starting after the first cycle uses the clean first cycle") {
    auto ct = CtParameters{}.with_time_constant(1.0);
    ct.remanence_fraction = 0.0;
    const auto r = simulate(FaultScenario::make(3.0 * kRatedPrimaryPeak, 0.0, 0.1), ct);
    REQUIRE(r.mask.any());
    const auto first = std::find(r.mask.flags.begin(), r.mask.flags.end(), 1) - r.mask.flags.begin();
    CHECK(first >= 80);
    const auto c = compensate(r.secondary, r.mask);
    double worst = 0.0, peak = 0.0;
    for (std::size_t k = 0; k < r.primary.size(); ++k) {
        const double p = r.primary.values[k];
        worst = std::max(worst, std::abs(p - c.waveform.values[k]));
        peak = std::max(peak, std::abs(p));
    }
    CHECK(worst / peak < 0.05);
}
