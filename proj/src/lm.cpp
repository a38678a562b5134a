#include "ctsat/lm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ctsat/error.hpp"

namespace ctsat {

namespace {

constexpr double kInitialDecay = -10.0;
constexpr int kMaxDampingEscalations = 64;

using Vec4 = std::array<double, 4>;
using Mat4 = std::array<std::array<double, 4>, 4>;

Vec4 to_vec(const ShortCircuitParams& p) { return {p.amplitude, p.phase, p.dc_offset, p.decay_rate}; }
ShortCircuitParams from_vec(const Vec4& v) { return {v[0], v[1], v[2], v[3]}; }

double sq_norm(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return s;
}

/**
 * Solves M z = r for symmetric positive definite M of size n <= 4 by Cholesky
 * with diagonal pivoting. Returns false when the largest remaining pivot is not
 * positive or is negligible against the largest diagonal.
 */
template <std::size_t N>
bool pivoted_cholesky_solve(std::array<std::array<double, N>, N> a, std::array<double, N> r, std::size_t n,
                            std::array<double, N>& z, double& pivot_ratio) {
    std::array<std::size_t, N> perm{};
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    double max_diag = 0.0;
    for (std::size_t i = 0; i < n; ++i) max_diag = std::max(max_diag, a[i][i]);
    if (!(max_diag > 0.0) || !std::isfinite(max_diag)) return false;
    double min_pivot = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
        std::size_t p = j;
        for (std::size_t i = j + 1; i < n; ++i)
            if (a[i][i] > a[p][p]) p = i;
        if (p != j) {
            std::swap(a[j], a[p]);
            for (auto& row : a) std::swap(row[j], row[p]);
            std::swap(perm[j], perm[p]);
        }
        const double d = a[j][j];
        if (!(d > 1e-15 * max_diag)) return false;
        min_pivot = std::min(min_pivot, d);
        const double l = std::sqrt(d);
        a[j][j] = l;
        for (std::size_t i = j + 1; i < n; ++i) a[i][j] /= l;
        for (std::size_t i = j + 1; i < n; ++i)
            for (std::size_t k = j + 1; k <= i; ++k) a[i][k] -= a[i][j] * a[k][j];
    }
    pivot_ratio = min_pivot / max_diag;
    std::array<double, N> y{};
    for (std::size_t i = 0; i < n; ++i) y[i] = r[perm[i]];
    for (std::size_t i = 0; i < n; ++i) {
        double s = y[i];
        for (std::size_t k = 0; k < i; ++k) s -= a[i][k] * y[k];
        y[i] = s / a[i][i];
    }
    for (std::size_t i = n; i-- > 0;) {
        double s = y[i];
        for (std::size_t k = i + 1; k < n; ++k) s -= a[k][i] * y[k];
        y[i] = s / a[i][i];
    }
    for (std::size_t i = 0; i < n; ++i) z[perm[i]] = y[i];
    for (std::size_t i = 0; i < n; ++i)
        if (!std::isfinite(z[i])) return false;
    return true;
}

void check_indices(std::span<const std::size_t> indices, std::size_t n_observed) {
    for (std::size_t j = 0; j < indices.size(); ++j) {
        if (indices[j] >= n_observed) throw InputError("unsaturated index out of range");
        if (j > 0 && indices[j] <= indices[j - 1]) throw InputError("unsaturated indices must increase strictly");
    }
}

}  // namespace

void LmConfig::validate() const {
    if (!(tau > 0.0)) throw InputError("tau must be > 0");
    if (!(epsilon_g > 0.0)) throw InputError("epsilon_g must be > 0");
    if (max_iters < 1) throw InputError("max_iters must be >= 1");
    if (!(rho_low > 0.0 && rho_low < rho_high && rho_high < 1.0))
        throw InputError("rho thresholds must satisfy 0 < rho_low < rho_high < 1");
    if (!(frequency > 0.0)) throw InputError("frequency must be > 0");
    if (!(sample_rate > 0.0)) throw InputError("sample rate must be > 0");
}

nlohmann::json LmConfig::to_json() const {
    return {{"tau", tau},         {"epsilon_g", epsilon_g}, {"max_iters", max_iters},
            {"rho_low", rho_low}, {"rho_high", rho_high},   {"frequency", frequency},
            {"sample_rate", sample_rate}, {"guard", guard}};
}

nlohmann::json to_json(const ModelFit& fit) {
    return {{"params", to_json(fit.params)},
            {"residual_norm", fit.residual_norm},
            {"gradient_norm", fit.gradient_norm},
            {"iterations", fit.iterations},
            {"converged", fit.converged},
            {"condition_warning", fit.condition_warning},
            {"stop_reason", fit.stop_reason}};
}

std::vector<std::size_t> unsaturated_indices(const SaturationMask& mask) {
    std::vector<std::size_t> idx;
    for (std::size_t k = 0; k < mask.size(); ++k)
        if (!mask.flags[k]) idx.push_back(k);
    return idx;
}

std::vector<double> residual(const ShortCircuitParams& x, std::span<const std::size_t> indices,
                             std::span<const double> observed, double fs, double f) {
    std::vector<double> F(indices.size());
    for (std::size_t j = 0; j < indices.size(); ++j) {
        const double t = static_cast<double>(indices[j]) / fs;
        F[j] = observed[indices[j]] - eval_model(x, f, t);
    }
    return F;
}

std::vector<JacobianRow> jacobian(const ShortCircuitParams& x, std::span<const std::size_t> indices, double fs,
                                  double f) {
    const double w = kTwoPi * f;
    std::vector<JacobianRow> J(indices.size());
    for (std::size_t j = 0; j < indices.size(); ++j) {
        const double t = static_cast<double>(indices[j]) / fs;
        const double c = std::cos(w * t + x.phase);
        const double s = std::sin(w * t + x.phase);
        const double e = std::exp(x.decay_rate * t);
        J[j] = {-c, x.amplitude * s, -e, -x.dc_offset * t * e};
    }
    return J;
}

ModelFit lm_fit(std::span<const std::size_t> indices, std::span<const double> observed,
                const ShortCircuitParams& x0, const LmConfig& cfg) {
    cfg.validate();
    if (indices.size() < 4) throw InsufficientData("at least four unsaturated samples are required");
    if (!x0.finite()) throw InputError("initial parameters must be finite");
    check_indices(indices, observed.size());
    for (std::size_t k : indices)
        if (!std::isfinite(observed[k])) throw InputError("observation at index " + std::to_string(k) + " is not finite");

    const double fs = cfg.sample_rate, f = cfg.frequency;
    Vec4 x = to_vec(x0);
    auto F = residual(x0, indices, observed, fs, f);
    double fnorm2 = sq_norm(F);

    auto normal_equations = [&](const Vec4& xv, const std::vector<double>& Fv, Mat4& H, Vec4& g) {
        const auto J = jacobian(from_vec(xv), indices, fs, f);
        H = {};
        g = {};
        for (std::size_t j = 0; j < J.size(); ++j)
            for (std::size_t a = 0; a < 4; ++a) {
                g[a] += J[j][a] * Fv[j];
                for (std::size_t b = 0; b <= a; ++b) H[a][b] += J[j][a] * J[j][b];
            }
        for (std::size_t a = 0; a < 4; ++a)
            for (std::size_t b = a + 1; b < 4; ++b) H[a][b] = H[b][a];
    };

    Mat4 H;
    Vec4 g;
    normal_equations(x, F, H, g);
    double mu = 0.0;
    for (std::size_t a = 0; a < 4; ++a) mu = std::max(mu, H[a][a]);
    mu *= cfg.tau;
    if (!(mu > 0.0)) mu = cfg.tau;

    ModelFit fit;
    bool recompute = false;
    int k = 0;
    for (; k < cfg.max_iters; ++k) {
        if (recompute) {
            normal_equations(x, F, H, g);
            recompute = false;
        }
        const double gnorm = std::sqrt(g[0] * g[0] + g[1] * g[1] + g[2] * g[2] + g[3] * g[3]);
        fit.gradient_norm = gnorm;
        if (gnorm < cfg.epsilon_g) {
            fit.converged = true;
            fit.stop_reason = "gradient below epsilon_g";
            break;
        }

        Vec4 dx{};
        bool solved = false;
        for (int esc = 0; esc <= kMaxDampingEscalations; ++esc) {
            Mat4 M = H;
            for (std::size_t a = 0; a < 4; ++a) M[a][a] += mu;
            Vec4 rhs{-g[0], -g[1], -g[2], -g[3]};
            double ratio = 1.0;
            if (pivoted_cholesky_solve<4>(M, rhs, 4, dx, ratio)) {
                if (ratio < 1e-14) fit.condition_warning = true;
                solved = true;
                break;
            }
            fit.condition_warning = true;
            mu = mu > 0.0 ? 2.0 * mu : cfg.tau;
        }
        if (!solved) {
            fit.stop_reason = "damped normal matrix remained singular";
            break;
        }

        const double dxn = std::sqrt(dx[0] * dx[0] + dx[1] * dx[1] + dx[2] * dx[2] + dx[3] * dx[3]);
        const double xn = std::sqrt(x[0] * x[0] + x[1] * x[1] + x[2] * x[2] + x[3] * x[3]);
        if (dxn <= 1e-12 * (xn + 1e-12)) {
            fit.converged = true;
            fit.stop_reason = "step below machine scale";
            break;
        }

        Vec4 xn_new{x[0] + dx[0], x[1] + dx[1], x[2] + dx[2], x[3] + dx[3]};
        auto F_new = residual(from_vec(xn_new), indices, observed, fs, f);
        const double fnew2 = sq_norm(F_new);
        // predicted reduction of ||F||^2 under the damped linear model: dx^T (mu dx - g)
        double denom = 0.0;
        for (std::size_t a = 0; a < 4; ++a) denom += dx[a] * (mu * dx[a] - g[a]);
        double rho = -1.0;
        if (std::isfinite(fnew2) && std::isfinite(denom) && denom > 0.0) rho = (fnorm2 - fnew2) / denom;
        if (!std::isfinite(rho)) rho = -1.0;

        if (rho < cfg.rho_low) mu *= 2.0;
        else if (rho > cfg.rho_high) mu /= 2.0;
        if (rho > 0.0) {
            x = xn_new;
            F = std::move(F_new);
            fnorm2 = fnew2;
            recompute = true;
        }
    }
    if (k == cfg.max_iters && !fit.converged) fit.stop_reason = "max_iters reached";

    fit.iterations = k;
    fit.params = from_vec(x).canonical();
    fit.residual_norm = std::sqrt(fnorm2);
    return fit;
}

ShortCircuitParams initial_guess(std::span<const std::size_t> indices, std::span<const double> observed, double fs,
                                 double f) {
    check_indices(indices, observed.size());
    std::size_t best_start = 0, best_len = 0;
    for (std::size_t j = 0; j < indices.size();) {
        std::size_t e = j + 1;
        while (e < indices.size() && indices[e] == indices[e - 1] + 1) ++e;
        if (e - j > best_len) {
            best_len = e - j;
            best_start = j;
        }
        j = e;
    }
    if (best_len < 4) throw InsufficientData("no contiguous run of at least four unsaturated samples");

    const double w = kTwoPi * f;
    const auto run = indices.subspan(best_start, best_len);

    // least squares on {cos, sin, 1, t} over the run; the linear term soaks up
    // most of the DC decay so it does not leak into the cosine
    const double t0 = static_cast<double>(run.front()) / fs;
    std::array<std::array<double, 4>, 4> M{};
    std::array<double, 4> r{};
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (std::size_t k : run) {
        const double t = static_cast<double>(k) / fs;
        const std::array<double, 4> basis{std::cos(w * t), std::sin(w * t), 1.0, (t - t0) * f};
        const double y = observed[k];
        lo = std::min(lo, y);
        hi = std::max(hi, y);
        for (std::size_t a = 0; a < 4; ++a) {
            r[a] += basis[a] * y;
            for (std::size_t b = 0; b < 4; ++b) M[a][b] += basis[a] * basis[b];
        }
    }
    ShortCircuitParams p;
    p.decay_rate = kInitialDecay;
    std::array<double, 4> c{};
    double ratio = 1.0;
    bool ok = pivoted_cholesky_solve<4>(M, r, 4, c, ratio) && ratio > 1e-10;
    if (!ok) {
        // too short for the trend term: drop it
        std::array<std::array<double, 3>, 3> M3{};
        std::array<double, 3> r3{}, c3{};
        for (std::size_t a = 0; a < 3; ++a) {
            r3[a] = r[a];
            for (std::size_t b = 0; b < 3; ++b) M3[a][b] = M[a][b];
        }
        ok = pivoted_cholesky_solve<3>(M3, r3, 3, c3, ratio);
        c = {c3[0], c3[1], c3[2], 0.0};
    }
    if (ok) {
        // a cos + b sin = R cos(wt + theta) with R cos(theta) = a, R sin(theta) = -b
        p.amplitude = std::hypot(c[0], c[1]);
        p.phase = wrap_angle(std::atan2(-c[1], c[0]));
    } else {
        p.amplitude = 0.5 * (hi - lo);
        p.phase = 0.0;
    }

    // DC level from the earliest samples of the run, referred back to t = 0
    const std::size_t early = std::min<std::size_t>(run.size(), static_cast<std::size_t>(std::ceil(fs / f / 4.0)));
    double mean_res = 0.0, mean_t = 0.0;
    for (std::size_t j = 0; j < early; ++j) {
        const double t = static_cast<double>(run[j]) / fs;
        mean_res += observed[run[j]] - p.amplitude * std::cos(w * t + p.phase);
        mean_t += t;
    }
    mean_res /= static_cast<double>(early);
    mean_t /= static_cast<double>(early);
    p.dc_offset = mean_res / std::exp(p.decay_rate * mean_t);
    return p;
}

Compensation compensate(const SampledWaveform& secondary, const SaturationMask& mask, const LmConfig& config) {
    secondary.validate();
    if (mask.size() != secondary.size())
        throw InputError("mask length " + std::to_string(mask.size()) + " differs from waveform length " +
                         std::to_string(secondary.size()));
    LmConfig cfg = config;
    cfg.sample_rate = secondary.sample_rate;
    // samples next to a saturated run sit just under the labeling threshold
    // and are biased towards the distorted secondary, so they are neither
    // trusted by the fit nor kept in the output
    SaturationMask fit_mask = mask;
    const std::size_t n = mask.size();
    for (std::size_t k = 0; k < n; ++k) {
        if (!mask.flags[k]) continue;
        const std::size_t lo = k >= cfg.guard ? k - cfg.guard : 0;
        const std::size_t hi = std::min(n - 1, k + cfg.guard);
        for (std::size_t j = lo; j <= hi; ++j) fit_mask.flags[j] = 1;
    }
    auto idx = unsaturated_indices(fit_mask);
    ShortCircuitParams x0;
    try {
        x0 = initial_guess(idx, secondary.values, cfg.sample_rate, cfg.frequency);
    } catch (const InsufficientData&) {
        // too little clean data once guarded: fall back to every unsaturated sample
        idx = unsaturated_indices(mask);
        if (idx.size() < 4) throw InsufficientData("fewer than four unsaturated samples");
        x0 = initial_guess(idx, secondary.values, cfg.sample_rate, cfg.frequency);
    }

    Compensation out;
    out.fit = lm_fit(idx, secondary.values, x0, cfg);
    out.waveform = secondary;
    for (std::size_t k = 0; k < n; ++k) {
        if (fit_mask.flags[k]) out.waveform.values[k] = eval_model(out.fit.params, cfg.frequency, static_cast<double>(k) / cfg.sample_rate);
    }
    return out;
}

}  // namespace ctsat
