#include "ctsat/kernels.hpp"

#include <algorithm>

#ifdef CTSAT_HAVE_OPENMP
#include <omp.h>
#endif

namespace ctsat::kernels {

namespace {

// Below this many multiply-adds the fork/join cost dominates.
constexpr std::size_t kParallelWork = 1u << 15;

std::size_t work(const ConvShape& s) { return s.batch * s.in_ch * s.out_ch * s.kernel * s.length; }

// Valid output range [lo, hi) for tap offset d = k - kernel/2 so that t + d stays in bounds.
inline void tap_range(std::ptrdiff_t d, std::size_t length, std::size_t& lo, std::size_t& hi) {
    const auto n = static_cast<std::ptrdiff_t>(length);
    lo = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, -d));
    hi = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(n - d, 0, n));
    if (hi < lo) hi = lo;
}

}  // namespace

bool parallel_enabled() {
#ifdef CTSAT_HAVE_OPENMP
    return true;
#else
    return false;
#endif
}

int max_threads() {
#ifdef CTSAT_HAVE_OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

void conv1d_forward(const ConvShape& s, const double* x, const double* w, const double* b, double* y) {
    const std::size_t L = s.length, K = s.kernel;
    const auto half = static_cast<std::ptrdiff_t>(K / 2);
    const long long jobs = static_cast<long long>(s.batch * s.out_ch);
#pragma omp parallel for schedule(static) if (work(s) >= kParallelWork)
    for (long long job = 0; job < jobs; ++job) {
        const std::size_t n = static_cast<std::size_t>(job) / s.out_ch;
        const std::size_t co = static_cast<std::size_t>(job) % s.out_ch;
        double* out = y + (n * s.out_ch + co) * L;
        std::fill(out, out + L, b ? b[co] : 0.0);
        for (std::size_t ci = 0; ci < s.in_ch; ++ci) {
            const double* in = x + (n * s.in_ch + ci) * L;
            const double* wk = w + (co * s.in_ch + ci) * K;
            for (std::size_t k = 0; k < K; ++k) {
                const auto d = static_cast<std::ptrdiff_t>(k) - half;
                std::size_t lo, hi;
                tap_range(d, L, lo, hi);
                const double wv = wk[k];
                const double* src = in + (static_cast<std::ptrdiff_t>(lo) + d);
                double* dst = out + lo;
                for (std::size_t t = 0; t < hi - lo; ++t) dst[t] += wv * src[t];
            }
        }
    }
}

void conv1d_backward_input(const ConvShape& s, const double* dy, const double* w, double* dx) {
    const std::size_t L = s.length, K = s.kernel;
    const auto half = static_cast<std::ptrdiff_t>(K / 2);
    const long long jobs = static_cast<long long>(s.batch * s.in_ch);
#pragma omp parallel for schedule(static) if (work(s) >= kParallelWork)
    for (long long job = 0; job < jobs; ++job) {
        const std::size_t n = static_cast<std::size_t>(job) / s.in_ch;
        const std::size_t ci = static_cast<std::size_t>(job) % s.in_ch;
        double* out = dx + (n * s.in_ch + ci) * L;
        std::fill(out, out + L, 0.0);
        for (std::size_t co = 0; co < s.out_ch; ++co) {
            const double* g = dy + (n * s.out_ch + co) * L;
            const double* wk = w + (co * s.in_ch + ci) * K;
            for (std::size_t k = 0; k < K; ++k) {
                // y[t] uses x[t + d], so dx[u] gathers dy[u - d]
                const auto d = static_cast<std::ptrdiff_t>(k) - half;
                std::size_t lo, hi;
                tap_range(-d, L, lo, hi);
                const double wv = wk[k];
                const double* src = g + (static_cast<std::ptrdiff_t>(lo) - d);
                double* dst = out + lo;
                for (std::size_t u = 0; u < hi - lo; ++u) dst[u] += wv * src[u];
            }
        }
    }
}

void conv1d_backward_weights(const ConvShape& s, const double* x, const double* dy, double* dw, double* db) {
    const std::size_t L = s.length, K = s.kernel;
    const auto half = static_cast<std::ptrdiff_t>(K / 2);
    const long long jobs = static_cast<long long>(s.out_ch * s.in_ch);
#pragma omp parallel for schedule(static) if (work(s) >= kParallelWork)
    for (long long job = 0; job < jobs; ++job) {
        const std::size_t co = static_cast<std::size_t>(job) / s.in_ch;
        const std::size_t ci = static_cast<std::size_t>(job) % s.in_ch;
        double* wk = dw + (co * s.in_ch + ci) * K;
        for (std::size_t k = 0; k < K; ++k) {
            const auto d = static_cast<std::ptrdiff_t>(k) - half;
            std::size_t lo, hi;
            tap_range(d, L, lo, hi);
            double acc = 0.0;
            for (std::size_t n = 0; n < s.batch; ++n) {
                const double* g = dy + (n * s.out_ch + co) * L + lo;
                const double* src = x + (n * s.in_ch + ci) * L + (static_cast<std::ptrdiff_t>(lo) + d);
                for (std::size_t t = 0; t < hi - lo; ++t) acc += g[t] * src[t];
            }
            wk[k] = acc;
        }
        if (db && ci == 0) {
            double acc = 0.0;
            for (std::size_t n = 0; n < s.batch; ++n) {
                const double* g = dy + (n * s.out_ch + co) * L;
                for (std::size_t t = 0; t < L; ++t) acc += g[t];
            }
            db[co] = acc;
        }
    }
}

}  // namespace ctsat::kernels
