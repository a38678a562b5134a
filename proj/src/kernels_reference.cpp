#include "ctsat/kernels.hpp"

namespace ctsat::kernels::reference {

namespace {

inline bool inside(std::ptrdiff_t i, std::size_t length) {
    return i >= 0 && i < static_cast<std::ptrdiff_t>(length);
}

}  // namespace

void conv1d_forward(const ConvShape& s, const double* x, const double* w, const double* b, double* y) {
    const auto half = static_cast<std::ptrdiff_t>(s.kernel / 2);
    for (std::size_t n = 0; n < s.batch; ++n)
        for (std::size_t co = 0; co < s.out_ch; ++co)
            for (std::size_t t = 0; t < s.length; ++t) {
                double acc = b ? b[co] : 0.0;
                for (std::size_t ci = 0; ci < s.in_ch; ++ci)
                    for (std::size_t k = 0; k < s.kernel; ++k) {
                        const auto i = static_cast<std::ptrdiff_t>(t + k) - half;
                        if (!inside(i, s.length)) continue;
                        acc += w[(co * s.in_ch + ci) * s.kernel + k] *
                               x[(n * s.in_ch + ci) * s.length + static_cast<std::size_t>(i)];
                    }
                y[(n * s.out_ch + co) * s.length + t] = acc;
            }
}

void conv1d_backward_input(const ConvShape& s, const double* dy, const double* w, double* dx) {
    const auto half = static_cast<std::ptrdiff_t>(s.kernel / 2);
    for (std::size_t n = 0; n < s.batch; ++n)
        for (std::size_t ci = 0; ci < s.in_ch; ++ci)
            for (std::size_t u = 0; u < s.length; ++u) {
                double acc = 0.0;
                for (std::size_t co = 0; co < s.out_ch; ++co)
                    for (std::size_t k = 0; k < s.kernel; ++k) {
                        const auto t = static_cast<std::ptrdiff_t>(u) - static_cast<std::ptrdiff_t>(k) + half;
                        if (!inside(t, s.length)) continue;
                        acc += w[(co * s.in_ch + ci) * s.kernel + k] *
                               dy[(n * s.out_ch + co) * s.length + static_cast<std::size_t>(t)];
                    }
                dx[(n * s.in_ch + ci) * s.length + u] = acc;
            }
}

void conv1d_backward_weights(const ConvShape& s, const double* x, const double* dy, double* dw, double* db) {
    const auto half = static_cast<std::ptrdiff_t>(s.kernel / 2);
    for (std::size_t co = 0; co < s.out_ch; ++co) {
        for (std::size_t ci = 0; ci < s.in_ch; ++ci)
            for (std::size_t k = 0; k < s.kernel; ++k) {
                double acc = 0.0;
                for (std::size_t n = 0; n < s.batch; ++n)
                    for (std::size_t t = 0; t < s.length; ++t) {
                        const auto i = static_cast<std::ptrdiff_t>(t + k) - half;
                        if (!inside(i, s.length)) continue;
                        acc += dy[(n * s.out_ch + co) * s.length + t] *
                               x[(n * s.in_ch + ci) * s.length + static_cast<std::size_t>(i)];
                    }
                dw[(co * s.in_ch + ci) * s.kernel + k] = acc;
            }
        if (db) {
            double acc = 0.0;
            for (std::size_t n = 0; n < s.batch; ++n)
                for (std::size_t t = 0; t < s.length; ++t) acc += dy[(n * s.out_ch + co) * s.length + t];
            db[co] = acc;
        }
    }
}

}  // namespace ctsat::kernels::reference
