#pragma once

#include <cstddef>

// Batched same-padded 1-D convolution. Layouts are dense row-major:
//   x, dx : [batch][in_ch][length]
//   y, dy : [batch][out_ch][length]
//   w, dw : [out_ch][in_ch][kernel]
//   b, db : [out_ch]
// kernel must be odd; the signal is zero-extended by kernel / 2 on each side.
// All outputs are overwritten, not accumulated.

namespace ctsat::kernels {

struct ConvShape {
    std::size_t batch = 1;
    std::size_t in_ch = 1;
    std::size_t out_ch = 1;
    std::size_t kernel = 1;
    std::size_t length = 1;
};

/// Whether the parallel kernels were compiled with OpenMP.
bool parallel_enabled();
int max_threads();

void conv1d_forward(const ConvShape& s, const double* x, const double* w, const double* b, double* y);
void conv1d_backward_input(const ConvShape& s, const double* dy, const double* w, double* dx);
void conv1d_backward_weights(const ConvShape& s, const double* x, const double* dy, double* dw, double* db);

/// Straightforward per-element loops, kept as the test and benchmark baseline.
namespace reference {
void conv1d_forward(const ConvShape& s, const double* x, const double* w, const double* b, double* y);
void conv1d_backward_input(const ConvShape& s, const double* dy, const double* w, double* dx);
void conv1d_backward_weights(const ConvShape& s, const double* x, const double* dy, double* dw, double* db);
}  // namespace reference

}  // namespace ctsat::kernels
