#pragma once

#include <cstddef>

// Dense reduction kernels used by the inner-product assembly and the
// smoother's weight application. A scalar reference implementation always
// exists; an AVX2+FMA variant is selected once at startup when the CPU
// supports it. The two backends differ only by floating-point
// reassociation; tests bound that difference.

namespace odefit::kern {

namespace scalar {
double dot(const double* a, const double* b, std::size_t n);
double dot3(const double* a, const double* b, const double* c, std::size_t n);
}  // namespace scalar

namespace avx2 {
bool compiled();   // translation unit built with AVX2 flags
bool available();  // CPU supports AVX2 and FMA at runtime
double dot(const double* a, const double* b, std::size_t n);
double dot3(const double* a, const double* b, const double* c, std::size_t n);
}  // namespace avx2

// Dispatched entry points. sum a_i*b_i and sum a_i*b_i*c_i.
double dot(const double* a, const double* b, std::size_t n);
double dot3(const double* a, const double* b, const double* c, std::size_t n);

// Name of the backend the dispatcher picked: "avx2" or "scalar".
const char* active_backend();

}  // namespace odefit::kern
