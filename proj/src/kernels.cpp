#include "odefit/kernels.hpp"

namespace odefit::kern {

namespace scalar {

double dot(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

double dot3(const double* a, const double* b, const double* c, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i] * c[i];
  return s;
}

}  // namespace scalar

namespace {

using DotFn = double (*)(const double*, const double*, std::size_t);
using Dot3Fn = double (*)(const double*, const double*, const double*,
                          std::size_t);

struct Backend {
  DotFn dot;
  Dot3Fn dot3;
  const char* name;
};

Backend pick_backend() {
  if (avx2::available()) return {&avx2::dot, &avx2::dot3, "avx2"};
  return {&scalar::dot, &scalar::dot3, "scalar"};
}

const Backend& backend() {
  static const Backend b = pick_backend();
  return b;
}

}  // namespace

double dot(const double* a, const double* b, std::size_t n) {
  return backend().dot(a, b, n);
}

double dot3(const double* a, const double* b, const double* c, std::size_t n) {
  return backend().dot3(a, b, c, n);
}

const char* active_backend() { return backend().name; }

}  // namespace odefit::kern
