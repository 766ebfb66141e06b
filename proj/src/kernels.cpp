#include "prinstrat/kernels.hpp"

#include <cmath>
#include <cstdlib>
#include <string>

namespace prinstrat::kernels {

namespace detail {

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

double sum_scalar(const double* a, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i];
  return acc;
}

double sum_sq_scalar(const double* a, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * a[i];
  return acc;
}

double sum_log_affine_scalar(const double* r, std::size_t n, double ca, double cb) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += std::log(ca + cb * r[i]);
  return acc;
}

#if defined(PRINSTRAT_HAVE_AVX2)
// Defined in kernels_avx2.cpp, compiled with -mavx2 -mfma.
double dot_avx2(const double* a, const double* b, std::size_t n);
double sum_avx2(const double* a, std::size_t n);
double sum_sq_avx2(const double* a, std::size_t n);
double sum_log_affine_avx2(const double* r, std::size_t n, double ca, double cb);
#endif

struct Table {
  double (*dot)(const double*, const double*, std::size_t) = dot_scalar;
  double (*sum)(const double*, std::size_t) = sum_scalar;
  double (*sum_sq)(const double*, std::size_t) = sum_sq_scalar;
  double (*sum_log_affine)(const double*, std::size_t, double, double) = sum_log_affine_scalar;
  const char* level = "scalar";
};

bool avx2_available() {
#if defined(PRINSTRAT_HAVE_AVX2) && defined(__x86_64__)
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Table make_table(std::string_view level) {
  Table t;
#if defined(PRINSTRAT_HAVE_AVX2)
  if (level == "avx2") {
    t.dot = dot_avx2;
    t.sum = sum_avx2;
    t.sum_sq = sum_sq_avx2;
    t.sum_log_affine = sum_log_affine_avx2;
    t.level = "avx2";
  }
#else
  (void)level;
#endif
  return t;
}

Table init_table() {
  const char* env = std::getenv("PRINSTRAT_SIMD");
  if (env != nullptr) {
    std::string_view want(env);
    if (want == "scalar") return make_table("scalar");
    if (want == "avx2" && avx2_available()) return make_table("avx2");
    // Unknown or unavailable request falls through to auto-detection.
  }
  return make_table(avx2_available() ? "avx2" : "scalar");
}

Table& table() {
  static Table t = init_table();
  return t;
}

}  // namespace detail

double dot(const double* a, const double* b, std::size_t n) {
  return detail::table().dot(a, b, n);
}
double sum(const double* a, std::size_t n) { return detail::table().sum(a, n); }
double sum_sq(const double* a, std::size_t n) { return detail::table().sum_sq(a, n); }
double sum_log_affine(const double* r, std::size_t n, double ca, double cb) {
  return detail::table().sum_log_affine(r, n, ca, cb);
}

std::string_view active_level() { return detail::table().level; }

bool set_level(std::string_view name) {
  if (name == "scalar") {
    detail::table() = detail::make_table("scalar");
    return true;
  }
  if (name == "avx2" && detail::avx2_available()) {
    detail::table() = detail::make_table("avx2");
    return true;
  }
  return false;
}

}  // namespace prinstrat::kernels
