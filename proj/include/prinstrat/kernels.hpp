#pragma once

#include <cstddef>
#include <string_view>

namespace prinstrat::kernels {

// Data-parallel reduction kernels used in the samplers' inner loops.
// A scalar reference implementation always exists; on x86-64 an AVX2+FMA
// variant is selected at runtime when the CPU supports it. The two paths
// are equivalence-tested against each other; within one process the
// selected path is fixed, so results are deterministic per run.

double dot(const double* a, const double* b, std::size_t n);
double sum(const double* a, std::size_t n);
double sum_sq(const double* a, std::size_t n);

/// sum_i log(ca + cb * r[i]). Inputs with ca + cb*r[i] <= 0 produce -inf /
/// NaN exactly as std::log would.
double sum_log_affine(const double* r, std::size_t n, double ca, double cb);

/// Name of the active dispatch level: "scalar" or "avx2".
std::string_view active_level();

/// Force a dispatch level (used by tests and the PRINSTRAT_SIMD env var).
/// Returns false if the requested level is unavailable on this machine.
bool set_level(std::string_view name);

}  // namespace prinstrat::kernels
