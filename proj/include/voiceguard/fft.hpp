#pragma once

#include <fftw3.h>

#include <cmath>
#include <complex>
#include <map>
#include <mutex>
#include <numbers>
#include <span>
#include <utility>
#include <vector>

#include "error.hpp"

namespace voiceguard {

using cplx = std::complex<double>;

inline bool is_pow2(std::size_t n) { return n > 0 && (n & (n - 1)) == 0; }

namespace detail {

enum class PlanKind { Forward, Inverse, RealToHalf, HalfToReal };

// FFTW plans are built once per (kind, size) under a lock, since the planner
// is not thread safe; execution on fresh arrays is. FFTW_ESTIMATE keeps the
// chosen algorithm, and so every bit of the output, identical across runs.
inline fftw_plan plan(PlanKind kind, std::size_t n) {
  thread_local std::map<std::pair<PlanKind, std::size_t>, fftw_plan> local;
  const auto key = std::pair(kind, n);
  if (const auto it = local.find(key); it != local.end()) return it->second;

  static std::mutex mu;
  static std::map<std::pair<PlanKind, std::size_t>, fftw_plan> shared;
  std::lock_guard lock(mu);
  auto it = shared.find(key);
  if (it == shared.end()) {
    const int ni = static_cast<int>(n);
    const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
    fftw_complex* c = fftw_alloc_complex(n);
    double* r = fftw_alloc_real(n);
    fftw_plan p = nullptr;
    switch (kind) {
      case PlanKind::Forward: p = fftw_plan_dft_1d(ni, c, c, FFTW_FORWARD, flags); break;
      case PlanKind::Inverse: p = fftw_plan_dft_1d(ni, c, c, FFTW_BACKWARD, flags); break;
      case PlanKind::RealToHalf: p = fftw_plan_dft_r2c_1d(ni, r, c, flags); break;
      case PlanKind::HalfToReal: p = fftw_plan_dft_c2r_1d(ni, c, r, flags); break;
    }
    fftw_free(c);
    fftw_free(r);
    require(p != nullptr, ErrorKind::InvalidArgument, "fftw could not plan size " + std::to_string(n));
    it = shared.emplace(key, p).first;
  }
  local.emplace(key, it->second);
  return it->second;
}

inline fftw_complex* as_fftw(cplx* p) { return reinterpret_cast<fftw_complex*>(p); }

}  // namespace detail

/// In-place FFT of a power-of-two length. The inverse is unnormalized.
inline void fft_inplace(std::span<cplx> a, bool inverse = false) {
  const std::size_t n = a.size();
  require(is_pow2(n), ErrorKind::InvalidArgument, "fft size must be a power of two");
  if (n < 2) return;
  auto* p = detail::as_fftw(a.data());
  fftw_execute_dft(detail::plan(inverse ? detail::PlanKind::Inverse : detail::PlanKind::Forward, n), p, p);
}

/// |z| without the overflow guard of std::abs; inputs here are bounded.
inline double cabs_fast(cplx z) { return std::sqrt(std::norm(z)); }

/// Bins 0..n/2 of the DFT of a real sequence of power-of-two length n.
/// Out-of-place r2c leaves its input untouched.
inline void rfft(std::span<const double> x, std::span<cplx> out) {
  const std::size_t n = x.size();
  require(n >= 2 && is_pow2(n) && out.size() == n / 2 + 1, ErrorKind::InvalidArgument,
          "rfft needs a power-of-two length and n/2+1 outputs");
  fftw_execute_dft_r2c(detail::plan(detail::PlanKind::RealToHalf, n), const_cast<double*>(x.data()),
                       detail::as_fftw(out.data()));
}

/// Unnormalised inverse of `rfft`: y_j = sum over the Hermitian extension of
/// `half` of X_k exp(2 pi i k j / n). Imaginary parts of bins 0 and n/2 are
/// ignored.
inline void irfft(std::span<const cplx> half, std::span<double> y, std::vector<cplx>& work) {
  const std::size_t n = y.size();
  require(n >= 2 && is_pow2(n) && half.size() == n / 2 + 1, ErrorKind::InvalidArgument,
          "irfft needs a power-of-two length and n/2+1 inputs");
  work.assign(half.begin(), half.end());  // c2r overwrites its input
  fftw_execute_dft_c2r(detail::plan(detail::PlanKind::HalfToReal, n), detail::as_fftw(work.data()),
                       y.data());
}

/// Plain O(n^2) DFT of a real sequence; kept for tests and tiny sizes.
inline std::vector<cplx> dft_real(std::span<const double> x) {
  const std::size_t n = x.size();
  std::vector<cplx> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    cplx acc = 0.0;
    for (std::size_t t = 0; t < n; ++t)
      acc += x[t] * std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(k * t % n) /
                                        static_cast<double>(n));
    out[k] = acc;
  }
  return out;
}

}  // namespace voiceguard
