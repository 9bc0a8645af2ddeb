#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "error.hpp"
#include "waveform.hpp"

namespace voiceguard {

inline constexpr std::array<int, 5> kSupportedRates{8000, 10000, 16000, 22050, 24000};

inline bool supported_rate(int hz) {
  return std::find(kSupportedRates.begin(), kSupportedRates.end(), hz) != kSupportedRates.end();
}

namespace detail {

// Zeroth-order modified Bessel function, power series.
inline double bessel_i0(double x) {
  double sum = 1.0, term = 1.0;
  const double q = x * x / 4.0;
  for (int k = 1; k < 64; ++k) {
    term *= q / (static_cast<double>(k) * k);
    sum += term;
    if (term < 1e-17 * sum) break;
  }
  return sum;
}

/// Sparse linear map from input to output samples, shared by the forward
/// pass and its adjoint.
struct ResampleKernel {
  std::size_t in_len = 0;
  std::size_t out_len = 0;
  std::vector<std::ptrdiff_t> first;   // first input index per output sample
  std::vector<std::size_t> offset;     // start of each output's weights in `weights`
  std::vector<double> weights;
};

inline ResampleKernel build_kernel(std::size_t n, double src, double dst, double rolloff = 0.9,
                                   int zero_crossings = 24, double beta = 8.6) {
  ResampleKernel k;
  k.in_len = n;
  k.out_len = static_cast<std::size_t>(std::llround(static_cast<double>(n) * dst / src));
  const double step = src / dst;                        // input samples per output sample
  const double fc = rolloff * std::min(1.0, dst / src); // cutoff as a fraction of input Nyquist
  const double half = zero_crossings / fc;              // kernel half-width in input samples
  const double i0b = bessel_i0(beta);
  k.first.resize(k.out_len);
  k.offset.resize(k.out_len + 1, 0);
  for (std::size_t i = 0; i < k.out_len; ++i) {
    const double t = static_cast<double>(i) * step;
    const auto lo = static_cast<std::ptrdiff_t>(std::ceil(t - half));
    const auto hi = static_cast<std::ptrdiff_t>(std::floor(t + half));
    k.first[i] = lo;
    for (std::ptrdiff_t j = lo; j <= hi; ++j) {
      const double u = static_cast<double>(j) - t;
      const double r = u / half;
      const double win = std::abs(r) >= 1.0 ? 0.0 : bessel_i0(beta * std::sqrt(1.0 - r * r)) / i0b;
      const double arg = fc * u;
      const double sinc = arg == 0.0 ? 1.0 : std::sin(std::numbers::pi * arg) / (std::numbers::pi * arg);
      k.weights.push_back(fc * sinc * win);
    }
    k.offset[i + 1] = k.weights.size();
  }
  return k;
}

inline std::vector<double> apply_kernel(const ResampleKernel& k, std::span<const double> x) {
  std::vector<double> y(k.out_len, 0.0);
  const auto n = static_cast<std::ptrdiff_t>(x.size());
  for (std::size_t i = 0; i < k.out_len; ++i) {
    double acc = 0.0;
    for (std::size_t w = k.offset[i]; w < k.offset[i + 1]; ++w) {
      const std::ptrdiff_t j = k.first[i] + static_cast<std::ptrdiff_t>(w - k.offset[i]);
      if (j >= 0 && j < n) acc += k.weights[w] * x[static_cast<std::size_t>(j)];
    }
    y[i] = acc;
  }
  return y;
}

inline std::vector<double> apply_kernel_adjoint(const ResampleKernel& k, std::span<const double> g) {
  std::vector<double> gx(k.in_len, 0.0);
  const auto n = static_cast<std::ptrdiff_t>(k.in_len);
  for (std::size_t i = 0; i < k.out_len; ++i) {
    for (std::size_t w = k.offset[i]; w < k.offset[i + 1]; ++w) {
      const std::ptrdiff_t j = k.first[i] + static_cast<std::ptrdiff_t>(w - k.offset[i]);
      if (j >= 0 && j < n) gx[static_cast<std::size_t>(j)] += k.weights[w] * g[i];
    }
  }
  return gx;
}

}  // namespace detail

/// Linear resampler between two rates with a cached kernel, plus its adjoint.
class Resampler {
 public:
  Resampler(std::size_t in_len, double src_hz, double dst_hz)
      : identity_(src_hz == dst_hz), in_len_(in_len) {
    require(src_hz > 0.0 && dst_hz > 0.0, ErrorKind::InvalidArgument, "rates must be positive");
    if (!identity_) kernel_ = detail::build_kernel(in_len, src_hz, dst_hz);
  }

  std::size_t output_length() const { return identity_ ? in_len_ : kernel_.out_len; }

  std::vector<double> operator()(std::span<const double> x) const {
    require(x.size() == in_len_, ErrorKind::ShapeMismatch, "resampler built for another length");
    if (identity_) return {x.begin(), x.end()};
    return detail::apply_kernel(kernel_, x);
  }

  std::vector<double> adjoint(std::span<const double> g) const {
    require(g.size() == output_length(), ErrorKind::ShapeMismatch, "adjoint input length mismatch");
    if (identity_) return {g.begin(), g.end()};
    return detail::apply_kernel_adjoint(kernel_, g);
  }

 private:
  bool identity_;
  std::size_t in_len_;
  detail::ResampleKernel kernel_;
};

/// Arbitrary-ratio resampling, used by the speed augmentation.
inline std::vector<double> resample_ratio(std::span<const double> x, double src_hz, double dst_hz) {
  return Resampler(x.size(), src_hz, dst_hz)(x);
}

inline Waveform resample(const Waveform& x, int target_hz) {
  require(supported_rate(target_hz), ErrorKind::UnsupportedRate,
          "target rate " + std::to_string(target_hz) + " Hz is not supported");
  require(x.sample_rate > 0, ErrorKind::InvalidArgument, "source rate must be positive");
  if (x.sample_rate == target_hz) return x;
  return Waveform{resample_ratio(x.samples, x.sample_rate, target_hz), target_hz, x.id};
}

}  // namespace voiceguard
