#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "error.hpp"

namespace voiceguard {

inline constexpr int kCanonicalRate = 16000;

/// Mono signal on the [-1, 1] amplitude scale.
struct Waveform {
  std::vector<double> samples;
  int sample_rate = kCanonicalRate;
  std::string id;

  std::size_t size() const noexcept { return samples.size(); }
  bool empty() const noexcept { return samples.empty(); }
  double duration_s() const { return static_cast<double>(samples.size()) / sample_rate; }
  std::span<const double> view() const noexcept { return samples; }
};

inline Waveform make_waveform(std::vector<double> samples, int rate = kCanonicalRate,
                              std::string id = {}) {
  return Waveform{std::move(samples), rate, std::move(id)};
}

inline bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double s) { return std::isfinite(s); });
}

inline void validate(const Waveform& w) {
  require(w.sample_rate > 0, ErrorKind::InvalidArgument, "sample rate must be positive");
  require(all_finite(w.samples), ErrorKind::NonFinite, "waveform contains non-finite samples");
  for (double s : w.samples)
    require(s >= -1.0 && s <= 1.0, ErrorKind::InvalidArgument,
            "waveform sample outside [-1, 1]");
}

inline double energy(std::span<const double> v) {
  return std::inner_product(v.begin(), v.end(), v.begin(), 0.0);
}

inline double rms(std::span<const double> v) {
  return v.empty() ? 0.0 : std::sqrt(energy(v) / static_cast<double>(v.size()));
}

inline double max_abs(std::span<const double> v) {
  double m = 0.0;
  for (double s : v) m = std::max(m, std::abs(s));
  return m;
}

inline std::vector<double> clip_unit(std::span<const double> v) {
  std::vector<double> out(v.size());
  std::transform(v.begin(), v.end(), out.begin(),
                 [](double s) { return std::clamp(s, -1.0, 1.0); });
  return out;
}

}  // namespace voiceguard
