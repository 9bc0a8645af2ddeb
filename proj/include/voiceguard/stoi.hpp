#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <span>
#include <vector>

#include "error.hpp"
#include "fft.hpp"
#include "resample.hpp"
#include "waveform.hpp"

namespace voiceguard {

struct StoiParams {
  int rate = 10000;
  std::size_t frame = 256;
  std::size_t hop = 128;
  std::size_t n_fft = 512;
  std::size_t bands = 15;
  double min_freq = 150.0;
  std::size_t segment = 30;  // frames, 384 ms
  double clip_db = -15.0;
  double vad_range_db = 40.0;
};

namespace detail {

// Symmetric Hann without its zero end points.
inline std::vector<double> stoi_window(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i)
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * double(i + 1) / double(n + 1));
  return w;
}

/// One-third-octave band edges as FFT bin ranges [lo, hi).
inline std::vector<std::pair<std::size_t, std::size_t>> third_octave_bands(const StoiParams& p) {
  const std::size_t bins = p.n_fft / 2 + 1;
  auto nearest = [&](double f) {
    std::size_t best = 0;
    double err = 1e300;
    for (std::size_t k = 0; k < bins; ++k) {
      const double e = std::abs(double(k) * p.rate / double(p.n_fft) - f);
      if (e < err) err = e, best = k;
    }
    return best;
  };
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t b = 0; b < p.bands; ++b) {
    const double lo = p.min_freq * std::pow(2.0, (2.0 * double(b) - 1.0) / 6.0);
    const double hi = p.min_freq * std::pow(2.0, (2.0 * double(b) + 1.0) / 6.0);
    out.emplace_back(nearest(lo), nearest(hi));
  }
  return out;
}

// Soft minimum equal to min(a, b) outside |a - b| < h and C1 across the seam.
inline double soft_min(double a, double b, double h, double* da) {
  if (h <= 0.0 || a <= b - h) {
    if (da) *da = a <= b ? 1.0 : 0.0;
    return std::min(a, b);
  }
  if (a >= b + h) {
    if (da) *da = 0.0;
    return b;
  }
  const double u = a - b + h;
  if (da) *da = 1.0 - u / (2.0 * h);
  return a - u * u / (4.0 * h);
}

}  // namespace detail

/// Short-time objective intelligibility against a fixed clean reference.
/// Everything derived from the reference is computed once so the degraded
/// side can be scored (and differentiated) repeatedly.
class StoiReference {
 public:
  StoiReference(std::span<const double> clean, int rate, StoiParams p = {})
      : p_(p), rs_(clean.size(), rate, p.rate), win_(detail::stoi_window(p.frame)),
        bands_(detail::third_octave_bands(p)), in_len_(clean.size()) {
    const std::vector<double> x = rs_(clean);
    require(x.size() >= p_.frame, ErrorKind::TooShort, "clip too short for STOI framing");
    std::vector<double> energy;
    for (std::size_t s = 0; s + p_.frame <= x.size(); s += p_.hop) {
      double e = 0.0;
      for (std::size_t i = 0; i < p_.frame; ++i) e += (win_[i] * x[s + i]) * (win_[i] * x[s + i]);
      energy.push_back(20.0 * std::log10(std::sqrt(e) + 1e-300));
      starts_.push_back(s);
    }
    const double top = *std::max_element(energy.begin(), energy.end());
    std::vector<std::size_t> kept;
    for (std::size_t f = 0; f < starts_.size(); ++f)
      if (energy[f] > top - p_.vad_range_db) kept.push_back(starts_[f]);
    starts_ = std::move(kept);
    require(starts_.size() >= p_.segment + 1, ErrorKind::TooShort,
            "fewer than 384 ms of voiced content; STOI is undefined");
    clean_env_ = envelopes(x, nullptr);
  }

  std::size_t input_length() const { return in_len_; }
  std::size_t frames() const { return starts_.size() - 1; }

  /// Classical score with hard clipping.
  double score(std::span<const double> degraded) const { return evaluate(degraded, false, nullptr); }

  /// Score with the soft clip; `grad` receives d(score)/d(degraded).
  double smooth_score(std::span<const double> degraded, std::vector<double>* grad) const {
    return evaluate(degraded, true, grad);
  }

 private:
  struct Spectra {
    std::vector<std::vector<cplx>> frames;  // per STFT frame, bins 0..n_fft/2
  };

  // Band envelopes [band][frame] of the VAD-compacted signal.
  std::vector<std::vector<double>> envelopes(const std::vector<double>& x10, Spectra* keep) const {
    const std::vector<double> sil = compact(x10);
    const std::size_t n_frames = frames();
    const std::size_t bins = p_.n_fft / 2 + 1;
    std::vector<std::vector<double>> env(p_.bands, std::vector<double>(n_frames, 0.0));
    std::vector<cplx> buf(p_.n_fft);
    if (keep) keep->frames.assign(n_frames, std::vector<cplx>(bins));
    for (std::size_t t = 0; t < n_frames; ++t) {
      std::fill(buf.begin(), buf.end(), cplx{});
      for (std::size_t i = 0; i < p_.frame; ++i) buf[i] = win_[i] * sil[t * p_.hop + i];
      fft_inplace(buf);
      if (keep) std::copy(buf.begin(), buf.begin() + long(bins), keep->frames[t].begin());
      for (std::size_t b = 0; b < p_.bands; ++b) {
        double e = 0.0;
        for (std::size_t k = bands_[b].first; k < bands_[b].second; ++k) e += std::norm(buf[k]);
        env[b][t] = std::sqrt(e);
      }
    }
    return env;
  }

  // Overlap-add of the kept windowed frames.
  std::vector<double> compact(const std::vector<double>& x10) const {
    std::vector<double> out((starts_.size() - 1) * p_.hop + p_.frame, 0.0);
    for (std::size_t f = 0; f < starts_.size(); ++f)
      for (std::size_t i = 0; i < p_.frame; ++i) out[f * p_.hop + i] += win_[i] * x10[starts_[f] + i];
    return out;
  }

  double evaluate(std::span<const double> degraded, bool smooth, std::vector<double>* grad) const {
    const std::vector<double> y10 = rs_(degraded);
    Spectra spec;
    const auto env = envelopes(y10, grad ? &spec : nullptr);
    const std::size_t n_frames = frames();
    const std::size_t n_seg = n_frames - p_.segment + 1;
    const std::size_t n = p_.segment;
    const double bound_scale = 1.0 + std::pow(10.0, -p_.clip_db / 20.0);
    std::vector<std::vector<double>> g_env;
    if (grad) g_env.assign(p_.bands, std::vector<double>(n_frames, 0.0));

    double total = 0.0;
    std::vector<double> xs(n), ys(n), yn(n), yp(n), dclip(n), xc(n), yc(n);
    for (std::size_t s = 0; s < n_seg; ++s) {
      for (std::size_t b = 0; b < p_.bands; ++b) {
        double ax = 0.0, ay = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          xs[i] = clean_env_[b][s + i];
          ys[i] = env[b][s + i];
          ax += xs[i] * xs[i];
          ay += ys[i] * ys[i];
        }
        ax = std::sqrt(ax);
        ay = std::sqrt(ay);
        const double ratio = ay > 0.0 ? ax / ay : 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          yn[i] = ys[i] * ratio;
          const double bound = xs[i] * bound_scale;
          yp[i] = smooth ? detail::soft_min(yn[i], bound, 0.1 * bound, &dclip[i])
                         : detail::soft_min(yn[i], bound, 0.0, &dclip[i]);
        }
        double mx = 0.0, my = 0.0;
        for (std::size_t i = 0; i < n; ++i) mx += xs[i], my += yp[i];
        mx /= double(n);
        my /= double(n);
        double nx = 0.0, ny = 0.0, dot = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          xc[i] = xs[i] - mx;
          yc[i] = yp[i] - my;
          nx += xc[i] * xc[i];
          ny += yc[i] * yc[i];
          dot += xc[i] * yc[i];
        }
        nx = std::sqrt(nx);
        ny = std::sqrt(ny);
        if (nx == 0.0 || ny == 0.0) continue;  // degenerate segment contributes 0
        const double corr = dot / (nx * ny);
        total += corr;
        if (!grad) continue;
        // d corr / d yp, then through the clip and the energy normalisation.
        std::vector<double> g(n);
        for (std::size_t i = 0; i < n; ++i)
          g[i] = (xc[i] / nx - corr * yc[i] / ny) / ny * dclip[i];
        if (ay == 0.0) continue;
        double proj = 0.0;
        for (std::size_t i = 0; i < n; ++i) proj += ys[i] / ay * g[i];
        for (std::size_t i = 0; i < n; ++i)
          g_env[b][s + i] += ratio * (g[i] - ys[i] / ay * proj);
      }
    }
    const double denom = double(n_seg * p_.bands);
    const double score = total / denom;
    if (grad) backprop(spec, env, g_env, 1.0 / denom, *grad);
    return score;
  }

  void backprop(const Spectra& spec, const std::vector<std::vector<double>>& env,
                const std::vector<std::vector<double>>& g_env, double scale,
                std::vector<double>& grad) const {
    const std::size_t n_frames = frames();
    std::vector<double> g_sil((starts_.size() - 1) * p_.hop + p_.frame, 0.0);
    std::vector<cplx> buf(p_.n_fft);
    for (std::size_t t = 0; t < n_frames; ++t) {
      std::fill(buf.begin(), buf.end(), cplx{});
      for (std::size_t b = 0; b < p_.bands; ++b) {
        if (env[b][t] <= 0.0) continue;
        const double gb = scale * g_env[b][t] / env[b][t];
        for (std::size_t k = bands_[b].first; k < bands_[b].second; ++k)
          buf[k] += gb * spec.frames[t][k];
      }
      fft_inplace(buf, /*inverse=*/true);
      for (std::size_t i = 0; i < p_.frame; ++i) g_sil[t * p_.hop + i] += win_[i] * buf[i].real();
    }
    std::vector<double> g10(rs_.output_length(), 0.0);
    for (std::size_t f = 0; f < starts_.size(); ++f)
      for (std::size_t i = 0; i < p_.frame; ++i) g10[starts_[f] + i] += win_[i] * g_sil[f * p_.hop + i];
    grad = rs_.adjoint(g10);
  }

  StoiParams p_;
  Resampler rs_;
  std::vector<double> win_;
  std::vector<std::pair<std::size_t, std::size_t>> bands_;
  std::vector<std::size_t> starts_;
  std::vector<std::vector<double>> clean_env_;
  std::size_t in_len_;
};

/// Classical STOI, clamped to [0, 1].
inline double stoi_score(const Waveform& clean, const Waveform& degraded) {
  require(clean.size() == degraded.size(), ErrorKind::ShapeMismatch,
          "STOI needs equal-length signals");
  require(clean.sample_rate == degraded.sample_rate, ErrorKind::InvalidArgument,
          "STOI needs equal sample rates");
  return std::clamp(StoiReference(clean.samples, clean.sample_rate).score(degraded.samples), 0.0, 1.0);
}

}  // namespace voiceguard
