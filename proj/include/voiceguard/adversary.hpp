#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "error.hpp"
#include "filter.hpp"
#include "mel.hpp"
#include "objectives.hpp"
#include "parallel.hpp"
#include "protector.hpp"
#include "resample.hpp"
#include "stft.hpp"
#include "surrogate.hpp"
#include "wav.hpp"
#include "waveform.hpp"

namespace voiceguard {

enum class AugmentKind { RS, Mel, QD, FL, Speed, Mask, LPF };

inline constexpr std::array<AugmentKind, 7> kAllAugmentations{
    AugmentKind::RS, AugmentKind::Mel, AugmentKind::QD, AugmentKind::FL,
    AugmentKind::Speed, AugmentKind::Mask, AugmentKind::LPF};

inline std::string_view to_string(AugmentKind k) {
  switch (k) {
    case AugmentKind::RS: return "RS";
    case AugmentKind::Mel: return "Mel";
    case AugmentKind::QD: return "QD";
    case AugmentKind::FL: return "FL";
    case AugmentKind::Speed: return "Speed";
    case AugmentKind::Mask: return "Mask";
    case AugmentKind::LPF: return "LPF";
  }
  return "?";
}

struct AugmentationSpec {
  AugmentKind kind = AugmentKind::RS;
  int rs_rate = 8000;
  int mel_iterations = 32;
  int qd_bits = 8;
  double fl_low = 300.0, fl_high = 3400.0;
  double speed = 1.1;
  double mask_ms = 100.0;
  double lpf_hz = 4000.0;
  std::uint64_t seed = 0;
};

inline void validate(const AugmentationSpec& s) {
  require(supported_rate(s.rs_rate) && s.rs_rate < kCanonicalRate, ErrorKind::InvalidArgument,
          "RS intermediate rate must be a supported rate below 16 kHz");
  require(s.mel_iterations >= 1, ErrorKind::InvalidArgument, "Griffin-Lim needs >= 1 iteration");
  require(s.qd_bits >= 2 && s.qd_bits <= 16, ErrorKind::InvalidArgument, "QD bit depth must be 2..16");
  require(s.speed == 0.9 || s.speed == 1.1, ErrorKind::InvalidArgument, "speed factor must be 0.9 or 1.1");
  require(s.mask_ms > 0.0, ErrorKind::InvalidArgument, "mask span must be positive");
}

/// Magnitude estimate from log-mel: each band's energy is spread evenly over
/// the bins of its filter.
inline Matrix mel_to_magnitude(const Matrix& log_mel, const MelFrontEnd& front) {
  const Matrix& fb = front.filterbank();
  require(log_mel.cols == fb.rows, ErrorKind::ShapeMismatch, "mel width does not match filterbank");
  std::vector<double> row_sum(fb.rows, 0.0);
  for (std::size_t m = 0; m < fb.rows; ++m)
    for (double w : fb.row(m)) row_sum[m] += w;
  Matrix mag(log_mel.rows, fb.cols);
  for (std::size_t t = 0; t < log_mel.rows; ++t) {
    for (std::size_t m = 0; m < fb.rows; ++m) {
      if (row_sum[m] == 0.0) continue;
      const double e = std::exp(log_mel(t, m)) / row_sum[m];
      const auto w = fb.row(m);
      for (std::size_t k = 0; k < fb.cols; ++k) mag(t, k) += w[k] * e;
    }
    for (double& v : mag.row(t)) v = std::sqrt(v);
  }
  return mag;
}

/// Griffin-Lim phase reconstruction from a magnitude spectrogram.
inline std::vector<double> griffin_lim(const Matrix& mag, std::size_t length, const FftParams& p,
                                       int iterations) {
  ComplexSpectrogram s;
  s.frames = mag.rows;
  s.bins = mag.cols;
  s.params = p;
  s.signal_length = length;
  s.data.assign(mag.size(), cplx{});
  for (std::size_t i = 0; i < mag.size(); ++i) s.data[i] = mag.data[i];
  std::vector<double> y = istft(s, p);
  for (int it = 0; it < iterations; ++it) {
    const ComplexSpectrogram est = stft(y, p);
    for (std::size_t i = 0; i < mag.size(); ++i) {
      const double a = std::abs(est.data[i]);
      s.data[i] = a > 0.0 ? mag.data[i] * est.data[i] / a : cplx(mag.data[i], 0.0);
    }
    y = istft(s, p);
  }
  return y;
}

namespace detail {
inline std::vector<double> fit_length(std::vector<double> v, std::size_t n) {
  v.resize(n, 0.0);
  return v;
}
}  // namespace detail

inline Waveform augment(const Waveform& x, const AugmentationSpec& spec) {
  validate(spec);
  const std::size_t n = x.size();
  std::vector<double> y;
  switch (spec.kind) {
    case AugmentKind::RS: {
      const auto down = resample_ratio(x.samples, x.sample_rate, spec.rs_rate);
      y = detail::fit_length(resample_ratio(down, spec.rs_rate, x.sample_rate), n);
      break;
    }
    case AugmentKind::Mel: {
      MelParams mp;
      mp.sample_rate = x.sample_rate;
      const MelFrontEnd front(FftParams{}, mp);
      const Matrix mag = mel_to_magnitude(front.compute(x.samples).bins, front);
      y = griffin_lim(mag, n, front.fft(), spec.mel_iterations);
      break;
    }
    case AugmentKind::QD: {
      const double q = std::ldexp(1.0, spec.qd_bits - 1);
      y.resize(n);
      for (std::size_t i = 0; i < n; ++i) y[i] = std::round(x.samples[i] * q) / q;
      break;
    }
    case AugmentKind::FL:
      y = bandpass(x, spec.fl_low, spec.fl_high).samples;
      break;
    case AugmentKind::Speed:
      y = resample_ratio(x.samples, x.sample_rate * spec.speed, x.sample_rate);
      break;
    case AugmentKind::Mask: {
      y = x.samples;
      const auto span = std::min<std::size_t>(n, std::size_t(std::llround(spec.mask_ms / 1000.0 * x.sample_rate)));
      std::mt19937_64 rng(spec.seed);
      const std::size_t start = std::uniform_int_distribution<std::size_t>(0, n - span)(rng);
      std::fill(y.begin() + long(start), y.begin() + long(start + span), 0.0);
      break;
    }
    case AugmentKind::LPF:
      y = lowpass(x, spec.lpf_hz).samples;
      break;
  }
  return {clip_unit(y), x.sample_rate, x.id};
}

/// Spectral gating. Each bin's floor is its mean magnitude (in dB) over the
/// quietest 10% of frames; bins below floor + gate_db are attenuated by 20 dB.
inline Waveform spectral_gate_denoise(const Waveform& x, double gate_db = 10.0,
                                      double attenuation_db = 20.0, const FftParams& p = {}) {
  ComplexSpectrogram s = stft(x.samples, p);
  std::vector<double> frame_energy(s.frames, 0.0);
  for (std::size_t t = 0; t < s.frames; ++t)
    for (std::size_t k = 0; k < s.bins; ++k) frame_energy[t] += std::norm(s.at(t, k));
  std::vector<std::size_t> order(s.frames);
  for (std::size_t t = 0; t < s.frames; ++t) order[t] = t;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return frame_energy[a] < frame_energy[b]; });
  const std::size_t quiet = std::max<std::size_t>(1, s.frames / 10);
  const double tiny = 1e-12;
  const double gain = std::pow(10.0, -attenuation_db / 20.0);
  for (std::size_t k = 0; k < s.bins; ++k) {
    double floor_db = 0.0;
    for (std::size_t i = 0; i < quiet; ++i) floor_db += 20.0 * std::log10(std::abs(s.at(order[i], k)) + tiny);
    floor_db /= double(quiet);
    const double thresh = std::pow(10.0, (floor_db + gate_db) / 20.0);
    for (std::size_t t = 0; t < s.frames; ++t)
      if (std::abs(s.at(t, k)) < thresh) s.at(t, k) *= gain;
  }
  return {clip_unit(istft(s, p)), x.sample_rate, x.id};
}

// ---------------------------------------------------------------------------
// Adaptive attacks.

struct AdvTrainConfig {
  double rho_a = 8.0 / 255.0;
  double rho_u = 8.0 / 255.0;  // defender's radius, recorded for reporting
  int steps = 20;
  LossWeights weights;
  std::uint64_t seed = 0;
};

inline const std::vector<double>& default_rho_grid() {
  static const std::vector<double> g{0.0, 2 / 255.0, 4 / 255.0, 8 / 255.0, 10 / 255.0, 12 / 255.0, 16 / 255.0};
  return g;
}

/// PGD ascent on the full protection objective inside the rho_a ball.
inline Waveform adversarial_counter_perturbation(const Waveform& x_prot, const SurrogateModel& model,
                                                 const CondEmbedding& cond, const AdvTrainConfig& cfg,
                                                 double* loss_before = nullptr,
                                                 double* loss_after = nullptr) {
  require(cfg.rho_a >= 0.0 && cfg.rho_a <= 1.0 && cfg.steps >= 0, ErrorKind::InvalidArgument,
          "adversarial radius must lie in [0, 1] and steps >= 0");
  const auto z = make_noise_reference(x_prot, derive_seed(cfg.seed, "adv-noise"), model.front_end());
  const DeltaObjective obj(model, x_prot.samples, cond, Objective::Spec, cfg.weights, true,
                           z.z_mel.bins, x_prot.sample_rate);
  std::vector<double> delta(x_prot.size(), 0.0), grad;
  const double eta = cfg.rho_a / 10.0;
  if (loss_before) *loss_before = obj.evaluate(delta, nullptr).total;
  if (cfg.rho_a > 0.0) {
    for (int s = 0; s < cfg.steps; ++s) {
      obj.evaluate(delta, &grad);
      for (std::size_t i = 0; i < delta.size(); ++i) {
        const double sg = grad[i] > 0 ? 1.0 : grad[i] < 0 ? -1.0 : 0.0;
        delta[i] = std::clamp(delta[i] + eta * sg, -cfg.rho_a, cfg.rho_a);
      }
    }
  }
  if (loss_after) *loss_after = obj.evaluate(delta, nullptr).total;
  return {apply_delta(x_prot.samples, delta), x_prot.sample_rate, x_prot.id};
}

struct NesConfig {
  std::size_t queries = 50000;
  std::size_t population = 50;  // even; antithetic pairs
  double sigma = 0.001;
  double step = 0.0005;
  std::uint64_t seed = 0;
};

/// Score-only black box: higher is better for the attacker.
using Scorer = std::function<double(std::span<const double>)>;

struct NesResult {
  std::vector<double> best;
  double best_score = 0.0;
  double initial_score = 0.0;
  std::size_t queries_used = 0;
};

/// Natural evolution strategies with antithetic Gaussian probes. Each
/// iteration spends `population` probe queries plus one query to score the
/// new iterate; the run stops before the budget would be exceeded.
inline NesResult nes_recover(std::span<const double> start, const NesConfig& cfg, const Scorer& score) {
  require(cfg.population >= 2 && cfg.population % 2 == 0, ErrorKind::InvalidArgument,
          "NES population must be even and >= 2");
  require(cfg.queries >= cfg.population + 2, ErrorKind::InvalidArgument,
          "NES budget is smaller than one iteration");
  const std::size_t n = start.size();
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  NesResult r;
  std::vector<double> w(start.begin(), start.end());
  r.initial_score = r.best_score = score(w);
  r.best = w;
  r.queries_used = 1;
  std::vector<double> eps(n), probe(n), g(n);
  while (r.queries_used + cfg.population + 1 <= cfg.queries) {
    std::fill(g.begin(), g.end(), 0.0);
    for (std::size_t k = 0; k < cfg.population / 2; ++k) {
      for (double& e : eps) e = nd(rng);
      for (std::size_t i = 0; i < n; ++i) probe[i] = w[i] + cfg.sigma * eps[i];
      const double fp = score(probe);
      for (std::size_t i = 0; i < n; ++i) probe[i] = w[i] - cfg.sigma * eps[i];
      const double fm = score(probe);
      for (std::size_t i = 0; i < n; ++i) g[i] += (fp - fm) * eps[i];
    }
    r.queries_used += cfg.population;
    const double scale = 1.0 / (double(cfg.population) * cfg.sigma);
    for (std::size_t i = 0; i < n; ++i) w[i] += cfg.step * g[i] * scale;
    const double f = score(w);
    ++r.queries_used;
    if (f > r.best_score) {
      r.best_score = f;
      r.best = w;
    }
  }
  return r;
}

/// Round trip through an external codec. `command` must contain {in} and
/// {out} placeholders for WAV paths. Returns nullopt when no command is set
/// or the command fails, so callers can mark the row as skipped.
inline std::optional<Waveform> external_codec_roundtrip(const Waveform& x, const std::string& command,
                                                        const std::filesystem::path& scratch) {
  if (command.empty()) return std::nullopt;
  const auto in = scratch / (x.id + ".codec_in.wav");
  const auto out = scratch / (x.id + ".codec_out.wav");
  save_wav(x, in);
  std::string cmd = command;
  for (auto [key, val] : {std::pair<std::string, std::string>{"{in}", in.string()}, {"{out}", out.string()}})
    for (auto pos = cmd.find(key); pos != std::string::npos; pos = cmd.find(key))
      cmd.replace(pos, key.size(), val);
  if (std::system(cmd.c_str()) != 0 || !std::filesystem::exists(out)) return std::nullopt;
  try {
    Waveform y = load_wav(out);
    y.samples.resize(x.size(), 0.0);
    y.id = x.id;
    return y;
  } catch (const Error&) {
    return std::nullopt;
  }
}

}  // namespace voiceguard
