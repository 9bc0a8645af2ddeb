#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "error.hpp"
#include "matrix.hpp"
#include "mel.hpp"
#include "stft.hpp"
#include "stoi.hpp"
#include "surrogate.hpp"
#include "waveform.hpp"

namespace voiceguard {

struct LossWeights {
  double alpha = 0.05;
  double beta = 10.0;
  bool kl_term = true;  // component switches of the noise loss
  bool l1_term = true;
};

inline void validate(const LossWeights& w) {
  require(w.alpha >= 0.0 && w.beta >= 0.0 && std::isfinite(w.alpha) && std::isfinite(w.beta),
          ErrorKind::InvalidArgument, "loss weights must be finite and nonnegative");
}

/// Scalar loss of two same-shaped arguments with both partial gradients.
struct PairLoss {
  double value = 0.0;
  Matrix d_first;
  Matrix d_second;
};

/// Mean absolute difference. Ties get a zero subgradient.
inline PairLoss mel_loss(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "mel_loss");
  require(a.size() > 0, ErrorKind::ShapeMismatch, "mel_loss of empty spectrograms");
  PairLoss out{0.0, Matrix(a.rows, a.cols), Matrix(a.rows, a.cols)};
  const double n = static_cast<double>(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.data[i] - b.data[i];
    out.value += std::abs(d);
    const double s = d > 0 ? 1.0 / n : d < 0 ? -1.0 / n : 0.0;
    out.d_first.data[i] = s;
    out.d_second.data[i] = -s;
  }
  out.value /= n;
  return out;
}

inline PairLoss mel_loss(const MelSpectrogram& a, const MelSpectrogram& b) {
  return mel_loss(a.bins, b.bins);
}

inline constexpr double kEnergyFloor = 1e-10;

/// KL(p || q) of two nonnegative weight vectors after normalisation to unit
/// mass. Gradients are with respect to the unnormalised weights.
inline double kl_weights(std::span<const double> p, std::span<const double> q,
                         std::span<double> dp = {}, std::span<double> dq = {}) {
  require(p.size() == q.size() && !p.empty(), ErrorKind::ShapeMismatch,
          "kl needs equal nonempty supports");
  double sp = 0.0, sq = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) sp += p[i], sq += q[i];
  require(sp > 0.0 && sq > 0.0, ErrorKind::InvalidArgument, "kl needs positive total mass");
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    require(q[i] > 0.0, ErrorKind::InvalidArgument, "kl undefined where q = 0 < p");
    kl += (p[i] / sp) * std::log((p[i] / sp) / (q[i] / sq));
  }
  if (!dp.empty() || !dq.empty()) {
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double pn = p[i] / sp, qn = q[i] / sq;
      if (!dp.empty()) dp[i] = pn > 0.0 ? (std::log(pn / qn) - kl) / sp : 0.0;
      if (!dq.empty()) dq[i] = (1.0 - pn / qn) / sq;
    }
  }
  return kl;
}

/// KL between two log-mel spectrograms read as joint time-frequency
/// distributions: exponentiate, floor at 1e-10, normalise, then sum p log p/q.
inline PairLoss kl_divergence(const Matrix& p_mel, const Matrix& q_mel) {
  require_same_shape(p_mel, q_mel, "kl_divergence");
  const std::size_t n = p_mel.size();
  std::vector<double> p(n), q(n), dp(n), dq(n);
  for (std::size_t i = 0; i < n; ++i) {
    p[i] = std::max(std::exp(p_mel.data[i]), kEnergyFloor);
    q[i] = std::max(std::exp(q_mel.data[i]), kEnergyFloor);
  }
  PairLoss out{kl_weights(p, q, dp, dq), Matrix(p_mel.rows, p_mel.cols), Matrix(p_mel.rows, p_mel.cols)};
  for (std::size_t i = 0; i < n; ++i) {
    out.d_first.data[i] = p[i] > kEnergyFloor ? dp[i] * p[i] : 0.0;
    out.d_second.data[i] = q[i] > kEnergyFloor ? dq[i] * q[i] : 0.0;
  }
  return out;
}

inline PairLoss kl_divergence(const MelSpectrogram& p, const MelSpectrogram& q) {
  return kl_divergence(p.bins, q.bins);
}

namespace detail {
inline void axpy(Matrix& y, double a, const Matrix& x) {
  for (std::size_t i = 0; i < y.size(); ++i) y.data[i] += a * x.data[i];
}
}  // namespace detail

/// KL(x_hat || z) + L1(x_hat, z); either term can be switched off.
inline PairLoss noise_loss(const Matrix& x_hat, const Matrix& z, bool kl_term = true,
                           bool l1_term = true) {
  require_same_shape(x_hat, z, "noise_loss");
  PairLoss out{0.0, Matrix(x_hat.rows, x_hat.cols), Matrix(z.rows, z.cols)};
  if (kl_term) {
    const PairLoss kl = kl_divergence(x_hat, z);
    out.value += kl.value;
    detail::axpy(out.d_first, 1.0, kl.d_first);
    detail::axpy(out.d_second, 1.0, kl.d_second);
  }
  if (l1_term) {
    const PairLoss l1 = mel_loss(x_hat, z);
    out.value += l1.value;
    detail::axpy(out.d_first, 1.0, l1.d_first);
    detail::axpy(out.d_second, 1.0, l1.d_second);
  }
  return out;
}

struct SpecLoss {
  double value = 0.0;
  double mel = 0.0;
  double noise = 0.0;
  Matrix d_prot;  // gradient on the protected-audio mel
  Matrix d_hat;   // gradient on the synthesised mel
};

/// L_mel(x_prot, x_hat) + beta * noise_loss(x_hat, z).
inline SpecLoss spec_loss(const Matrix& x_prot_mel, const Matrix& x_hat_mel, const Matrix& z_mel,
                          const LossWeights& w) {
  validate(w);
  const PairLoss m = mel_loss(x_prot_mel, x_hat_mel);
  SpecLoss out{m.value, m.value, 0.0, m.d_first, m.d_second};
  if (w.beta != 0.0) {
    const PairLoss nz = noise_loss(x_hat_mel, z_mel, w.kl_term, w.l1_term);
    out.noise = nz.value;
    out.value += w.beta * nz.value;
    detail::axpy(out.d_hat, w.beta, nz.d_first);
  }
  return out;
}

/// Gaussian reference the synthesised output is steered towards.
struct NoiseReference {
  Waveform z;
  MelSpectrogram z_mel;
  std::uint64_t seed = 0;
};

/// i.i.d. Gaussian noise with the clip's RMS, and its mel spectrogram.
inline NoiseReference make_noise_reference(const Waveform& clip, std::uint64_t seed,
                                           const MelFrontEnd& front) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<double> z(clip.size());
  for (double& v : z) v = nd(rng);
  const double r = rms(z), target = rms(clip.samples);
  for (double& v : z) v *= r > 0.0 ? target / r : 0.0;
  NoiseReference out{Waveform{std::move(z), clip.sample_rate, clip.id + ":z"}, {}, seed};
  out.z_mel = front.compute(out.z.view());
  return out;
}

// ---------------------------------------------------------------------------
// Perception terms.

/// Frobenius norm of the magnitude difference against a fixed clean spectrum.
/// `g` (optional) receives the gradient on the protected complex bins.
inline double stft_distance(const Spectrogram& clean, const ComplexSpectrogram& prot,
                            ComplexSpectrogram* g) {
  require(clean.bins.rows == prot.frames && clean.bins.cols == prot.bins, ErrorKind::ShapeMismatch,
          "stft_loss spectrogram shapes differ");
  double ss = 0.0;
  Matrix diff(prot.frames, prot.bins);
  for (std::size_t i = 0; i < prot.data.size(); ++i) {
    diff.data[i] = cabs_fast(prot.data[i]) - clean.bins.data[i];
    ss += diff.data[i] * diff.data[i];
  }
  const double norm = std::sqrt(ss);
  if (g) {
    for (double& d : diff.data) d = norm > 0.0 ? d / norm : 0.0;
    *g = magnitude_vjp(prot, diff);
  }
  return norm;
}

struct WaveLoss {
  double value = 0.0;
  std::vector<double> grad;  // with respect to the protected waveform
};

inline WaveLoss stft_loss(std::span<const double> x, std::span<const double> x_prot,
                          const FftParams& p = {}) {
  require(x.size() == x_prot.size(), ErrorKind::ShapeMismatch, "stft_loss needs equal lengths");
  const Spectrogram clean = magnitude(stft(x, p));
  const ComplexSpectrogram prot = stft(x_prot, p);
  ComplexSpectrogram g;
  WaveLoss out;
  out.value = stft_distance(clean, prot, &g);
  out.grad = stft_adjoint(g);
  return out;
}

/// 1 - STOI with the soft clip, against a prepared reference.
inline WaveLoss stoi_loss(const StoiReference& ref, std::span<const double> x_prot) {
  WaveLoss out;
  out.value = 1.0 - ref.smooth_score(x_prot, &out.grad);
  for (double& g : out.grad) g = -g;
  return out;
}

inline WaveLoss stoi_loss(const Waveform& x, const Waveform& x_prot) {
  require(x.size() == x_prot.size(), ErrorKind::ShapeMismatch, "stoi_loss needs equal lengths");
  return stoi_loss(StoiReference(x.samples, x.sample_rate), x_prot.samples);
}

struct PerceptionLoss {
  double value = 0.0;
  double stft = 0.0;
  double stoi = 0.0;
  bool stoi_skipped = false;
  std::vector<double> grad;
};

/// L_stoi + L_stft. Clips too short for STOI fall back to the STFT term and
/// set `stoi_skipped`.
inline PerceptionLoss perception_loss(const Waveform& x, const Waveform& x_prot,
                                      const FftParams& p = {}) {
  WaveLoss s = stft_loss(x.samples, x_prot.samples, p);
  PerceptionLoss out{s.value, s.value, 0.0, false, std::move(s.grad)};
  try {
    const WaveLoss st = stoi_loss(x, x_prot);
    out.stoi = st.value;
    out.value += st.value;
    for (std::size_t i = 0; i < out.grad.size(); ++i) out.grad[i] += st.grad[i];
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::TooShort) throw;
    out.stoi_skipped = true;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Objective on the perturbation.

enum class Objective { Pivotal, Spec, Vanilla };

inline std::string_view to_string(Objective o) {
  switch (o) {
    case Objective::Pivotal: return "pivotal";
    case Objective::Spec: return "spec";
    case Objective::Vanilla: return "vanilla";
  }
  return "?";
}

inline Objective objective_from_string(std::string_view s) {
  if (s == "pivotal") return Objective::Pivotal;
  if (s == "spec") return Objective::Spec;
  if (s == "vanilla") return Objective::Vanilla;
  throw Error(ErrorKind::InvalidArgument, "unknown mode '" + std::string(s) + "'");
}

struct ObjectiveTerms {
  double total = 0.0;
  double mel = 0.0;
  double noise = 0.0;
  double convergence = 0.0;  // vanilla only
  double prior_kl = 0.0;     // vanilla only
  double stft = 0.0;
  double stoi = 0.0;
  bool stoi_skipped = false;
};

/// The loss C(delta) minimised by the protector for one clip:
///   pivotal: L_mel(mel(x'), G(x'))
///   spec:    pivotal + beta * noise_loss(G(x'), z)
///   vanilla: L_mel + spectral convergence + per-frame KL to a conditioning-only
///            prior, evaluated as a full training loss (parameter gradients
///            included)
/// each plus alpha * (L_stoi + L_stft) when perception is enabled, with
/// x' = clip(x + delta).
class DeltaObjective {
 public:
  DeltaObjective(const SurrogateModel& model, std::span<const double> x, const CondEmbedding& cond,
                 Objective kind, LossWeights w, bool perception,
                 std::optional<Matrix> z_mel = std::nullopt, int sample_rate = kCanonicalRate)
      : model_(model), x_(x.begin(), x.end()), cond_(cond), kind_(kind), w_(w),
        perception_(perception), z_mel_(std::move(z_mel)) {
    validate(w_);
    require(kind_ != Objective::Spec || z_mel_.has_value(), ErrorKind::InvalidArgument,
            "spec objective needs a noise reference");
    if (perception_) {
      clean_mag_ = magnitude(stft(x_, model_.dims().fft));
      try {
        stoi_.emplace(x_, sample_rate);
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::TooShort) throw;
      }
    }
  }

  bool stoi_available() const { return stoi_.has_value(); }
  std::span<const double> clean() const { return x_; }

  /// Returns the loss terms; `grad` (optional) receives dC/d(delta).
  ObjectiveTerms evaluate(std::span<const double> delta, std::vector<double>* grad) const {
    require(delta.size() == x_.size(), ErrorKind::ShapeMismatch, "perturbation length mismatch");
    const std::size_t n = x_.size();
    std::vector<double> xp(n);
    for (std::size_t i = 0; i < n; ++i) xp[i] = std::clamp(x_[i] + delta[i], -1.0, 1.0);

    const MelFrontEnd& front = model_.front_end();
    SurrogateTrace tr;
    tr.spectrum = stft(xp, model_.dims().fft);
    Matrix power(tr.spectrum.frames, tr.spectrum.bins);
    for (std::size_t i = 0; i < power.size(); ++i) power.data[i] = std::norm(tr.spectrum.data[i]);
    Matrix mel_power;
    const Matrix target = front.from_power(power, &mel_power).bins;
    tr.features = detail::spectral_features(tr.spectrum, cond_);
    const Matrix hat = detail::to_matrix(forward_features(model_, tr.features, &tr.h1, &tr.h2));

    ObjectiveTerms terms;
    Matrix d_target, d_hat;
    std::vector<double> d_params;  // only the vanilla routine materialises these
    switch (kind_) {
      case Objective::Pivotal: {
        PairLoss m = mel_loss(target, hat);
        terms.mel = m.value;
        d_target = std::move(m.d_first);
        d_hat = std::move(m.d_second);
        break;
      }
      case Objective::Spec: {
        SpecLoss s = spec_loss(target, hat, *z_mel_, w_);
        terms.mel = s.mel;
        terms.noise = s.noise;
        d_target = std::move(s.d_prot);
        d_hat = std::move(s.d_hat);
        break;
      }
      case Objective::Vanilla: {
        PairLoss m = mel_loss(target, hat);
        terms.mel = m.value;
        d_target = std::move(m.d_first);
        d_hat = std::move(m.d_second);
        terms.convergence = spectral_convergence(target, hat, d_target, d_hat);
        terms.prior_kl = prior_kl(tr.features, hat, d_hat, grad ? &d_params : nullptr);
        break;
      }
    }
    terms.total = terms.mel + w_.beta * terms.noise + terms.convergence + terms.prior_kl;

    ComplexSpectrogram g_spec;
    if (grad) {
      g_spec = backward_to_spectrum(model_, tr, d_hat,
                                    kind_ == Objective::Vanilla ? &d_params : nullptr);
      front.accumulate_spectrum_vjp(tr.spectrum, mel_power, d_target, g_spec);
    }

    std::vector<double> g_stoi;
    if (perception_) {
      ComplexSpectrogram g_stft;
      terms.stft = stft_distance(clean_mag_, tr.spectrum, grad ? &g_stft : nullptr);
      if (stoi_) {
        terms.stoi = 1.0 - stoi_->smooth_score(xp, grad ? &g_stoi : nullptr);
      } else {
        terms.stoi_skipped = true;
      }
      terms.total += w_.alpha * (terms.stft + terms.stoi);
      if (grad)
        for (std::size_t i = 0; i < g_spec.data.size(); ++i) g_spec.data[i] += w_.alpha * g_stft.data[i];
    }
    require(std::isfinite(terms.total), ErrorKind::NonFinite, "objective evaluated to a non-finite value");

    if (grad) {
      *grad = stft_adjoint(g_spec);
      for (std::size_t i = 0; i < n; ++i) {
        if (!g_stoi.empty()) (*grad)[i] -= w_.alpha * g_stoi[i];
        const double v = x_[i] + delta[i];
        if (v < -1.0 || v > 1.0) (*grad)[i] = 0.0;
      }
    }
    return terms;
  }

 private:
  // ||E_t - E_h||_F / ||E_t||_F on mel energies.
  static double spectral_convergence(const Matrix& target, const Matrix& hat, Matrix& d_target,
                                     Matrix& d_hat) {
    const std::size_t n = target.size();
    std::vector<double> et(n), eh(n);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      et[i] = std::exp(target.data[i]);
      eh[i] = std::exp(hat.data[i]);
      num += (et[i] - eh[i]) * (et[i] - eh[i]);
      den += et[i] * et[i];
    }
    num = std::sqrt(num);
    den = std::sqrt(den);
    if (den == 0.0) return 0.0;
    const double sc = num / den;
    for (std::size_t i = 0; i < n; ++i) {
      const double r = num > 0.0 ? (et[i] - eh[i]) / (num * den) : 0.0;
      d_target.data[i] += (r - sc * et[i] / (den * den)) * et[i];
      d_hat.data[i] += -r * eh[i];
    }
    return sc;
  }

  // Mean per-frame KL(softmax(hat_t) || softmax(prior_t)) where the prior is the
  // model run on conditioning alone. As in a training step, the prior branch
  // is also backpropagated into the parameters.
  double prior_kl(const RowMat& features, const Matrix& hat, Matrix& d_hat,
                  std::vector<double>* d_params) const {
    RowMat pf = features;
    pf.leftCols(long(model_.dims().bins())).setZero();
    RowMat h1, h2;
    const RowMat prior = forward_features(model_, pf, &h1, &h2);
    const std::size_t m = hat.cols;
    const double scale = 1.0 / static_cast<double>(hat.rows);
    std::vector<double> p(m), q(m), dp(m), dq(m);
    RowMat g_prior(prior.rows(), prior.cols());
    double total = 0.0;
    for (std::size_t t = 0; t < hat.rows; ++t) {
      double hp = -1e300, hq = -1e300;
      for (std::size_t j = 0; j < m; ++j) hp = std::max(hp, hat(t, j)), hq = std::max(hq, prior(long(t), long(j)));
      for (std::size_t j = 0; j < m; ++j) {
        p[j] = std::exp(hat(t, j) - hp);
        q[j] = std::exp(prior(long(t), long(j)) - hq);
      }
      total += kl_weights(p, q, dp, dq);
      for (std::size_t j = 0; j < m; ++j) {
        d_hat(t, j) += scale * dp[j] * p[j];
        g_prior(long(t), long(j)) = scale * dq[j] * q[j];
      }
    }
    if (d_params) backward_features(model_, pf, h1, h2, g_prior, d_params, false);
    return total * scale;
  }

  const SurrogateModel& model_;
  std::vector<double> x_;
  CondEmbedding cond_;
  Objective kind_;
  LossWeights w_;
  bool perception_;
  std::optional<Matrix> z_mel_;
  Spectrogram clean_mag_;
  std::optional<StoiReference> stoi_;
};

}  // namespace voiceguard
