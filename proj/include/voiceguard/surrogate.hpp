#pragma once

#include <Eigen/Dense>

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "error.hpp"
#include "matrix.hpp"
#include "mel.hpp"
#include "stft.hpp"
#include "waveform.hpp"

namespace voiceguard {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr std::size_t kCondDim = 8;

/// Unit-norm conditioning vector standing in for speaker and text inputs.
struct CondEmbedding {
  std::array<double, kCondDim> v{};
};

/// Hashes a speaker id into a fixed table of random unit vectors.
inline CondEmbedding cond_for_speaker(std::string_view speaker, std::uint64_t table_seed = 0x5eed) {
  constexpr std::size_t kTable = 256;
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : speaker) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  const std::size_t slot = h % kTable;
  std::mt19937_64 rng(table_seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  CondEmbedding e;
  for (std::size_t s = 0; s <= slot; ++s)
    for (auto& x : e.v) x = nd(rng);
  double n = 0.0;
  for (double x : e.v) n += x * x;
  n = std::sqrt(n);
  for (auto& x : e.v) x /= n;
  return e;
}

struct SurrogateDims {
  FftParams fft;
  MelParams mel;
  std::size_t cond_dim = kCondDim;
  std::size_t hidden = 128;

  std::size_t bins() const { return fft.bins(); }
  std::size_t input_dim() const { return fft.bins() + cond_dim; }
  std::size_t param_count() const {
    return hidden * input_dim() + hidden + hidden * hidden + hidden + mel.n_mels * hidden +
           mel.n_mels;
  }
  bool operator==(const SurrogateDims&) const = default;
};

/// Per-frame tanh MLP from log-magnitude spectra (plus conditioning) to log-mel.
/// Parameters are stored as doubles that are always exactly representable in
/// single precision, so the on-disk f32 blob round-trips bit for bit.
class SurrogateModel {
 public:
  SurrogateModel() : SurrogateModel(SurrogateDims{}) {}
  explicit SurrogateModel(const SurrogateDims& d)
      : dims_(d), theta_(d.param_count(), 0.0), front_(d.fft, d.mel) {
    require(d.cond_dim == kCondDim, ErrorKind::InvalidArgument, "conditioning width is fixed at 8");
    require(d.hidden >= 1, ErrorKind::InvalidArgument, "hidden width must be positive");
  }

  static SurrogateModel init(std::uint64_t seed, const SurrogateDims& d = {}) {
    SurrogateModel m(d);
    std::mt19937_64 rng(seed);
    auto fill = [&](std::size_t off, std::size_t fan_out, std::size_t fan_in) {
      const double lim = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
      std::uniform_real_distribution<double> u(-lim, lim);
      for (std::size_t i = 0; i < fan_out * fan_in; ++i) m.theta_[off + i] = u(rng);
    };
    fill(m.w1_off(), d.hidden, d.input_dim());
    fill(m.w2_off(), d.hidden, d.hidden);
    fill(m.w3_off(), d.mel.n_mels, d.hidden);
    m.round_to_float();
    return m;
  }

  const SurrogateDims& dims() const noexcept { return dims_; }
  const MelFrontEnd& front_end() const noexcept { return front_; }
  std::size_t param_count() const noexcept { return theta_.size(); }
  std::span<const double> params() const noexcept { return theta_; }
  std::span<double> mutable_params() noexcept { return theta_; }

  void round_to_float() {
    for (double& p : theta_) p = static_cast<double>(static_cast<float>(p));
  }

  std::size_t w1_off() const { return 0; }
  std::size_t b1_off() const { return w1_off() + dims_.hidden * dims_.input_dim(); }
  std::size_t w2_off() const { return b1_off() + dims_.hidden; }
  std::size_t b2_off() const { return w2_off() + dims_.hidden * dims_.hidden; }
  std::size_t w3_off() const { return b2_off() + dims_.hidden; }
  std::size_t b3_off() const { return w3_off() + dims_.mel.n_mels * dims_.hidden; }

  using CMap = Eigen::Map<const RowMat>;
  using CVec = Eigen::Map<const Eigen::RowVectorXd>;
  CMap w1() const { return {theta_.data() + w1_off(), long(dims_.hidden), long(dims_.input_dim())}; }
  CVec b1() const { return {theta_.data() + b1_off(), long(dims_.hidden)}; }
  CMap w2() const { return {theta_.data() + w2_off(), long(dims_.hidden), long(dims_.hidden)}; }
  CVec b2() const { return {theta_.data() + b2_off(), long(dims_.hidden)}; }
  CMap w3() const { return {theta_.data() + w3_off(), long(dims_.mel.n_mels), long(dims_.hidden)}; }
  CVec b3() const { return {theta_.data() + b3_off(), long(dims_.mel.n_mels)}; }

 private:
  SurrogateDims dims_;
  std::vector<double> theta_;
  MelFrontEnd front_;
};

/// Activations kept from a forward pass.
struct SurrogateTrace {
  ComplexSpectrogram spectrum;
  RowMat features;  // frames x input_dim
  RowMat h1, h2;
};

namespace detail {

inline RowMat spectral_features(const ComplexSpectrogram& s, const CondEmbedding& cond) {
  RowMat f(static_cast<long>(s.frames), static_cast<long>(s.bins + kCondDim));
  for (std::size_t t = 0; t < s.frames; ++t) {
    for (std::size_t k = 0; k < s.bins; ++k) f(long(t), long(k)) = std::log1p(cabs_fast(s.at(t, k)));
    for (std::size_t c = 0; c < kCondDim; ++c) f(long(t), long(s.bins + c)) = cond.v[c];
  }
  return f;
}

inline Matrix to_matrix(const RowMat& m) {
  Matrix out(static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols()));
  Eigen::Map<RowMat>(out.data.data(), m.rows(), m.cols()) = m;
  return out;
}

inline Eigen::Map<const RowMat> as_eigen(const Matrix& m) {
  return {m.data.data(), long(m.rows), long(m.cols)};
}

}  // namespace detail

/// MLP on precomputed features. `h1`/`h2` receive the hidden activations.
inline RowMat forward_features(const SurrogateModel& m, const RowMat& f, RowMat* h1 = nullptr,
                               RowMat* h2 = nullptr) {
  require(static_cast<std::size_t>(f.cols()) == m.dims().input_dim(), ErrorKind::ShapeMismatch,
          "feature width does not match the model");
  RowMat a1 = (f * m.w1().transpose()).rowwise() + m.b1();
  a1 = a1.array().tanh();
  RowMat a2 = (a1 * m.w2().transpose()).rowwise() + m.b2();
  a2 = a2.array().tanh();
  RowMat y = (a2 * m.w3().transpose()).rowwise() + m.b3();
  if (h1) *h1 = std::move(a1);
  if (h2) *h2 = std::move(a2);
  return y;
}

inline MelSpectrogram forward(const SurrogateModel& m, std::span<const double> x,
                              const CondEmbedding& cond, SurrogateTrace* trace = nullptr) {
  ComplexSpectrogram s = stft(x, m.dims().fft);
  RowMat f = detail::spectral_features(s, cond);
  RowMat h1, h2;
  RowMat y = forward_features(m, f, &h1, &h2);
  if (trace) *trace = SurrogateTrace{std::move(s), std::move(f), std::move(h1), std::move(h2)};
  return {detail::to_matrix(y), m.dims().mel};
}

inline MelSpectrogram forward(const SurrogateModel& m, const Waveform& x, const CondEmbedding& cond,
                              SurrogateTrace* trace = nullptr) {
  return forward(m, x.view(), cond, trace);
}

struct GradientBundle {
  std::vector<double> d_params;
  std::vector<double> d_waveform;
};

/// Reverse pass through the MLP. Accumulates into `d_params` when given and
/// returns the gradient on the feature matrix when `want_features` is set.
inline RowMat backward_features(const SurrogateModel& m, const RowMat& f, const RowMat& h1,
                                const RowMat& h2, const Eigen::Ref<const RowMat>& g,
                                std::vector<double>* d_params, bool want_features) {
  require(g.rows() == f.rows() && static_cast<std::size_t>(g.cols()) == m.dims().mel.n_mels,
          ErrorKind::ShapeMismatch, "upstream gradient shape does not match surrogate output");
  RowMat dh2 = g * m.w3();
  RowMat da2 = dh2.array() * (1.0 - h2.array().square());
  RowMat dh1 = da2 * m.w2();
  RowMat da1 = dh1.array() * (1.0 - h1.array().square());
  if (d_params) {
    auto& d = *d_params;
    if (d.size() != m.param_count()) d.assign(m.param_count(), 0.0);
    const auto& dm = m.dims();
    Eigen::Map<RowMat>(d.data() + m.w1_off(), long(dm.hidden), long(dm.input_dim())) +=
        da1.transpose() * f;
    Eigen::Map<Eigen::RowVectorXd>(d.data() + m.b1_off(), long(dm.hidden)) += da1.colwise().sum();
    Eigen::Map<RowMat>(d.data() + m.w2_off(), long(dm.hidden), long(dm.hidden)) +=
        da2.transpose() * h1;
    Eigen::Map<Eigen::RowVectorXd>(d.data() + m.b2_off(), long(dm.hidden)) += da2.colwise().sum();
    Eigen::Map<RowMat>(d.data() + m.w3_off(), long(dm.mel.n_mels), long(dm.hidden)) +=
        g.transpose() * h2;
    Eigen::Map<Eigen::RowVectorXd>(d.data() + m.b3_off(), long(dm.mel.n_mels)) += g.colwise().sum();
  }
  if (!want_features) return {};
  return da1 * m.w1();
}

/// Gradient on the complex STFT bins of the input, given dL/d(output mel).
/// Zero-magnitude bins get a zero subgradient.
inline ComplexSpectrogram backward_to_spectrum(const SurrogateModel& m, const SurrogateTrace& tr,
                                               const Matrix& upstream,
                                               std::vector<double>* d_params = nullptr) {
  const RowMat df = backward_features(m, tr.features, tr.h1, tr.h2, detail::as_eigen(upstream),
                                      d_params, true);
  ComplexSpectrogram g;
  g.frames = tr.spectrum.frames;
  g.bins = tr.spectrum.bins;
  g.params = tr.spectrum.params;
  g.signal_length = tr.spectrum.signal_length;
  g.data.resize(tr.spectrum.data.size());
  for (std::size_t t = 0; t < g.frames; ++t)
    for (std::size_t k = 0; k < g.bins; ++k) {
      const cplx s = tr.spectrum.at(t, k);
      const double mag = cabs_fast(s);
      g.at(t, k) = mag > 0.0 ? (df(long(t), long(k)) / ((1.0 + mag) * mag)) * s : cplx{};
    }
  return g;
}

inline GradientBundle backward(const SurrogateModel& m, const SurrogateTrace& tr,
                               const Matrix& upstream) {
  GradientBundle out;
  out.d_params.assign(m.param_count(), 0.0);
  out.d_waveform = stft_adjoint(backward_to_spectrum(m, tr, upstream, &out.d_params));
  return out;
}

/// Reconstruction loss: mean |forward - mel(x)| and its gradient on the output.
inline double reconstruction_l1(const RowMat& pred, const Matrix& target, RowMat* grad) {
  require(pred.rows() == long(target.rows) && pred.cols() == long(target.cols),
          ErrorKind::ShapeMismatch, "prediction and target shapes differ");
  const auto t = detail::as_eigen(target);
  const double n = static_cast<double>(target.size());
  RowMat diff = pred - t;
  if (grad) *grad = diff.unaryExpr([n](double d) { return d > 0 ? 1.0 / n : d < 0 ? -1.0 / n : 0.0; });
  return diff.cwiseAbs().sum() / n;
}

/// A clip with its features and target mel computed once for repeated training.
struct TrainingClip {
  RowMat features;
  Matrix target;
};

inline TrainingClip prepare_clip(const SurrogateModel& m, std::span<const double> x,
                                 const CondEmbedding& cond) {
  ComplexSpectrogram s = stft(x, m.dims().fft);
  Matrix power(s.frames, s.bins);
  for (std::size_t i = 0; i < s.data.size(); ++i) power.data[i] = std::norm(s.data[i]);
  return {detail::spectral_features(s, cond), m.front_end().from_power(power).bins};
}

/// Mean reconstruction loss over a batch, with the averaged parameter gradient.
inline double batch_loss(const SurrogateModel& m, std::span<const TrainingClip> batch,
                         std::vector<double>* d_params) {
  require(!batch.empty(), ErrorKind::InvalidArgument, "training batch is empty");
  if (d_params) d_params->assign(m.param_count(), 0.0);
  double total = 0.0;
  const double scale = 1.0 / static_cast<double>(batch.size());
  for (const auto& c : batch) {
    RowMat h1, h2, g;
    RowMat y = forward_features(m, c.features, &h1, &h2);
    total += reconstruction_l1(y, c.target, d_params ? &g : nullptr);
    if (d_params) backward_features(m, c.features, h1, h2, g * scale, d_params, false);
  }
  return total * scale;
}

/// One plain gradient-descent step. Returns the loss before the update.
inline double train_step(SurrogateModel& m, std::span<const TrainingClip> batch, double lr) {
  std::vector<double> g;
  const double loss = batch_loss(m, batch, &g);
  auto p = m.mutable_params();
  for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr * g[i];
  m.round_to_float();
  return loss;
}

struct AdamOptions {
  double lr = 3e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam over the model's parameters; owns the moment estimates.
class AdamTrainer {
 public:
  AdamTrainer(SurrogateModel& model, AdamOptions opt = {})
      : model_(model), opt_(opt), m_(model.param_count(), 0.0), v_(model.param_count(), 0.0) {}

  /// Returns the pre-step loss.
  double step(std::span<const TrainingClip> batch) {
    std::vector<double> g;
    const double loss = batch_loss(model_, batch, &g);
    ++t_;
    const double c1 = 1.0 - std::pow(opt_.beta1, double(t_));
    const double c2 = 1.0 - std::pow(opt_.beta2, double(t_));
    auto p = model_.mutable_params();
    for (std::size_t i = 0; i < p.size(); ++i) {
      m_[i] = opt_.beta1 * m_[i] + (1.0 - opt_.beta1) * g[i];
      v_[i] = opt_.beta2 * v_[i] + (1.0 - opt_.beta2) * g[i] * g[i];
      p[i] -= opt_.lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + opt_.eps);
    }
    model_.round_to_float();
    return loss;
  }

  std::size_t steps_taken() const noexcept { return t_; }

 private:
  SurrogateModel& model_;
  AdamOptions opt_;
  std::vector<double> m_, v_;
  std::size_t t_ = 0;
};

// ---------------------------------------------------------------------------
// Model file: "VGSM", u32 version, dims, f32 parameter blob, little endian.

inline constexpr std::uint32_t kModelVersion = 1;

namespace detail {

template <typename T>
void put_le(std::string& out, T v) {
  static_assert(std::endian::native == std::endian::little, "big-endian hosts are not supported");
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T get_le(std::string_view in, std::size_t& pos) {
  require(pos + sizeof(T) <= in.size(), ErrorKind::MalformedFile, "model file is truncated");
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

}  // namespace detail

inline std::string serialize_model(const SurrogateModel& m) {
  const auto& d = m.dims();
  std::string out = "VGSM";
  detail::put_le<std::uint32_t>(out, kModelVersion);
  for (std::size_t v : {d.fft.n_fft, d.fft.hop, d.fft.win, d.mel.n_mels})
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(v));
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(d.mel.sample_rate));
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(d.cond_dim));
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(d.hidden));
  detail::put_le<double>(out, d.mel.fmin);
  detail::put_le<double>(out, d.mel.fmax);
  detail::put_le<std::uint64_t>(out, m.param_count());
  for (double p : m.params()) detail::put_le<float>(out, static_cast<float>(p));
  return out;
}

inline SurrogateModel deserialize_model(std::string_view in) {
  require(in.size() >= 8 && in.substr(0, 4) == "VGSM", ErrorKind::MalformedFile,
          "missing VGSM magic");
  std::size_t pos = 4;
  const auto version = detail::get_le<std::uint32_t>(in, pos);
  require(version == kModelVersion, ErrorKind::IncompatibleModel,
          "model version " + std::to_string(version) + " is incompatible with " +
              std::to_string(kModelVersion));
  SurrogateDims d;
  d.fft.n_fft = detail::get_le<std::uint32_t>(in, pos);
  d.fft.hop = detail::get_le<std::uint32_t>(in, pos);
  d.fft.win = detail::get_le<std::uint32_t>(in, pos);
  d.mel.n_mels = detail::get_le<std::uint32_t>(in, pos);
  d.mel.sample_rate = static_cast<int>(detail::get_le<std::uint32_t>(in, pos));
  d.cond_dim = detail::get_le<std::uint32_t>(in, pos);
  d.hidden = detail::get_le<std::uint32_t>(in, pos);
  d.mel.fmin = detail::get_le<double>(in, pos);
  d.mel.fmax = detail::get_le<double>(in, pos);
  const auto count = detail::get_le<std::uint64_t>(in, pos);
  require(in.size() - pos == count * sizeof(float), ErrorKind::MalformedFile,
          "parameter blob size does not match the header");
  try {
    validate(d.fft);
  } catch (const Error& e) {
    throw Error(ErrorKind::MalformedFile, std::string("bad fft dims: ") + e.what());
  }
  require(count == d.param_count(), ErrorKind::MalformedFile,
          "parameter count does not match the model dims");
  SurrogateModel m(d);
  auto p = m.mutable_params();
  for (std::size_t i = 0; i < count; ++i) p[i] = detail::get_le<float>(in, pos);
  return m;
}

inline void save_model(const SurrogateModel& m, const std::filesystem::path& path) {
  const std::string bytes = serialize_model(m);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  require(f.good(), ErrorKind::Io, "cannot open " + path.string() + " for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  require(f.good(), ErrorKind::Io, "write failed for " + path.string());
}

inline SurrogateModel load_model(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  require(f.good(), ErrorKind::Io, "cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return deserialize_model(bytes);
}

}  // namespace voiceguard
