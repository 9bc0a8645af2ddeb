#include <gtest/gtest.h>

#include <voiceguard/fft.hpp>
#include <voiceguard/filter.hpp>
#include <voiceguard/mel.hpp>
#include <voiceguard/resample.hpp>
#include <voiceguard/stft.hpp>

#include <cmath>
#include <numbers>
#include <random>

using namespace voiceguard;

namespace {

std::vector<double> noise(std::size_t n, std::uint64_t seed, double amp = 0.5) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-amp, amp);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

std::vector<double> sine(std::size_t n, double hz, double rate = 16000.0, double amp = 0.5) {
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = amp * std::sin(2.0 * std::numbers::pi * hz * double(i) / rate);
  return v;
}

double rms_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s / double(v.size()));
}

std::size_t peak_bin(std::span<const double> x) {
  const auto X = dft_real(x);
  std::size_t best = 1;
  for (std::size_t k = 1; k <= x.size() / 2; ++k)
    if (std::abs(X[k]) > std::abs(X[best])) best = k;
  return best;
}

// Energy of a real signal in [lo, hi] Hz, from the direct DFT.
double band_energy(std::span<const double> x, double rate, double lo, double hi) {
  const auto X = dft_real(x);
  double e = 0.0;
  for (std::size_t k = 0; k <= x.size() / 2; ++k) {
    const double f = double(k) * rate / double(x.size());
    if (f >= lo && f <= hi) e += std::norm(X[k]);
  }
  return e;
}

}  // namespace

TEST(Fft, MatchesDirectDft) {
  for (std::size_t n : {2u, 8u, 64u, 1024u}) {
    const auto x = noise(n, n);
    std::vector<cplx> a(x.begin(), x.end());
    fft_inplace(a);
    const auto ref = dft_real(x);
    for (std::size_t k = 0; k < n; ++k) EXPECT_NEAR(std::abs(a[k] - ref[k]), 0.0, 1e-9 * double(n)) << n << " " << k;
  }
}

TEST(Fft, RealTransformsInvertEachOther) {
  const std::size_t n = 512;
  const auto x = noise(n, 3);
  std::vector<cplx> half(n / 2 + 1), work;
  rfft(x, half);
  const auto ref = dft_real(x);
  for (std::size_t k = 0; k <= n / 2; ++k) EXPECT_LT(std::abs(half[k] - ref[k]), 1e-10);
  std::vector<double> y(n);
  irfft(half, y, work);
  for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(y[i] / double(n), x[i], 1e-13);
}

TEST(Fft, RejectsNonPowerOfTwo) {
  std::vector<cplx> a(12);
  EXPECT_THROW(fft_inplace(a), Error);
}

TEST(Stft, FrameCountUsesCentrePadding) {
  const FftParams p;
  const auto s = stft(noise(16000, 1), p);
  EXPECT_EQ(s.frames, 1u + 16000u / 256u);
  EXPECT_EQ(s.bins, 513u);
}

TEST(Stft, BinCentredSineConcentratesInItsBin) {
  FftParams p;
  p.window = Window::Rect;
  const double hz = 7.0 * 16000.0 / 1024.0;
  const auto x = sine(8192, hz);
  const auto s = stft(x, p);
  // Interior frames see a whole number of periods and no padding.
  for (std::size_t t = 4; t + 4 < s.frames; ++t) {
    const auto start = t * p.hop - p.n_fft / 2;
    const auto ref = dft_real(std::span<const double>(x).subspan(start, p.n_fft));
    double total = 0.0;
    for (std::size_t k = 0; k < s.bins; ++k) {
      EXPECT_LT(std::abs(s.at(t, k) - ref[k]), 1e-8);
      total += std::norm(s.at(t, k));
    }
    EXPECT_GE(std::norm(s.at(t, 7)) / total, 0.95);
  }
}

TEST(Stft, ZeroInputGivesZeroSpectrogram) {
  const auto s = stft(std::vector<double>(4096, 0.0));
  for (const auto& z : s.data) EXPECT_EQ(z, cplx(0.0));
  const auto y = istft(s, s.params);
  for (double v : y) EXPECT_EQ(v, 0.0);
}

TEST(Stft, RoundTripReconstructsSignal) {
  for (Window w : {Window::Hann, Window::Rect}) {
    FftParams p;
    p.window = w;
    const auto x = noise(10000, 11);
    const auto y = istft(stft(x, p), p);
    ASSERT_EQ(y.size(), x.size());
    double err = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) err = std::max(err, std::abs(x[i] - y[i]));
    EXPECT_LT(err, 1e-6);
  }
}

TEST(Stft, OneHotFrameInvertsToWindowedConstant) {
  FftParams p;
  ComplexSpectrogram s;
  s.frames = 1;
  s.bins = p.bins();
  s.params = p;
  s.data.assign(s.bins, cplx(0.0));
  s.data[0] = 1.0;
  const auto ola = overlap_add(s, p);
  const auto win = analysis_window(p);
  ASSERT_EQ(ola.signal.size(), p.n_fft);
  for (std::size_t i = 0; i < p.n_fft; ++i) EXPECT_NEAR(ola.signal[i], win[i] / double(p.n_fft), 1e-15);
}

TEST(Stft, AdjointSatisfiesInnerProductIdentity) {
  FftParams p{256, 64, 256, Window::Hann};
  const auto x = noise(1000, 5);
  const auto sx = stft(x, p);
  ComplexSpectrogram g = sx;
  const auto gr = noise(g.data.size() * 2, 6);
  for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] = {gr[2 * i], gr[2 * i + 1]};
  double lhs = 0.0;
  for (std::size_t i = 0; i < g.data.size(); ++i)
    lhs += sx.data[i].real() * g.data[i].real() + sx.data[i].imag() * g.data[i].imag();
  const auto ax = stft_adjoint(g);
  double rhs = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) rhs += x[i] * ax[i];
  EXPECT_NEAR(lhs, rhs, 1e-9 * std::abs(lhs));
}

TEST(Stft, RejectsShortSignalsAndBadHop) {
  EXPECT_THROW(stft(std::vector<double>(500, 0.0)), Error);
  FftParams p;
  p.hop = 300;
  EXPECT_THROW(validate(p), Error);
}

TEST(Stft, MagnitudesAreNonNegative) {
  const auto m = magnitude(stft(noise(4096, 8)));
  for (double v : m.bins.data) EXPECT_GE(v, 0.0);
}

TEST(Mel, FilterbankColumnsSumToAtMostOne) {
  const FftParams fft;
  const MelParams mel;
  const Matrix fb = mel_filterbank(fft, mel);
  for (std::size_t k = 0; k < fb.cols; ++k) {
    double s = 0.0;
    for (std::size_t m = 0; m < fb.rows; ++m) s += fb(m, k);
    EXPECT_GT(s, 0.0) << k;
    EXPECT_LE(s, 1.0 + 1e-12) << k;
  }
}

TEST(Mel, WhiteNoiseLiftsEveryBandAboveFloor) {
  const auto m = mel_spectrogram(noise(16000, 9));
  const double floor_log = std::log(MelParams{}.log_floor);
  for (double v : m.bins.data) EXPECT_GT(v, floor_log);
}

TEST(Mel, ZeroInputSitsOnFloor) {
  const auto m = mel_spectrogram(std::vector<double>(4096, 0.0));
  EXPECT_EQ(m.bins.cols, 80u);
  for (double v : m.bins.data) EXPECT_DOUBLE_EQ(v, std::log(1e-10));
}

TEST(Mel, SpectrumVjpMatchesFiniteDifferences) {
  const FftParams fft{256, 64, 256, Window::Hann};
  MelParams mp;
  mp.n_mels = 20;
  const MelFrontEnd front(fft, mp);
  const auto x = noise(512, 21, 0.3);
  MelTrace tr;
  const auto m = front.compute(x, &tr);
  const auto gm = noise(m.bins.size(), 22);
  Matrix g(m.bins.rows, m.bins.cols);
  g.data = gm;
  const auto grad = front.vjp(tr, g);
  auto f = [&](const std::vector<double>& v) {
    const auto mm = front.compute(v);
    double s = 0.0;
    for (std::size_t i = 0; i < gm.size(); ++i) s += gm[i] * mm.bins.data[i];
    return s;
  };
  for (std::size_t i : {0u, 37u, 200u, 255u, 256u, 511u}) {
    auto a = x, b = x;
    const double h = 1e-6;
    a[i] += h;
    b[i] -= h;
    const double fd = (f(a) - f(b)) / (2 * h);
    EXPECT_NEAR(grad[i], fd, 1e-5 * std::max(1.0, std::abs(fd))) << i;
  }
}

TEST(Mfcc, DeterministicForIdenticalInputs) {
  const Waveform w = make_waveform(noise(8000, 4));
  const auto a = mfcc(w), b = mfcc(w);
  EXPECT_EQ(a.coeffs.data, b.coeffs.data);
}

TEST(Mfcc, ConstantFrameHasOnlyC0) {
  Matrix m(3, 80, -2.5);
  const auto c = mfcc_from_mel(m);
  for (double v : c.coeffs.data) EXPECT_NEAR(v, 0.0, 1e-12);
}

TEST(Mfcc, FourBandFrameMatchesCosineSum) {
  Matrix m(1, 4);
  m.data = {0.3, -1.2, 2.0, 0.7};
  const auto c = mfcc_from_mel(m, 3);
  for (std::size_t k = 1; k <= 3; ++k) {
    double acc = 0.0;
    for (std::size_t i = 0; i < 4; ++i)
      acc += m.data[i] * std::cos(std::numbers::pi * double(k) * (double(i) + 0.5) / 4.0);
    EXPECT_NEAR(c.coeffs(0, k - 1), std::sqrt(2.0 / 4.0) * acc, 1e-12);
  }
}

TEST(Resample, SameRateIsIdentity) {
  const Waveform w = make_waveform(noise(3000, 2));
  EXPECT_EQ(resample(w, 16000).samples, w.samples);
}

TEST(Resample, KeepsOneKilohertzPeak) {
  const Waveform w = make_waveform(sine(16000, 1000.0));
  const Waveform y = resample(w, 8000);
  EXPECT_EQ(y.sample_rate, 8000);
  ASSERT_EQ(y.size(), 8000u);
  const std::span<const double> mid(y.samples.data() + 2000, 4096);
  const double expected = 1000.0 * 4096.0 / 8000.0;
  EXPECT_LE(std::abs(double(peak_bin(mid)) - expected), 1.0);
}

TEST(Resample, SuppressesAliasOfSevenKilohertz) {
  const Waveform a = make_waveform(sine(16000, 7000.0));
  const Waveform b = make_waveform(sine(16000, 1000.0));
  const auto ya = resample(a, 8000), yb = resample(b, 8000);
  const double ra = rms_of(std::span<const double>(ya.samples).subspan(500, 7000));
  const double rb = rms_of(std::span<const double>(yb.samples).subspan(500, 7000));
  EXPECT_LE(20.0 * std::log10(ra / rb), -40.0);
}

TEST(Resample, AdjointSatisfiesInnerProductIdentity) {
  const Resampler r(777, 16000.0, 10000.0);
  const auto x = noise(777, 31), g = noise(r.output_length(), 32);
  const auto y = r(x), a = r.adjoint(g);
  double lhs = 0.0, rhs = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) lhs += y[i] * g[i];
  for (std::size_t i = 0; i < x.size(); ++i) rhs += x[i] * a[i];
  EXPECT_NEAR(lhs, rhs, 1e-12 * std::max(1.0, std::abs(lhs)));
}

TEST(Resample, RejectsUnsupportedRate) {
  EXPECT_THROW(resample(make_waveform(noise(100, 1)), 44100), Error);
}

TEST(Filter, LowpassAttenuatesSixKilohertz) {
  const Waveform x = make_waveform(sine(16000, 6000.0));
  const Waveform y = lowpass(x, 4000.0);
  EXPECT_LT(rms_of(std::span<const double>(y.samples).subspan(1000)), 0.5 * rms_of(x.samples));
}

TEST(Filter, LowpassPassesFiveHundredHertz) {
  const Waveform x = make_waveform(sine(16000, 500.0));
  const Waveform y = lowpass(x, 4000.0);
  const double ratio_db = 20.0 * std::log10(rms_of(std::span<const double>(y.samples).subspan(1000)) /
                                            rms_of(std::span<const double>(x.samples).subspan(1000)));
  EXPECT_LT(std::abs(ratio_db), 1.0);
}

TEST(Filter, BandpassKeepsPassbandAndZeroStaysZero) {
  const Waveform z = make_waveform(std::vector<double>(2000, 0.0));
  for (double v : lowpass(z, 4000.0).samples) EXPECT_EQ(v, 0.0);
  for (double v : bandpass(z, 300.0, 3400.0).samples) EXPECT_EQ(v, 0.0);
  const Waveform x = make_waveform(sine(16000, 1000.0));
  const Waveform y = bandpass(x, 300.0, 3400.0);
  const auto out = std::span<const double>(y.samples).subspan(2000, 4000);
  const auto in = std::span<const double>(x.samples).subspan(2000, 4000);
  EXPECT_GT(band_energy(out, 16000.0, 900.0, 1100.0), 0.5 * band_energy(in, 16000.0, 900.0, 1100.0));
}
