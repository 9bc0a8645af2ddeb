#include <gtest/gtest.h>

#include <voiceguard/corpus.hpp>
#include <voiceguard/metrics.hpp>
#include <voiceguard/stoi.hpp>

#include <functional>
#include <numbers>
#include <random>

using namespace voiceguard;

namespace {

Matrix random_seq(std::size_t frames, std::size_t dim, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> u(-3, 3);
  Matrix m(frames, dim);
  for (double& v : m.data) v = u(rng);  // small integers make ties common
  return m;
}

// Exhaustive search over monotone paths; ties go to the shorter path.
std::pair<double, std::size_t> brute_dtw(const Matrix& a, const Matrix& b) {
  double best = std::numeric_limits<double>::infinity();
  std::size_t best_len = 0;
  std::function<void(std::size_t, std::size_t, double, std::size_t)> walk =
      [&](std::size_t i, std::size_t j, double cost, std::size_t len) {
        cost += frame_distance(a.row(i), b.row(j));
        ++len;
        if (i + 1 == a.rows && j + 1 == b.rows) {
          if (cost < best || (cost == best && len < best_len)) best = cost, best_len = len;
          return;
        }
        if (i + 1 < a.rows && j + 1 < b.rows) walk(i + 1, j + 1, cost, len);
        if (i + 1 < a.rows) walk(i + 1, j, cost, len);
        if (j + 1 < b.rows) walk(i, j + 1, cost, len);
      };
  walk(0, 0, 0.0, 0);
  return {best, best_len};
}

Waveform with_noise(const Waveform& x, double level, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, level);
  Waveform y = x;
  for (double& v : y.samples) v += nd(rng);
  return y;
}

}  // namespace

TEST(Mcd, IdenticalSequencesGiveZero) {
  std::mt19937_64 rng(1);
  const Matrix a = random_seq(6, 13, rng);
  EXPECT_EQ(mcd_dtw({a}, {a}), 0.0);
}

TEST(Mcd, UnitVectorApartGivesScaleConstant) {
  Matrix a(1, 13), b(1, 13);
  b(0, 4) = 1.0;
  EXPECT_NEAR(mcd_dtw({a}, {b}), 10.0 / std::numbers::ln10 * std::numbers::sqrt2, 1e-12);
  EXPECT_NEAR(mcd_dtw({a}, {b}), 6.1419, 1e-4);
}

TEST(Mcd, DtwMatchesExhaustiveEnumeration) {
  std::mt19937_64 rng(2);
  for (std::size_t n = 1; n <= 5; ++n)
    for (std::size_t m = 1; m <= 5; ++m)
      for (int rep = 0; rep < 4; ++rep) {
        const Matrix a = random_seq(n, 3, rng), b = random_seq(m, 3, rng);
        const auto [cost, len] = brute_dtw(a, b);
        const DtwPath p = dtw(a, b);
        EXPECT_EQ(p.cost, cost) << n << "x" << m;
        EXPECT_EQ(p.length, len) << n << "x" << m;
        EXPECT_EQ(p.pairs.size(), p.length);
        EXPECT_EQ(mcd_dtw({a}, {b}), kMcdScale * cost / double(len));
      }
}

TEST(Snr, TwentyDecibelsForTenfoldRms) {
  std::vector<double> x(1000, 1.0), d(1000, 0.1);
  for (std::size_t i = 0; i < x.size(); i += 2) x[i] = -1.0;
  EXPECT_NEAR(snr_db(x, d), 20.0, 1e-12);
}

TEST(Snr, EqualEnergiesGiveZero) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd;
  std::vector<double> x(500);
  for (double& v : x) v = nd(rng);
  EXPECT_NEAR(snr_db(x, x), 0.0, 1e-12);
}

TEST(Snr, TenfoldPerturbationCostsTwentyDecibels) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> nd;
  std::vector<double> x(500), d(500), d10(500);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = nd(rng), d[i] = 0.01 * nd(rng), d10[i] = 10.0 * d[i];
  EXPECT_NEAR(snr_db(x, d) - snr_db(x, d10), 20.0, 1e-9);
}

TEST(Snr, ZeroPerturbationIsInfiniteAndSilenceIsRejected) {
  std::vector<double> x(10, 0.5), z(10, 0.0);
  EXPECT_TRUE(std::isinf(snr_db(x, z)));
  EXPECT_THROW(snr_db(z, x), Error);
}

TEST(SpeakerSim, SelfSimilarityIsOneAndSymmetric) {
  const Waveform a = synth_clip(0, 0, 1.5).audio, b = synth_clip(1, 0, 1.5).audio;
  EXPECT_NEAR(speaker_sim(a, a), 1.0, 1e-12);
  EXPECT_NEAR(speaker_sim(a, b), speaker_sim(b, a), 1e-12);
  const double s = speaker_sim(a, b);
  EXPECT_GE(s, -1.0);
  EXPECT_LE(s, 1.0);
}

TEST(SpeakerSim, SameSpeakerRetakesBeatOtherSpeakers) {
  std::vector<Clip> clips;
  for (int s = 0; s < 4; ++s)
    for (int k = 0; k < 3; ++k) clips.push_back(synth_clip(s, k, 1.5));
  double same = 0.0, cross = 0.0;
  int ns = 0, nc = 0;
  for (std::size_t i = 0; i < clips.size(); ++i)
    for (std::size_t j = i + 1; j < clips.size(); ++j) {
      const double v = speaker_sim(clips[i].audio, clips[j].audio);
      if (clips[i].speaker == clips[j].speaker) same += v, ++ns;
      else cross += v, ++nc;
    }
  EXPECT_GT(same / ns, cross / nc);
}

TEST(SpeakerSim, SilenceHasInsufficientVoice) {
  Matrix flat(5, 80, std::log(1e-10));
  try {
    embedding_from_mel(flat);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InsufficientVoice);
  }
}

TEST(AttackSuccessRate, CountsAboveThreshold) {
  const std::vector<double> mixed{0.3, 0.2, 0.26}, low{0.1, 0.25}, high{0.3, 0.9};
  EXPECT_NEAR(attack_success_rate(mixed), 200.0 / 3.0, 1e-9);
  EXPECT_EQ(attack_success_rate(low), 0.0);
  EXPECT_EQ(attack_success_rate(high), 100.0);
}

TEST(Stoi, IdenticalSignalsScoreOne) {
  const Waveform x = synth_clip(0, 0, 1.5).audio;
  EXPECT_NEAR(stoi_score(x, x), 1.0, 1e-12);
}

TEST(Stoi, UnrelatedNoiseScoresFarBelowMildDegradation) {
  // Clipped envelope correlation keeps a small positive bias for independent
  // noise, so compare against a mildly degraded copy instead of zero.
  const Waveform x = synth_clip(1, 1, 1.5).audio;
  const Waveform z = with_noise(make_waveform(std::vector<double>(x.size(), 0.0)), rms(x.samples), 9);
  const double unrelated = stoi_score(x, z), mild = stoi_score(x, with_noise(x, 0.01, 9));
  EXPECT_LT(unrelated, 0.35);
  EXPECT_LT(unrelated, 0.5 * mild);
}

TEST(Stoi, MonotoneInNoiseLevel) {
  const Waveform x = synth_clip(2, 1, 1.5).audio;
  const double a = stoi_score(x, with_noise(x, 0.01, 1));
  const double b = stoi_score(x, with_noise(x, 0.05, 1));
  const double c = stoi_score(x, with_noise(x, 0.2, 1));
  EXPECT_GT(a, b);
  EXPECT_GT(b, c);
}

TEST(Stoi, RejectsTooShortOrMismatchedInput) {
  const Waveform s = make_waveform(std::vector<double>(1600, 0.1));
  EXPECT_THROW(stoi_score(s, s), Error);
  const Waveform x = synth_clip(0, 0, 1.0).audio;
  Waveform y = x;
  y.samples.pop_back();
  EXPECT_THROW(stoi_score(x, y), Error);
}

TEST(Wer, HandComputedCases) {
  EXPECT_EQ(wer_pct("a b c", "a b c"), 0.0);
  EXPECT_NEAR(wer_pct("a b c", "a x c d"), 200.0 / 3.0, 1e-9);
  EXPECT_EQ(wer_pct("a b c", ""), 100.0);
  EXPECT_GT(wer_pct("a", "x y z"), 100.0);
  EXPECT_THROW(wer_pct("", "a"), Error);
}

TEST(MetricReport, FlagsAttackSuccessAboveThreshold) {
  EXPECT_TRUE(make_report(1, 2, 0.3, 0.9).attack_success);
  EXPECT_FALSE(make_report(1, 2, 0.25, 0.9).attack_success);
}
