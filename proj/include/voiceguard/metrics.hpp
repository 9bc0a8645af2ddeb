#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "error.hpp"
#include "matrix.hpp"
#include "mel.hpp"
#include "stoi.hpp"
#include "waveform.hpp"

namespace voiceguard {

// ---------------------------------------------------------------------------
// Mel-cepstral distortion.

struct DtwPath {
  double cost = 0.0;         // summed frame distances along the path
  std::size_t length = 0;    // number of aligned pairs
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
};

inline double frame_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

/// Minimum-cost monotone alignment with steps (1,0), (0,1), (1,1). Among
/// equal-cost paths the shorter one wins.
inline DtwPath dtw(const Matrix& a, const Matrix& b) {
  require(a.rows >= 1 && b.rows >= 1, ErrorKind::InvalidArgument, "dtw needs nonempty sequences");
  require(a.cols == b.cols, ErrorKind::ShapeMismatch, "dtw frame widths differ");
  const std::size_t n = a.rows, m = b.rows;
  struct Cell {
    double cost;
    std::size_t len;
    int from;  // 0 diag, 1 up, 2 left
  };
  auto better = [](double c1, std::size_t l1, double c2, std::size_t l2) {
    return c1 < c2 || (c1 == c2 && l1 < l2);
  };
  std::vector<Cell> acc(n * m);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      const double d = frame_distance(a.row(i), b.row(j));
      if (i == 0 && j == 0) {
        acc[0] = {d, 1, -1};
        continue;
      }
      Cell best{std::numeric_limits<double>::infinity(), 0, -1};
      auto offer = [&](std::size_t pi, std::size_t pj, int from) {
        const Cell& p = acc[pi * m + pj];
        if (better(p.cost + d, p.len + 1, best.cost, best.len)) best = {p.cost + d, p.len + 1, from};
      };
      if (i > 0 && j > 0) offer(i - 1, j - 1, 0);
      if (i > 0) offer(i - 1, j, 1);
      if (j > 0) offer(i, j - 1, 2);
      acc[i * m + j] = best;
    }
  }
  DtwPath out{acc.back().cost, acc.back().len, {}};
  std::size_t i = n - 1, j = m - 1;
  while (true) {
    out.pairs.emplace_back(i, j);
    const int f = acc[i * m + j].from;
    if (f < 0) break;
    if (f == 0) --i, --j;
    else if (f == 1) --i;
    else --j;
  }
  std::reverse(out.pairs.begin(), out.pairs.end());
  return out;
}

inline const double kMcdScale = 10.0 / std::numbers::ln10 * std::numbers::sqrt2;

/// (10 / ln 10) * sqrt(2) * mean cepstral distance along the DTW path.
inline double mcd_dtw(const MfccSequence& a, const MfccSequence& b) {
  const DtwPath p = dtw(a.coeffs, b.coeffs);
  return kMcdScale * p.cost / static_cast<double>(p.length);
}

// ---------------------------------------------------------------------------
// SNR.

/// 10 log10(sum x^2 / sum delta^2). A zero perturbation yields +infinity.
inline double snr_db(std::span<const double> x, std::span<const double> delta) {
  require(x.size() == delta.size(), ErrorKind::ShapeMismatch, "snr needs equal lengths");
  const double ex = energy(x), ed = energy(delta);
  require(ex > 0.0, ErrorKind::InvalidArgument, "snr of a silent signal is undefined");
  if (ed == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(ex / ed);
}

// ---------------------------------------------------------------------------
// Speaker similarity.

inline constexpr std::size_t kEmbeddingDim = 4 * kMfccCount;
inline constexpr std::size_t kMinVoicedFrames = 10;
inline constexpr double kVadRangeDb = 40.0;

struct SpeakerEmbedding {
  std::array<double, kEmbeddingDim> v{};
};

/// Mean and standard deviation of the cepstra and their deltas over frames
/// whose mel energy is within 40 dB of the loudest frame.
inline SpeakerEmbedding embedding_from_mel(const Matrix& log_mel) {
  require(log_mel.rows >= 1, ErrorKind::InsufficientVoice, "empty spectrogram");
  const std::size_t t_n = log_mel.rows;
  std::vector<double> db(t_n);
  for (std::size_t t = 0; t < t_n; ++t) {
    const auto r = log_mel.row(t);
    const double top = *std::max_element(r.begin(), r.end());
    double s = 0.0;
    for (double v : r) s += std::exp(v - top);
    db[t] = 10.0 / std::numbers::ln10 * (top + std::log(s));
  }
  const double peak = *std::max_element(db.begin(), db.end());
  std::vector<std::size_t> voiced;
  for (std::size_t t = 0; t < t_n; ++t)
    if (db[t] >= peak - kVadRangeDb) voiced.push_back(t);
  require(voiced.size() >= kMinVoicedFrames, ErrorKind::InsufficientVoice,
          "only " + std::to_string(voiced.size()) + " voiced frames; need " +
              std::to_string(kMinVoicedFrames));

  const Matrix c = mfcc_from_mel(log_mel).coeffs;
  const std::size_t k_n = c.cols;
  SpeakerEmbedding e;
  const double nv = static_cast<double>(voiced.size());
  for (std::size_t k = 0; k < k_n; ++k) {
    double sc = 0, sc2 = 0, sd = 0, sd2 = 0;
    for (std::size_t t : voiced) {
      const double d = (c(std::min(t + 1, t_n - 1), k) - c(t == 0 ? 0 : t - 1, k)) / 2.0;
      sc += c(t, k);
      sc2 += c(t, k) * c(t, k);
      sd += d;
      sd2 += d * d;
    }
    const double mc = sc / nv, md = sd / nv;
    e.v[k] = mc;
    e.v[k_n + k] = std::sqrt(std::max(0.0, sc2 / nv - mc * mc));
    e.v[2 * k_n + k] = md;
    e.v[3 * k_n + k] = std::sqrt(std::max(0.0, sd2 / nv - md * md));
  }
  return e;
}

inline SpeakerEmbedding speaker_embedding(const Waveform& w) {
  return embedding_from_mel(mel_spectrogram(w).bins);
}

/// Per-dimension standardisation applied before the cosine. Raw embedding
/// dimensions differ in scale by orders of magnitude, so an unnormalised
/// cosine is dominated by a few cepstral means shared by every voice.
struct EmbeddingNormalizer {
  std::array<double, kEmbeddingDim> mean{};
  std::array<double, kEmbeddingDim> scale{};

  static EmbeddingNormalizer identity() {
    EmbeddingNormalizer n;
    n.scale.fill(1.0);
    return n;
  }

  static EmbeddingNormalizer fit(std::span<const SpeakerEmbedding> cohort) {
    require(cohort.size() >= 2, ErrorKind::InvalidArgument, "cohort needs at least two embeddings");
    EmbeddingNormalizer n;
    const double c = static_cast<double>(cohort.size());
    for (std::size_t i = 0; i < kEmbeddingDim; ++i) {
      double s = 0, s2 = 0;
      for (const auto& e : cohort) s += e.v[i], s2 += e.v[i] * e.v[i];
      n.mean[i] = s / c;
      const double var = std::max(0.0, s2 / c - n.mean[i] * n.mean[i]);
      n.scale[i] = var > 0.0 ? std::sqrt(var) : 1.0;
    }
    return n;
  }

  std::array<double, kEmbeddingDim> apply(const SpeakerEmbedding& e) const {
    std::array<double, kEmbeddingDim> out;
    for (std::size_t i = 0; i < kEmbeddingDim; ++i) out[i] = (e.v[i] - mean[i]) / scale[i];
    return out;
  }
};

inline double cosine(std::span<const double> a, std::span<const double> b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) ab += a[i] * b[i], aa += a[i] * a[i], bb += b[i] * b[i];
  if (aa == 0.0 || bb == 0.0) return 0.0;
  return std::clamp(ab / std::sqrt(aa * bb), -1.0, 1.0);
}

inline double embedding_sim(const SpeakerEmbedding& a, const SpeakerEmbedding& b,
                            const EmbeddingNormalizer& n) {
  const auto na = n.apply(a), nb = n.apply(b);
  return cosine(na, nb);
}

inline double speaker_sim(const Waveform& a, const Waveform& b, const EmbeddingNormalizer& n) {
  return embedding_sim(speaker_embedding(a), speaker_embedding(b), n);
}

/// Percentage of similarities above the cloning threshold (0.25).
inline double attack_success_rate(std::span<const double> sims, double threshold = 0.25) {
  require(!sims.empty(), ErrorKind::InvalidArgument, "attack success rate of an empty list");
  const auto hits = std::count_if(sims.begin(), sims.end(), [&](double s) { return s > threshold; });
  return 100.0 * static_cast<double>(hits) / static_cast<double>(sims.size());
}

// ---------------------------------------------------------------------------
// Word error rate.

inline std::vector<std::string> split_words(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

inline std::size_t word_edit_distance(const std::vector<std::string>& ref,
                                      const std::vector<std::string>& hyp) {
  std::vector<std::size_t> prev(hyp.size() + 1), cur(hyp.size() + 1);
  for (std::size_t j = 0; j <= hyp.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= ref.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= hyp.size(); ++j)
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1)});
    std::swap(prev, cur);
  }
  return prev[hyp.size()];
}

/// Word edit distance over reference length, in percent; may exceed 100.
inline double wer_pct(const std::string& reference, const std::string& hypothesis) {
  const auto r = split_words(reference), h = split_words(hypothesis);
  require(!r.empty(), ErrorKind::InvalidArgument, "WER needs a nonempty reference");
  return 100.0 * static_cast<double>(word_edit_distance(r, h)) / static_cast<double>(r.size());
}

// ---------------------------------------------------------------------------

struct MetricReport {
  double mcd = 0.0;
  double snr_db = 0.0;
  double sim = 0.0;
  double stoi = 0.0;
  std::optional<double> wer_pct;
  bool attack_success = false;
};

inline MetricReport make_report(double mcd, double snr, double sim, double stoi,
                                std::optional<double> wer = std::nullopt) {
  return {mcd, snr, sim, stoi, wer, sim > 0.25};
}

}  // namespace voiceguard
