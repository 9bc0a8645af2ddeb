#pragma once

#include <json.hpp>

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "error.hpp"
#include "filter.hpp"
#include "metrics.hpp"
#include "wav.hpp"
#include "waveform.hpp"

namespace voiceguard {

enum class Split { Train, Test };

inline std::string_view to_string(Split s) { return s == Split::Train ? "train" : "test"; }

struct Clip {
  Waveform audio;
  std::string speaker;
  std::string text;
  Split split = Split::Train;
};

struct CorpusSpec {
  int speakers = 4;
  int clips_per_speaker = 8;
  int train_per_speaker = 6;
  double duration_s = 1.5;
  int first_speaker = 0;
};

/// Voice parameters of one synthetic speaker.
struct VoiceProfile {
  double f0, scale, tilt, bw, breath, f4, f5, g45;
};

inline VoiceProfile voice_profile(int speaker) {
  std::mt19937_64 rng(1000 + static_cast<std::uint64_t>(speaker));
  auto u = [&](double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); };
  VoiceProfile v;
  v.f0 = u(85, 260);
  v.scale = u(0.78, 1.3);
  v.tilt = u(0.5, 0.97);
  v.bw = u(50, 130);
  v.breath = u(0.005, 0.05);
  v.f4 = u(3000, 4200);
  v.f5 = u(4400, 6500);
  v.g45 = u(0.2, 0.8);
  return v;
}

namespace detail {

inline Biquad resonator(double f, double bw, double rate) {
  const double r = std::exp(-std::numbers::pi * bw / rate);
  const double th = 2.0 * std::numbers::pi * f / rate;
  return {1.0 - r, 0.0, 0.0, -2.0 * r * std::cos(th), r * r};
}

inline double hann_sym(std::size_t i, std::size_t n) {
  return n < 2 ? 1.0 : 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * double(i) / double(n - 1));
}

struct Vowel {
  char name;
  std::array<double, 3> formants;
};

inline constexpr std::array<Vowel, 5> kVowels{{{'a', {730, 1090, 2440}},
                                                {'e', {530, 1840, 2480}},
                                                {'i', {270, 2290, 3010}},
                                                {'o', {570, 840, 2410}},
                                                {'u', {300, 870, 2240}}}};

}  // namespace detail

/// A pseudo-utterance: glottal pulse vowels through speaker-scaled formants,
/// fricative noise bursts and short pauses, peak-normalised to 0.9.
inline Clip synth_clip(int speaker, int take, double duration_s, int rate = kCanonicalRate) {
  const VoiceProfile p = voice_profile(speaker);
  std::mt19937_64 rng(static_cast<std::uint64_t>(speaker) * 7919u + static_cast<std::uint64_t>(take));
  auto u = [&](double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); };
  std::normal_distribution<double> nd(0.0, 1.0);
  const auto n = static_cast<std::size_t>(duration_s * rate);
  std::vector<double> out(n, 0.0);
  std::string text;
  auto t = static_cast<std::size_t>(0.08 * rate);
  const auto tail = static_cast<std::size_t>(0.1 * rate);

  while (t + tail < n) {
    if (u(0, 1) < 0.3) {
      const std::size_t len = std::min<std::size_t>(std::size_t(u(0.05, 0.09) * rate), n - t);
      std::vector<double> nz(len);
      for (double& v : nz) v = nd(rng);
      const double fc = std::min(u(2500, 6000) * p.scale, 7500.0);
      const auto seg = apply_biquad(detail::resonator(fc, 800, rate), nz);
      for (std::size_t i = 0; i < len; ++i) out[t + i] += 0.3 * seg[i] * detail::hann_sym(i, len);
      text += "s ";
      t += len;
    }
    const auto& vw = detail::kVowels[std::size_t(u(0, 1) * 5) % 5];
    const std::size_t len = std::min<std::size_t>(std::size_t(u(0.1, 0.2) * rate), n - t);
    const double sweep = u(1, 3), phase0 = u(0, 6);
    std::vector<double> src(len, 0.0);
    double phase = 0.0;
    for (std::size_t i = 0; i < len; ++i) {
      const double lin = len > 1 ? sweep * double(i) / double(len - 1) : 0.0;
      const double f0 = p.f0 * (1.0 + 0.08 * std::sin(lin + phase0));
      const double next = phase + f0 / rate;
      if (std::floor(next) > std::floor(phase)) src[i] = 1.0;
      phase = next;
    }
    double state = 0.0;
    for (double& s : src) {
      state = (1.0 - p.tilt) * s + p.tilt * state;
      s = 5.0 * state + p.breath * nd(rng);
    }
    std::vector<double> y(len, 0.0);
    for (std::size_t j = 0; j < 3; ++j) {
      const auto r = apply_biquad(detail::resonator(vw.formants[j] * p.scale, p.bw * (1.0 + 0.5 * j), rate), src);
      for (std::size_t i = 0; i < len; ++i) y[i] += r[i];
    }
    const auto r4 = apply_biquad(detail::resonator(p.f4, 200, rate), src);
    const auto r5 = apply_biquad(detail::resonator(p.f5, 300, rate), src);
    for (std::size_t i = 0; i < len; ++i)
      out[t + i] += (y[i] + p.g45 * (r4[i] + r5[i])) * std::pow(detail::hann_sym(i, len), 0.3);
    text += vw.name;
    text += ' ';
    t += len;
    if (u(0, 1) < 0.3) t += std::size_t(u(0.03, 0.08) * rate);
  }
  for (double& v : out) v += 1e-4 * nd(rng);
  const double peak = max_abs(out);
  for (double& v : out) v *= 0.9 / peak;
  if (!text.empty()) text.pop_back();

  char id[32];
  std::snprintf(id, sizeof id, "spk%02d_%02d", speaker, take);
  char spk[16];
  std::snprintf(spk, sizeof spk, "spk%02d", speaker);
  return {Waveform{std::move(out), rate, id}, spk, text, Split::Train};
}

inline std::vector<Clip> generate_corpus(const CorpusSpec& spec = {}) {
  require(spec.speakers >= 1 && spec.clips_per_speaker >= 1 &&
              spec.train_per_speaker <= spec.clips_per_speaker && spec.duration_s >= 0.5,
          ErrorKind::InvalidArgument, "invalid corpus spec");
  std::vector<Clip> out;
  for (int s = 0; s < spec.speakers; ++s)
    for (int k = 0; k < spec.clips_per_speaker; ++k) {
      Clip c = synth_clip(spec.first_speaker + s, k, spec.duration_s);
      c.split = k < spec.train_per_speaker ? Split::Train : Split::Test;
      out.push_back(std::move(c));
    }
  return out;
}

/// Standardisation fitted on a fixed cohort of 24 synthetic voices disjoint
/// from the experiment speakers.
inline const EmbeddingNormalizer& reference_normalizer() {
  static const EmbeddingNormalizer n = [] {
    std::vector<SpeakerEmbedding> cohort;
    for (int s = 100; s < 124; ++s)
      for (int k = 0; k < 2; ++k) cohort.push_back(speaker_embedding(synth_clip(s, k, 1.5).audio));
    return EmbeddingNormalizer::fit(cohort);
  }();
  return n;
}

/// Cosine similarity of cohort-standardised speaker embeddings.
inline double speaker_sim(const Waveform& a, const Waveform& b) {
  return speaker_sim(a, b, reference_normalizer());
}

// ---------------------------------------------------------------------------
// Manifest: JSON lines of {audio_path, speaker_id, text, split}.

struct ManifestEntry {
  std::string audio_path;
  std::string speaker_id;
  std::string text;
  Split split = Split::Train;
};

inline std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
  std::ifstream f(path);
  require(f.good(), ErrorKind::Io, "cannot open manifest " + path.string());
  std::vector<ManifestEntry> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      const std::string split = j.at("split").get<std::string>();
      require(split == "train" || split == "test", ErrorKind::MalformedFile, "split must be train|test");
      out.push_back({j.at("audio_path").get<std::string>(), j.at("speaker_id").get<std::string>(),
                     j.value("text", std::string{}), split == "train" ? Split::Train : Split::Test});
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::MalformedFile,
                  path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  require(!out.empty(), ErrorKind::Usage, "manifest " + path.string() + " has no entries");
  return out;
}

inline std::string manifest_line(const ManifestEntry& e) {
  return nlohmann::json{{"audio_path", e.audio_path},
                        {"speaker_id", e.speaker_id},
                        {"text", e.text},
                        {"split", std::string(to_string(e.split))}}
      .dump();
}

/// Loads every manifest entry; relative paths resolve against the manifest's directory.
inline std::vector<Clip> load_corpus(const std::filesystem::path& manifest) {
  std::vector<Clip> out;
  for (const auto& e : read_manifest(manifest)) {
    std::filesystem::path p = e.audio_path;
    if (p.is_relative()) p = manifest.parent_path() / p;
    out.push_back({load_wav(p), e.speaker_id, e.text, e.split});
  }
  return out;
}

/// Writes clips as WAV files plus manifest.jsonl into `dir`.
inline std::filesystem::path write_corpus(const std::vector<Clip>& clips,
                                          const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::string body;
  for (const auto& c : clips) {
    const std::string name = c.audio.id + ".wav";
    save_wav(c.audio, dir / name);
    body += manifest_line({name, c.speaker, c.text, c.split}) + "\n";
  }
  const auto path = dir / "manifest.jsonl";
  write_file_atomic(path, body);
  return path;
}

}  // namespace voiceguard
