#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>

#include "error.hpp"
#include "resample.hpp"
#include "waveform.hpp"

namespace voiceguard {

struct AudioFileRecord {
  std::filesystem::path path;
  double duration_s = 0.0;
  int sample_rate = 0;  // as stored in the file
};

namespace detail {

inline std::uint32_t rd32(std::string_view b, std::size_t p) {
  return std::uint32_t(std::uint8_t(b[p])) | std::uint32_t(std::uint8_t(b[p + 1])) << 8 |
         std::uint32_t(std::uint8_t(b[p + 2])) << 16 | std::uint32_t(std::uint8_t(b[p + 3])) << 24;
}
inline std::uint16_t rd16(std::string_view b, std::size_t p) {
  return std::uint16_t(std::uint8_t(b[p]) | std::uint8_t(b[p + 1]) << 8);
}
inline void wr32(std::string& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(char((v >> (8 * i)) & 0xff));
}
inline void wr16(std::string& b, std::uint16_t v) {
  b.push_back(char(v & 0xff));
  b.push_back(char(v >> 8));
}

}  // namespace detail

/// PCM16 mono RIFF bytes. Samples are scaled by 32768 (the load scale) and
/// saturated, so a save/load round trip is off by at most 1/32768.
inline std::string encode_wav(const Waveform& w) {
  const auto n = static_cast<std::uint32_t>(w.size());
  std::string b = "RIFF";
  detail::wr32(b, 36 + 2 * n);
  b += "WAVEfmt ";
  detail::wr32(b, 16);
  detail::wr16(b, 1);
  detail::wr16(b, 1);
  detail::wr32(b, static_cast<std::uint32_t>(w.sample_rate));
  detail::wr32(b, static_cast<std::uint32_t>(w.sample_rate) * 2);
  detail::wr16(b, 2);
  detail::wr16(b, 16);
  b += "data";
  detail::wr32(b, 2 * n);
  for (double s : w.samples) {
    const long r = std::lround(std::clamp(s, -1.0, 1.0) * 32768.0);
    const auto q = static_cast<std::int16_t>(std::clamp(r, -32768L, 32767L));
    detail::wr16(b, static_cast<std::uint16_t>(q));
  }
  return b;
}

/// Parses PCM16 mono RIFF bytes at their native rate (no resampling).
inline Waveform decode_wav(std::string_view b, std::string id = {}) {
  require(b.size() >= 12 && b.substr(0, 4) == "RIFF" && b.substr(8, 4) == "WAVE",
          ErrorKind::MalformedFile, "not a RIFF/WAVE file");
  std::size_t p = 12;
  bool have_fmt = false;
  int rate = 0;
  while (p + 8 <= b.size()) {
    const std::string_view tag = b.substr(p, 4);
    const std::uint32_t len = detail::rd32(b, p + 4);
    p += 8;
    if (tag == "fmt ") {
      require(len >= 16 && p + 16 <= b.size(), ErrorKind::MalformedFile, "truncated fmt chunk");
      const auto format = detail::rd16(b, p), channels = detail::rd16(b, p + 2);
      const auto bits = detail::rd16(b, p + 14);
      require(format == 1 && bits == 16, ErrorKind::MalformedFile,
              "only 16-bit PCM is supported; convert with e.g. `sox in.wav -b 16 out.wav`");
      require(channels == 1, ErrorKind::MalformedFile,
              "stereo input rejected; downmix to mono first (e.g. `sox in.wav -c 1 out.wav`)");
      rate = static_cast<int>(detail::rd32(b, p + 4));
      require(rate > 0, ErrorKind::MalformedFile, "zero sample rate");
      have_fmt = true;
    } else if (tag == "data") {
      require(have_fmt, ErrorKind::MalformedFile, "data chunk before fmt chunk");
      require(p + len <= b.size() && len % 2 == 0, ErrorKind::MalformedFile, "truncated data chunk");
      Waveform w;
      w.sample_rate = rate;
      w.id = std::move(id);
      w.samples.resize(len / 2);
      for (std::size_t i = 0; i < w.samples.size(); ++i)
        w.samples[i] = static_cast<std::int16_t>(detail::rd16(b, p + 2 * i)) / 32768.0;
      return w;
    }
    p += len + (len & 1);
  }
  throw Error(ErrorKind::MalformedFile, "no data chunk");
}

/// Loads and resamples to the canonical 16 kHz. `record` keeps the stored rate.
inline Waveform load_wav(const std::filesystem::path& path, AudioFileRecord* record = nullptr) {
  std::ifstream f(path, std::ios::binary);
  require(f.good(), ErrorKind::Io, "cannot open " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  Waveform w = decode_wav(bytes, path.stem().string());
  if (record) *record = {path, w.duration_s(), w.sample_rate};
  if (w.sample_rate != kCanonicalRate)
    w = Waveform{resample_ratio(w.samples, w.sample_rate, kCanonicalRate), kCanonicalRate, w.id};
  for (double& s : w.samples) s = std::clamp(s, -1.0, 1.0);
  return w;
}

/// Writes through a temporary file and renames, so readers never see a partial file.
inline void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    require(f.good(), ErrorKind::Io, "cannot open " + tmp + " for writing");
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    require(f.good(), ErrorKind::Io, "write failed for " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  require(!ec, ErrorKind::Io, "cannot rename " + tmp + " to " + path.string() + ": " + ec.message());
}

inline void save_wav(const Waveform& w, const std::filesystem::path& path) {
  write_file_atomic(path, encode_wav(w));
}

}  // namespace voiceguard
