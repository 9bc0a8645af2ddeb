#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "asr_client.hpp"
#include "error.hpp"
#include "objectives.hpp"
#include "protector.hpp"

namespace voiceguard {

/// Exact fraction as written ("8/255") or a decimal (denominator 1 is implied
/// only for integers; decimals keep den = 0 and use `decimal`).
struct Rational {
  long long num = 0;
  long long den = 1;
  double decimal = 0.0;
  bool exact = true;

  double value() const { return exact ? double(num) / double(den) : decimal; }
  std::string str() const {
    if (!exact) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.17g", decimal);
      return buf;
    }
    return den == 1 ? std::to_string(num) : std::to_string(num) + "/" + std::to_string(den);
  }
};

namespace detail {
inline std::string trim(std::string_view s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string_view::npos) return {};
  const auto b = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(a, b - a + 1));
}

template <class T>
bool parse_number(std::string_view s, T& out) {
  const auto* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc{} && p == end;
}
}  // namespace detail

inline Rational parse_rational(std::string_view text) {
  const std::string s = detail::trim(text);
  Rational r;
  if (const auto slash = s.find('/'); slash != std::string::npos) {
    const bool ok = detail::parse_number(std::string_view(s).substr(0, slash), r.num) &&
                    detail::parse_number(std::string_view(s).substr(slash + 1), r.den);
    require(ok && r.den > 0, ErrorKind::Usage, "bad fraction '" + s + "'");
    return r;
  }
  if (detail::parse_number(std::string_view(s), r.num)) return r;
  r.exact = false;
  require(detail::parse_number(std::string_view(s), r.decimal) && std::isfinite(r.decimal),
          ErrorKind::Usage, "bad number '" + s + "'");
  return r;
}

enum class ConfigSource { Default, File, Flag };

inline std::string_view to_string(ConfigSource s) {
  switch (s) {
    case ConfigSource::Default: return "default";
    case ConfigSource::File: return "file";
    case ConfigSource::Flag: return "flag";
  }
  return "?";
}

/// String-valued settings with a per-key source. Later layers only override
/// earlier ones when their precedence is at least as high.
class ConfigStore {
 public:
  struct Entry {
    std::string value;
    ConfigSource source = ConfigSource::Default;
  };

  ConfigStore() {
    for (const auto& [k, v] : defaults()) entries_[k] = {v, ConfigSource::Default};
  }

  static const std::map<std::string, std::string>& defaults() {
    static const std::map<std::string, std::string> d{
        {"epsilon", "8/255"},     {"alpha", "0.05"},       {"beta", "10"},
        {"max_epoch", "100"},     {"step_size", "0"},      {"seed", "2024"},
        {"mode", "spec"},         {"perception", "false"}, {"manifest", ""},
        {"asr_endpoint", ""},     {"asr_timeout", "30"},   {"codec_command", ""},
        {"workers", "1"},         {"pretrain_steps", "200"}, {"finetune_steps", "100"},
        {"model_seed", "7"},      {"speakers", "4"},       {"clips_per_speaker", "8"},
        {"train_per_speaker", "6"}, {"clip_seconds", "1.5"},
    };
    return d;
  }

  static bool known(const std::string& key) { return defaults().count(key) > 0; }

  void set(const std::string& key, const std::string& value, ConfigSource src) {
    require(known(key), ErrorKind::Usage, "unknown config key '" + key + "'");
    auto& e = entries_[key];
    if (src >= e.source) e = {value, src};
  }

  /// key = value lines; '#' starts a comment.
  void load_file(const std::filesystem::path& path) {
    std::ifstream f(path);
    require(f.good(), ErrorKind::Io, "cannot open config " + path.string());
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(f, line)) {
      ++lineno;
      if (const auto h = line.find('#'); h != std::string::npos) line.resize(h);
      if (detail::trim(line).empty()) continue;
      const auto eq = line.find('=');
      require(eq != std::string::npos, ErrorKind::Usage,
              path.string() + ":" + std::to_string(lineno) + ": expected key = value");
      set(detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)), ConfigSource::File);
    }
  }

  const std::string& get(const std::string& key) const {
    const auto it = entries_.find(key);
    require(it != entries_.end(), ErrorKind::Usage, "unknown config key '" + key + "'");
    return it->second.value;
  }
  ConfigSource source(const std::string& key) const { return entries_.at(key).source; }
  const std::map<std::string, Entry>& entries() const noexcept { return entries_; }

  double get_double(const std::string& key) const { return parse_rational(get(key)).value(); }
  long long get_int(const std::string& key) const {
    long long v = 0;
    require(detail::parse_number(std::string_view(get(key)), v), ErrorKind::Usage,
            key + " must be an integer");
    return v;
  }
  bool get_bool(const std::string& key) const {
    const auto& v = get(key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw Error(ErrorKind::Usage, key + " must be true or false");
  }

  /// One "key = value (source)" line per setting.
  std::string dump() const {
    std::string out;
    for (const auto& [k, e] : entries_)
      out += k + " = " + e.value + " (" + std::string(to_string(e.source)) + ")\n";
    return out;
  }

 private:
  std::map<std::string, Entry> entries_;
};

struct CliConfig {
  Rational epsilon{8, 255};
  double alpha = 0.05;
  double beta = 10.0;
  int max_epoch = 100;
  double step_size = 0.0;
  std::uint64_t seed = 2024;
  Objective mode = Objective::Spec;
  bool perception = false;
  std::string manifest;
  AsrClientConfig asr;
  std::string codec_command;
  std::size_t workers = 1;
  int pretrain_steps = 200;
  int finetune_steps = 100;
  std::uint64_t model_seed = 7;
  int speakers = 4;
  int clips_per_speaker = 8;
  int train_per_speaker = 6;
  double clip_seconds = 1.5;

  PerturbationConfig perturbation() const {
    PerturbationConfig p;
    p.epsilon = epsilon.value();
    p.max_epoch = max_epoch;
    p.weights = {alpha, beta};
    p.perception_enabled = perception;
    p.step_size = step_size;
    p.seed = seed;
    p.mode = mode;
    return p;
  }
};

inline CliConfig resolve(const ConfigStore& s) {
  CliConfig c;
  c.epsilon = parse_rational(s.get("epsilon"));
  c.alpha = s.get_double("alpha");
  c.beta = s.get_double("beta");
  c.max_epoch = int(s.get_int("max_epoch"));
  c.step_size = s.get_double("step_size");
  c.seed = std::uint64_t(s.get_int("seed"));
  try {
    c.mode = objective_from_string(s.get("mode"));
  } catch (const Error& e) {
    throw Error(ErrorKind::Usage, e.what());
  }
  c.perception = s.get_bool("perception");
  c.manifest = s.get("manifest");
  c.asr = {s.get("asr_endpoint"), s.get_double("asr_timeout")};
  c.codec_command = s.get("codec_command");
  c.workers = std::size_t(std::max(1LL, s.get_int("workers")));
  c.pretrain_steps = int(s.get_int("pretrain_steps"));
  c.finetune_steps = int(s.get_int("finetune_steps"));
  c.model_seed = std::uint64_t(s.get_int("model_seed"));
  c.speakers = int(s.get_int("speakers"));
  c.clips_per_speaker = int(s.get_int("clips_per_speaker"));
  c.train_per_speaker = int(s.get_int("train_per_speaker"));
  c.clip_seconds = s.get_double("clip_seconds");
  try {
    validate(c.perturbation());
  } catch (const Error& e) {
    throw Error(ErrorKind::Usage, e.what());
  }
  require(c.pretrain_steps >= 0 && c.finetune_steps >= 0, ErrorKind::Usage,
          "training step counts must be nonnegative");
  require(c.asr.timeout_s > 0.0, ErrorKind::Usage, "asr_timeout must be positive");
  return c;
}

}  // namespace voiceguard
