#pragma once

#include <httplib.h>
// <resolv.h> (pulled in by httplib) defines _res, which collides with Eigen internals.
#ifdef _res
#undef _res
#endif
#include <json.hpp>

#include <mutex>
#include <optional>
#include <string>

#include "error.hpp"
#include "metrics.hpp"
#include "wav.hpp"
#include "waveform.hpp"

namespace voiceguard {

struct AsrClientConfig {
  std::string endpoint;  // e.g. http://127.0.0.1:9000; empty disables WER
  double timeout_s = 30.0;

  bool enabled() const { return !endpoint.empty(); }
};

/// POSTs WAV bytes to {endpoint}/transcribe and reads {"text": ...}.
/// Requests to one client are serialised.
class AsrClient {
 public:
  explicit AsrClient(AsrClientConfig cfg) : cfg_(std::move(cfg)) {}

  const AsrClientConfig& config() const noexcept { return cfg_; }

  /// nullopt when the endpoint is unset, unreachable, or answers badly.
  std::optional<std::string> transcribe(const Waveform& w) const {
    if (!cfg_.enabled()) return std::nullopt;
    std::lock_guard lock(mu_);
    try {
      httplib::Client cli(cfg_.endpoint);
      const auto sec = static_cast<time_t>(cfg_.timeout_s);
      const auto usec = static_cast<time_t>((cfg_.timeout_s - double(sec)) * 1e6);
      cli.set_connection_timeout(sec, usec);
      cli.set_read_timeout(sec, usec);
      const auto res = cli.Post("/transcribe", encode_wav(w), "audio/wav");
      if (!res || res->status != 200) return std::nullopt;
      const auto j = nlohmann::json::parse(res->body, nullptr, false);
      if (j.is_discarded() || !j.contains("text") || !j["text"].is_string()) return std::nullopt;
      return j["text"].get<std::string>();
    } catch (const std::exception&) {
      return std::nullopt;
    }
  }

 private:
  AsrClientConfig cfg_;
  mutable std::mutex mu_;
};

/// WER of the transcript of `x` against `reference`, or nullopt when the
/// metric is unavailable.
inline std::optional<double> wer_via_asr(const Waveform& x, const std::string& reference,
                                         const AsrClient& asr) {
  const auto hyp = asr.transcribe(x);
  if (!hyp) return std::nullopt;
  return wer_pct(reference, *hyp);
}

}  // namespace voiceguard
