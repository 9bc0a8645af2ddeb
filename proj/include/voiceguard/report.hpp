#pragma once

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "error.hpp"
#include "pipeline.hpp"
#include "wav.hpp"

namespace voiceguard {

namespace detail {

// JSON has no encoding for inf/nan; they are written as null and read back as NaN.
inline nlohmann::json num(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

inline double num_from(const nlohmann::json& j) {
  return j.is_number() ? j.get<double>() : std::numeric_limits<double>::quiet_NaN();
}

inline nlohmann::json opt_num(const std::optional<double>& v) { return v ? num(*v) : nlohmann::json(nullptr); }

inline std::optional<double> opt_from(const nlohmann::json& j) {
  if (j.is_number()) return j.get<double>();
  return std::nullopt;
}

}  // namespace detail

inline nlohmann::json to_json(const ClipResult& r) {
  return {{"id", r.id},
          {"speaker", r.speaker},
          {"mcd", detail::num(r.metrics.mcd)},
          {"snr_db", detail::num(r.metrics.snr_db)},
          {"sim", detail::num(r.metrics.sim)},
          {"stoi", detail::num(r.metrics.stoi)},
          {"wer_pct", detail::opt_num(r.metrics.wer_pct)},
          {"attack_success", r.metrics.attack_success}};
}

inline ClipResult clip_result_from_json(const nlohmann::json& j) {
  ClipResult r;
  r.id = j.at("id").get<std::string>();
  r.speaker = j.at("speaker").get<std::string>();
  r.metrics.mcd = detail::num_from(j.at("mcd"));
  r.metrics.snr_db = detail::num_from(j.at("snr_db"));
  r.metrics.sim = detail::num_from(j.at("sim"));
  r.metrics.stoi = detail::num_from(j.at("stoi"));
  r.metrics.wer_pct = detail::opt_from(j.at("wer_pct"));
  r.metrics.attack_success = j.at("attack_success").get<bool>();
  return r;
}

inline nlohmann::json to_json(const Aggregates& a) {
  return {{"mcd", detail::num(a.mcd)},         {"sim", detail::num(a.sim)},
          {"asr_pct", detail::num(a.asr_pct)}, {"snr_db", detail::opt_num(a.snr_db)},
          {"stoi", detail::num(a.stoi)},       {"wer_pct", detail::opt_num(a.wer_pct)}};
}

inline Aggregates aggregates_from_json(const nlohmann::json& j) {
  Aggregates a;
  a.mcd = detail::num_from(j.at("mcd"));
  a.sim = detail::num_from(j.at("sim"));
  a.asr_pct = detail::num_from(j.at("asr_pct"));
  a.snr_db = detail::opt_from(j.at("snr_db"));
  a.stoi = detail::num_from(j.at("stoi"));
  a.wer_pct = detail::opt_from(j.at("wer_pct"));
  return a;
}

inline nlohmann::json to_json(const ExperimentReport& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : r.rows) rows.push_back(to_json(row));
  nlohmann::json j{{"condition", r.condition},
                   {"skipped", r.skipped},
                   {"note", r.note},
                   {"runtime_per_epoch_s", detail::num(r.runtime_per_epoch_s)},
                   {"rows", rows},
                   {"extra", r.extra}};
  j["aggregates"] = r.rows.empty() ? nlohmann::json(nullptr) : to_json(r.aggregates);
  return j;
}

inline ExperimentReport report_from_json(const nlohmann::json& j) {
  ExperimentReport r;
  r.condition = j.at("condition").get<std::string>();
  r.skipped = j.at("skipped").get<bool>();
  r.note = j.value("note", "");
  r.runtime_per_epoch_s = detail::num_from(j.at("runtime_per_epoch_s"));
  for (const auto& row : j.at("rows")) r.rows.push_back(clip_result_from_json(row));
  if (!j.at("aggregates").is_null()) r.aggregates = aggregates_from_json(j.at("aggregates"));
  r.extra = j.value("extra", nlohmann::json::object());
  return r;
}

/// A named collection of reports plus the configuration that produced them.
struct ReportBundle {
  std::string kind;  // unlearnability, robustness, ablation, ...
  nlohmann::json config = nlohmann::json::object();
  std::vector<ExperimentReport> reports;
};

inline nlohmann::json to_json(const ReportBundle& b) {
  nlohmann::json reps = nlohmann::json::array();
  for (const auto& r : b.reports) reps.push_back(to_json(r));
  return {{"format", "voiceguard-report"}, {"version", 1}, {"kind", b.kind}, {"config", b.config},
          {"reports", reps}};
}

inline ReportBundle bundle_from_json(const nlohmann::json& j) {
  require(j.is_object() && j.value("format", "") == "voiceguard-report", ErrorKind::MalformedFile,
          "not a report file");
  ReportBundle b;
  try {
    b.kind = j.at("kind").get<std::string>();
    b.config = j.value("config", nlohmann::json::object());
    for (const auto& r : j.at("reports")) b.reports.push_back(report_from_json(r));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::MalformedFile, std::string("bad report: ") + e.what());
  }
  return b;
}

inline void save_bundle(const ReportBundle& b, const std::filesystem::path& path) {
  write_file_atomic(path, to_json(b).dump(2) + "\n");
}

inline ReportBundle load_bundle(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  require(f.good(), ErrorKind::Io, "cannot open " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  const auto j = nlohmann::json::parse(ss.str(), nullptr, false);
  require(!j.is_discarded(), ErrorKind::MalformedFile, path.string() + " is not valid JSON");
  return bundle_from_json(j);
}

namespace detail {
inline std::string cell(double v, const char* fmt = "%.3f") {
  if (std::isnan(v)) return "-";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}
inline std::string cell(const std::optional<double>& v, const char* fmt = "%.3f") {
  return v ? cell(*v, fmt) : "-";
}
}  // namespace detail

/// Aligned plain-text summary: one line per report.
inline std::string format_table(const std::vector<ExperimentReport>& reports) {
  const std::vector<std::string> head{"condition", "MCD", "SIM", "ASR%", "SNR", "STOI", "WER%", "s/epoch", "note"};
  std::vector<std::vector<std::string>> rows{head};
  const auto runtime = [](const ExperimentReport& r) {
    return r.runtime_per_epoch_s > 0.0 ? detail::cell(r.runtime_per_epoch_s, "%.4f") : std::string("-");
  };
  for (const auto& r : reports) {
    if (r.skipped && r.rows.empty()) {
      rows.push_back({r.condition, "-", "-", "-", "-", "-", "-", runtime(r), "skipped: " + r.note});
      continue;
    }
    const auto& a = r.aggregates;
    rows.push_back({r.condition, detail::cell(a.mcd, "%.2f"), detail::cell(a.sim), detail::cell(a.asr_pct, "%.1f"),
                    detail::cell(a.snr_db, "%.2f"), detail::cell(a.stoi), detail::cell(a.wer_pct, "%.1f"),
                    runtime(r), r.note});
  }
  std::vector<std::size_t> width(head.size(), 0);
  for (const auto& row : rows)
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  std::string out;
  for (const auto& row : rows) {
    std::string line;
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) line += "  ";
      const bool left = c == 0 || c + 1 == row.size();
      const std::string pad(width[c] - row[c].size(), ' ');
      line += left ? row[c] + (c + 1 == row.size() ? "" : pad) : pad + row[c];
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out += line + "\n";
  }
  return out;
}

/// Writes `<stem>.json` and `<stem>.txt` next to each other.
inline void emit_report(const ReportBundle& b, const std::filesystem::path& json_path) {
  auto txt = json_path;
  txt.replace_extension(".txt");
  require(txt != json_path, ErrorKind::Usage, "report path must not end in .txt");
  save_bundle(b, json_path);
  write_file_atomic(txt, "# " + b.kind + "\n" + format_table(b.reports));
}

}  // namespace voiceguard
