// voiceguard command-line front end.
//
// Every failure ends with one stderr line of the form
//   error kind=<kind> msg=<text>
// and exit status 2 for usage errors, 1 for everything else.

#include <CLI11.hpp>
#include <json.hpp>

#include <voiceguard.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

namespace fs = std::filesystem;
using namespace voiceguard;

namespace {

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

int fail(std::string_view kind, const std::string& msg) {
  std::cerr << "error kind=" << kind << " msg=" << one_line(msg) << "\n";
  return kind == "usage" ? 2 : 1;
}

std::string flag_name(std::string key) {
  std::replace(key.begin(), key.end(), '_', '-');
  return "--" + key;
}

struct Globals {
  std::string config_file;
  bool verbose = false;
  std::map<std::string, std::string> flags;
};

ConfigStore load_store(const Globals& g, const CLI::App& app) {
  ConfigStore s;
  if (!g.config_file.empty()) s.load_file(g.config_file);
  for (const auto& [k, v] : g.flags)
    if (app.count(flag_name(k)) > 0) s.set(k, v, ConfigSource::Flag);
  if (g.verbose) std::cerr << "# effective configuration\n" << s.dump();
  return s;
}

ExperimentConfig experiment_config(const CliConfig& c) {
  ExperimentConfig e;
  e.corpus = {c.speakers, c.clips_per_speaker, c.train_per_speaker, c.clip_seconds, 0};
  e.seed = c.seed;
  e.model_seed = c.model_seed;
  e.pretrain_steps = c.pretrain_steps;
  e.finetune_steps = c.finetune_steps;
  e.protect = c.perturbation();
  e.workers = c.workers;
  e.asr = c.asr;
  e.codec_command = c.codec_command;
  return e;
}

Experiment make_experiment(const CliConfig& c) {
  ExperimentConfig e = experiment_config(c);
  if (c.manifest.empty()) return Experiment::generated(e);
  return Experiment(e, load_corpus(c.manifest));
}

nlohmann::json config_json(const ConfigStore& s) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, e] : s.entries()) j[k] = e.value;
  return j;
}

std::vector<fs::path> wav_inputs(const fs::path& in) {
  require(fs::exists(in), ErrorKind::Io, "no such file or directory: " + in.string());
  if (!fs::is_directory(in)) return {in};
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(in))
    if (e.is_regular_file() && e.path().extension() == ".wav") out.push_back(e.path());
  std::sort(out.begin(), out.end());
  require(!out.empty(), ErrorKind::Usage, "no .wav files in " + in.string());
  return out;
}

fs::path manifest_in(const fs::path& p) {
  return fs::is_directory(p) ? p / "manifest.jsonl" : p;
}

void print_json(const nlohmann::json& j) { std::cout << j.dump() << "\n"; }

// ---------------------------------------------------------------------------

struct ProtectArgs {
  std::string in, out, model, speaker;
};

int cmd_protect(const CliConfig& c, const ProtectArgs& a) {
  const auto inputs = wav_inputs(a.in);
  const bool to_dir = inputs.size() > 1 || fs::is_directory(a.in) || fs::is_directory(a.out);
  if (to_dir) fs::create_directories(a.out);
  std::optional<SurrogateModel> model;
  if (!a.model.empty()) {
    model = load_model(a.model);
  } else {
    Experiment exp = make_experiment(c);
    model = exp.pretrained();
  }
  const PerturbationConfig pc = c.perturbation();
  for (const auto& path : inputs) {
    const Waveform x = load_wav(path);
    const std::string speaker = a.speaker.empty() ? path.stem().string() : a.speaker;
    PerturbationConfig ci = pc;
    ci.seed = derive_seed(pc.seed, path.filename().string());
    const ProtectedAudio p = generate_perturbation(x, *model, cond_for_speaker(speaker), ci);
    const fs::path dest = to_dir ? fs::path(a.out) / path.filename() : fs::path(a.out);
    save_wav(p.x_prot, dest);
    print_json({{"input", path.string()},
                {"output", dest.string()},
                {"mode", std::string(to_string(pc.mode))},
                {"epsilon", c.epsilon.str()},
                {"epochs", pc.max_epoch},
                {"max_abs_delta", max_abs(p.delta)},
                {"loss_first", p.loss_trace.front()},
                {"loss_last", p.loss_trace.back()},
                {"converged", trace_converged(p.loss_trace)}});
  }
  return 0;
}

// ---------------------------------------------------------------------------

struct EvaluateArgs {
  std::string ref, hyp, text;
};

int cmd_evaluate(const CliConfig& c, const EvaluateArgs& a) {
  const Waveform ref = load_wav(a.ref), hyp = load_wav(a.hyp);
  nlohmann::json j;
  j["mcd"] = mcd_dtw(mfcc(ref), mfcc(hyp));
  j["sim"] = speaker_sim(ref, hyp);
  j["snr_db"] = nullptr;
  j["stoi"] = nullptr;
  if (ref.size() == hyp.size()) {
    std::vector<double> d(ref.size());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = hyp.samples[i] - ref.samples[i];
    j["snr_db"] = detail::num(snr_db(ref.samples, d));
    j["stoi"] = stoi_score(ref, hyp);
  } else {
    j["note"] = "snr_db and stoi need equal lengths";
  }
  j["attack_success"] = j["sim"].get<double>() > 0.25;
  j["wer_pct"] = nullptr;
  if (!a.text.empty() && c.asr.enabled())
    if (const auto w = wer_via_asr(hyp, a.text, AsrClient(c.asr))) j["wer_pct"] = *w;
  print_json(j);
  return 0;
}

// ---------------------------------------------------------------------------

struct AttackArgs {
  std::string suite = "waveguard", in, report = "attack_report.json", scratch;
  std::vector<std::string> techniques;
};

int cmd_attack(const CliConfig& c, const ConfigStore& s, const AttackArgs& a) {
  require(a.suite == "waveguard", ErrorKind::Usage, "unknown suite '" + a.suite + "'");
  Experiment exp = make_experiment(c);
  ProtectionSet prot;
  if (a.in.empty()) {
    prot = exp.protect_with(c.perturbation(), "attack");
  } else {
    const auto clips = load_corpus(manifest_in(a.in));
    require(clips.size() == exp.corpus().size(), ErrorKind::Usage,
            "protected manifest has " + std::to_string(clips.size()) + " clips, clean corpus has " +
                std::to_string(exp.corpus().size()));
    for (std::size_t i = 0; i < clips.size(); ++i) {
      const auto& clean = exp.corpus()[i];
      require(clips[i].speaker == clean.speaker && clips[i].audio.size() == clean.audio.size(),
              ErrorKind::Usage, "protected clip " + std::to_string(i) + " does not match the clean corpus");
      prot.audio.push_back(clips[i].audio);
    }
  }
  auto suite = default_suite(c.seed);
  if (!a.techniques.empty()) {
    for (const auto& n : a.techniques)
      require(std::any_of(suite.begin(), suite.end(), [&](const Technique& t) { return t.name == n; }),
              ErrorKind::Usage, "unknown technique '" + n + "'");
    suite = select_suite(suite, a.techniques);
  }
  const fs::path scratch = a.scratch.empty() ? fs::temp_directory_path() : fs::path(a.scratch);
  ReportBundle b{"robustness", config_json(s), run_robustness_suite(exp, prot, suite, scratch)};
  emit_report(b, a.report);
  std::cout << format_table(b.reports);
  return 0;
}

// ---------------------------------------------------------------------------

struct AblateArgs {
  std::string report = "ablation_report.json";
  std::vector<std::string> only;
  int epochs = 30;
  std::size_t timing_clips = 4;
  int timing_epochs = 20, timing_repeats = 3;
};

int cmd_ablate(const CliConfig& c, const ConfigStore& s, const AblateArgs& a) {
  AblationConfig ac;
  ac.epochs = a.epochs;
  ac.timing_clips = a.timing_clips;
  ac.timing_epochs = a.timing_epochs;
  ac.timing_repeats = a.timing_repeats;
  if (!a.only.empty()) {
    auto has = [&](const char* n) { return std::find(a.only.begin(), a.only.end(), n) != a.only.end(); };
    for (const auto& n : a.only)
      require(n == "components" || n == "alpha" || n == "beta" || n == "timing", ErrorKind::Usage,
              "unknown study '" + n + "'");
    ac.components = has("components");
    ac.alpha = has("alpha");
    ac.beta = has("beta");
    ac.timing = has("timing");
  }
  Experiment exp = make_experiment(c);
  ReportBundle b{"ablation", config_json(s), run_ablations(exp, ac)};
  emit_report(b, a.report);
  std::cout << format_table(b.reports);
  return 0;
}

// ---------------------------------------------------------------------------

struct DemoArgs {
  std::string out = "demo_out";
  bool skip_eval = false;
};

int cmd_train_demo(const CliConfig& c, const ConfigStore& s, const DemoArgs& a) {
  const fs::path out = a.out;
  fs::create_directories(out);
  Experiment exp = make_experiment(c);
  const auto clean_manifest = write_corpus(exp.corpus(), out / "clean");
  const auto [first, last] = exp.pretrain_losses();
  save_model(exp.pretrained(), out / "model.vgsm");
  std::cerr << "pretrained surrogate: loss " << first << " -> " << last << "\n";

  const ProtectionSet p = exp.protect_with(c.perturbation(), "train-demo");
  std::vector<Clip> protected_clips = exp.corpus();
  for (std::size_t i = 0; i < protected_clips.size(); ++i) protected_clips[i].audio = p.audio[i];
  const auto prot_manifest = write_corpus(protected_clips, out / "protected");
  nlohmann::json summary{{"clean_manifest", clean_manifest.string()},
                         {"protected_manifest", prot_manifest.string()},
                         {"model", (out / "model.vgsm").string()},
                         {"pretrain_loss_first", detail::num(first)},
                         {"pretrain_loss_last", detail::num(last)},
                         {"protect_seconds_per_clip_epoch", per_epoch(p)}};
  if (!a.skip_eval) {
    const auto clean = exp.clean_audio();
    ReportBundle b{"train-demo", config_json(s), {}};
    b.reports.push_back(exp.run_condition("clean", clean, clean, clean));
    std::string name(to_string(c.mode));
    if (c.perception) name += "+perception";
    b.reports.push_back(exp.run_condition(name, p.audio, p.audio, p.audio));
    b.reports.back().runtime_per_epoch_s = per_epoch(p);
    emit_report(b, out / "report.json");
    std::cout << format_table(b.reports);
    summary["report"] = (out / "report.json").string();
  }
  print_json(summary);
  return 0;
}

// ---------------------------------------------------------------------------

struct ReportArgs {
  std::string in, format = "table";
};

int cmd_report(const ReportArgs& a) {
  const ReportBundle b = load_bundle(a.in);
  if (a.format == "json") {
    std::cout << to_json(b).dump(2) << "\n";
  } else {
    std::cout << "# " << b.kind << "\n" << format_table(b.reports);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Protect voice recordings against speech-synthesis fine-tuning and evaluate the protection."};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config_file, "key = value settings file (flags override it)");
  app.add_flag("-v,--verbose", g.verbose, "print the effective configuration and its sources");
  for (const auto& [k, v] : ConfigStore::defaults())
    app.add_option(flag_name(k), g.flags[k], "default: " + (v.empty() ? std::string("(unset)") : v));

  ProtectArgs pa;
  auto* protect = app.add_subcommand("protect", "add a bounded protective perturbation to WAV files");
  protect->add_option("--in", pa.in, "input WAV or directory of WAVs")->required();
  protect->add_option("--out", pa.out, "output WAV or directory")->required();
  protect->add_option("--model", pa.model, "surrogate model file (default: pretrain one)");
  protect->add_option("--speaker", pa.speaker, "speaker id (default: file stem)");

  EvaluateArgs ea;
  auto* evaluate = app.add_subcommand("evaluate", "score a hypothesis recording against a reference");
  evaluate->add_option("--ref", ea.ref, "reference WAV")->required();
  evaluate->add_option("--hyp", ea.hyp, "hypothesis WAV")->required();
  evaluate->add_option("--text", ea.text, "reference transcript for WER (needs --asr-endpoint)");

  AttackArgs aa;
  auto* attack = app.add_subcommand("attack", "run the robustness suite against protected audio");
  attack->add_option("--suite", aa.suite, "technique suite")->capture_default_str();
  attack->add_option("--in", aa.in, "protected corpus directory or manifest (default: protect now)");
  attack->add_option("--report", aa.report, "report path (.json; a .txt table is written beside it)")
      ->capture_default_str();
  attack->add_option("--techniques", aa.techniques, "subset of technique names")->delimiter(',');
  attack->add_option("--scratch", aa.scratch, "directory for codec temporaries");

  AblateArgs ba;
  auto* ablate = app.add_subcommand("ablate", "component, weight and runtime ablations");
  ablate->add_option("--report", ba.report, "report path")->capture_default_str();
  ablate->add_option("--only", ba.only, "components,alpha,beta,timing")->delimiter(',');
  ablate->add_option("--epochs", ba.epochs, "protection epochs per run")->capture_default_str();
  ablate->add_option("--timing-clips", ba.timing_clips)->capture_default_str();
  ablate->add_option("--timing-epochs", ba.timing_epochs)->capture_default_str();
  ablate->add_option("--timing-repeats", ba.timing_repeats)->capture_default_str();

  DemoArgs da;
  auto* demo = app.add_subcommand("train-demo", "synthetic corpus, surrogate, protection and a short report");
  demo->add_option("--out", da.out, "output directory")->capture_default_str();
  demo->add_flag("--skip-eval", da.skip_eval, "stop after writing the protected corpus");

  ReportArgs ra;
  auto* report = app.add_subcommand("report", "print a saved report");
  report->add_option("--in", ra.in, "report .json")->required();
  report->add_option("--format", ra.format, "table or json")
      ->check(CLI::IsMember({"table", "json"}))
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what());
  }

  try {
    if (*report) return cmd_report(ra);
    const ConfigStore store = load_store(g, app);
    const CliConfig cfg = resolve(store);
    if (*protect) return cmd_protect(cfg, pa);
    if (*evaluate) return cmd_evaluate(cfg, ea);
    if (*attack) return cmd_attack(cfg, store, aa);
    if (*ablate) return cmd_ablate(cfg, store, ba);
    if (*demo) return cmd_train_demo(cfg, store, da);
  } catch (const Error& e) {
    std::string msg = e.what();
    const std::string prefix = std::string(to_string(e.kind())) + ": ";
    if (msg.rfind(prefix, 0) == 0) msg.erase(0, prefix.size());
    return fail(to_string(e.kind()), msg);
  } catch (const std::exception& e) {
    return fail("internal", e.what());
  }
  return fail("usage", "no subcommand");
}
