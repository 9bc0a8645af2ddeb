#pragma once

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "adversary.hpp"
#include "asr_client.hpp"
#include "corpus.hpp"
#include "error.hpp"
#include "metrics.hpp"
#include "parallel.hpp"
#include "protector.hpp"
#include "stoi.hpp"
#include "surrogate.hpp"

namespace voiceguard {

struct ExperimentConfig {
  CorpusSpec corpus;
  std::uint64_t seed = 2024;
  std::uint64_t model_seed = 7;
  int pretrain_steps = 200;
  int finetune_steps = 100;
  AdamOptions adam;
  PerturbationConfig protect;
  std::size_t workers = 1;
  AsrClientConfig asr;
  std::string codec_command;
};

enum class Condition { Clean, RandomNoise, Pivotal, Spec, SpecPerception };

inline std::string_view to_string(Condition c) {
  switch (c) {
    case Condition::Clean: return "clean";
    case Condition::RandomNoise: return "random_noise";
    case Condition::Pivotal: return "pivotal";
    case Condition::Spec: return "spec";
    case Condition::SpecPerception: return "spec+perception";
  }
  return "?";
}

inline Condition condition_from_string(std::string_view s) {
  for (auto c : {Condition::Clean, Condition::RandomNoise, Condition::Pivotal, Condition::Spec,
                 Condition::SpecPerception})
    if (to_string(c) == s) return c;
  throw Error(ErrorKind::Usage, "unknown condition '" + std::string(s) + "'");
}

inline const std::vector<Condition>& all_conditions() {
  static const std::vector<Condition> c{Condition::Clean, Condition::RandomNoise, Condition::Pivotal,
                                        Condition::Spec, Condition::SpecPerception};
  return c;
}

struct ClipResult {
  std::string id;
  std::string speaker;
  MetricReport metrics;  // snr_db is +inf for unperturbed clips
};

struct Aggregates {
  double mcd = 0.0;
  double sim = 0.0;
  double asr_pct = 0.0;  // attack success rate
  std::optional<double> snr_db;  // mean over finite rows
  double stoi = 0.0;
  std::optional<double> wer_pct;

  bool operator==(const Aggregates&) const = default;
};

inline Aggregates aggregate(const std::vector<ClipResult>& rows) {
  require(!rows.empty(), ErrorKind::InvalidArgument, "cannot aggregate an empty report");
  Aggregates a;
  std::vector<double> sims;
  double snr = 0.0, wer = 0.0;
  std::size_t n_snr = 0, n_wer = 0;
  for (const auto& r : rows) {
    a.mcd += r.metrics.mcd;
    a.sim += r.metrics.sim;
    a.stoi += r.metrics.stoi;
    sims.push_back(r.metrics.sim);
    if (std::isfinite(r.metrics.snr_db)) snr += r.metrics.snr_db, ++n_snr;
    if (r.metrics.wer_pct) wer += *r.metrics.wer_pct, ++n_wer;
  }
  const double n = static_cast<double>(rows.size());
  a.mcd /= n;
  a.sim /= n;
  a.stoi /= n;
  a.asr_pct = attack_success_rate(sims);
  if (n_snr > 0) a.snr_db = snr / double(n_snr);
  if (n_wer == rows.size()) a.wer_pct = wer / double(n_wer);
  return a;
}

struct ExperimentReport {
  std::string condition;
  std::vector<ClipResult> rows;
  Aggregates aggregates;
  double runtime_per_epoch_s = 0.0;  // protection wall clock per clip-epoch
  bool skipped = false;
  std::string note;
  nlohmann::json extra = nlohmann::json::object();
};

/// Protected (or otherwise transformed) audio for every corpus clip.
struct ProtectionSet {
  std::vector<Waveform> audio;
  std::vector<std::vector<double>> loss_traces;
  double seconds = 0.0;
  int epochs = 0;
  std::size_t clips = 0;  // clips actually perturbed
};

namespace detail {
using steady = std::chrono::steady_clock;
inline double seconds_since(steady::time_point t0) {
  return std::chrono::duration<double>(steady::now() - t0).count();
}
}  // namespace detail

/// Trains the shared surrogate once and runs protect / fine-tune / evaluate
/// rounds against it. Every fine-tune starts from a copy of the pretrained
/// model with fresh optimiser state.
class Experiment {
 public:
  Experiment(ExperimentConfig cfg, std::vector<Clip> corpus)
      : cfg_(std::move(cfg)), corpus_(std::move(corpus)) {
    require(!corpus_.empty(), ErrorKind::InvalidArgument, "empty corpus");
    validate(cfg_.protect);
    for (const auto& c : corpus_) conds_.push_back(cond_for_speaker(c.speaker));
  }

  static Experiment generated(ExperimentConfig cfg) {
    auto corpus = generate_corpus(cfg.corpus);
    return Experiment(std::move(cfg), std::move(corpus));
  }

  const ExperimentConfig& config() const noexcept { return cfg_; }
  const std::vector<Clip>& corpus() const noexcept { return corpus_; }
  const std::vector<CondEmbedding>& conds() const noexcept { return conds_; }

  std::vector<Waveform> clean_audio() const {
    std::vector<Waveform> out;
    for (const auto& c : corpus_) out.push_back(c.audio);
    return out;
  }

  std::vector<std::size_t> indices(Split s) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < corpus_.size(); ++i)
      if (corpus_[i].split == s) out.push_back(i);
    return out;
  }

  const SurrogateModel& pretrained() {
    if (!pretrained_) pretrain();
    return *pretrained_;
  }

  /// Loss at the first and last pretraining step.
  std::pair<double, double> pretrain_losses() {
    pretrained();
    return {pretrain_first_, pretrain_last_};
  }

  void set_pretrained(SurrogateModel m) {
    pretrained_ = std::move(m);
    pretrain_first_ = pretrain_last_ = std::numeric_limits<double>::quiet_NaN();
  }

  /// Applies one protection condition to every clip, or only to the clips
  /// listed in `subset` (the rest stay clean).
  ProtectionSet protect(Condition c) { return protect(c, cfg_.protect); }

  ProtectionSet protect(Condition c, const PerturbationConfig& base, const std::vector<std::size_t>& subset = {}) {
    ProtectionSet out;
    out.audio = clean_audio();
    out.loss_traces.resize(corpus_.size());
    std::vector<std::size_t> which = subset;
    if (which.empty())
      for (std::size_t i = 0; i < corpus_.size(); ++i) which.push_back(i);
    const auto t0 = detail::steady::now();
    const std::uint64_t cseed = derive_seed(base.seed, to_string(c));
    switch (c) {
      case Condition::Clean:
        break;
      case Condition::RandomNoise:
        for (std::size_t i : which) {
          const auto& x = corpus_[i].audio;
          out.audio[i] = {apply_delta(x.samples, uniform_delta(x.size(), base.epsilon, derive_seed(cseed, i))),
                          x.sample_rate, x.id};
        }
        break;
      default: {
        PerturbationConfig pc = base;
        pc.mode = c == Condition::Pivotal ? Objective::Pivotal : Objective::Spec;
        pc.perception_enabled = c == Condition::SpecPerception;
        run_protection(pc, cseed, which, out);
      }
    }
    out.seconds = detail::seconds_since(t0);
    out.clips = which.size();
    return out;
  }

  /// Protects with an explicit per-clip objective configuration (used by the
  /// component and weight ablations).
  ProtectionSet protect_with(const PerturbationConfig& pc, std::string_view tag) {
    ProtectionSet out;
    out.audio = clean_audio();
    out.loss_traces.resize(corpus_.size());
    std::vector<std::size_t> all(corpus_.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    const auto t0 = detail::steady::now();
    run_protection(pc, derive_seed(pc.seed, tag), all, out);
    out.seconds = detail::seconds_since(t0);
    out.clips = all.size();
    return out;
  }

  /// Fine-tunes a copy of the pretrained model on `train_audio` (indexed like
  /// the corpus; only train-split entries are used).
  SurrogateModel fine_tune(const std::vector<Waveform>& train_audio) {
    require(train_audio.size() == corpus_.size(), ErrorKind::ShapeMismatch,
            "training audio must cover the corpus");
    SurrogateModel m = pretrained();
    std::vector<TrainingClip> batch;
    for (std::size_t i : indices(Split::Train))
      batch.push_back(prepare_clip(m, train_audio[i].samples, conds_[i]));
    AdamTrainer trainer(m, cfg_.adam);
    for (int s = 0; s < cfg_.finetune_steps; ++s) trainer.step(batch);
    return m;
  }

  /// Synthesises every test clip from `test_inputs` with `model` and scores
  /// it against the clean ground truth. SNR and STOI describe `released`
  /// (the audio the owner published) against the clean clip.
  std::vector<ClipResult> evaluate(const SurrogateModel& model, const std::vector<Waveform>& test_inputs,
                                   const std::vector<Waveform>& released) const {
    const auto& norm = reference_normalizer();
    const auto idx = indices(Split::Test);
    std::vector<ClipResult> rows(idx.size());
    std::optional<AsrClient> asr;
    if (cfg_.asr.enabled()) asr.emplace(cfg_.asr);
    parallel_for(idx.size(), cfg_.workers, [&](std::size_t r) {
      const std::size_t i = idx[r];
      const Clip& clip = corpus_[i];
      const MelSpectrogram syn = forward(model, test_inputs[i], conds_[i]);
      const MelSpectrogram truth = model.front_end().compute(clip.audio);
      const double mcd = mcd_dtw(mfcc_from_mel(syn.bins), mfcc_from_mel(truth.bins));
      const double sim =
          embedding_sim(embedding_from_mel(syn.bins), embedding_from_mel(truth.bins), norm);
      std::vector<double> delta(clip.audio.size());
      for (std::size_t k = 0; k < delta.size(); ++k)
        delta[k] = released[i].samples[k] - clip.audio.samples[k];
      const double snr = snr_db(clip.audio.samples, delta);
      const double stoi = stoi_score(clip.audio, released[i]);
      std::optional<double> wer;
      if (asr) {
        const Matrix mag = mel_to_magnitude(syn.bins, model.front_end());
        Waveform voiced{clip_unit(griffin_lim(mag, clip.audio.size(), model.front_end().fft(), 32)),
                        clip.audio.sample_rate, clip.audio.id};
        wer = wer_via_asr(voiced, clip.text, *asr);
      }
      rows[r] = {clip.audio.id, clip.speaker, make_report(mcd, snr, sim, stoi, wer)};
    });
    return rows;
  }

  /// Fine-tune on the train split of `train_audio`, synthesise from the test
  /// split of `test_inputs`, and assemble a report.
  ExperimentReport run_condition(std::string name, const std::vector<Waveform>& train_audio,
                                 const std::vector<Waveform>& test_inputs,
                                 const std::vector<Waveform>& released) {
    ExperimentReport rep;
    rep.condition = std::move(name);
    const SurrogateModel m = fine_tune(train_audio);
    rep.rows = evaluate(m, test_inputs, released);
    rep.aggregates = aggregate(rep.rows);
    return rep;
  }

 private:
  void run_protection(const PerturbationConfig& pc, std::uint64_t cseed, const std::vector<std::size_t>& which,
                      ProtectionSet& out) {
    const SurrogateModel& model = pretrained();
    parallel_for(which.size(), cfg_.workers, [&](std::size_t r) {
      const std::size_t i = which[r];
      PerturbationConfig ci = pc;
      ci.seed = derive_seed(cseed, i);
      ProtectedAudio p = generate_perturbation(corpus_[i].audio, model, conds_[i], ci);
      out.audio[i] = std::move(p.x_prot);
      out.loss_traces[i] = std::move(p.loss_trace);
    });
    out.epochs = pc.max_epoch;
  }

  void pretrain() {
    SurrogateModel m = SurrogateModel::init(cfg_.model_seed);
    std::vector<TrainingClip> batch;
    for (std::size_t i : indices(Split::Train)) batch.push_back(prepare_clip(m, corpus_[i].audio.samples, conds_[i]));
    require(batch.size() >= 8 || cfg_.pretrain_steps == 0, ErrorKind::InvalidArgument,
            "pretraining needs at least 8 training clips");
    AdamTrainer trainer(m, cfg_.adam);
    pretrain_first_ = pretrain_last_ = std::numeric_limits<double>::quiet_NaN();
    for (int s = 0; s < cfg_.pretrain_steps; ++s) {
      const double l = trainer.step(batch);
      if (s == 0) pretrain_first_ = l;
    }
    if (!batch.empty()) pretrain_last_ = batch_loss(m, batch, nullptr);
    pretrained_ = std::move(m);
  }

  ExperimentConfig cfg_;
  std::vector<Clip> corpus_;
  std::vector<CondEmbedding> conds_;
  std::optional<SurrogateModel> pretrained_;
  double pretrain_first_ = 0.0, pretrain_last_ = 0.0;
};

inline double per_epoch(const ProtectionSet& p) {
  return p.epochs > 0 && p.clips > 0 ? p.seconds / (double(p.epochs) * double(p.clips)) : 0.0;
}

// ---------------------------------------------------------------------------
// Unlearnability.

/// One report per condition: protect every clip, fine-tune on the protected
/// train split, synthesise from the protected test inputs.
inline std::vector<ExperimentReport> run_unlearnability_experiment(
    Experiment& exp, const std::vector<Condition>& conditions,
    std::map<Condition, ProtectionSet>* keep = nullptr) {
  std::vector<ExperimentReport> out;
  for (Condition c : conditions) {
    ProtectionSet p = exp.protect(c);
    ExperimentReport rep = exp.run_condition(std::string(to_string(c)), p.audio, p.audio, p.audio);
    rep.runtime_per_epoch_s = per_epoch(p);
    out.push_back(std::move(rep));
    if (keep) (*keep)[c] = std::move(p);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Robustness.

enum class TechniqueKind { None, Augment, SpectralGate, Codec, AdvTrain, Unavailable };

struct Technique {
  std::string name;
  TechniqueKind kind = TechniqueKind::None;
  AugmentationSpec augment;
  double gate_db = 10.0;
  double rho_a = 0.0;
};

/// No-augmentation baseline, the seven augmentations, spectral gating, the
/// external codec row, the adversarial-training sweep, and rows for
/// model-based purifiers this build does not provide.
inline std::vector<Technique> default_suite(std::uint64_t seed) {
  std::vector<Technique> s;
  s.push_back({"none", TechniqueKind::None, {}, 10.0, 0.0});
  for (AugmentKind k : kAllAugmentations) {
    Technique t{std::string(to_string(k)), TechniqueKind::Augment, {}, 10.0, 0.0};
    t.augment.kind = k;
    t.augment.seed = derive_seed(seed, to_string(k));
    s.push_back(t);
  }
  s.push_back({"spectral_gate", TechniqueKind::SpectralGate, {}, 10.0, 0.0});
  s.push_back({"mp3", TechniqueKind::Codec, {}, 10.0, 0.0});
  for (double rho : default_rho_grid()) {
    char name[32];
    std::snprintf(name, sizeof name, "adv_train_%g/255", std::round(rho * 255.0));
    s.push_back({name, TechniqueKind::AdvTrain, {}, 10.0, rho});
  }
  s.push_back({"demucs", TechniqueKind::Unavailable, {}, 10.0, 0.0});
  s.push_back({"audiopure", TechniqueKind::Unavailable, {}, 10.0, 0.0});
  return s;
}

/// Same suite with only the named techniques, in suite order.
inline std::vector<Technique> select_suite(const std::vector<Technique>& suite,
                                           const std::vector<std::string>& names) {
  std::vector<Technique> out;
  for (const auto& t : suite)
    if (std::find(names.begin(), names.end(), t.name) != names.end()) out.push_back(t);
  return out;
}

/// Each row transforms the protected audio of every clip, fine-tunes on the
/// transformed train split and synthesises from the transformed test inputs.
/// A failing row is reported as skipped with its error; the others continue.
inline std::vector<ExperimentReport> run_robustness_suite(Experiment& exp, const ProtectionSet& prot,
                                                          const std::vector<Technique>& suite,
                                                          const std::filesystem::path& scratch = {}) {
  std::vector<ExperimentReport> out;
  for (const Technique& t : suite) {
    ExperimentReport rep;
    rep.condition = t.name;
    try {
      std::vector<Waveform> audio(prot.audio.size());
      bool skipped = false;
      switch (t.kind) {
        case TechniqueKind::None:
          audio = prot.audio;
          break;
        case TechniqueKind::Augment:
          parallel_for(audio.size(), exp.config().workers, [&](std::size_t i) {
            AugmentationSpec spec = t.augment;
            spec.seed = derive_seed(t.augment.seed, i);
            audio[i] = augment(prot.audio[i], spec);
          });
          break;
        case TechniqueKind::SpectralGate:
          for (std::size_t i = 0; i < audio.size(); ++i) audio[i] = spectral_gate_denoise(prot.audio[i], t.gate_db);
          break;
        case TechniqueKind::Codec: {
          const auto dir = scratch.empty() ? std::filesystem::temp_directory_path() : scratch;
          for (std::size_t i = 0; i < audio.size() && !skipped; ++i) {
            auto y = external_codec_roundtrip(prot.audio[i], exp.config().codec_command, dir);
            if (!y) skipped = true;
            else audio[i] = std::move(*y);
          }
          if (skipped) rep.note = "external codec not configured or failed";
          break;
        }
        case TechniqueKind::AdvTrain: {
          const SurrogateModel& model = exp.pretrained();
          parallel_for(audio.size(), exp.config().workers, [&](std::size_t i) {
            AdvTrainConfig ac;
            ac.rho_a = t.rho_a;
            ac.rho_u = exp.config().protect.epsilon;
            ac.weights = exp.config().protect.weights;
            ac.seed = derive_seed(exp.config().seed, i);
            audio[i] = adversarial_counter_perturbation(prot.audio[i], model, exp.conds()[i], ac);
          });
          rep.extra["rho_a"] = t.rho_a;
          break;
        }
        case TechniqueKind::Unavailable:
          skipped = true;
          rep.note = "requires a pretrained model that is not part of this build";
          break;
      }
      if (skipped) {
        rep.skipped = true;
      } else {
        ExperimentReport r = exp.run_condition(t.name, audio, audio, prot.audio);
        rep.rows = std::move(r.rows);
        rep.aggregates = r.aggregates;
      }
    } catch (const Error& e) {
      rep.skipped = true;
      rep.rows.clear();
      rep.note = std::string(to_string(e.kind())) + ": " + e.what();
    }
    out.push_back(std::move(rep));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Ablations.

struct AblationConfig {
  int epochs = 30;
  std::vector<double> alphas{0.0, 0.001, 0.01, 0.05, 0.1, 0.5, 1.0};
  std::vector<double> betas{0, 1, 2, 5, 8, 10, 12, 15, 20, 30, 40, 50, 60, 80, 100};
  std::size_t timing_clips = 4;
  int timing_epochs = 20;
  int timing_repeats = 3;
  bool components = true, alpha = true, beta = true, timing = true;
};

struct RuntimeComparison {
  double pivotal_s = 0.0;  // median per-sample wall clock
  double vanilla_s = 0.0;
  double ratio() const { return vanilla_s > 0.0 ? pivotal_s / vanilla_s : 0.0; }
};

/// Per-sample protection wall clock in pivotal and vanilla mode. Runs are
/// interleaved and the median of `repeats` rounds is kept, so both modes see
/// the same machine load.
inline RuntimeComparison time_pivotal_vs_vanilla(Experiment& exp, std::size_t clips, int epochs,
                                                 int repeats) {
  const SurrogateModel& model = exp.pretrained();
  clips = std::min(clips, exp.corpus().size());
  std::vector<double> piv, van;
  for (int r = 0; r < repeats; ++r) {
    for (Objective mode : {Objective::Pivotal, Objective::Vanilla}) {
      PerturbationConfig pc = exp.config().protect;
      pc.mode = mode;
      pc.perception_enabled = false;
      pc.max_epoch = epochs;
      const auto t0 = detail::steady::now();
      for (std::size_t i = 0; i < clips; ++i) {
        pc.seed = derive_seed(exp.config().seed, i);
        generate_perturbation(exp.corpus()[i].audio, model, exp.conds()[i], pc);
      }
      (mode == Objective::Pivotal ? piv : van).push_back(detail::seconds_since(t0) / double(clips));
    }
  }
  auto median = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
  };
  return {median(piv), median(van)};
}

/// Component study, alpha and beta sweeps, and the runtime comparison.
inline std::vector<ExperimentReport> run_ablations(Experiment& exp, const AblationConfig& ac) {
  std::vector<ExperimentReport> out;
  const auto released_eval = [&](const std::string& name, const ProtectionSet& p, nlohmann::json extra) {
    ExperimentReport rep = exp.run_condition(name, p.audio, p.audio, p.audio);
    rep.runtime_per_epoch_s = per_epoch(p);
    rep.extra = std::move(extra);
    out.push_back(std::move(rep));
  };
  PerturbationConfig base = exp.config().protect;
  base.max_epoch = ac.epochs;

  if (ac.components) {
    struct Combo {
      const char* name;
      Objective mode;
      bool kl, l1;
    };
    for (const Combo& c : {Combo{"mel", Objective::Pivotal, false, false}, Combo{"mel+kl", Objective::Spec, true, false},
                           Combo{"mel+l1", Objective::Spec, false, true}, Combo{"mel+kl+l1", Objective::Spec, true, true}}) {
      PerturbationConfig pc = base;
      pc.mode = c.mode;
      pc.perception_enabled = false;
      pc.weights.kl_term = c.kl;
      pc.weights.l1_term = c.l1;
      released_eval(std::string("component:") + c.name, exp.protect_with(pc, c.name),
                    {{"study", "component"}});
    }
  }
  if (ac.alpha) {
    for (double a : ac.alphas) {
      PerturbationConfig pc = base;
      pc.mode = Objective::Spec;
      pc.perception_enabled = true;
      pc.weights.alpha = a;
      char name[48];
      std::snprintf(name, sizeof name, "alpha=%g", a);
      released_eval(name, exp.protect_with(pc, "alpha"), {{"study", "alpha"}, {"alpha", a}});
    }
  }
  if (ac.beta) {
    for (double b : ac.betas) {
      PerturbationConfig pc = base;
      pc.mode = Objective::Spec;
      pc.perception_enabled = false;
      pc.weights.beta = b;
      char name[48];
      std::snprintf(name, sizeof name, "beta=%g", b);
      released_eval(name, exp.protect_with(pc, "beta"), {{"study", "beta"}, {"beta", b}});
    }
  }
  if (ac.timing) {
    const RuntimeComparison rc =
        time_pivotal_vs_vanilla(exp, ac.timing_clips, ac.timing_epochs, ac.timing_repeats);
    ExperimentReport rep;
    rep.condition = "runtime:pivotal_vs_vanilla";
    rep.skipped = true;  // timing only, no per-clip rows
    rep.note = "wall clock per protected sample";
    rep.extra = {{"study", "runtime"},
                 {"pivotal_s", rc.pivotal_s},
                 {"vanilla_s", rc.vanilla_s},
                 {"ratio", rc.ratio()},
                 {"epochs", ac.timing_epochs}};
    out.push_back(std::move(rep));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Mixed corpus and epsilon sweep.

struct MixedCorpusResult {
  double clean_speakers_sim_mixed = 0.0;     // clean speakers, co-trained with a protected one
  double clean_speakers_sim_baseline = 0.0;  // clean speakers, all-clean training
  double protected_speaker_sim = 0.0;
  std::vector<ExperimentReport> reports;

  double relative_change() const {
    return std::abs(clean_speakers_sim_mixed - clean_speakers_sim_baseline) /
           std::abs(clean_speakers_sim_baseline);
  }
};

/// Speaker `protected_speaker` gets SPEC protection; the rest stay clean.
inline MixedCorpusResult run_mixed_corpus(Experiment& exp, const std::string& protected_speaker) {
  const auto& corpus = exp.corpus();
  std::vector<std::size_t> target;
  for (std::size_t i = 0; i < corpus.size(); ++i)
    if (corpus[i].speaker == protected_speaker) target.push_back(i);
  require(!target.empty(), ErrorKind::InvalidArgument, "no clips for speaker " + protected_speaker);
  const std::vector<Waveform> mixed = exp.protect(Condition::Spec, exp.config().protect, target).audio;
  MixedCorpusResult r;
  r.reports.push_back(exp.run_condition("mixed", mixed, mixed, mixed));
  const auto clean = exp.clean_audio();
  r.reports.push_back(exp.run_condition("all_clean", clean, clean, clean));
  auto mean_sim = [&](const ExperimentReport& rep, bool want_protected) {
    double s = 0.0;
    int n = 0;
    for (const auto& row : rep.rows)
      if ((row.speaker == protected_speaker) == want_protected) s += row.metrics.sim, ++n;
    require(n > 0, ErrorKind::InvalidArgument, "mixed corpus needs protected and clean test clips");
    return s / n;
  };
  r.clean_speakers_sim_mixed = mean_sim(r.reports[0], false);
  r.clean_speakers_sim_baseline = mean_sim(r.reports[1], false);
  r.protected_speaker_sim = mean_sim(r.reports[0], true);
  return r;
}

struct EpsilonPoint {
  double epsilon = 0.0;
  double protected_sim = 0.0;
  double strength = 0.0;  // clean SIM minus protected SIM
  ExperimentReport report;
};

inline std::vector<EpsilonPoint> run_epsilon_sweep(Experiment& exp, double clean_sim,
                                                   const std::vector<double>& epsilons = {4 / 255.0, 8 / 255.0,
                                                                                          16 / 255.0}) {
  std::vector<EpsilonPoint> out;
  for (double e : epsilons) {
    PerturbationConfig pc = exp.config().protect;
    pc.epsilon = e;
    pc.step_size = 0.0;
    const ProtectionSet p = exp.protect(Condition::Spec, pc);
    char name[48];
    std::snprintf(name, sizeof name, "spec@eps=%g/255", std::round(e * 255.0));
    ExperimentReport rep = exp.run_condition(name, p.audio, p.audio, p.audio);
    rep.runtime_per_epoch_s = per_epoch(p);
    rep.extra = {{"epsilon", e}};
    out.push_back({e, rep.aggregates.sim, clean_sim - rep.aggregates.sim, std::move(rep)});
  }
  return out;
}

}  // namespace voiceguard
