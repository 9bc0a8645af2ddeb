// Acceptance run: one PASS/FAIL line per headline criterion, followed by
// "note:" lines with supporting numbers. Exit status is nonzero if any
// criterion fails. Report bundles are written to the working directory.

#include <voiceguard.hpp>

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <numbers>
#include <random>
#include <sstream>

using namespace voiceguard;

namespace {

using clock_type = std::chrono::steady_clock;

double since(clock_type::time_point t0) { return std::chrono::duration<double>(clock_type::now() - t0).count(); }

int failures = 0;

void verdict(const std::string& name, bool ok, const std::string& detail) {
  if (!ok) ++failures;
  std::printf("%s %s | %s\n", ok ? "PASS" : "FAIL", name.c_str(), detail.c_str());
  std::fflush(stdout);
}

void note(const std::string& text) {
  std::printf("note: %s\n", text.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// ---------------------------------------------------------------------------

void eps_ball(const SurrogateModel& model) {
  const auto t0 = clock_type::now();
  const double eps = 8.0 / 255.0;
  std::mt19937_64 rng(101);
  double worst_delta = 0.0, worst_out = 0.0;
  int runs = 0;
  for (int c = 0; c < 100; ++c) {
    const int speaker = int(rng() % 100);
    const double dur = 0.5 + double(rng() % 6) * 0.1;
    Clip clip = synth_clip(speaker, int(rng() % 50), dur);
    if (c % 4 == 0) {  // drive some clips close to full scale so clipping engages
      const double g = 0.99 / max_abs(clip.audio.samples);
      for (double& v : clip.audio.samples) v *= g;
    }
    for (Objective mode : {Objective::Pivotal, Objective::Spec, Objective::Vanilla}) {
      PerturbationConfig pc;
      pc.epsilon = eps;
      pc.mode = mode;
      pc.max_epoch = 3;
      pc.perception_enabled = c % 2 == 1;
      pc.seed = rng();
      const auto p = generate_perturbation(clip.audio, model, cond_for_speaker(clip.speaker), pc);
      worst_delta = std::max(worst_delta, max_abs(p.delta));
      for (std::size_t i = 0; i < clip.audio.size(); ++i)
        worst_out = std::max(worst_out, std::abs(p.x_prot.samples[i] - clip.audio.samples[i]));
      ++runs;
    }
  }
  const double t = since(t0);
  verdict("eps_ball", worst_delta <= eps && worst_out <= eps && t < 60.0,
          fmt("%d runs, max|delta|=%.17g, max|x_prot-x|=%.17g, eps=%.17g, %.1fs (limit 60s)", runs, worst_delta,
              worst_out, eps, t));
}

// ---------------------------------------------------------------------------

double fd_relative_error(const DeltaObjective& obj, const std::vector<double>& delta, std::size_t stride) {
  std::vector<double> g;
  obj.evaluate(delta, &g);
  double num = 0.0, den = 0.0;
  const double h = 1e-6;
  for (std::size_t i = 0; i < delta.size(); i += stride) {
    auto a = delta, b = delta;
    a[i] += h;
    b[i] -= h;
    const double fd = (obj.evaluate(a, nullptr).total - obj.evaluate(b, nullptr).total) / (2 * h);
    num += (fd - g[i]) * (fd - g[i]);
    den += fd * fd;
  }
  return std::sqrt(num / den);
}

std::vector<double> uniform_noise(std::size_t n, std::uint64_t seed, double amp) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-amp, amp);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

void gradient_check(const SurrogateModel& full) {
  const auto t0 = clock_type::now();
  SurrogateDims d;
  d.fft = {256, 64, 256, Window::Hann};
  d.mel.n_mels = 20;
  d.hidden = 16;
  const SurrogateModel small = SurrogateModel::init(3, d);
  const LossWeights w{0.05, 10.0};
  double worst = 0.0;
  std::string detail;
  {
    const auto x = uniform_noise(512, 42, 0.3);
    const auto delta = uniform_noise(512, 43, 0.02);
    const Matrix z = make_noise_reference(make_waveform(x), 2, small.front_end()).z_mel.bins;
    for (Objective kind : {Objective::Pivotal, Objective::Spec, Objective::Vanilla}) {
      const double e = fd_relative_error(DeltaObjective(small, x, cond_for_speaker("s"), kind, w, true, z), delta, 1);
      worst = std::max(worst, e);
      detail += fmt("%s(512 samples, all coords)=%.2e ", std::string(to_string(kind)).c_str(), e);
    }
  }
  {
    // Full-size front end with the intelligibility term active.
    const Waveform x = synth_clip(1, 3, 1.0).audio;
    const auto delta = uniform_noise(x.size(), 44, 0.02);
    const Matrix z = make_noise_reference(x, 3, full.front_end()).z_mel.bins;
    const DeltaObjective obj(full, x.samples, cond_for_speaker("spk01"), Objective::Spec, w, true, z);
    if (!obj.stoi_available()) worst = 1.0;
    const double e = fd_relative_error(obj, delta, 97);
    worst = std::max(worst, e);
    detail += fmt("spec+stoi(full model, %zu samples, stride 97)=%.2e ", x.size(), e);
  }
  const double t = since(t0);
  verdict("gradient_fd", worst < 1e-4 && t < 120.0, detail + fmt("limit 1e-4, %.1fs (limit 120s)", t));
}

// ---------------------------------------------------------------------------

std::pair<double, std::size_t> brute_dtw(const Matrix& a, const Matrix& b) {
  double best = std::numeric_limits<double>::infinity();
  std::size_t best_len = 0;
  std::function<void(std::size_t, std::size_t, double, std::size_t)> walk = [&](std::size_t i, std::size_t j,
                                                                               double cost, std::size_t len) {
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

void metric_oracles() {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> u(-3, 3);
  int pairs = 0, dtw_bad = 0;
  for (std::size_t n = 1; n <= 5; ++n)
    for (std::size_t m = 1; m <= 5; ++m)
      for (int rep = 0; rep < 20; ++rep) {
        Matrix a(n, 13), b(m, 13);
        for (double& v : a.data) v = u(rng);
        for (double& v : b.data) v = u(rng);
        const auto [cost, len] = brute_dtw(a, b);
        const double expect = kMcdScale * cost / double(len);
        if (mcd_dtw({a}, {b}) != expect) ++dtw_bad;
        ++pairs;
      }
  const double kl = kl_weights(std::vector<double>{1.0, 0.0}, std::vector<double>{0.5, 0.5});
  std::vector<double> x(4000), d(4000);
  std::normal_distribution<double> nd;
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = nd(rng), d[i] = 0.01 * nd(rng);
  double law = 0.0;
  for (double k : {10.0, 100.0, 1000.0}) {
    std::vector<double> dk = d;
    for (double& v : dk) v *= k;
    law = std::max(law, std::abs(snr_db(x, d) - snr_db(x, dk) - 20.0 * std::log10(k)));
  }
  std::vector<double> one(100, 1.0), tenth(100, 0.1);
  const double twenty = snr_db(one, tenth);
  const Waveform s = synth_clip(0, 0, 1.5).audio;
  const double stoi_self = stoi_score(s, s);
  const bool ok = dtw_bad == 0 && std::abs(kl - std::numbers::ln2) <= 1e-9 && law <= 1e-9 &&
                  std::abs(twenty - 20.0) <= 1e-12 && std::abs(stoi_self - 1.0) <= 1e-12;
  verdict("metric_oracles", ok,
          fmt("dtw %d/%d exact; KL(onehot||uniform)-ln2=%.1e; SNR decade law err=%.1e, rms ratio 10 -> %.15g dB; "
              "STOI(x,x)=%.15g",
              pairs - dtw_bad, pairs, kl - std::numbers::ln2, law, twenty, stoi_self));
}

// ---------------------------------------------------------------------------

const ExperimentReport& find(const std::vector<ExperimentReport>& reps, std::string_view name) {
  for (const auto& r : reps)
    if (r.condition == name) return r;
  throw Error(ErrorKind::InvalidArgument, "missing report " + std::string(name));
}

bool same_aggregates(const Aggregates& a, const Aggregates& b) {
  auto eq = [](double x, double y) { return std::memcmp(&x, &y, sizeof x) == 0; };
  auto eqo = [&](const std::optional<double>& x, const std::optional<double>& y) {
    return x.has_value() == y.has_value() && (!x || eq(*x, *y));
  };
  return eq(a.mcd, b.mcd) && eq(a.sim, b.sim) && eq(a.asr_pct, b.asr_pct) && eq(a.stoi, b.stoi) &&
         eqo(a.snr_db, b.snr_db) && eqo(a.wer_pct, b.wer_pct);
}

bool same_rows(const ExperimentReport& a, const ExperimentReport& b) {
  if (a.rows.size() != b.rows.size()) return false;
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    const auto& x = a.rows[i].metrics;
    const auto& y = b.rows[i].metrics;
    if (std::memcmp(&x.mcd, &y.mcd, sizeof(double)) || std::memcmp(&x.sim, &y.sim, sizeof(double)) ||
        std::memcmp(&x.stoi, &y.stoi, sizeof(double)))
      return false;
  }
  return true;
}

}  // namespace

int main() {
  const auto start = clock_type::now();
  ExperimentConfig cfg;  // 4 speakers x 8 clips, 6 train / 2 test each
  Experiment exp = Experiment::generated(cfg);
  note(fmt("corpus %zu clips (%zu train, %zu test), %.1fs each", exp.corpus().size(),
           exp.indices(Split::Train).size(), exp.indices(Split::Test).size(), cfg.corpus.duration_s));
  {
    const auto t0 = clock_type::now();
    const auto [first, last] = exp.pretrain_losses();
    note(fmt("pretraining %d steps: loss %.4f -> %.4f in %.1fs", cfg.pretrain_steps, first, last, since(t0)));
  }
  const SurrogateModel& model = exp.pretrained();

  eps_ball(model);
  gradient_check(model);
  metric_oracles();

  // Unlearnability.
  std::map<Condition, ProtectionSet> kept;
  const auto t_unl = clock_type::now();
  const auto unl = run_unlearnability_experiment(
      exp, {Condition::Clean, Condition::RandomNoise, Condition::Pivotal, Condition::Spec}, &kept);
  const double unl_s = since(t_unl);
  emit_report({"unlearnability", {{"seed", cfg.seed}, {"model_seed", cfg.model_seed}}, unl},
              "acceptance_unlearnability.json");
  const double clean = find(unl, "clean").aggregates.sim, random = find(unl, "random_noise").aggregates.sim,
               pivotal = find(unl, "pivotal").aggregates.sim, spec = find(unl, "spec").aggregates.sim;
  {
    const bool order = clean > random && random > pivotal && pivotal >= spec;
    const bool ok = order && spec <= 0.5 * clean && clean > 0.25 && spec <= 0.25 && unl_s < 900.0;
    std::string why;
    if (!(clean > random)) why += " clean>random fails;";
    if (!(random > pivotal)) why += " random>pivotal fails;";
    if (!(pivotal >= spec)) why += " pivotal>=spec fails;";
    if (!(spec <= 0.5 * clean)) why += " spec<=0.5*clean fails;";
    if (!(clean > 0.25)) why += " clean>0.25 fails;";
    if (!(spec <= 0.25)) why += " spec<=0.25 fails;";
    verdict("unlearnability_ordering", ok,
            fmt("SIM clean=%.4f random_noise=%.4f pivotal=%.4f spec=%.4f; %.1fs (limit 900s)", clean, random,
                pivotal, spec, unl_s) +
                why);
    for (const auto& r : unl)
      note(fmt("%-14s MCD=%.3f SIM=%.4f ASR=%.1f%% STOI=%.3f per-epoch=%.4fs", r.condition.c_str(),
               r.aggregates.mcd, r.aggregates.sim, r.aggregates.asr_pct, r.aggregates.stoi, r.runtime_per_epoch_s));
  }

  // Convergence: summed pivotal trace over ten clips.
  {
    const auto& traces = kept.at(Condition::Pivotal).loss_traces;
    std::vector<double> batch(traces[0].size(), 0.0);
    for (std::size_t c = 0; c < 10; ++c)
      for (std::size_t e = 0; e < batch.size(); ++e) batch[e] += traces[c][e];
    const double initial = batch.front();
    const double lo = *std::min_element(batch.begin(), batch.end());
    const auto argmin = std::min_element(batch.begin(), batch.end()) - batch.begin();
    double tail = 0.0;
    for (std::size_t e = batch.size() - 10; e < batch.size(); ++e) tail += batch[e];
    tail /= 10.0;
    const bool ok = batch.size() <= 100 && lo <= 0.4 * initial && tail <= 1.1 * lo;
    verdict("convergence", ok,
            fmt("%zu epochs, initial=%.4f min=%.4f (%.1f%% of initial, epoch %td), last-10 mean=%.4f (%.1f%% above min)",
                batch.size(), initial, lo, 100.0 * lo / initial, argmin + 1, tail, 100.0 * (tail / lo - 1.0)));
  }

  // Pivotal versus vanilla wall clock.
  {
    const RuntimeComparison rc = time_pivotal_vs_vanilla(exp, 4, 20, 5);
    verdict("pivotal_efficiency", rc.ratio() <= 0.7,
            fmt("median per-sample: pivotal %.3fs, vanilla %.3fs, ratio %.3f (limit 0.7)", rc.pivotal_s,
                rc.vanilla_s, rc.ratio()));
  }

  // Perception trade-off.
  {
    const std::size_t i = exp.indices(Split::Test).front();
    const Waveform& x = exp.corpus()[i].audio;
    auto snr_at = [&](double alpha) {
      PerturbationConfig pc = cfg.protect;
      pc.mode = Objective::Spec;
      pc.perception_enabled = true;
      pc.weights.alpha = alpha;
      pc.seed = 77;
      const auto p = generate_perturbation(x, model, exp.conds()[i], pc);
      return snr_db(x.samples, p.delta);
    };
    const double s0 = snr_at(0.0), s5 = snr_at(0.05);
    const ProtectionSet sp = exp.protect(Condition::SpecPerception);
    double stoi_sum = 0.0, stoi_min = 1.0;
    for (std::size_t k = 0; k < sp.audio.size(); ++k) {
      const double s = stoi_score(exp.corpus()[k].audio, sp.audio[k]);
      stoi_sum += s;
      stoi_min = std::min(stoi_min, s);
    }
    const double stoi_mean = stoi_sum / double(sp.audio.size());
    verdict("perception_tradeoff", s5 > s0 && stoi_mean >= 0.8,
            fmt("clip %s: SNR(alpha=0)=%.3f dB, SNR(alpha=0.05)=%.3f dB; STOI(x,x_prot) at eps=8/255 over %zu clips: "
                "mean %.3f (limit 0.8), min %.3f",
                x.id.c_str(), s0, s5, sp.audio.size(), stoi_mean, stoi_min));
  }

  // Robustness suite on spec-protected audio.
  {
    const auto t0 = clock_type::now();
    const auto suite = default_suite(cfg.seed);
    const auto reps = run_robustness_suite(exp, kept.at(Condition::Spec), suite);
    const double t = since(t0);
    emit_report({"robustness", {{"seed", cfg.seed}}, reps}, "acceptance_robustness.json");
    bool ok = t < 1800.0;
    std::string detail;
    double adv_max = -1.0;
    for (std::size_t k = 0; k < suite.size(); ++k) {
      const auto& r = reps[k];
      const auto kind = suite[k].kind;
      if (r.skipped) {
        note(fmt("robustness %-16s skipped: %s", r.condition.c_str(), r.note.c_str()));
        continue;
      }
      note(fmt("robustness %-16s SIM=%.4f MCD=%.3f", r.condition.c_str(), r.aggregates.sim, r.aggregates.mcd));
      if (kind == TechniqueKind::Augment || kind == TechniqueKind::SpectralGate) {
        const bool below = r.aggregates.sim < clean;
        ok = ok && below;
        detail += fmt("%s=%.3f%s ", r.condition.c_str(), r.aggregates.sim, below ? "" : "(!)");
      } else if (kind == TechniqueKind::AdvTrain) {
        adv_max = std::max(adv_max, r.aggregates.sim);
        ok = ok && r.aggregates.sim <= 0.25;
      }
    }
    const bool all_augments_ran =
        std::all_of(reps.begin(), reps.end(), [&](const ExperimentReport& r) {
          const auto it = std::find_if(suite.begin(), suite.end(), [&](const Technique& t) { return t.name == r.condition; });
          return !(it->kind == TechniqueKind::Augment || it->kind == TechniqueKind::SpectralGate ||
                   it->kind == TechniqueKind::AdvTrain) ||
                 !r.skipped;
        });
    ok = ok && all_augments_ran;
    verdict("robustness_ordering", ok,
            fmt("clean SIM %.3f; ", clean) + detail +
                fmt("; adv-train max SIM %.3f over %zu radii (limit 0.25); %.1fs (limit 1800s)", adv_max,
                    default_rho_grid().size(), t));
  }

  // Mixed corpus: five speakers, one protected.
  {
    ExperimentConfig mc = cfg;
    mc.corpus.speakers = 5;
    Experiment mixed_exp = Experiment::generated(mc);
    const MixedCorpusResult r = run_mixed_corpus(mixed_exp, "spk00");
    verdict("mixed_corpus", r.relative_change() <= 0.10,
            fmt("clean speakers SIM %.4f co-trained vs %.4f all-clean, relative change %.2f%% (limit 10%%); "
                "protected speaker SIM %.4f",
                r.clean_speakers_sim_mixed, r.clean_speakers_sim_baseline, 100.0 * r.relative_change(),
                r.protected_speaker_sim));
  }

  // Epsilon sweep.
  {
    const auto pts = run_epsilon_sweep(exp, clean);
    bool mono = true;
    std::string detail;
    for (std::size_t k = 0; k < pts.size(); ++k) {
      if (k > 0 && pts[k].strength < pts[k - 1].strength) mono = false;
      detail += fmt("eps=%g/255: SIM %.4f strength %.4f; ", std::round(pts[k].epsilon * 255.0), pts[k].protected_sim,
                    pts[k].strength);
    }
    verdict("epsilon_monotonicity", mono, detail + "strength must be non-decreasing");
  }

  // Determinism: rebuild from the recorded config and rerun the unlearnability study.
  {
    ReportBundle saved = load_bundle("acceptance_unlearnability.json");
    Experiment again = Experiment::generated(cfg);
    const auto rerun = run_unlearnability_experiment(
        again, {Condition::Clean, Condition::RandomNoise, Condition::Pivotal, Condition::Spec});
    bool ok = rerun.size() == unl.size() && saved.reports.size() == unl.size();
    for (std::size_t k = 0; ok && k < unl.size(); ++k)
      ok = same_aggregates(unl[k].aggregates, rerun[k].aggregates) && same_rows(unl[k], rerun[k]) &&
           same_aggregates(unl[k].aggregates, saved.reports[k].aggregates);
    verdict("determinism", ok,
            fmt("%zu conditions re-run from seed %llu: aggregates and per-clip rows bitwise %s; saved report %s",
                unl.size(), (unsigned long long)cfg.seed, ok ? "identical" : "DIFFERENT",
                ok ? "matches" : "differs"));
  }

  const double total = since(start);
  note(fmt("total wall clock %.1fs", total));
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
