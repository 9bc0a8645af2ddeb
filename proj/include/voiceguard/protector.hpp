#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "error.hpp"
#include "objectives.hpp"
#include "parallel.hpp"
#include "surrogate.hpp"
#include "waveform.hpp"

namespace voiceguard {

struct PerturbationConfig {
  double epsilon = 8.0 / 255.0;
  int max_epoch = 100;
  LossWeights weights;
  bool perception_enabled = false;
  double step_size = 0.0;  // 0 means epsilon / 10
  std::uint64_t seed = 0;
  Objective mode = Objective::Spec;
  bool literal_update = false;  // delta <- clamp(-sign(grad)) each epoch

  double step() const { return step_size > 0.0 ? step_size : epsilon / 10.0; }
};

inline void validate(const PerturbationConfig& c) {
  require(c.epsilon > 0.0 && c.epsilon <= 1.0, ErrorKind::InvalidArgument,
          "epsilon must lie in (0, 1]");
  require(c.max_epoch >= 1, ErrorKind::InvalidArgument, "max_epoch must be at least 1");
  require(c.step() > 0.0 && c.step() <= c.epsilon, ErrorKind::InvalidArgument,
          "step size must lie in (0, epsilon]");
  validate(c.weights);
}

struct ProtectedAudio {
  Waveform x_prot;
  std::vector<double> delta;
  PerturbationConfig config;
  std::vector<double> loss_trace;
  std::uint64_t noise_seed = 0;
  int zero_grad_epochs = 0;
};

/// Called after every update with the epoch index and the current delta.
using EpochObserver = std::function<void(int, std::span<const double>)>;

/// clip(x + delta) with |out - x| <= |delta| holding exactly in floating point.
inline std::vector<double> apply_delta(std::span<const double> x, std::span<const double> delta) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    double v = std::clamp(x[i] + delta[i], -1.0, 1.0);
    while (std::abs(v - x[i]) > std::abs(delta[i])) v = std::nextafter(v, x[i]);  // undo round-up
    out[i] = v;
  }
  return out;
}

inline std::vector<double> uniform_delta(std::size_t n, double eps, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-eps, eps);
  std::vector<double> d(n);
  for (double& v : d) v = u(rng);
  return d;
}

/// Projected signed-gradient descent of the configured objective inside the
/// L-infinity ball of radius epsilon.
inline ProtectedAudio generate_perturbation(const Waveform& x, const SurrogateModel& model,
                                            const CondEmbedding& cond, const PerturbationConfig& cfg,
                                            const EpochObserver& observer = {}) {
  validate(cfg);
  validate(x);
  ProtectedAudio out;
  out.config = cfg;
  out.noise_seed = derive_seed(cfg.seed, "noise");
  std::optional<Matrix> z_mel;
  if (cfg.mode == Objective::Spec)
    z_mel = make_noise_reference(x, out.noise_seed, model.front_end()).z_mel.bins;
  const DeltaObjective objective(model, x.samples, cond, cfg.mode, cfg.weights,
                                 cfg.perception_enabled, std::move(z_mel), x.sample_rate);

  std::vector<double> delta = uniform_delta(x.size(), cfg.epsilon, cfg.seed);
  std::vector<double> grad;
  const double eta = cfg.step();
  for (int epoch = 0; epoch < cfg.max_epoch; ++epoch) {
    const ObjectiveTerms t = objective.evaluate(delta, &grad);
    out.loss_trace.push_back(t.total);
    if (std::all_of(grad.begin(), grad.end(), [](double g) { return g == 0.0; }))
      ++out.zero_grad_epochs;
    for (std::size_t i = 0; i < delta.size(); ++i) {
      const double s = grad[i] > 0 ? 1.0 : grad[i] < 0 ? -1.0 : 0.0;
      delta[i] = cfg.literal_update ? std::clamp(-s, -cfg.epsilon, cfg.epsilon)
                                    : std::clamp(delta[i] - eta * s, -cfg.epsilon, cfg.epsilon);
    }
    if (observer) observer(epoch, delta);
  }
  out.x_prot = Waveform{apply_delta(x.samples, delta), x.sample_rate, x.id};
  out.delta = std::move(delta);
  return out;
}

/// Protects clips independently; clip i uses a seed derived from cfg.seed and i.
inline std::vector<ProtectedAudio> protect_batch(std::span<const Waveform> clips,
                                                 const SurrogateModel& model,
                                                 std::span<const CondEmbedding> conds,
                                                 const PerturbationConfig& cfg,
                                                 std::size_t workers = 0) {
  require(clips.size() == conds.size(), ErrorKind::ShapeMismatch, "one conditioning per clip");
  std::vector<ProtectedAudio> out(clips.size());
  parallel_for(clips.size(), workers, [&](std::size_t i) {
    PerturbationConfig c = cfg;
    c.seed = derive_seed(cfg.seed, i);
    out[i] = generate_perturbation(clips[i], model, conds[i], c);
  });
  return out;
}

/// Tiles or truncates a template to `n` samples.
inline std::vector<double> fit_template(std::span<const double> tmpl, std::size_t n) {
  require(!tmpl.empty(), ErrorKind::InvalidArgument, "empty perturbation template");
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = tmpl[i % tmpl.size()];
  return out;
}

/// Optimises on the first clip and returns its delta as a reusable template.
inline std::vector<double> generate_universal_perturbation(std::span<const Waveform> clips,
                                                           const SurrogateModel& model,
                                                           const CondEmbedding& cond,
                                                           const PerturbationConfig& cfg) {
  require(!clips.empty(), ErrorKind::InvalidArgument, "universal perturbation needs a clip");
  return generate_perturbation(clips.front(), model, cond, cfg).delta;
}

inline Waveform apply_template(const Waveform& x, std::span<const double> tmpl) {
  return {apply_delta(x.samples, fit_template(tmpl, x.size())), x.sample_rate, x.id};
}

enum class Recommendation { Accept, RaiseEpsilon, RaiseEpochs };

inline std::string_view to_string(Recommendation r) {
  switch (r) {
    case Recommendation::Accept: return "accept";
    case Recommendation::RaiseEpsilon: return "raise_epsilon";
    case Recommendation::RaiseEpochs: return "raise_epochs";
  }
  return "?";
}

inline constexpr double kCloneThreshold = 0.25;
inline constexpr std::size_t kConvergenceWindow = 10;

/// A trace has converged when its last window averages at most 90% of its first.
inline bool trace_converged(std::span<const double> trace) {
  if (trace.empty()) return false;
  const std::size_t w = std::min(kConvergenceWindow, trace.size());
  double first = 0.0, last = 0.0;
  for (std::size_t i = 0; i < w; ++i) {
    first += trace[i];
    last += trace[trace.size() - w + i];
  }
  return last <= 0.9 * first;
}

inline Recommendation evaluate_and_retune(std::span<const double> loss_trace, double sim) {
  if (sim > kCloneThreshold) return Recommendation::RaiseEpsilon;
  if (!trace_converged(loss_trace)) return Recommendation::RaiseEpochs;
  return Recommendation::Accept;
}

inline Recommendation evaluate_and_retune(const ProtectedAudio& prot, double sim) {
  return evaluate_and_retune(prot.loss_trace, sim);
}

}  // namespace voiceguard
