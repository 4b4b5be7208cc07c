#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "trust_pomdp/model.hpp"
#include "trust_pomdp/parallel.hpp"
#include "trust_pomdp/rng.hpp"

namespace trust_pomdp {

/// An observation that has probability zero under both trust states.
class ZeroLikelihood : public Error {
 public:
  ZeroLikelihood(std::size_t episode, std::size_t trial)
      : Error("zero likelihood at episode " + std::to_string(episode) + ", trial " +
              std::to_string(trial)),
        episode_(episode),
        trial_(trial) {}
  std::size_t episode() const noexcept { return episode_; }
  std::size_t trial() const noexcept { return trial_; }

 private:
  std::size_t episode_;
  std::size_t trial_;
};

class DegenerateDataset : public Error {
 public:
  using Error::Error;
};

/// Two-state distribution over trust, indexed by idx(TrustState).
using TrustDist = std::array<double, 2>;
using TrustPair = std::array<TrustDist, 2>;

/// Belief propagation through the trust transition for a realized experience.
inline double belief_update(const ModelParams& params, double b, Experience experience_next,
                            Complexity complexity, RobotAction action) {
  return params.transition(TrustState::High, experience_next, complexity, action) * b +
         params.transition(TrustState::Low, experience_next, complexity, action) * (1.0 - b);
}

struct BeliefTrajectory {
  /// P(T_t = High | trials before t); size n+1, belief[0] is the prior.
  std::vector<double> belief;
  /// P(T_t = High | trials up to and including t's human action); size n.
  std::vector<double> posterior;
  double log_likelihood = 0.0;
};

namespace detail {

inline TrustDist emission(const ModelParams& p, const TrialRecord& r) {
  return {p.observation_prob(r.human_action, TrustState::Low, r.complexity, r.robot_action),
          p.observation_prob(r.human_action, TrustState::High, r.complexity, r.robot_action)};
}

/// transition[T][T'] for trial r.
inline TrustPair transition_matrix(const ModelParams& p, const TrialRecord& r) {
  TrustPair m{};
  for (auto t : kTrustStates) {
    const double up = p.transition(t, r.experience, r.complexity, r.robot_action);
    m[idx(t)] = {1.0 - up, up};
  }
  return m;
}

}  // namespace detail

/// One filtering step: condition on the human action, then propagate.
struct FilterStep {
  double posterior = 0.0;
  double next_belief = 0.0;
  /// P(o_t | trials before t); zero when the action is impossible.
  double likelihood = 0.0;
};

inline FilterStep filter_step(const ModelParams& params, double b, const TrialRecord& rec) {
  const double high = params.observation_prob(rec.human_action, TrustState::High, rec.complexity,
                                              rec.robot_action);
  const double low = params.observation_prob(rec.human_action, TrustState::Low, rec.complexity,
                                             rec.robot_action);
  FilterStep out;
  out.likelihood = b * high + (1.0 - b) * low;
  if (!(out.likelihood > 0.0)) return out;
  out.posterior = b * high / out.likelihood;
  out.next_belief =
      belief_update(params, out.posterior, rec.experience, rec.complexity, rec.robot_action);
  return out;
}

inline BeliefTrajectory forward_filter(const ModelParams& params, std::span<const TrialRecord> episode,
                                       std::size_t episode_index = 0) {
  BeliefTrajectory out;
  out.belief.reserve(episode.size() + 1);
  out.posterior.reserve(episode.size());
  double b = params.initial_trust_high;
  out.belief.push_back(b);
  for (std::size_t t = 0; t < episode.size(); ++t) {
    const FilterStep step = filter_step(params, b, episode[t]);
    if (!(step.likelihood > 0.0)) throw ZeroLikelihood(episode_index, t);
    out.log_likelihood += std::log(step.likelihood);
    out.posterior.push_back(step.posterior);
    b = step.next_belief;
    out.belief.push_back(b);
  }
  return out;
}

struct Smoothing {
  /// gamma[t][T] = P(T_t = T | episode), t = 0..n.
  std::vector<TrustDist> gamma;
  /// xi[t][T][T'] = P(T_t = T, T_{t+1} = T' | episode), t = 0..n-1.
  std::vector<TrustPair> xi;
  double log_likelihood = 0.0;
};

/// Scaled forward-backward pass.
inline Smoothing posterior_smoothing(const ModelParams& params, std::span<const TrialRecord> episode,
                                     std::size_t episode_index = 0) {
  const std::size_t n = episode.size();
  std::vector<TrustDist> predicted(n + 1);
  std::vector<TrustDist> emis(n);
  std::vector<TrustPair> trans(n);
  std::vector<double> scale(n);

  Smoothing out;
  predicted[0] = {1.0 - params.initial_trust_high, params.initial_trust_high};
  for (std::size_t t = 0; t < n; ++t) {
    emis[t] = detail::emission(params, episode[t]);
    trans[t] = detail::transition_matrix(params, episode[t]);
    TrustDist f{predicted[t][0] * emis[t][0], predicted[t][1] * emis[t][1]};
    scale[t] = f[0] + f[1];
    if (!(scale[t] > 0.0)) throw ZeroLikelihood(episode_index, t);
    out.log_likelihood += std::log(scale[t]);
    f[0] /= scale[t];
    f[1] /= scale[t];
    for (std::size_t j = 0; j < 2; ++j)
      predicted[t + 1][j] = f[0] * trans[t][0][j] + f[1] * trans[t][1][j];
  }

  std::vector<TrustDist> beta(n + 1);
  beta[n] = {1.0, 1.0};
  for (std::size_t t = n; t-- > 0;) {
    for (std::size_t i = 0; i < 2; ++i)
      beta[t][i] = emis[t][i] *
                   (trans[t][i][0] * beta[t + 1][0] + trans[t][i][1] * beta[t + 1][1]) /
                   scale[t];
  }

  out.gamma.resize(n + 1);
  for (std::size_t t = 0; t <= n; ++t) {
    TrustDist g{predicted[t][0] * beta[t][0], predicted[t][1] * beta[t][1]};
    const double s = g[0] + g[1];
    out.gamma[t] = {g[0] / s, g[1] / s};
  }
  out.xi.resize(n);
  for (std::size_t t = 0; t < n; ++t)
    for (std::size_t i = 0; i < 2; ++i)
      for (std::size_t j = 0; j < 2; ++j)
        out.xi[t][i][j] =
            predicted[t][i] * emis[t][i] * trans[t][i][j] * beta[t + 1][j] / scale[t];
  return out;
}

inline double log_likelihood(const ModelParams& params, const Dataset& dataset) {
  double total = 0.0;
  for (std::size_t k = 0; k < dataset.size(); ++k)
    total += forward_filter(params, dataset[k], k).log_likelihood;
  return total;
}

// ---------------------------------------------------------------------------
// Baum-Welch

struct FitConfig {
  int max_iters = 500;
  double tol = 1e-6;
  std::uint64_t seed = 0;
  /// Total number of EM runs. Run 0 starts from `init`; the others from
  /// parameters drawn uniformly in [0.05, 0.95].
  int restarts = 20;
  int threads = 1;
};

struct RestartSummary {
  int index = 0;
  double final_log_likelihood = 0.0;
  int iterations = 0;
  bool converged = false;
};

struct FitDiagnostics {
  int iterations = 0;
  std::vector<double> log_likelihood_trace;
  bool converged = false;
  int restart_index = 0;
  std::vector<RestartSummary> restarts;
  /// (C, a) contexts absent from the data.
  std::vector<std::pair<Complexity, RobotAction>> missing_contexts;
  /// Parameters whose conditioning context never occurs; kept at their initial value.
  std::vector<std::string> unidentifiable;
  bool trust_labels_swapped = false;
};

struct FitResult {
  ModelParams params;
  FitDiagnostics diagnostics;
};

/// Relabels High <-> Low; leaves the likelihood unchanged.
inline ModelParams swap_trust_labels(const ModelParams& p) {
  ModelParams q;
  q.initial_trust_high = 1.0 - p.initial_trust_high;
  for (auto e : kExperiences)
    for (auto c : kComplexities)
      for (auto a : kRobotActions) {
        q.transition(TrustState::High, e, c, a) = 1.0 - p.transition(TrustState::Low, e, c, a);
        q.transition(TrustState::Low, e, c, a) = 1.0 - p.transition(TrustState::High, e, c, a);
      }
  for (auto c : kComplexities)
    for (auto a : kRobotActions) {
      q.rely(TrustState::High, c, a) = p.rely(TrustState::Low, c, a);
      q.rely(TrustState::Low, c, a) = p.rely(TrustState::High, c, a);
    }
  return q;
}

/// High trust is, by convention, the state with the larger autonomous reliance.
inline bool trust_labels_inverted(const ModelParams& p) {
  double high = 0.0;
  double low = 0.0;
  for (auto c : kComplexities) {
    high += p.rely(TrustState::High, c, RobotAction::Autonomous);
    low += p.rely(TrustState::Low, c, RobotAction::Autonomous);
  }
  return high < low;
}

inline std::string transition_name(TrustState t, Experience e, Complexity c, RobotAction a) {
  return "P(T'=high|T=" + std::string(to_string(t)) + ",E'=" + std::string(to_string(e)) +
         ",C=" + std::string(to_string(c)) + ",a=" + std::string(to_string(a)) + ")";
}

inline std::string observation_name(TrustState t, Complexity c, RobotAction a) {
  return "P(o=rely|T=" + std::string(to_string(t)) + ",C=" + std::string(to_string(c)) +
         ",a=" + std::string(to_string(a)) + ")";
}

/// Neutral starting point for fitting: no preference in the trust dynamics,
/// High trust mildly more reliant so the two states start distinguishable.
inline ModelParams default_init_params() {
  ModelParams p;
  p.initial_trust_high = 0.5;
  for (auto e : kExperiences)
    for (auto c : kComplexities)
      for (auto a : kRobotActions) {
        p.transition(TrustState::High, e, c, a) = 0.8;
        p.transition(TrustState::Low, e, c, a) = 0.2;
      }
  for (auto c : kComplexities) {
    p.rely(TrustState::High, c, RobotAction::Autonomous) = 0.9;
    p.rely(TrustState::Low, c, RobotAction::Autonomous) = 0.5;
  }
  return p;
}

namespace detail {

struct SufficientStats {
  double log_likelihood = 0.0;
  double initial_high = 0.0;
  std::size_t episodes = 0;
  // [T][E'][C][a]
  std::array<std::array<std::array<std::array<double, 2>, 2>, 2>, 2> trans_up{};
  std::array<std::array<std::array<std::array<double, 2>, 2>, 2>, 2> trans_total{};
  // [T][C][a]
  std::array<std::array<std::array<double, 2>, 2>, 2> rely{};
  std::array<std::array<std::array<double, 2>, 2>, 2> total{};
};

inline SufficientStats e_step(const ModelParams& params, const Dataset& data) {
  SufficientStats s;
  s.episodes = data.size();
  for (std::size_t k = 0; k < data.size(); ++k) {
    const auto& ep = data[k];
    const Smoothing sm = posterior_smoothing(params, ep, k);
    s.log_likelihood += sm.log_likelihood;
    s.initial_high += sm.gamma[0][1];
    for (std::size_t t = 0; t < ep.size(); ++t) {
      const auto& r = ep[t];
      const auto e = idx(r.experience);
      const auto c = idx(r.complexity);
      const auto a = idx(r.robot_action);
      for (std::size_t i = 0; i < 2; ++i) {
        s.trans_up[i][e][c][a] += sm.xi[t][i][1];
        s.trans_total[i][e][c][a] += sm.xi[t][i][0] + sm.xi[t][i][1];
        if (r.human_action == HumanAction::Rely) s.rely[i][c][a] += sm.gamma[t][i];
        s.total[i][c][a] += sm.gamma[t][i];
      }
    }
  }
  return s;
}

inline ModelParams m_step(const SufficientStats& s, const ModelParams& prev) {
  ModelParams p = prev;
  if (s.episodes > 0) p.initial_trust_high = s.initial_high / static_cast<double>(s.episodes);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t e = 0; e < 2; ++e)
      for (std::size_t c = 0; c < 2; ++c)
        for (std::size_t a = 0; a < 2; ++a)
          if (s.trans_total[i][e][c][a] > 0.0)
            p.trust_transition[i][e][c][a] =
                std::clamp(s.trans_up[i][e][c][a] / s.trans_total[i][e][c][a], 0.0, 1.0);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t c = 0; c < 2; ++c)
      for (std::size_t a = 0; a < 2; ++a)
        if (s.total[i][c][a] > 0.0)
          p.observation[i][c][a] = std::clamp(s.rely[i][c][a] / s.total[i][c][a], 0.0, 1.0);
  for (auto t : kTrustStates)
    for (auto c : kComplexities) p.rely(t, c, RobotAction::SeekAssistance) = 0.0;
  return p;
}

inline ModelParams random_params(Rng& rng) {
  ModelParams p;
  p.initial_trust_high = rng.uniform(0.05, 0.95);
  for (auto t : kTrustStates)
    for (auto e : kExperiences)
      for (auto c : kComplexities)
        for (auto a : kRobotActions) p.transition(t, e, c, a) = rng.uniform(0.05, 0.95);
  for (auto t : kTrustStates)
    for (auto c : kComplexities) {
      p.rely(t, c, RobotAction::Autonomous) = rng.uniform(0.05, 0.95);
      p.rely(t, c, RobotAction::SeekAssistance) = 0.0;
    }
  return p;
}

/// Episodes in a content-defined order, so fits do not depend on input order.
inline Dataset canonical_order(const Dataset& data) {
  Dataset sorted = data;
  auto key = [](const TrialRecord& r) {
    return std::tuple(r.t, r.complexity, r.robot_action, r.human_action, r.experience, r.reward);
  };
  std::stable_sort(sorted.begin(), sorted.end(), [&](const Episode& x, const Episode& y) {
    return std::lexicographical_compare(
        x.begin(), x.end(), y.begin(), y.end(),
        [&](const TrialRecord& a, const TrialRecord& b) { return key(a) < key(b); });
  });
  return sorted;
}

struct RunResult {
  ModelParams params;
  std::vector<double> trace;
  int iterations = 0;
  bool converged = false;
};

inline RunResult run_em(const Dataset& data, ModelParams params, const FitConfig& cfg) {
  RunResult run;
  SufficientStats stats = e_step(params, data);
  run.trace.push_back(stats.log_likelihood);
  for (int it = 1; it <= cfg.max_iters; ++it) {
    params = m_step(stats, params);
    const double prev = stats.log_likelihood;
    stats = e_step(params, data);
    run.trace.push_back(stats.log_likelihood);
    run.iterations = it;
    if (std::abs(stats.log_likelihood - prev) < cfg.tol) {
      run.converged = true;
      break;
    }
  }
  run.params = params;
  return run;
}

}  // namespace detail

/**
 * Multi-episode Baum-Welch for the trust IOHMM.
 *
 * Transitions are re-estimated per (E', C, a) context from the pairwise
 * posteriors, reliance per (C, a) from the state posteriors. Contexts with no
 * expected counts keep their previous value. Reliance under assistance is
 * pinned to zero after every M-step. The best run across restarts is
 * returned, relabelled so that High trust is the more reliant state.
 */
inline FitResult baum_welch_fit(const Dataset& dataset, const ModelParams& init,
                                const FitConfig& config = {}) {
  if (dataset.empty()) throw DegenerateDataset("empty dataset");
  if (!validate_params(init).empty()) throw Error("initial parameters are invalid");

  const Dataset data = detail::canonical_order(dataset);

  FitDiagnostics diag;
  std::array<std::array<bool, 2>, 2> seen_ca{};
  std::array<std::array<std::array<bool, 2>, 2>, 2> seen_eca{};
  for (const auto& ep : data)
    for (const auto& r : ep) {
      seen_ca[idx(r.complexity)][idx(r.robot_action)] = true;
      seen_eca[idx(r.experience)][idx(r.complexity)][idx(r.robot_action)] = true;
    }
  for (auto c : kComplexities)
    for (auto a : kRobotActions)
      if (!seen_ca[idx(c)][idx(a)]) diag.missing_contexts.emplace_back(c, a);
  for (auto t : kTrustStates)
    for (auto e : kExperiences)
      for (auto c : kComplexities)
        for (auto a : kRobotActions)
          if (!seen_eca[idx(e)][idx(c)][idx(a)])
            diag.unidentifiable.push_back(transition_name(t, e, c, a));
  for (auto t : kTrustStates)
    for (auto c : kComplexities)
      if (!seen_ca[idx(c)][idx(RobotAction::Autonomous)])
        diag.unidentifiable.push_back(observation_name(t, c, RobotAction::Autonomous));

  const int runs = std::max(config.restarts, 1);
  std::vector<detail::RunResult> results(static_cast<std::size_t>(runs));
  parallel_for(results.size(), config.threads, [&](std::size_t r) {
    ModelParams start = init;
    if (r > 0) {
      Rng rng(derive_seed(config.seed, r));
      start = detail::random_params(rng);
    }
    results[r] = detail::run_em(data, start, config);
  });

  std::size_t best = 0;
  for (std::size_t r = 0; r < results.size(); ++r) {
    diag.restarts.push_back({static_cast<int>(r), results[r].trace.back(), results[r].iterations,
                             results[r].converged});
    if (results[r].trace.back() > results[best].trace.back()) best = r;
  }

  FitResult out;
  out.params = results[best].params;
  if (trust_labels_inverted(out.params)) {
    out.params = swap_trust_labels(out.params);
    diag.trust_labels_swapped = true;
  }
  diag.restart_index = static_cast<int>(best);
  diag.iterations = results[best].iterations;
  diag.converged = results[best].converged;
  diag.log_likelihood_trace = std::move(results[best].trace);
  out.diagnostics = std::move(diag);
  return out;
}

// ---------------------------------------------------------------------------
// Laplace approximation

/// A free (estimated) entry of ModelParams.
struct FreeParameter {
  enum class Kind { Initial, Transition, Observation };
  Kind kind = Kind::Initial;
  TrustState trust = TrustState::High;
  Experience experience = Experience::Reliable;
  Complexity complexity = Complexity::Low;
  RobotAction action = RobotAction::Autonomous;

  std::string name() const {
    switch (kind) {
      case Kind::Initial: return "P(T0=high)";
      case Kind::Transition: return transition_name(trust, experience, complexity, action);
      case Kind::Observation: return observation_name(trust, complexity, action);
    }
    return {};
  }

  double get(const ModelParams& p) const {
    switch (kind) {
      case Kind::Initial: return p.initial_trust_high;
      case Kind::Transition: return p.transition(trust, experience, complexity, action);
      case Kind::Observation: return p.rely(trust, complexity, action);
    }
    return 0.0;
  }

  void set(ModelParams& p, double v) const {
    switch (kind) {
      case Kind::Initial: p.initial_trust_high = v; break;
      case Kind::Transition: p.transition(trust, experience, complexity, action) = v; break;
      case Kind::Observation: p.rely(trust, complexity, action) = v; break;
    }
  }

  /// Trials (or episodes, for the initial state) in the conditioning context.
  std::size_t context_count(const Dataset& data) const {
    if (kind == Kind::Initial) return data.size();
    std::size_t n = 0;
    for (const auto& ep : data)
      for (const auto& r : ep) {
        if (r.complexity != complexity || r.robot_action != action) continue;
        if (kind == Kind::Transition && r.experience != experience) continue;
        ++n;
      }
    return n;
  }
};

/// The 21 free parameters: initial state, 16 transitions, 4 autonomous reliances.
inline std::vector<FreeParameter> free_parameters() {
  std::vector<FreeParameter> out;
  out.push_back({FreeParameter::Kind::Initial});
  for (auto c : kComplexities)
    for (auto a : {RobotAction::Autonomous, RobotAction::SeekAssistance})
      for (auto e : {Experience::Reliable, Experience::Faulty})
        for (auto t : {TrustState::High, TrustState::Low})
          out.push_back({FreeParameter::Kind::Transition, t, e, c, a});
  for (auto c : kComplexities)
    for (auto t : {TrustState::High, TrustState::Low})
      out.push_back({FreeParameter::Kind::Observation, t, Experience::Reliable, c,
                     RobotAction::Autonomous});
  return out;
}

struct UncertaintyEntry {
  std::string parameter;
  double estimate = 0.0;
  /// sqrt(diag((-H)^-1)); NaN when not estimated.
  double std_error = std::numeric_limits<double>::quiet_NaN();
  /// sqrt(diag(-H)); NaN when not estimated.
  double literal = std::numeric_limits<double>::quiet_NaN();
  std::size_t count = 0;
  bool identifiable = false;
  bool held_fixed = false;
  /// Estimated with one-sided differences.
  bool boundary = false;
};

struct UncertaintyReport {
  std::vector<UncertaintyEntry> entries;
  /// -H was not positive definite; errors come from its pseudo-inverse.
  bool singular = false;
  double step = 1e-4;
};

struct LaplaceOptions {
  double step = 1e-4;
  /// Parameter names excluded from the Hessian.
  std::vector<std::string> fixed;
};

/**
 * Standard errors from the curvature of the log-likelihood at `params`.
 *
 * The Hessian is taken over identifiable, non-fixed parameters by finite
 * differences. Parameters within two steps of 0 or 1 are differenced
 * inward only and marked as boundary.
 */
inline UncertaintyReport laplace_uncertainty(const ModelParams& params, const Dataset& dataset,
                                             const LaplaceOptions& options = {}) {
  const double h = options.step;
  UncertaintyReport report;
  report.step = h;

  const auto all = free_parameters();
  std::vector<std::size_t> active;
  std::vector<int> direction;  // 0 central, +1 forward, -1 backward
  for (std::size_t i = 0; i < all.size(); ++i) {
    UncertaintyEntry e;
    e.parameter = all[i].name();
    e.estimate = all[i].get(params);
    e.count = all[i].context_count(dataset);
    e.identifiable = e.count > 0;
    e.held_fixed = std::find(options.fixed.begin(), options.fixed.end(), e.parameter) !=
                   options.fixed.end();
    if (e.identifiable && !e.held_fixed) {
      active.push_back(i);
      int dir = 0;
      if (e.estimate < 2 * h) dir = +1;
      else if (e.estimate > 1.0 - 2 * h) dir = -1;
      e.boundary = dir != 0;
      direction.push_back(dir);
    }
    report.entries.push_back(std::move(e));
  }

  const std::size_t n = active.size();
  if (n == 0) return report;

  auto eval = [&](std::size_t i, double di, std::size_t j, double dj) {
    ModelParams p = params;
    const auto& pi = all[active[i]];
    pi.set(p, pi.get(p) + di);
    if (j != i || dj != 0.0) {
      const auto& pj = all[active[j]];
      pj.set(p, pj.get(p) + dj);
    }
    return log_likelihood(p, dataset);
  };

  const double f0 = log_likelihood(params, dataset);
  Eigen::MatrixXd hess(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    const int si = direction[i];
    if (si == 0) {
      hess(i, i) = (eval(i, h, i, 0) - 2 * f0 + eval(i, -h, i, 0)) / (h * h);
    } else {
      hess(i, i) = (f0 - 2 * eval(i, si * h, i, 0) + eval(i, 2 * si * h, i, 0)) / (h * h);
    }
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const int si = direction[i];
      const int sj = direction[j];
      double v;
      if (si == 0 && sj == 0) {
        v = (eval(i, h, j, h) - eval(i, h, j, -h) - eval(i, -h, j, h) + eval(i, -h, j, -h)) /
            (4 * h * h);
      } else {
        const double di = (si == 0 ? 1 : si) * h;
        const double dj = (sj == 0 ? 1 : sj) * h;
        v = (eval(i, di, j, dj) - eval(i, di, i, 0) - eval(j, dj, j, 0) + f0) / (di * dj);
      }
      hess(i, j) = hess(j, i) = v;
    }

  const Eigen::MatrixXd info = -hess;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(info);
  const Eigen::VectorXd lambda = eig.eigenvalues();
  const double scale = std::max(lambda.cwiseAbs().maxCoeff(), 1.0);
  Eigen::MatrixXd cov;
  if (lambda.minCoeff() > 1e-12 * scale) {
    cov = info.inverse();
  } else {
    report.singular = true;
    Eigen::VectorXd inv = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
    for (Eigen::Index k = 0; k < lambda.size(); ++k)
      if (lambda(k) > 1e-12 * scale) inv(k) = 1.0 / lambda(k);
    cov = eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose();
  }

  for (std::size_t i = 0; i < n; ++i) {
    auto& e = report.entries[active[i]];
    const auto k = static_cast<Eigen::Index>(i);
    e.std_error = std::sqrt(std::max(cov(k, k), 0.0));
    e.literal = info(k, k) >= 0 ? std::sqrt(info(k, k)) : std::numeric_limits<double>::quiet_NaN();
  }
  return report;
}

}  // namespace trust_pomdp
