#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "trust_pomdp/iohmm.hpp"
#include "trust_pomdp/model.hpp"

namespace trust_pomdp {

class NonConvergence : public Error {
 public:
  using Error::Error;
};

class NoData : public Error {
 public:
  explicit NoData(Complexity c)
      : Error("no autonomous trials in " + std::string(to_string(c)) + " complexity"),
        complexity_(c) {}
  Complexity complexity() const noexcept { return complexity_; }

 private:
  Complexity complexity_;
};

/// P(E' = Reliable | o, C, a), indexed [o][C][a].
struct ExperienceModel {
  std::array<std::array<std::array<double, 2>, 2>, 2> reliable{};

  double operator()(HumanAction o, Complexity c, RobotAction a) const {
    return reliable[idx(o)][idx(c)][idx(a)];
  }
};

inline ExperienceModel experience_model(const EnvConfig& env) {
  ExperienceModel m;
  for (auto c : kComplexities) {
    m.reliable[idx(HumanAction::Rely)][idx(c)][idx(RobotAction::Autonomous)] = env.p_success(c);
    m.reliable[idx(HumanAction::Interrupt)][idx(c)][idx(RobotAction::Autonomous)] = 0.0;
    // Assistance is labelled by complexity alone.
    const double assist = c == Complexity::High ? 1.0 : 0.0;
    for (auto o : kHumanActions) m.reliable[idx(o)][idx(c)][idx(RobotAction::SeekAssistance)] = assist;
  }
  return m;
}

/// P(E' = Reliable | T, C, a), marginalizing the human action.
inline double marginal_experience(const ModelParams& params, const ExperienceModel& em,
                                  TrustState trust, Complexity complexity, RobotAction action) {
  double p = 0.0;
  for (auto o : kHumanActions)
    p += em(o, complexity, action) * params.observation_prob(o, trust, complexity, action);
  return p;
}

/// Expected one-step reward given the trust state.
inline double pomdp_reward(const ModelParams& params, const ExperienceModel& em,
                           const EnvConfig& env, TrustState trust, Complexity complexity,
                           RobotAction action) {
  if (action == RobotAction::SeekAssistance) return env.reward_assist;
  const double rely = params.rely(trust, complexity, action);
  const double success = em(HumanAction::Rely, complexity, action);
  return env.reward_success * success * rely + env.reward_failure * (1.0 - success) * rely +
         env.reward_interrupt * (1.0 - rely);
}

// ---------------------------------------------------------------------------

/// Uniform grid on [0, 1] including both endpoints.
struct BeliefGrid {
  std::size_t n_bins = 101;

  explicit BeliefGrid(std::size_t n = 101) : n_bins(n) {
    if (n < 2) throw Error("belief grid needs at least 2 bins");
  }

  double center(std::size_t i) const {
    return static_cast<double>(i) / static_cast<double>(n_bins - 1);
  }

  std::size_t nearest(double b) const {
    const double x = std::clamp(b, 0.0, 1.0) * static_cast<double>(n_bins - 1);
    return static_cast<std::size_t>(std::lround(x));
  }

  /// Lower neighbour and weight on the upper neighbour.
  std::pair<std::size_t, double> bracket(double b) const {
    const double x = std::clamp(b, 0.0, 1.0) * static_cast<double>(n_bins - 1);
    auto lo = static_cast<std::size_t>(std::floor(x));
    if (lo >= n_bins - 1) return {n_bins - 2, 1.0};
    return {lo, x - static_cast<double>(lo)};
  }
};

/// Discretized belief MDP over (belief bin, E, C).
struct BeliefMdp {
  struct Edge {
    std::size_t next;
    double prob;
  };

  BeliefGrid grid;
  double discount = 0.99;
  /// transitions[state][action]
  std::vector<std::array<std::vector<Edge>, 2>> transitions;
  /// reward[state][action]
  std::vector<std::array<double, 2>> reward;

  std::size_t num_states() const { return grid.n_bins * 4; }

  static std::size_t state_index(std::size_t bin, Experience e, Complexity c) {
    return (bin * 2 + idx(e)) * 2 + idx(c);
  }
  static std::size_t bin_of(std::size_t s) { return s / 4; }
  static Experience experience_of(std::size_t s) { return static_cast<Experience>((s / 2) % 2); }
  static Complexity complexity_of(std::size_t s) { return static_cast<Complexity>(s % 2); }
};

/**
 * Builds the belief MDP.
 *
 * The next belief after a realized experience is propagated through the trust
 * transition and split linearly between its two neighbouring grid points.
 */
inline BeliefMdp build_belief_mdp(const ModelParams& params, const EnvConfig& env,
                                  const BeliefGrid& grid) {
  const ExperienceModel em = experience_model(env);
  BeliefMdp mdp;
  mdp.grid = grid;
  mdp.discount = env.discount;
  mdp.transitions.resize(mdp.num_states());
  mdp.reward.resize(mdp.num_states());

  const std::array<double, 2> p_next_c{1.0 - env.p_complex_high, env.p_complex_high};

  for (std::size_t bin = 0; bin < grid.n_bins; ++bin) {
    const double b = grid.center(bin);
    for (auto e : kExperiences)
      for (auto c : kComplexities)
        for (auto a : kRobotActions) {
          const std::size_t s = BeliefMdp::state_index(bin, e, c);
          mdp.reward[s][idx(a)] =
              b * pomdp_reward(params, em, env, TrustState::High, c, a) +
              (1.0 - b) * pomdp_reward(params, em, env, TrustState::Low, c, a);

          const double p_rel =
              b * marginal_experience(params, em, TrustState::High, c, a) +
              (1.0 - b) * marginal_experience(params, em, TrustState::Low, c, a);

          auto& row = mdp.transitions[s][idx(a)];
          auto add = [&row](std::size_t next, double p) {
            if (p <= 0.0) return;
            for (auto& edge : row)
              if (edge.next == next) {
                edge.prob += p;
                return;
              }
            row.push_back({next, p});
          };
          for (auto e_next : kExperiences) {
            const double pe = e_next == Experience::Reliable ? p_rel : 1.0 - p_rel;
            if (pe <= 0.0) continue;
            const double nb = belief_update(params, b, e_next, c, a);
            const auto [lo, w] = grid.bracket(nb);
            for (auto c_next : kComplexities) {
              const double pc = pe * p_next_c[idx(c_next)];
              add(BeliefMdp::state_index(lo, e_next, c_next), pc * (1.0 - w));
              add(BeliefMdp::state_index(lo + 1, e_next, c_next), pc * w);
            }
          }
          double total = 0.0;
          for (const auto& edge : row) total += edge.prob;
          for (auto& edge : row) edge.prob /= total;
          std::sort(row.begin(), row.end(),
                    [](const auto& x, const auto& y) { return x.next < y.next; });
        }
  }
  return mdp;
}

struct Policy {
  BeliefGrid grid;
  /// action[state] over BeliefMdp state indices.
  std::vector<RobotAction> action;
  std::vector<double> value;
  /// Per complexity: lowest belief of the top run of Autonomous bins.
  std::array<std::optional<double>, 2> threshold{};
  /// Per complexity: the action map switches at most once along the belief axis.
  std::array<bool, 2> single_switch{true, true};
  int sweeps = 0;
  /// Sup-norm change of each sweep.
  std::vector<double> residuals;

  RobotAction at(std::size_t bin, Experience e, Complexity c) const {
    return action[BeliefMdp::state_index(bin, e, c)];
  }

  /// Action for a continuous belief, using the nearest grid point.
  RobotAction act(double belief, Experience e, Complexity c) const {
    return at(grid.nearest(belief), e, c);
  }
};

namespace detail {

inline double q_value(const BeliefMdp& mdp, const std::vector<double>& v, std::size_t s,
                      std::size_t a) {
  double q = 0.0;
  for (const auto& edge : mdp.transitions[s][a]) q += edge.prob * v[edge.next];
  return mdp.reward[s][a] + mdp.discount * q;
}

inline void summarize_thresholds(Policy& policy) {
  for (auto c : kComplexities) {
    const std::size_t n = policy.grid.n_bins;
    std::size_t lowest = n;
    for (std::size_t bin = n; bin-- > 0;) {
      if (policy.at(bin, Experience::Reliable, c) != RobotAction::Autonomous) break;
      lowest = bin;
    }
    if (lowest < n) policy.threshold[idx(c)] = policy.grid.center(lowest);
    bool single = true;
    for (std::size_t bin = 0; bin < std::min(lowest, n); ++bin)
      if (policy.at(bin, Experience::Reliable, c) == RobotAction::Autonomous) single = false;
    policy.single_switch[idx(c)] = single;
  }
}

}  // namespace detail

/**
 * Synchronous value iteration. Exact ties go to SeekAssistance.
 */
inline Policy value_iteration(const BeliefMdp& mdp, double tol = 1e-8, int max_sweeps = 100000) {
  if (!(mdp.discount >= 0.0 && mdp.discount < 1.0)) throw Error("discount must lie in [0, 1)");
  const std::size_t n = mdp.num_states();
  std::vector<double> v(n, 0.0);
  std::vector<double> next(n);
  Policy policy;
  policy.grid = mdp.grid;

  bool converged = false;
  for (int sweep = 1; sweep <= max_sweeps; ++sweep) {
    double delta = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
      next[s] = std::max(detail::q_value(mdp, v, s, 0), detail::q_value(mdp, v, s, 1));
      delta = std::max(delta, std::abs(next[s] - v[s]));
    }
    v.swap(next);
    policy.sweeps = sweep;
    policy.residuals.push_back(delta);
    if (delta < tol) {
      converged = true;
      break;
    }
  }
  if (!converged)
    throw NonConvergence("value iteration did not reach tolerance in " +
                         std::to_string(max_sweeps) + " sweeps");

  policy.action.resize(n);
  for (std::size_t s = 0; s < n; ++s) {
    const double assist = detail::q_value(mdp, v, s, idx(RobotAction::SeekAssistance));
    const double autonomous = detail::q_value(mdp, v, s, idx(RobotAction::Autonomous));
    policy.action[s] = autonomous > assist ? RobotAction::Autonomous : RobotAction::SeekAssistance;
  }
  policy.value = std::move(v);
  detail::summarize_thresholds(policy);
  return policy;
}

// ---------------------------------------------------------------------------
// Trust-agnostic baseline

struct BaselineResult {
  /// expected[a][C]
  std::array<std::array<double, 2>, 2> expected{};
  std::array<RobotAction, 2> best{};

  double operator()(RobotAction a, Complexity c) const { return expected[idx(a)][idx(c)]; }
};

inline BaselineResult trust_agnostic_baseline(double interrupt_prob_low, double interrupt_prob_high,
                                              const EnvConfig& env) {
  BaselineResult out;
  for (auto c : kComplexities) {
    const double q = c == Complexity::High ? interrupt_prob_high : interrupt_prob_low;
    const double ps = env.p_success(c);
    const double autonomous = env.reward_success * (1.0 - q) * ps +
                              env.reward_failure * (1.0 - q) * (1.0 - ps) +
                              env.reward_interrupt * q;
    out.expected[idx(RobotAction::Autonomous)][idx(c)] = autonomous;
    out.expected[idx(RobotAction::SeekAssistance)][idx(c)] = env.reward_assist;
    out.best[idx(c)] =
        autonomous > env.reward_assist ? RobotAction::Autonomous : RobotAction::SeekAssistance;
  }
  return out;
}

struct InterruptEstimate {
  /// Interrupt frequency per complexity.
  std::array<double, 2> q{};
  std::array<std::size_t, 2> interrupts{};
  std::array<std::size_t, 2> autonomous{};
};

inline InterruptEstimate empirical_interrupt_probs(const Dataset& dataset) {
  InterruptEstimate est;
  for (const auto& ep : dataset)
    for (const auto& r : ep) {
      if (r.robot_action != RobotAction::Autonomous) continue;
      ++est.autonomous[idx(r.complexity)];
      if (r.human_action == HumanAction::Interrupt) ++est.interrupts[idx(r.complexity)];
    }
  for (auto c : kComplexities) {
    if (est.autonomous[idx(c)] == 0) throw NoData(c);
    est.q[idx(c)] = static_cast<double>(est.interrupts[idx(c)]) /
                    static_cast<double>(est.autonomous[idx(c)]);
  }
  return est;
}

}  // namespace trust_pomdp
