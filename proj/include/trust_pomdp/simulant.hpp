#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "trust_pomdp/iohmm.hpp"
#include "trust_pomdp/model.hpp"
#include "trust_pomdp/parallel.hpp"
#include "trust_pomdp/rng.hpp"
#include "trust_pomdp/solver.hpp"

namespace trust_pomdp {

class MissingOutcome : public Error {
 public:
  MissingOutcome() : Error("autonomous attempt with reliance needs a success/failure outcome") {}
};

class InconsistentTriple : public Error {
 public:
  using Error::Error;
};

/// Experience the supervisor takes away from a trial.
inline Experience label_experience(RobotAction action, HumanAction human_action,
                                   Complexity complexity,
                                   std::optional<bool> autonomous_success = std::nullopt) {
  if (action == RobotAction::SeekAssistance)
    return complexity == Complexity::High ? Experience::Reliable : Experience::Faulty;
  if (human_action == HumanAction::Interrupt) return Experience::Faulty;
  if (!autonomous_success) throw MissingOutcome();
  return *autonomous_success ? Experience::Reliable : Experience::Faulty;
}

inline int trial_reward(RobotAction action, HumanAction human_action, Experience experience,
                        const EnvConfig& env) {
  if (action == RobotAction::SeekAssistance) {
    if (human_action == HumanAction::Rely)
      throw InconsistentTriple("assistance request cannot be met with reliance");
    return env.reward_assist;
  }
  if (human_action == HumanAction::Interrupt) {
    if (experience == Experience::Reliable)
      throw InconsistentTriple("an interrupted attempt is always faulty");
    return env.reward_interrupt;
  }
  return experience == Experience::Reliable ? env.reward_success : env.reward_failure;
}

/// Problems with a single log record; empty when it is consistent.
inline std::vector<std::string> check_record(const TrialRecord& r, const EnvConfig& env) {
  std::vector<std::string> issues;
  if (r.robot_action == RobotAction::SeekAssistance && r.human_action != HumanAction::Interrupt)
    issues.emplace_back("assistance must be followed by teleoperation");
  if (r.robot_action == RobotAction::SeekAssistance ||
      r.human_action == HumanAction::Interrupt) {
    if (label_experience(r.robot_action, r.human_action, r.complexity) != r.experience)
      issues.emplace_back("experience label inconsistent with action and complexity");
  }
  try {
    if (trial_reward(r.robot_action, r.human_action, r.experience, env) != r.reward)
      issues.emplace_back("reward inconsistent with action, response and experience");
  } catch (const InconsistentTriple& e) {
    issues.emplace_back(e.what());
  }
  return issues;
}

// ---------------------------------------------------------------------------

struct StepResult {
  TrialRecord record;
  TrustState next_trust;
};

/**
 * Samples one trial from the behaviour model. Always consumes three uniforms
 * (human action, outcome, trust transition) so paired runs stay aligned.
 */
inline StepResult step(const ModelParams& params, const EnvConfig& env, TrustState trust,
                       Complexity complexity, RobotAction action, Rng& rng) {
  const double u_human = rng.uniform();
  const double u_outcome = rng.uniform();
  const double u_trust = rng.uniform();

  StepResult out;
  auto& rec = out.record;
  rec.complexity = complexity;
  rec.robot_action = action;
  rec.human_action = u_human < params.rely(trust, complexity, action) ? HumanAction::Rely
                                                                      : HumanAction::Interrupt;
  std::optional<bool> success;
  if (action == RobotAction::Autonomous && rec.human_action == HumanAction::Rely)
    success = u_outcome < env.p_success(complexity);
  rec.experience = label_experience(action, rec.human_action, complexity, success);
  rec.reward = trial_reward(action, rec.human_action, rec.experience, env);
  const double up = params.transition(trust, rec.experience, complexity, action);
  out.next_trust = u_trust < up ? TrustState::High : TrustState::Low;
  return out;
}

// ---------------------------------------------------------------------------
// Robot policies

struct StaticPolicy {
  /// Assistance probability per complexity.
  std::array<double, 2> assist_prob{0.10, 0.33};
};
struct ThresholdPolicy {
  std::shared_ptr<const Policy> policy;
};
struct AlwaysAutonomous {};
struct AlwaysAssist {};

using RobotPolicy = std::variant<StaticPolicy, ThresholdPolicy, AlwaysAutonomous, AlwaysAssist>;

inline RobotPolicy data_collection_policy() {
  return StaticPolicy{kDataCollectionAssistProb};
}

/// What a policy sees when choosing an action.
struct PolicyContext {
  double belief;
  Experience last_experience;
  Complexity complexity;
  double u;  ///< uniform draw for randomized policies
};

inline RobotAction choose_action(const RobotPolicy& policy, const PolicyContext& ctx) {
  struct Visitor {
    const PolicyContext& ctx;
    RobotAction operator()(const StaticPolicy& p) const {
      return ctx.u < p.assist_prob[idx(ctx.complexity)] ? RobotAction::SeekAssistance
                                                        : RobotAction::Autonomous;
    }
    RobotAction operator()(const ThresholdPolicy& p) const {
      return p.policy->act(ctx.belief, ctx.last_experience, ctx.complexity);
    }
    RobotAction operator()(const AlwaysAutonomous&) const { return RobotAction::Autonomous; }
    RobotAction operator()(const AlwaysAssist&) const { return RobotAction::SeekAssistance; }
  };
  return std::visit(Visitor{ctx}, policy);
}

struct EpisodeConfig {
  int n_trials = 71;
  /// Fixed complexity schedule; i.i.d. draws from the environment when empty.
  std::optional<std::vector<Complexity>> schedule;
  /// Forced initial trust; sampled from the model when empty.
  std::optional<TrustState> initial_trust;
  std::uint64_t seed = 0;
  std::string episode_id = "0";
};

/**
 * Closed-loop episode. Threshold policies act on the filtered belief, which
 * is updated with the same filter step used for inference. The first trial
 * sees a Reliable previous experience.
 */
inline Episode run_episode(const ModelParams& params, const EnvConfig& env,
                           const RobotPolicy& policy, const EpisodeConfig& cfg) {
  if (cfg.schedule && cfg.schedule->size() != static_cast<std::size_t>(cfg.n_trials))
    throw Error("complexity schedule length differs from the number of trials");

  Rng rng(cfg.seed);
  const double u_init = rng.uniform();
  TrustState trust = cfg.initial_trust.value_or(
      u_init < params.initial_trust_high ? TrustState::High : TrustState::Low);

  Episode out;
  out.reserve(static_cast<std::size_t>(std::max(cfg.n_trials, 0)));
  double belief = params.initial_trust_high;
  Experience last = Experience::Reliable;
  for (int t = 0; t < cfg.n_trials; ++t) {
    const double u_complexity = rng.uniform();
    const double u_policy = rng.uniform();
    const Complexity c = cfg.schedule ? (*cfg.schedule)[static_cast<std::size_t>(t)]
                         : u_complexity < env.p_complex_high ? Complexity::High
                                                             : Complexity::Low;
    const RobotAction a = choose_action(policy, {belief, last, c, u_policy});
    StepResult s = step(params, env, trust, c, a, rng);
    s.record.episode_id = cfg.episode_id;
    s.record.t = t;

    const FilterStep f = filter_step(params, belief, s.record);
    if (f.likelihood > 0.0) belief = f.next_belief;
    last = s.record.experience;
    trust = s.next_trust;
    out.push_back(std::move(s.record));
  }
  return out;
}

/// Episode i uses seed derive_seed(master_seed, i) and id "i".
inline Dataset simulate_dataset(const ModelParams& params, const EnvConfig& env,
                                const RobotPolicy& policy, int episodes, EpisodeConfig base,
                                std::uint64_t master_seed, int threads = 1) {
  Dataset data(static_cast<std::size_t>(std::max(episodes, 0)));
  parallel_for(data.size(), threads, [&](std::size_t i) {
    EpisodeConfig cfg = base;
    cfg.seed = derive_seed(master_seed, i);
    cfg.episode_id = std::to_string(i);
    data[i] = run_episode(params, env, policy, cfg);
  });
  return data;
}

}  // namespace trust_pomdp
