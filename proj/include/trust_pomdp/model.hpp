#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace trust_pomdp {

enum class TrustState : std::uint8_t { Low = 0, High = 1 };
enum class Complexity : std::uint8_t { Low = 0, High = 1 };
enum class RobotAction : std::uint8_t { SeekAssistance = 0, Autonomous = 1 };
enum class HumanAction : std::uint8_t { Interrupt = 0, Rely = 1 };
enum class Experience : std::uint8_t { Faulty = 0, Reliable = 1 };

inline constexpr std::array kTrustStates{TrustState::Low, TrustState::High};
inline constexpr std::array kComplexities{Complexity::Low, Complexity::High};
inline constexpr std::array kRobotActions{RobotAction::SeekAssistance,
                                          RobotAction::Autonomous};
inline constexpr std::array kHumanActions{HumanAction::Interrupt, HumanAction::Rely};
inline constexpr std::array kExperiences{Experience::Faulty, Experience::Reliable};

template <class E>
constexpr std::size_t idx(E e) noexcept {
  return static_cast<std::size_t>(e);
}

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// String forms used by the trial log and parameter files.

inline std::string_view to_string(TrustState v) { return v == TrustState::High ? "high" : "low"; }
inline std::string_view to_string(Complexity v) { return v == Complexity::High ? "high" : "low"; }
inline std::string_view to_string(RobotAction v) {
  return v == RobotAction::Autonomous ? "auto" : "assist";
}
inline std::string_view to_string(HumanAction v) {
  return v == HumanAction::Rely ? "rely" : "interrupt";
}
inline std::string_view to_string(Experience v) {
  return v == Experience::Reliable ? "reliable" : "faulty";
}

template <class E>
E parse_enum(std::string_view s);

template <>
inline TrustState parse_enum<TrustState>(std::string_view s) {
  if (s == "high") return TrustState::High;
  if (s == "low") return TrustState::Low;
  throw ParseError("invalid trust state '" + std::string(s) + "'");
}
template <>
inline Complexity parse_enum<Complexity>(std::string_view s) {
  if (s == "high") return Complexity::High;
  if (s == "low") return Complexity::Low;
  throw ParseError("invalid complexity '" + std::string(s) + "'");
}
template <>
inline RobotAction parse_enum<RobotAction>(std::string_view s) {
  if (s == "auto") return RobotAction::Autonomous;
  if (s == "assist") return RobotAction::SeekAssistance;
  throw ParseError("invalid robot action '" + std::string(s) + "'");
}
template <>
inline HumanAction parse_enum<HumanAction>(std::string_view s) {
  if (s == "rely") return HumanAction::Rely;
  if (s == "interrupt") return HumanAction::Interrupt;
  throw ParseError("invalid human action '" + std::string(s) + "'");
}
template <>
inline Experience parse_enum<Experience>(std::string_view s) {
  if (s == "reliable") return Experience::Reliable;
  if (s == "faulty") return Experience::Faulty;
  throw ParseError("invalid experience '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------

/// One interaction step of a trial log.
struct TrialRecord {
  std::string episode_id;
  int t = 0;
  Complexity complexity = Complexity::Low;
  RobotAction robot_action = RobotAction::Autonomous;
  HumanAction human_action = HumanAction::Rely;
  Experience experience = Experience::Reliable;
  int reward = 0;

  friend bool operator==(const TrialRecord&, const TrialRecord&) = default;
  friend auto operator<=>(const TrialRecord&, const TrialRecord&) = default;
};

using Episode = std::vector<TrialRecord>;
using Dataset = std::vector<Episode>;

/**
 * Parameters of the trust IOHMM.
 *
 * Only the probability of the "positive" outcome is stored (next trust High,
 * human Rely); the complement is implied, so every conditional distribution
 * is normalized by construction.
 */
struct ModelParams {
  double initial_trust_high = 0.5;
  /// P(T' = High | T, E', C, a), indexed [T][E'][C][a].
  std::array<std::array<std::array<std::array<double, 2>, 2>, 2>, 2> trust_transition{};
  /// P(o = Rely | T, C, a), indexed [T][C][a].
  std::array<std::array<std::array<double, 2>, 2>, 2> observation{};

  double& transition(TrustState t, Experience e, Complexity c, RobotAction a) {
    return trust_transition[idx(t)][idx(e)][idx(c)][idx(a)];
  }
  double transition(TrustState t, Experience e, Complexity c, RobotAction a) const {
    return trust_transition[idx(t)][idx(e)][idx(c)][idx(a)];
  }
  double& rely(TrustState t, Complexity c, RobotAction a) {
    return observation[idx(t)][idx(c)][idx(a)];
  }
  double rely(TrustState t, Complexity c, RobotAction a) const {
    return observation[idx(t)][idx(c)][idx(a)];
  }

  /// P(o | T, C, a) for either human action.
  double observation_prob(HumanAction o, TrustState t, Complexity c, RobotAction a) const {
    const double p = rely(t, c, a);
    return o == HumanAction::Rely ? p : 1.0 - p;
  }

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

/// Environment stochastics and reward constants.
struct EnvConfig {
  double p_complex_high = 30.0 / 71.0;
  double p_success_low = 0.97;
  double p_success_high = 0.75;
  int reward_success = 3;
  int reward_assist = 1;
  int reward_interrupt = 0;
  int reward_failure = -4;
  double discount = 0.99;

  double p_success(Complexity c) const {
    return c == Complexity::High ? p_success_high : p_success_low;
  }

  friend bool operator==(const EnvConfig&, const EnvConfig&) = default;
};

// ---------------------------------------------------------------------------
// Fitted values from the 33-participant data-collection study.

/// Identity trust transition: P(H|H) = 1, P(H|L) = 0.
inline void set_transition_pair(ModelParams& p, Experience e, Complexity c, RobotAction a,
                                double high_to_high, double low_to_high) {
  p.transition(TrustState::High, e, c, a) = high_to_high;
  p.transition(TrustState::Low, e, c, a) = low_to_high;
}

inline ModelParams reference_params() {
  using enum Experience;
  ModelParams p;
  p.initial_trust_high = 0.82;

  // Assistance always leads to teleoperation.
  for (auto t : kTrustStates)
    for (auto c : kComplexities) p.rely(t, c, RobotAction::SeekAssistance) = 0.0;
  p.rely(TrustState::High, Complexity::Low, RobotAction::Autonomous) = 1.00;
  p.rely(TrustState::Low, Complexity::Low, RobotAction::Autonomous) = 0.97;
  p.rely(TrustState::High, Complexity::High, RobotAction::Autonomous) = 0.94;
  p.rely(TrustState::Low, Complexity::High, RobotAction::Autonomous) = 0.43;

  set_transition_pair(p, Reliable, Complexity::Low, RobotAction::Autonomous, 1.00, 0.00);
  set_transition_pair(p, Faulty, Complexity::Low, RobotAction::Autonomous, 0.71, 0.00);
  set_transition_pair(p, Faulty, Complexity::Low, RobotAction::SeekAssistance, 1.00, 0.00);
  set_transition_pair(p, Reliable, Complexity::High, RobotAction::Autonomous, 1.00, 0.64);
  set_transition_pair(p, Faulty, Complexity::High, RobotAction::Autonomous, 0.67, 0.12);
  set_transition_pair(p, Reliable, Complexity::High, RobotAction::SeekAssistance, 1.00, 0.13);
  // Unreachable: assistance in low complexity is never Reliable, in high never Faulty.
  set_transition_pair(p, Reliable, Complexity::Low, RobotAction::SeekAssistance, 1.00, 0.00);
  set_transition_pair(p, Faulty, Complexity::High, RobotAction::SeekAssistance, 1.00, 0.00);
  return p;
}

inline EnvConfig reference_env() { return EnvConfig{}; }

/// Assistance probabilities of the data-collection policy, {low, high}.
inline constexpr std::array<double, 2> kDataCollectionAssistProb{0.10, 0.33};

// ---------------------------------------------------------------------------

struct Violation {
  enum class Kind { Range, Structural };
  Kind kind;
  std::string where;
  double value;
};

inline bool is_probability(double p) { return std::isfinite(p) && p >= 0.0 && p <= 1.0; }

/// Checks every table entry; never throws.
inline std::vector<Violation> validate_params(const ModelParams& params) {
  std::vector<Violation> out;
  auto range = [&](double v, std::string where) {
    if (!is_probability(v)) out.push_back({Violation::Kind::Range, std::move(where), v});
  };
  range(params.initial_trust_high, "initial_trust_high");
  for (auto t : kTrustStates)
    for (auto e : kExperiences)
      for (auto c : kComplexities)
        for (auto a : kRobotActions)
          range(params.transition(t, e, c, a),
                "trust_transition[" + std::string(to_string(t)) + "," +
                    std::string(to_string(e)) + "," + std::string(to_string(c)) + "," +
                    std::string(to_string(a)) + "]");
  for (auto t : kTrustStates)
    for (auto c : kComplexities)
      for (auto a : kRobotActions) {
        const double v = params.rely(t, c, a);
        std::string where = "observation[" + std::string(to_string(t)) + "," +
                            std::string(to_string(c)) + "," + std::string(to_string(a)) + "]";
        if (!is_probability(v))
          out.push_back({Violation::Kind::Range, std::move(where), v});
        else if (a == RobotAction::SeekAssistance && v != 0.0)
          out.push_back({Violation::Kind::Structural, std::move(where), v});
      }
  return out;
}

inline std::vector<std::string> validate_env(const EnvConfig& env) {
  std::vector<std::string> out;
  if (!is_probability(env.p_complex_high)) out.emplace_back("p_complex_high");
  if (!is_probability(env.p_success_low)) out.emplace_back("p_success_low");
  if (!is_probability(env.p_success_high)) out.emplace_back("p_success_high");
  if (!(env.discount >= 0.0 && env.discount < 1.0)) out.emplace_back("discount");
  return out;
}

}  // namespace trust_pomdp
