#pragma once

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "trust_pomdp/eval.hpp"
#include "trust_pomdp/iohmm.hpp"
#include "trust_pomdp/model.hpp"
#include "trust_pomdp/simulant.hpp"
#include "trust_pomdp/solver.hpp"

namespace trust_pomdp::io {

using json = nlohmann::ordered_json;

namespace detail {

template <class T>
T field(const json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key))
    throw ParseError(where + ": missing field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ParseError(where + ": field '" + key + "' has the wrong type");
  }
}

template <class E>
E enum_field(const json& j, const char* key, const std::string& where) {
  const auto s = field<std::string>(j, key, where);
  try {
    return parse_enum<E>(s);
  } catch (const ParseError& e) {
    throw ParseError(where + ": " + e.what());
  }
}

inline json optional_number(const std::optional<double>& v) {
  return v ? json(*v) : json(nullptr);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// EnvConfig / ModelParams

inline json to_json(const EnvConfig& env) {
  return json{{"p_complex_high", env.p_complex_high}, {"p_success_low", env.p_success_low},
              {"p_success_high", env.p_success_high}, {"reward_success", env.reward_success},
              {"reward_assist", env.reward_assist},   {"reward_interrupt", env.reward_interrupt},
              {"reward_failure", env.reward_failure}, {"discount", env.discount}};
}

/// Missing keys keep their defaults.
inline EnvConfig env_from_json(const json& j, const std::string& where = "env") {
  if (!j.is_object()) throw ParseError(where + ": expected an object");
  EnvConfig env;
  auto num = [&](const char* key, double& out) {
    if (j.contains(key)) out = detail::field<double>(j, key, where);
  };
  auto integer = [&](const char* key, int& out) {
    if (j.contains(key)) out = detail::field<int>(j, key, where);
  };
  num("p_complex_high", env.p_complex_high);
  num("p_success_low", env.p_success_low);
  num("p_success_high", env.p_success_high);
  integer("reward_success", env.reward_success);
  integer("reward_assist", env.reward_assist);
  integer("reward_interrupt", env.reward_interrupt);
  integer("reward_failure", env.reward_failure);
  num("discount", env.discount);
  if (auto bad = validate_env(env); !bad.empty())
    throw ParseError(where + ": invalid value for '" + bad.front() + "'");
  return env;
}

inline json to_json(const ModelParams& p, const std::optional<EnvConfig>& env = std::nullopt) {
  json j;
  j["initial_trust_high"] = p.initial_trust_high;
  json trans = json::array();
  for (auto t : kTrustStates)
    for (auto e : kExperiences)
      for (auto c : kComplexities)
        for (auto a : kRobotActions)
          trans.push_back({{"trust", to_string(t)},
                           {"experience", to_string(e)},
                           {"complexity", to_string(c)},
                           {"action", to_string(a)},
                           {"p_high", p.transition(t, e, c, a)}});
  j["trust_transition"] = std::move(trans);
  json obs = json::array();
  for (auto t : kTrustStates)
    for (auto c : kComplexities)
      for (auto a : kRobotActions)
        obs.push_back({{"trust", to_string(t)},
                       {"complexity", to_string(c)},
                       {"action", to_string(a)},
                       {"p_rely", p.rely(t, c, a)}});
  j["observation"] = std::move(obs);
  if (env) j["env"] = to_json(*env);
  return j;
}

struct ParamsFile {
  ModelParams params;
  std::optional<EnvConfig> env;
};

/// Every table entry must be present exactly once.
inline ParamsFile params_from_json(const json& j) {
  ParamsFile out;
  out.params.initial_trust_high = detail::field<double>(j, "initial_trust_high", "params");

  std::array<std::array<std::array<std::array<bool, 2>, 2>, 2>, 2> seen_t{};
  const auto& trans = j.contains("trust_transition") ? j["trust_transition"] : json();
  if (!trans.is_array()) throw ParseError("params: 'trust_transition' must be an array");
  for (std::size_t i = 0; i < trans.size(); ++i) {
    const std::string where = "params.trust_transition[" + std::to_string(i) + "]";
    const auto t = detail::enum_field<TrustState>(trans[i], "trust", where);
    const auto e = detail::enum_field<Experience>(trans[i], "experience", where);
    const auto c = detail::enum_field<Complexity>(trans[i], "complexity", where);
    const auto a = detail::enum_field<RobotAction>(trans[i], "action", where);
    auto& flag = seen_t[idx(t)][idx(e)][idx(c)][idx(a)];
    if (flag) throw ParseError(where + ": duplicate entry");
    flag = true;
    out.params.transition(t, e, c, a) = detail::field<double>(trans[i], "p_high", where);
  }
  for (auto t : kTrustStates)
    for (auto e : kExperiences)
      for (auto c : kComplexities)
        for (auto a : kRobotActions)
          if (!seen_t[idx(t)][idx(e)][idx(c)][idx(a)])
            throw ParseError("params.trust_transition: missing entry " +
                             transition_name(t, e, c, a));

  std::array<std::array<std::array<bool, 2>, 2>, 2> seen_o{};
  const auto& obs = j.contains("observation") ? j["observation"] : json();
  if (!obs.is_array()) throw ParseError("params: 'observation' must be an array");
  for (std::size_t i = 0; i < obs.size(); ++i) {
    const std::string where = "params.observation[" + std::to_string(i) + "]";
    const auto t = detail::enum_field<TrustState>(obs[i], "trust", where);
    const auto c = detail::enum_field<Complexity>(obs[i], "complexity", where);
    const auto a = detail::enum_field<RobotAction>(obs[i], "action", where);
    auto& flag = seen_o[idx(t)][idx(c)][idx(a)];
    if (flag) throw ParseError(where + ": duplicate entry");
    flag = true;
    out.params.rely(t, c, a) = detail::field<double>(obs[i], "p_rely", where);
  }
  for (auto t : kTrustStates)
    for (auto c : kComplexities)
      for (auto a : kRobotActions)
        if (!seen_o[idx(t)][idx(c)][idx(a)])
          throw ParseError("params.observation: missing entry " + observation_name(t, c, a));

  if (j.contains("env")) out.env = env_from_json(j["env"], "params.env");
  return out;
}

// ---------------------------------------------------------------------------
// Trial log (JSON lines)

inline json to_json(const TrialRecord& r) {
  return json{{"episode_id", r.episode_id},
              {"t", r.t},
              {"complexity", to_string(r.complexity)},
              {"robot_action", to_string(r.robot_action)},
              {"human_action", to_string(r.human_action)},
              {"experience", to_string(r.experience)},
              {"reward", r.reward}};
}

inline TrialRecord record_from_json(const json& j, const std::string& where) {
  TrialRecord r;
  if (j.contains("episode_id") && j["episode_id"].is_number_integer())
    r.episode_id = std::to_string(j["episode_id"].get<long long>());
  else
    r.episode_id = detail::field<std::string>(j, "episode_id", where);
  r.t = detail::field<int>(j, "t", where);
  r.complexity = detail::enum_field<Complexity>(j, "complexity", where);
  r.robot_action = detail::enum_field<RobotAction>(j, "robot_action", where);
  r.human_action = detail::enum_field<HumanAction>(j, "human_action", where);
  r.experience = detail::enum_field<Experience>(j, "experience", where);
  r.reward = detail::field<int>(j, "reward", where);
  return r;
}

inline void write_trial_log(std::ostream& os, const Dataset& data) {
  for (const auto& ep : data)
    for (const auto& r : ep) os << to_json(r).dump() << '\n';
}

/// Groups records into episodes by episode_id, in order of first appearance.
inline Dataset read_trial_log(std::istream& is) {
  Dataset data;
  std::map<std::string, std::size_t> index;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = "line " + std::to_string(line_no);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(where + ": " + e.what());
    }
    TrialRecord r = record_from_json(j, where);
    auto [it, inserted] = index.emplace(r.episode_id, data.size());
    if (inserted) data.emplace_back();
    data[it->second].push_back(std::move(r));
  }
  return data;
}

// ---------------------------------------------------------------------------
// Policy

inline json to_json(const Policy& policy, double discount) {
  json j;
  j["grid"] = {{"n_bins", policy.grid.n_bins}};
  j["discount"] = discount;
  json thresholds = json::object();
  json single = json::object();
  for (auto c : kComplexities) {
    thresholds[std::string(to_string(c))] = detail::optional_number(policy.threshold[idx(c)]);
    single[std::string(to_string(c))] = policy.single_switch[idx(c)];
  }
  j["thresholds"] = std::move(thresholds);
  j["single_switch"] = std::move(single);
  json states = json::array();
  for (std::size_t s = 0; s < policy.action.size(); ++s) {
    const std::size_t bin = BeliefMdp::bin_of(s);
    states.push_back({{"bin", bin},
                      {"belief", policy.grid.center(bin)},
                      {"experience", to_string(BeliefMdp::experience_of(s))},
                      {"complexity", to_string(BeliefMdp::complexity_of(s))},
                      {"action", to_string(policy.action[s])},
                      {"value", policy.value[s]}});
  }
  j["states"] = std::move(states);
  return j;
}

inline Policy policy_from_json(const json& j) {
  const json grid = j.contains("grid") ? j["grid"] : json();
  const auto n_bins = detail::field<std::size_t>(grid, "n_bins", "policy.grid");
  Policy policy;
  policy.grid = BeliefGrid(n_bins);
  const std::size_t n = n_bins * 4;
  policy.action.assign(n, RobotAction::SeekAssistance);
  policy.value.assign(n, 0.0);
  std::vector<bool> seen(n, false);
  const auto& states = j.contains("states") ? j["states"] : json();
  if (!states.is_array()) throw ParseError("policy: 'states' must be an array");
  for (std::size_t i = 0; i < states.size(); ++i) {
    const std::string where = "policy.states[" + std::to_string(i) + "]";
    const auto bin = detail::field<std::size_t>(states[i], "bin", where);
    if (bin >= n_bins) throw ParseError(where + ": bin out of range");
    const auto e = detail::enum_field<Experience>(states[i], "experience", where);
    const auto c = detail::enum_field<Complexity>(states[i], "complexity", where);
    const std::size_t s = BeliefMdp::state_index(bin, e, c);
    policy.action[s] = detail::enum_field<RobotAction>(states[i], "action", where);
    if (states[i].contains("value")) policy.value[s] = detail::field<double>(states[i], "value", where);
    seen[s] = true;
  }
  for (std::size_t s = 0; s < n; ++s)
    if (!seen[s]) throw ParseError("policy: missing state for bin " + std::to_string(BeliefMdp::bin_of(s)));
  trust_pomdp::detail::summarize_thresholds(policy);
  return policy;
}

// ---------------------------------------------------------------------------
// Episode config, fit diagnostics, uncertainty, comparison, survey map

inline EpisodeConfig episode_config_from_json(const json& j) {
  EpisodeConfig cfg;
  if (j.contains("n_trials")) cfg.n_trials = detail::field<int>(j, "n_trials", "episode");
  if (j.contains("seed")) cfg.seed = detail::field<std::uint64_t>(j, "seed", "episode");
  if (j.contains("schedule")) {
    std::vector<Complexity> schedule;
    for (const auto& s : j["schedule"]) {
      if (!s.is_string()) throw ParseError("episode.schedule: expected strings");
      schedule.push_back(parse_enum<Complexity>(s.get<std::string>()));
    }
    cfg.schedule = std::move(schedule);
  }
  if (j.contains("initial_trust")) {
    const auto v = detail::field<std::string>(j, "initial_trust", "episode");
    if (v != "sample") cfg.initial_trust = parse_enum<TrustState>(v);
  }
  return cfg;
}

inline json to_json(const FitDiagnostics& d) {
  json j;
  j["iterations"] = d.iterations;
  j["converged"] = d.converged;
  j["restart_index"] = d.restart_index;
  j["trust_labels_swapped"] = d.trust_labels_swapped;
  j["log_likelihood_trace"] = d.log_likelihood_trace;
  json restarts = json::array();
  for (const auto& r : d.restarts)
    restarts.push_back({{"index", r.index},
                        {"final_log_likelihood", r.final_log_likelihood},
                        {"iterations", r.iterations},
                        {"converged", r.converged}});
  j["restarts"] = std::move(restarts);
  json missing = json::array();
  for (const auto& [c, a] : d.missing_contexts)
    missing.push_back({{"complexity", to_string(c)}, {"action", to_string(a)}});
  j["missing_contexts"] = std::move(missing);
  j["unidentifiable"] = d.unidentifiable;
  return j;
}

inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_uncertainty_csv(std::ostream& os, const UncertaintyReport& rep, bool literal) {
  os << "parameter,estimate,std_error,identifiable";
  if (literal) os << ",literal_sqrt_diag";
  os << ",count,boundary,fixed\n";
  for (const auto& e : rep.entries) {
    os << '"' << e.parameter << "\"," << format_double(e.estimate) << ','
       << format_double(e.std_error) << ',' << (e.identifiable ? "true" : "false");
    if (literal) os << ',' << format_double(e.literal);
    os << ',' << e.count << ',' << (e.boundary ? "true" : "false") << ','
       << (e.held_fixed ? "true" : "false") << '\n';
  }
}

inline json to_json(const ComparisonReport& r) {
  json j;
  j["n_participants"] = r.n_participants;
  j["n_trials"] = r.n_trials;
  j["seed"] = r.seed;
  j["policy_a"] = {{"mean", r.mean_a}, {"median", r.median_a}, {"cumulative_rewards", r.rewards_a}};
  j["policy_b"] = {{"mean", r.mean_b}, {"median", r.median_b}, {"cumulative_rewards", r.rewards_b}};
  j["t_test"] = {{"t", std::isinf(r.test.t) ? json(r.test.t > 0 ? "inf" : "-inf") : json(r.test.t)},
                 {"p", r.test.p},
                 {"dof", r.test.dof},
                 {"zero_variance", r.test.zero_variance}};
  return j;
}

inline void write_comparison_csv(std::ostream& os, const ComparisonReport& r) {
  os << "participant,policy_a,policy_b\n";
  for (std::size_t i = 0; i < r.rewards_a.size(); ++i)
    os << i << ',' << format_double(r.rewards_a[i]) << ',' << format_double(r.rewards_b[i]) << '\n';
}

inline LogisticFit logistic_from_json(const json& j) {
  LogisticFit fit;
  fit.amplitude = detail::field<double>(j, "L", "survey map");
  fit.slope = detail::field<double>(j, "k", "survey map");
  fit.center = detail::field<double>(j, "r0", "survey map");
  return fit;
}

// ---------------------------------------------------------------------------
// Files

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path + ": " + e.what());
  }
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out << content;
}

}  // namespace trust_pomdp::io
