// Command-line driver: simulate -> fit -> uncertainty -> solve -> evaluate,
// plus standalone filtering and manifest replay.

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "trust_pomdp/trust_pomdp.hpp"

namespace tp = trust_pomdp;
using tp::io::json;

namespace {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kConfig = 2,
  kData = 3,
  kConvergence = 4,
  kLikelihood = 5,
  kNumerical = 6,
};

/// Raised after outputs are written, to report a non-zero status.
struct ExitWith {
  int code;
  std::string message;
};

struct Manifest {
  std::string command;
  std::vector<std::string> argv;
  json config = json::object();
  std::uint64_t seed = 0;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
};

void write_manifest(const Manifest& m, const std::string& out_path,
                    std::chrono::steady_clock::time_point started) {
  const auto elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - started);
  json j;
  j["command"] = m.command;
  j["argv"] = m.argv;
  j["config"] = m.config;
  j["seed"] = m.seed;
  j["inputs"] = m.inputs;
  j["outputs"] = m.outputs;
  j["version"] = TRUST_POMDP_VERSION;
  j["created_unix"] = static_cast<long long>(std::time(nullptr));
  j["duration_seconds"] = elapsed.count();
  tp::io::write_text_file(out_path + ".manifest.json", j.dump(2) + "\n");
}

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag) {
  if (flag) return *flag;
  if (const char* env = std::getenv("TRUST_POMDP_SEED")) {
    try {
      return std::stoull(env);
    } catch (const std::exception&) {
      throw tp::ParseError("TRUST_POMDP_SEED is not an unsigned integer");
    }
  }
  return 0;
}

struct Inputs {
  tp::ModelParams params;
  tp::EnvConfig env;
};

Inputs load_inputs(const std::string& params_path, const std::string& env_path) {
  Inputs in{tp::reference_params(), tp::reference_env()};
  if (!params_path.empty()) {
    auto file = tp::io::params_from_json(tp::io::read_json_file(params_path));
    in.params = file.params;
    if (file.env) in.env = *file.env;
  }
  if (!env_path.empty()) in.env = tp::io::env_from_json(tp::io::read_json_file(env_path));
  if (auto bad = tp::validate_params(in.params); !bad.empty())
    throw tp::ParseError("invalid parameters: " + bad.front().where + " = " +
                         tp::io::format_double(bad.front().value));
  return in;
}

tp::Dataset load_log(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw tp::ParseError("cannot open " + path);
  return tp::io::read_trial_log(in);
}

tp::Policy solve_policy(const Inputs& in, std::size_t bins, double tol) {
  const auto mdp = tp::build_belief_mdp(in.params, in.env, tp::BeliefGrid(bins));
  return tp::value_iteration(mdp, tol);
}

/// static:pL,pH | threshold:policy.json | trust-aware | always-auto | always-assist
tp::RobotPolicy parse_policy(const std::string& spec, const Inputs& in) {
  if (spec == "always-auto") return tp::AlwaysAutonomous{};
  if (spec == "always-assist") return tp::AlwaysAssist{};
  if (spec == "trust-aware")
    return tp::ThresholdPolicy{std::make_shared<const tp::Policy>(solve_policy(in, 101, 1e-8))};
  if (spec.rfind("static:", 0) == 0) {
    const std::string body = spec.substr(7);
    const auto comma = body.find(',');
    if (comma == std::string::npos) throw tp::ParseError("policy '" + spec + "': expected static:pL,pH");
    tp::StaticPolicy p;
    try {
      std::size_t used = 0;
      p.assist_prob[0] = std::stod(body.substr(0, comma), &used);
      if (used != comma) throw std::invalid_argument("trailing");
      const std::string rest = body.substr(comma + 1);
      p.assist_prob[1] = std::stod(rest, &used);
      if (used != rest.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw tp::ParseError("policy '" + spec + "': probabilities are not numbers");
    }
    for (double q : p.assist_prob)
      if (!tp::is_probability(q)) throw tp::ParseError("policy '" + spec + "': probability out of [0, 1]");
    return p;
  }
  if (spec.rfind("threshold:", 0) == 0) {
    auto policy = tp::io::policy_from_json(tp::io::read_json_file(spec.substr(10)));
    return tp::ThresholdPolicy{std::make_shared<const tp::Policy>(std::move(policy))};
  }
  throw tp::ParseError("unknown policy spec '" + spec + "'");
}

std::string threshold_summary(const tp::Policy& policy) {
  std::ostringstream os;
  for (auto c : tp::kComplexities) {
    os << "C=" << tp::to_string(c) << ": ";
    const auto& th = policy.threshold[tp::idx(c)];
    if (!th)
      os << "seek assistance for all beliefs";
    else if (*th == 0.0)
      os << "autonomous for all beliefs";
    else
      os << "autonomous for belief >= " << *th << (policy.single_switch[tp::idx(c)] ? "" : " (not a single switch)");
    os << '\n';
  }
  return os.str();
}

struct Options {
  std::string params, env, out, log, init, policy = "static:0.10,0.33";
  std::string policy_a = "trust-aware", policy_b = "always-auto";
  std::string survey_map, episode_config, csv, diagnostics, manifest;
  std::optional<std::uint64_t> seed;
  int episodes = 33, trials = 71, threads = 1;
  int participants = 18, eval_trials = 40;
  std::optional<double> p_complex_high;
  int restarts = 20, max_iters = 500;
  double fit_tol = 1e-6, step = 1e-4, solve_tol = 1e-8;
  std::optional<double> gamma;
  std::size_t grid_bins = 101;
  bool literal = false, allow_pseudo = false;
};

int run(int argc, char** argv);

int dispatch(CLI::App& app, Options& o, const std::vector<std::string>& argv) {
  const auto started = std::chrono::steady_clock::now();
  Manifest m;
  m.argv = argv;

  if (auto* sub = app.get_subcommand("simulate"); sub->parsed()) {
    m.command = "simulate";
    const Inputs in = load_inputs(o.params, o.env);
    const auto policy = parse_policy(o.policy, in);
    tp::EpisodeConfig base;
    if (!o.episode_config.empty()) {
      base = tp::io::episode_config_from_json(tp::io::read_json_file(o.episode_config));
      m.inputs.push_back(o.episode_config);
      if (sub->count("--trials") == 0) o.trials = base.n_trials;
    }
    base.n_trials = o.trials;
    if (base.schedule && base.schedule->size() != static_cast<std::size_t>(o.trials))
      throw tp::ParseError("episode config: schedule length differs from --trials");
    m.seed = resolve_seed(o.seed);
    const auto data = tp::simulate_dataset(in.params, in.env, policy, o.episodes, base, m.seed, o.threads);
    std::ostringstream os;
    tp::io::write_trial_log(os, data);
    tp::io::write_text_file(o.out, os.str());
    m.config = {{"params", tp::io::to_json(in.params)}, {"env", tp::io::to_json(in.env)},
                {"policy", o.policy}, {"episodes", o.episodes}, {"trials", o.trials},
                {"threads", o.threads}};
    m.outputs = {o.out};
    if (!o.params.empty()) m.inputs.push_back(o.params);
    std::cout << "wrote " << o.episodes << " episodes x " << o.trials << " trials to " << o.out << '\n';
  } else if (app.get_subcommand("fit")->parsed()) {
    m.command = "fit";
    const auto data = load_log(o.log);
    m.inputs.push_back(o.log);
    tp::ModelParams init = tp::default_init_params();
    std::optional<tp::EnvConfig> env;
    if (!o.init.empty()) {
      const Inputs in = load_inputs(o.init, "");
      init = in.params;
      env = in.env;
      m.inputs.push_back(o.init);
    }
    if (!o.env.empty()) env = tp::io::env_from_json(tp::io::read_json_file(o.env));
    tp::FitConfig cfg;
    cfg.max_iters = o.max_iters;
    cfg.tol = o.fit_tol;
    cfg.restarts = o.restarts;
    cfg.threads = o.threads;
    cfg.seed = m.seed = resolve_seed(o.seed);
    const auto fit = tp::baum_welch_fit(data, init, cfg);
    const std::string diag_path = o.diagnostics.empty() ? o.out + ".diagnostics.json" : o.diagnostics;
    tp::io::write_text_file(o.out, tp::io::to_json(fit.params, env).dump(2) + "\n");
    tp::io::write_text_file(diag_path, tp::io::to_json(fit.diagnostics).dump(2) + "\n");
    m.outputs = {o.out, diag_path};
    m.config = {{"restarts", cfg.restarts}, {"tol", cfg.tol}, {"max_iters", cfg.max_iters},
                {"threads", o.threads}, {"init", tp::io::to_json(init)}};
    std::cout << "log-likelihood " << fit.diagnostics.log_likelihood_trace.back() << " after "
              << fit.diagnostics.iterations << " iterations (restart " << fit.diagnostics.restart_index
              << ")\n";
    write_manifest(m, o.out, started);
    if (!fit.diagnostics.missing_contexts.empty()) {
      std::string missing;
      for (const auto& [c, a] : fit.diagnostics.missing_contexts)
        missing += " (C=" + std::string(tp::to_string(c)) + ", a=" + std::string(tp::to_string(a)) + ")";
      throw ExitWith{kData, "degenerate dataset; contexts never observed:" + missing};
    }
    return kOk;
  } else if (app.get_subcommand("uncertainty")->parsed()) {
    m.command = "uncertainty";
    const Inputs in = load_inputs(o.params, "");
    const auto data = load_log(o.log);
    m.inputs = {o.params, o.log};
    tp::LaplaceOptions opts;
    opts.step = o.step;
    const auto report = tp::laplace_uncertainty(in.params, data, opts);
    std::ostringstream os;
    tp::io::write_uncertainty_csv(os, report, o.literal);
    tp::io::write_text_file(o.out, os.str());
    m.outputs = {o.out};
    m.config = {{"step", o.step}, {"literal_formula", o.literal}, {"allow_pseudo", o.allow_pseudo},
                {"singular", report.singular}};
    write_manifest(m, o.out, started);
    if (report.singular) {
      if (!o.allow_pseudo)
        throw ExitWith{kNumerical, "negative Hessian is not positive definite (use --allow-pseudo)"};
      std::cerr << "warning: singular Hessian, standard errors from the pseudo-inverse\n";
    }
    return kOk;
  } else if (app.get_subcommand("solve")->parsed()) {
    m.command = "solve";
    Inputs in = load_inputs(o.params, o.env);
    if (o.gamma) in.env.discount = *o.gamma;
    if (!(in.env.discount >= 0.0 && in.env.discount < 1.0))
      throw tp::ParseError("--gamma must lie in [0, 1)");
    const auto policy = solve_policy(in, o.grid_bins, o.solve_tol);
    tp::io::write_text_file(o.out, tp::io::to_json(policy, in.env.discount).dump(2) + "\n");
    m.outputs = {o.out};
    m.config = {{"params", tp::io::to_json(in.params)}, {"env", tp::io::to_json(in.env)},
                {"grid_bins", o.grid_bins}, {"tol", o.solve_tol}};
    std::cout << threshold_summary(policy);
  } else if (app.get_subcommand("filter")->parsed()) {
    m.command = "filter";
    const Inputs in = load_inputs(o.params, "");
    const auto data = load_log(o.log);
    m.inputs = {o.params, o.log};
    std::optional<tp::LogisticFit> survey;
    if (!o.survey_map.empty()) {
      survey = tp::io::logistic_from_json(tp::io::read_json_file(o.survey_map));
      m.inputs.push_back(o.survey_map);
    }
    std::ostringstream os;
    os << "episode_id,t,belief" << (survey ? ",survey" : "") << '\n';
    for (std::size_t k = 0; k < data.size(); ++k) {
      const auto traj = tp::forward_filter(in.params, data[k], k);
      for (std::size_t t = 0; t < traj.belief.size(); ++t) {
        os << data[k].front().episode_id << ',' << t << ',' << tp::io::format_double(traj.belief[t]);
        if (survey) {
          os << ',';
          try {
            os << tp::io::format_double(tp::belief_to_survey(*survey, traj.belief[t]));
          } catch (const tp::OutOfRange&) {
          }
        }
        os << '\n';
      }
    }
    tp::io::write_text_file(o.out, os.str());
    m.outputs = {o.out};
  } else if (app.get_subcommand("evaluate")->parsed()) {
    m.command = "evaluate";
    Inputs in = load_inputs(o.params, o.env);
    in.env.p_complex_high = o.p_complex_high.value_or(0.5);
    const auto a = parse_policy(o.policy_a, in);
    const auto b = parse_policy(o.policy_b, in);
    m.seed = resolve_seed(o.seed);
    const auto rep = tp::monte_carlo_compare(in.params, in.env, a, b, o.participants, o.eval_trials,
                                             m.seed, o.threads);
    const std::string csv = o.csv.empty() ? o.out + ".csv" : o.csv;
    json report = tp::io::to_json(rep);
    report["policy_a"]["spec"] = o.policy_a;
    report["policy_b"]["spec"] = o.policy_b;
    tp::io::write_text_file(o.out, report.dump(2) + "\n");
    std::ostringstream os;
    tp::io::write_comparison_csv(os, rep);
    tp::io::write_text_file(csv, os.str());
    m.outputs = {o.out, csv};
    m.config = {{"params", tp::io::to_json(in.params)}, {"env", tp::io::to_json(in.env)},
                {"policy_a", o.policy_a}, {"policy_b", o.policy_b},
                {"participants", o.participants}, {"trials", o.eval_trials}, {"threads", o.threads}};
    std::cout << "policy A (" << o.policy_a << "): median " << rep.median_a << ", mean " << rep.mean_a << '\n'
              << "policy B (" << o.policy_b << "): median " << rep.median_b << ", mean " << rep.mean_b << '\n'
              << "t = " << rep.test.t << ", p = " << rep.test.p << '\n';
  } else if (app.get_subcommand("replay")->parsed()) {
    const json j = tp::io::read_json_file(o.manifest);
    std::vector<std::string> args;
    try {
      args = j.at("argv").get<std::vector<std::string>>();
    } catch (const json::exception&) {
      throw tp::ParseError(o.manifest + ": missing argv");
    }
    std::vector<char*> ptrs;
    for (auto& s : args) ptrs.push_back(s.data());
    return run(static_cast<int>(ptrs.size()), ptrs.data());
  }

  write_manifest(m, o.out, started);
  return kOk;
}

int run(int argc, char** argv) {
  CLI::App app{"Trust-aware assistance seeking: simulate, fit, solve and evaluate"};
  app.require_subcommand(1);
  app.set_version_flag("--version", TRUST_POMDP_VERSION);
  Options o;

  auto add_seed = [&](CLI::App* sub) {
    sub->add_option("--seed", o.seed, "Master seed (falls back to TRUST_POMDP_SEED)");
  };
  auto add_threads = [&](CLI::App* sub) {
    sub->add_option("--threads", o.threads, "Worker threads")->check(CLI::PositiveNumber);
  };

  auto* sim = app.add_subcommand("simulate", "Simulate trial logs with the behaviour model");
  sim->add_option("--params", o.params, "Parameter file (default: fitted reference values)");
  sim->add_option("--env", o.env, "Environment file");
  sim->add_option("--policy", o.policy, "static:pL,pH | threshold:FILE | trust-aware | always-auto | always-assist");
  sim->add_option("--episodes", o.episodes)->check(CLI::NonNegativeNumber);
  sim->add_option("--trials", o.trials)->check(CLI::NonNegativeNumber);
  sim->add_option("--episode-config", o.episode_config, "Episode config JSON (schedule, initial trust)");
  sim->add_option("--out", o.out)->required();
  add_seed(sim);
  add_threads(sim);

  auto* fit = app.add_subcommand("fit", "Fit the trust model with Baum-Welch");
  fit->add_option("--log", o.log)->required();
  fit->add_option("--init", o.init, "Initial parameter file");
  fit->add_option("--env", o.env, "Environment stored alongside the fitted parameters");
  fit->add_option("--restarts", o.restarts)->check(CLI::PositiveNumber);
  fit->add_option("--tol", o.fit_tol);
  fit->add_option("--max-iters", o.max_iters)->check(CLI::NonNegativeNumber);
  fit->add_option("--diagnostics", o.diagnostics, "Diagnostics JSON (default: OUT.diagnostics.json)");
  fit->add_option("--out", o.out)->required();
  add_seed(fit);
  add_threads(fit);

  auto* unc = app.add_subcommand("uncertainty", "Laplace standard errors of fitted parameters");
  unc->add_option("--params", o.params)->required();
  unc->add_option("--log", o.log)->required();
  unc->add_option("--step", o.step)->check(CLI::PositiveNumber);
  unc->add_flag("--literal-formula", o.literal, "Also emit sqrt(diag(-H))");
  unc->add_flag("--allow-pseudo", o.allow_pseudo, "Accept pseudo-inverse errors for a singular Hessian");
  unc->add_option("--out", o.out)->required();

  auto* solve = app.add_subcommand("solve", "Solve the belief MDP for the assistance policy");
  solve->add_option("--params", o.params);
  solve->add_option("--env", o.env);
  solve->add_option("--grid-bins", o.grid_bins)->check(CLI::Range(2, 100000));
  solve->add_option("--gamma", o.gamma);
  solve->add_option("--tol", o.solve_tol)->check(CLI::PositiveNumber);
  solve->add_option("--out", o.out)->required();

  auto* filt = app.add_subcommand("filter", "Filtered trust beliefs for each trial");
  filt->add_option("--params", o.params);
  filt->add_option("--log", o.log)->required();
  filt->add_option("--survey-map", o.survey_map, "Logistic fit JSON {L, k, r0}");
  filt->add_option("--out", o.out)->required();

  auto* ev = app.add_subcommand("evaluate", "Monte Carlo comparison of two policies");
  ev->add_option("--params", o.params);
  ev->add_option("--env", o.env);
  ev->add_option("--policy-a", o.policy_a);
  ev->add_option("--policy-b", o.policy_b);
  ev->add_option("--participants", o.participants)->check(CLI::Range(2, 100000000));
  ev->add_option("--trials", o.eval_trials)->check(CLI::NonNegativeNumber);
  ev->add_option("--p-complex-high", o.p_complex_high, "Complexity probability (default 0.5)");
  ev->add_option("--csv", o.csv, "Per-participant CSV (default: OUT.csv)");
  ev->add_option("--out", o.out)->required();
  add_seed(ev);
  add_threads(ev);

  auto* rep = app.add_subcommand("replay", "Re-run the command recorded in a manifest");
  rep->add_option("manifest", o.manifest)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  std::vector<std::string> args(argv, argv + argc);
  try {
    return dispatch(app, o, args);
  } catch (const ExitWith& e) {
    std::cerr << "error: " << e.message << '\n';
    return e.code;
  } catch (const tp::ParseError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const tp::DegenerateDataset& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const tp::NonConvergence& e) {
    std::cerr << "convergence error: " << e.what() << '\n';
    return kConvergence;
  } catch (const tp::ZeroLikelihood& e) {
    std::cerr << "likelihood error: " << e.what() << '\n';
    return kLikelihood;
  } catch (const tp::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
}

}  // namespace

int main(int argc, char** argv) { return run(argc, argv); }
