// Acceptance checks: one PASS/FAIL line per criterion.
// Usage: acceptance <cli binary> <work dir>

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "oracles.hpp"
#include "trust_pomdp/trust_pomdp.hpp"

using namespace trust_pomdp;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int hw_threads() { return static_cast<int>(std::max(1u, std::thread::hardware_concurrency())); }

std::string fmt(double v, int prec = 4) {
  std::ostringstream os;
  os.precision(prec);
  os << v;
  return os.str();
}

const Policy& reference_policy() {
  static const Policy p =
      value_iteration(build_belief_mdp(reference_params(), reference_env(), BeliefGrid(101)));
  return p;
}

Outcome ac1() {
  const auto t0 = Clock::now();
  const auto pol =
      value_iteration(build_belief_mdp(reference_params(), reference_env(), BeliefGrid(101)));
  const double elapsed = seconds_since(t0);
  bool low_auto = true;
  for (std::size_t bin = 0; bin < 101; ++bin)
    for (auto e : kExperiences) low_auto &= pol.at(bin, e, Complexity::Low) == RobotAction::Autonomous;
  const auto th = pol.threshold[idx(Complexity::High)];
  const bool ok = low_auto && th && *th >= 0.68 && *th <= 0.78 && elapsed < 10.0;
  return {ok, "low all-autonomous=" + std::string(low_auto ? "yes" : "no") +
                  ", high threshold=" + (th ? fmt(*th) : "none") + ", " + fmt(elapsed, 3) + " s"};
}

Outcome ac2() {
  const auto& pol = reference_policy();
  std::size_t mismatches = 0;
  for (std::size_t bin = 0; bin < pol.grid.n_bins; ++bin)
    for (auto c : kComplexities)
      mismatches += pol.at(bin, Experience::Reliable, c) != pol.at(bin, Experience::Faulty, c);
  return {mismatches == 0, std::to_string(mismatches) + " (bin, C) cells differ across E"};
}

Outcome ac3() {
  const auto t0 = Clock::now();
  const auto b = trust_agnostic_baseline(0.006, 0.1848, reference_env());
  const double elapsed = seconds_since(t0);
  const double hi = b(RobotAction::Autonomous, Complexity::High);
  const double lo = b(RobotAction::Autonomous, Complexity::Low);
  const bool ok = std::abs(hi - 1.02) <= 0.01 && std::abs(lo - 2.77) <= 0.03 &&
                  b.best[0] == RobotAction::Autonomous && b.best[1] == RobotAction::Autonomous &&
                  elapsed < 1.0;
  return {ok, "high=" + fmt(hi) + ", low=" + fmt(lo) + ", argmax autonomous in both"};
}

Outcome ac4() {
  const auto t0 = Clock::now();
  EnvConfig env = reference_env();
  env.p_complex_high = 0.5;
  const auto policy = std::make_shared<const Policy>(
      value_iteration(build_belief_mdp(reference_params(), env, BeliefGrid(101))));
  const auto rep = monte_carlo_compare(reference_params(), env, ThresholdPolicy{policy},
                                       AlwaysAutonomous{}, 1000, 40, 20240601, hw_threads());
  const double elapsed = seconds_since(t0);
  const bool ok = rep.mean_a > rep.mean_b && rep.test.p < 0.05 && elapsed < 60.0;
  return {ok, "trust-aware mean " + fmt(rep.mean_a) + " vs always-autonomous " + fmt(rep.mean_b) +
                  ", t=" + fmt(rep.test.t) + ", p=" + fmt(rep.test.p, 3) + ", " + fmt(elapsed, 3) + " s"};
}

Outcome ac5() {
  Rng rng(55);
  double worst = 0.0;
  for (int i = 0; i < 200; ++i) {
    const auto p = oracle::random_params(rng);
    const auto n = 1 + static_cast<std::size_t>(rng.uniform() * 10);
    const auto ep = oracle::random_episode(rng, n);
    const auto got = forward_filter(p, ep);
    const auto want = oracle::enumerate(p, ep);
    for (std::size_t t = 0; t < ep.size(); ++t)
      worst = std::max(worst, std::abs(got.posterior[t] - want.filtered[t]));
    for (std::size_t t = 0; t <= ep.size(); ++t)
      worst = std::max(worst, std::abs(got.belief[t] - want.predicted[t]));
    worst = std::max(worst, std::abs(got.log_likelihood - want.log_likelihood));
  }
  return {worst <= 1e-9, "max deviation " + fmt(worst, 3)};
}

struct StudyFit {
  Dataset data;
  FitResult fit;
  double seconds;
};

const StudyFit& study_fit() {
  static const StudyFit s = [] {
    const auto t0 = Clock::now();
    StudyFit out;
    EpisodeConfig base;
    base.n_trials = 71;
    out.data = simulate_dataset(reference_params(), reference_env(), data_collection_policy(), 33,
                                base, 7, hw_threads());
    FitConfig cfg;
    cfg.restarts = 20;
    cfg.seed = 7;
    cfg.threads = hw_threads();
    out.fit = baum_welch_fit(out.data, default_init_params(), cfg);
    out.seconds = seconds_since(t0);
    return out;
  }();
  return s;
}

Outcome ac6() {
  const auto& s = study_fit();
  const auto& truth = reference_params();
  const auto& fit = s.fit.params;
  const double ll_fit = log_likelihood(fit, s.data);
  const double ll_true = log_likelihood(truth, s.data);
  bool monotone = true;
  const auto& trace = s.fit.diagnostics.log_likelihood_trace;
  for (std::size_t i = 1; i < trace.size(); ++i) monotone &= trace[i] >= trace[i - 1] - 1e-9;

  double obs_err = 0.0;
  for (auto t : kTrustStates)
    for (auto c : kComplexities)
      obs_err = std::max(obs_err, std::abs(fit.rely(t, c, RobotAction::Autonomous) -
                                           truth.rely(t, c, RobotAction::Autonomous)));
  // Reachable transition contexts only; the other two never occur in data.
  double trans_err = 0.0;
  for (auto t : kTrustStates)
    for (auto e : kExperiences)
      for (auto c : kComplexities)
        for (auto a : kRobotActions) {
          if (a == RobotAction::SeekAssistance &&
              (c == Complexity::High) != (e == Experience::Reliable))
            continue;
          trans_err = std::max(trans_err, std::abs(fit.transition(t, e, c, a) - truth.transition(t, e, c, a)));
        }
  const bool ok = ll_fit >= ll_true && monotone && obs_err <= 0.05 && trans_err <= 0.3 &&
                  s.seconds < 300.0;
  return {ok, "loglik fit " + fmt(ll_fit, 8) + " vs truth " + fmt(ll_true, 8) + ", monotone=" +
                  (monotone ? "yes" : "no") + ", max reliance error " + fmt(obs_err, 3) +
                  ", max transition error " + fmt(trans_err, 3) + ", " + fmt(s.seconds, 3) + " s"};
}

Outcome ac7() {
  ModelParams toy = reference_params();
  toy.initial_trust_high = 1.0;
  toy.rely(TrustState::High, Complexity::Low, RobotAction::Autonomous) = 0.5;
  Dataset data;
  for (int i = 0; i < 100; ++i) {
    TrialRecord r;
    r.episode_id = std::to_string(i);
    r.complexity = Complexity::Low;
    r.robot_action = RobotAction::Autonomous;
    r.human_action = i < 50 ? HumanAction::Rely : HumanAction::Interrupt;
    r.experience = i < 50 ? Experience::Reliable : Experience::Faulty;
    r.reward = i < 50 ? 3 : 0;
    data.push_back({r});
  }
  const std::string name = observation_name(TrustState::High, Complexity::Low, RobotAction::Autonomous);
  LaplaceOptions only;
  for (const auto& fp : free_parameters())
    if (fp.name() != name) only.fixed.push_back(fp.name());
  double toy_se = std::numeric_limits<double>::quiet_NaN();
  for (const auto& e : laplace_uncertainty(toy, data, only).entries)
    if (e.parameter == name) toy_se = e.std_error;

  // Study-scale pattern: transitions after assistance or a faulty experience
  // are noisier than after an autonomous success.
  const auto& s = study_fit();
  const auto rep = laplace_uncertainty(s.fit.params, s.data);
  double noisy = 0, clean = 0;
  int n_noisy = 0, n_clean = 0;
  for (const auto& fp : free_parameters()) {
    if (fp.kind != FreeParameter::Kind::Transition) continue;
    for (const auto& e : rep.entries) {
      if (e.parameter != fp.name() || !e.identifiable || !std::isfinite(e.std_error)) continue;
      if (fp.action == RobotAction::Autonomous && fp.experience == Experience::Reliable) {
        clean += e.std_error;
        ++n_clean;
      } else {
        noisy += e.std_error;
        ++n_noisy;
      }
    }
  }
  const double mean_noisy = n_noisy ? noisy / n_noisy : 0.0;
  const double mean_clean = n_clean ? clean / n_clean : 0.0;
  const bool ok = std::abs(toy_se - 0.05) <= 0.002 && n_noisy > 0 && n_clean > 0 &&
                  mean_noisy > mean_clean;
  return {ok, "toy SE " + fmt(toy_se, 6) + "; mean SE assistance/faulty " + fmt(mean_noisy, 3) +
                  " (" + std::to_string(n_noisy) + ") vs autonomous success " + fmt(mean_clean, 3) +
                  " (" + std::to_string(n_clean) + ")" + (rep.singular ? ", pseudo-inverse" : "")};
}

Outcome ac8() {
  std::vector<Point> curve, line;
  for (double r = 0; r <= 10.0 + 1e-9; r += 0.5)
    curve.push_back({r, 0.8849 / (1 + std::exp(-1.184 * (r - 2.932)))});
  for (int i = 0; i <= 10; ++i) {
    const double r = i / 10.0;
    line.push_back({r, 0.63 * r + 3.27});
  }
  const auto lf = fit_logistic(curve);
  const auto ln = fit_linear(line);
  const double e_log = std::max({std::abs(lf.amplitude - 0.8849), std::abs(lf.slope - 1.184),
                                 std::abs(lf.center - 2.932)});
  const double e_lin = std::max(std::abs(ln.slope - 0.63), std::abs(ln.intercept - 3.27));
  return {e_log <= 1e-3 && e_lin <= 1e-9,
          "logistic max error " + fmt(e_log, 3) + ", linear max error " + fmt(e_lin, 3)};
}

Outcome ac9() {
  const auto fine =
      value_iteration(build_belief_mdp(reference_params(), reference_env(), BeliefGrid(401)));
  const auto a = reference_policy().threshold[1];
  const auto b = fine.threshold[1];
  const bool ok = a && b && std::abs(*a - *b) <= 0.01;
  return {ok, "101 bins " + (a ? fmt(*a) : "none") + ", 401 bins " + (b ? fmt(*b) : "none")};
}

// ---------------------------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome ac10(const std::string& cli, const fs::path& work) {
  fs::remove_all(work);
  fs::create_directories(work);
  auto run = [&](const std::string& args) {
    const std::string cmd = cli + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  };
  auto p = [&](const std::string& name) { return (work / name).string(); };

  std::vector<std::string> failures;
  auto stage = [&](const std::string& name, const std::string& args_fmt,
                   const std::vector<std::string>& outputs) {
    // args_fmt uses {T} for the thread flag and {S} for the output suffix.
    for (const std::string suffix : {"1", "8"}) {
      std::string args = args_fmt;
      for (std::size_t pos; (pos = args.find("{S}")) != std::string::npos;) args.replace(pos, 3, suffix);
      for (std::size_t pos; (pos = args.find("{T}")) != std::string::npos;) args.replace(pos, 3, suffix);
      if (run(args) != 0) failures.push_back(name + " (threads " + suffix + ") exited non-zero");
    }
    for (const auto& out : outputs) {
      auto path_for = [&](const std::string& s) {
        std::string f = out;
        f.replace(f.find("{S}"), 3, s);
        return p(f);
      };
      if (!fs::exists(path_for("1")) || slurp(path_for("1")) != slurp(path_for("8")))
        failures.push_back(name + ": " + out + " differs");
    }
  };

  stage("simulate", "simulate --seed 11 --threads {T} --out " + p("log{S}.jsonl"), {"log{S}.jsonl"});
  stage("fit", "fit --log " + p("log1.jsonl") + " --seed 11 --threads {T} --out " + p("fit{S}.json"),
        {"fit{S}.json", "fit{S}.json.diagnostics.json"});
  stage("uncertainty",
        "uncertainty --params " + p("fit1.json") + " --log " + p("log1.jsonl") +
            " --allow-pseudo --literal-formula --out " + p("se{S}.csv"),
        {"se{S}.csv"});
  stage("solve", "solve --params " + p("fit1.json") + " --out " + p("policy{S}.json"), {"policy{S}.json"});
  stage("filter", "filter --params " + p("fit1.json") + " --log " + p("log1.jsonl") + " --out " + p("beliefs{S}.csv"),
        {"beliefs{S}.csv"});
  stage("evaluate",
        "evaluate --params " + p("fit1.json") + " --policy-a threshold:" + p("policy1.json") +
            " --participants 200 --seed 11 --threads {T} --out " + p("eval{S}.json"),
        {"eval{S}.json", "eval{S}.json.csv"});

  std::string detail = "6 stages at --threads 1 and 8";
  for (const auto& f : failures) detail += "; " + f;
  return {failures.empty(), failures.empty() ? detail + ", outputs byte-identical" : detail};
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 3) {
    std::cerr << "usage: acceptance <cli> <work dir>\n";
    return 2;
  }
  const std::string cli = argv[1];
  const fs::path work = argv[2];

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"threshold reproduction", ac1},
      {"experience invariance", ac2},
      {"baseline rewards", ac3},
      {"policy superiority", ac4},
      {"filter oracle", ac5},
      {"EM recovery", ac6},
      {"Laplace sanity", ac7},
      {"curve-fit recovery", ac8},
      {"grid stability", ac9},
      {"determinism", [&] { return ac10(cli, work); }},
  };

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << "AC" << i + 1 << ' ' << (o.pass ? "PASS" : "FAIL") << "  " << criteria[i].first
              << ": " << o.detail << std::endl;
  }
  std::cout << (criteria.size() - static_cast<std::size_t>(failed)) << '/' << criteria.size()
            << " criteria passed\n";
  return failed == 0 ? 0 : 1;
}
