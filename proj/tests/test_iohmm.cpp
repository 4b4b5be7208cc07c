#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "oracles.hpp"
#include "trust_pomdp/iohmm.hpp"
#include "trust_pomdp/simulant.hpp"

using namespace trust_pomdp;

namespace {

TrialRecord record(Complexity c, RobotAction a, HumanAction o, Experience e) {
  TrialRecord r;
  r.complexity = c;
  r.robot_action = a;
  r.human_action = o;
  r.experience = e;
  return r;
}

Episode assist_low_episode(int n) {
  Episode ep;
  for (int t = 0; t < n; ++t) {
    auto r = record(Complexity::Low, RobotAction::SeekAssistance, HumanAction::Interrupt,
                    Experience::Faulty);
    r.t = t;
    r.reward = 1;
    ep.push_back(r);
  }
  return ep;
}

Episode mixed_episode() {
  return {
      record(Complexity::High, RobotAction::Autonomous, HumanAction::Rely, Experience::Reliable),
      record(Complexity::High, RobotAction::Autonomous, HumanAction::Interrupt, Experience::Faulty),
      record(Complexity::Low, RobotAction::Autonomous, HumanAction::Rely, Experience::Faulty),
      record(Complexity::High, RobotAction::SeekAssistance, HumanAction::Interrupt,
             Experience::Reliable),
      record(Complexity::Low, RobotAction::Autonomous, HumanAction::Rely, Experience::Reliable),
      record(Complexity::High, RobotAction::Autonomous, HumanAction::Rely, Experience::Faulty),
  };
}

ModelParams uniform_params() {
  ModelParams p;
  p.initial_trust_high = 0.5;
  for (auto& a : p.trust_transition)
    for (auto& b : a)
      for (auto& c : b)
        for (auto& v : c) v = 0.5;
  for (auto t : kTrustStates)
    for (auto c : kComplexities) p.rely(t, c, RobotAction::Autonomous) = 0.5;
  return p;
}

Dataset study_scale_dataset(std::uint64_t seed) {
  EpisodeConfig base;
  base.n_trials = 71;
  return simulate_dataset(reference_params(), reference_env(), data_collection_policy(), 33, base,
                          seed);
}

}  // namespace

// ---------------------------------------------------------------------------

TEST(BeliefUpdate, LowTrustAfterAssistanceInHighComplexity) {
  EXPECT_DOUBLE_EQ(belief_update(reference_params(), 0.0, Experience::Reliable, Complexity::High,
                                 RobotAction::SeekAssistance),
                   0.13);
}

TEST(BeliefUpdate, AbsorbingHighTrust) {
  auto p = reference_params();
  p.transition(TrustState::High, Experience::Faulty, Complexity::Low, RobotAction::Autonomous) = 1;
  p.transition(TrustState::Low, Experience::Faulty, Complexity::Low, RobotAction::Autonomous) = 1;
  EXPECT_EQ(belief_update(p, 1.0, Experience::Faulty, Complexity::Low, RobotAction::Autonomous), 1.0);
}

TEST(BeliefUpdate, MidpointHighComplexitySuccess) {
  EXPECT_NEAR(belief_update(reference_params(), 0.5, Experience::Reliable, Complexity::High,
                            RobotAction::Autonomous),
              0.82, 1e-15);
}

TEST(BeliefUpdate, AffineAndMapsUnitIntervalIntoItself) {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const auto p = oracle::random_params(rng);
    const auto e = rng.bernoulli(0.5) ? Experience::Reliable : Experience::Faulty;
    const auto c = rng.bernoulli(0.5) ? Complexity::High : Complexity::Low;
    const auto a = rng.bernoulli(0.5) ? RobotAction::Autonomous : RobotAction::SeekAssistance;
    const double f0 = belief_update(p, 0.0, e, c, a);
    const double f1 = belief_update(p, 1.0, e, c, a);
    for (double b : {0.0, 0.1, 0.37, 0.5, 0.9, 1.0}) {
      const double fb = belief_update(p, b, e, c, a);
      EXPECT_NEAR(fb, f0 + b * (f1 - f0), 1e-14);
      EXPECT_GE(fb, 0.0);
      EXPECT_LE(fb, 1.0);
    }
  }
}

// ---------------------------------------------------------------------------

TEST(ForwardFilter, AssistanceOnlyEpisodeKeepsPrior) {
  const auto traj = forward_filter(reference_params(), assist_low_episode(12));
  ASSERT_EQ(traj.belief.size(), 13u);
  for (double b : traj.belief) EXPECT_DOUBLE_EQ(b, 0.82);
  EXPECT_EQ(traj.log_likelihood, 0.0);
}

TEST(ForwardFilter, EmptyEpisodeIsPriorOnly) {
  const auto traj = forward_filter(reference_params(), Episode{});
  ASSERT_EQ(traj.belief.size(), 1u);
  EXPECT_EQ(traj.belief[0], 0.82);
  EXPECT_EQ(traj.log_likelihood, 0.0);
}

TEST(ForwardFilter, MatchesPathEnumeration) {
  auto ep = mixed_episode();
  ep.resize(5);
  const auto p = reference_params();
  const auto traj = forward_filter(p, ep);
  const auto ref = oracle::enumerate(p, ep);
  for (std::size_t t = 0; t < traj.belief.size(); ++t) EXPECT_NEAR(traj.belief[t], ref.predicted[t], 1e-12);
  for (std::size_t t = 0; t < traj.posterior.size(); ++t)
    EXPECT_NEAR(traj.posterior[t], ref.filtered[t], 1e-12);
  EXPECT_NEAR(traj.log_likelihood, ref.log_likelihood, 1e-12);
}

TEST(ForwardFilter, RandomEpisodesMatchEnumeration) {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const auto p = oracle::random_params(rng);
    const auto ep = oracle::random_episode(rng, static_cast<std::size_t>(trial % 11));
    const auto traj = forward_filter(p, ep);
    const auto ref = oracle::enumerate(p, ep);
    for (std::size_t t = 0; t < traj.belief.size(); ++t) ASSERT_NEAR(traj.belief[t], ref.predicted[t], 1e-9);
    ASSERT_NEAR(traj.log_likelihood, ref.log_likelihood, 1e-9);
  }
}

TEST(ForwardFilter, ImpossibleObservationThrowsWithLocation) {
  Dataset data{assist_low_episode(3), assist_low_episode(4)};
  data[1][2].human_action = HumanAction::Rely;
  try {
    log_likelihood(reference_params(), data);
    FAIL() << "expected ZeroLikelihood";
  } catch (const ZeroLikelihood& e) {
    EXPECT_EQ(e.episode(), 1u);
    EXPECT_EQ(e.trial(), 2u);
  }
}

// ---------------------------------------------------------------------------

TEST(Smoothing, SingleTrialEqualsFiltering) {
  const Episode ep{mixed_episode()[1]};
  const auto p = reference_params();
  const auto sm = posterior_smoothing(p, ep);
  EXPECT_NEAR(sm.gamma[0][1], forward_filter(p, ep).posterior[0], 1e-15);
}

TEST(Smoothing, AssistanceOnlyEpisodeKeepsPrior) {
  const auto sm = posterior_smoothing(reference_params(), assist_low_episode(8));
  for (const auto& g : sm.gamma) EXPECT_NEAR(g[1], 0.82, 1e-15);
}

TEST(Smoothing, SixTrialEpisodeMatchesEnumeration) {
  Rng rng(3);
  const auto p = oracle::random_params(rng);
  const auto ep = mixed_episode();
  const auto sm = posterior_smoothing(p, ep);
  const auto ref = oracle::enumerate(p, ep);
  for (std::size_t t = 0; t <= ep.size(); ++t) EXPECT_NEAR(sm.gamma[t][1], ref.smoothed[t], 1e-12);
  for (std::size_t t = 0; t < ep.size(); ++t)
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) EXPECT_NEAR(sm.xi[t][i][j], ref.pairwise[t][i][j], 1e-12);
  EXPECT_NEAR(sm.log_likelihood, ref.log_likelihood, 1e-12);
}

TEST(Smoothing, PairwiseMarginalsRecoverStatePosteriors) {
  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    const auto p = oracle::random_params(rng);
    const auto ep = oracle::random_episode(rng, 30);
    const auto sm = posterior_smoothing(p, ep);
    for (std::size_t t = 0; t < ep.size(); ++t)
      for (int i = 0; i < 2; ++i) {
        ASSERT_NEAR(sm.xi[t][i][0] + sm.xi[t][i][1], sm.gamma[t][i], 1e-9);
        ASSERT_NEAR(sm.xi[t][0][i] + sm.xi[t][1][i], sm.gamma[t + 1][i], 1e-9);
      }
    for (const auto& g : sm.gamma) ASSERT_NEAR(g[0] + g[1], 1.0, 1e-12);
  }
}

TEST(Smoothing, LongEpisodeDoesNotUnderflow) {
  Rng rng(21);
  const auto p = oracle::random_params(rng);
  const auto ep = oracle::random_episode(rng, 5000);
  const auto sm = posterior_smoothing(p, ep);
  EXPECT_TRUE(std::isfinite(sm.log_likelihood));
  EXPECT_LT(sm.log_likelihood, -100.0);
  EXPECT_NEAR(sm.log_likelihood, forward_filter(p, ep).log_likelihood, 1e-8);
}

// ---------------------------------------------------------------------------

TEST(LogLikelihood, AssistanceOnlyDatasetIsZero) {
  EXPECT_EQ(log_likelihood(reference_params(), Dataset{assist_low_episode(5), assist_low_episode(2)}), 0.0);
}

TEST(LogLikelihood, FiveTrialEpisodeMatchesEnumeration) {
  Rng rng(17);
  const auto p = oracle::random_params(rng);
  auto ep = mixed_episode();
  ep.resize(5);
  EXPECT_NEAR(log_likelihood(p, Dataset{ep}), oracle::enumerate(p, ep).log_likelihood, 1e-12);
}

TEST(LogLikelihood, TrueParametersBeatUniform) {
  EpisodeConfig base;
  base.n_trials = 71;
  const auto data = simulate_dataset(reference_params(), reference_env(), data_collection_policy(),
                                     30, base, 99);
  EXPECT_GT(log_likelihood(reference_params(), data), log_likelihood(uniform_params(), data));
}

// ---------------------------------------------------------------------------

TEST(BaumWelch, TraceIsMonotoneFromTruth) {
  EpisodeConfig base;
  base.n_trials = 71;
  const auto data = simulate_dataset(reference_params(), reference_env(), data_collection_policy(),
                                     1, base, 4);
  FitConfig cfg;
  cfg.restarts = 1;
  const auto fit = baum_welch_fit(data, reference_params(), cfg);
  const auto& tr = fit.diagnostics.log_likelihood_trace;
  ASSERT_GE(tr.size(), 2u);
  for (std::size_t i = 1; i < tr.size(); ++i) EXPECT_GE(tr[i], tr[i - 1] - 1e-9);
  EXPECT_GE(tr.back(), log_likelihood(reference_params(), data) - 1e-9);
}

TEST(BaumWelch, RandomRestartsAreMonotone) {
  const auto data = study_scale_dataset(8);
  FitConfig cfg;
  cfg.restarts = 4;
  cfg.seed = 3;
  cfg.max_iters = 200;
  for (int r = 1; r < 4; ++r) {
    Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(r)));
    const auto run = detail::run_em(data, detail::random_params(rng), cfg);
    for (std::size_t i = 1; i < run.trace.size(); ++i) ASSERT_GE(run.trace[i], run.trace[i - 1] - 1e-9);
  }
}

TEST(BaumWelch, ReturnsBestRestart) {
  const auto data = study_scale_dataset(12);
  FitConfig cfg;
  cfg.restarts = 2;
  cfg.seed = 41;
  cfg.max_iters = 100;
  const auto fit = baum_welch_fit(data, default_init_params(), cfg);
  ASSERT_EQ(fit.diagnostics.restarts.size(), 2u);
  const double best = std::max(fit.diagnostics.restarts[0].final_log_likelihood,
                               fit.diagnostics.restarts[1].final_log_likelihood);
  EXPECT_EQ(fit.diagnostics.log_likelihood_trace.back(), best);
  EXPECT_EQ(fit.diagnostics.restarts[static_cast<std::size_t>(fit.diagnostics.restart_index)]
                .final_log_likelihood,
            best);
  EXPECT_NEAR(log_likelihood(fit.params, data), best, 1e-9);
}

TEST(BaumWelch, EpisodeOrderDoesNotMatter) {
  auto data = study_scale_dataset(13);
  FitConfig cfg;
  cfg.restarts = 1;
  cfg.max_iters = 50;
  const auto a = baum_welch_fit(data, default_init_params(), cfg);
  std::reverse(data.begin(), data.end());
  std::rotate(data.begin(), data.begin() + 7, data.end());
  const auto b = baum_welch_fit(data, default_init_params(), cfg);
  EXPECT_EQ(a.params, b.params);
  EXPECT_EQ(a.diagnostics.log_likelihood_trace, b.diagnostics.log_likelihood_trace);
}

TEST(BaumWelch, ThreadCountDoesNotChangeResult) {
  const auto data = study_scale_dataset(14);
  FitConfig cfg;
  cfg.restarts = 4;
  cfg.max_iters = 60;
  cfg.threads = 1;
  const auto a = baum_welch_fit(data, default_init_params(), cfg);
  cfg.threads = 4;
  const auto b = baum_welch_fit(data, default_init_params(), cfg);
  EXPECT_EQ(a.params, b.params);
}

TEST(BaumWelch, AssistanceRelianceStaysPinned) {
  const auto fit = baum_welch_fit(study_scale_dataset(15), default_init_params(), {.max_iters = 30, .restarts = 1});
  for (auto t : kTrustStates)
    for (auto c : kComplexities) EXPECT_EQ(fit.params.rely(t, c, RobotAction::SeekAssistance), 0.0);
  EXPECT_TRUE(validate_params(fit.params).empty());
}

TEST(BaumWelch, MissingContextsAreReportedAndCarried) {
  EpisodeConfig base;
  base.n_trials = 40;
  const auto data = simulate_dataset(reference_params(), reference_env(), AlwaysAutonomous{}, 5, base, 1);
  const auto init = default_init_params();
  FitConfig cfg;
  cfg.restarts = 1;
  cfg.max_iters = 20;
  const auto fit = baum_welch_fit(data, init, cfg);
  ASSERT_EQ(fit.diagnostics.missing_contexts.size(), 2u);
  for (const auto& [c, a] : fit.diagnostics.missing_contexts) EXPECT_EQ(a, RobotAction::SeekAssistance);
  // All 8 assistance transitions are unidentifiable; they keep the initial value
  // (up to the label convention).
  EXPECT_EQ(fit.diagnostics.unidentifiable.size(), 8u);
  auto params = fit.diagnostics.trust_labels_swapped ? swap_trust_labels(fit.params) : fit.params;
  for (auto t : kTrustStates)
    for (auto e : kExperiences)
      for (auto c : kComplexities)
        EXPECT_EQ(params.transition(t, e, c, RobotAction::SeekAssistance),
                  init.transition(t, e, c, RobotAction::SeekAssistance));
}

TEST(BaumWelch, EmptyDatasetIsRejected) {
  EXPECT_THROW(baum_welch_fit({}, default_init_params()), DegenerateDataset);
}

TEST(TrustLabels, SwapIsAnInvolutionAndPreservesLikelihood) {
  const auto p = reference_params();
  EXPECT_EQ(swap_trust_labels(swap_trust_labels(p)), p);
  EXPECT_TRUE(trust_labels_inverted(swap_trust_labels(p)));
  EXPECT_FALSE(trust_labels_inverted(p));
  const auto data = study_scale_dataset(2);
  EXPECT_NEAR(log_likelihood(p, data), log_likelihood(swap_trust_labels(p), data), 1e-9);
}

// ---------------------------------------------------------------------------

namespace {

/// 100 single-trial episodes, 50 of them with reliance, under parameters in
/// which trust is certainly High; only P(rely | High, Low, auto) is free.
std::pair<ModelParams, Dataset> bernoulli_toy() {
  ModelParams p = reference_params();
  p.initial_trust_high = 1.0;
  p.rely(TrustState::High, Complexity::Low, RobotAction::Autonomous) = 0.5;
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
  return {p, data};
}

LaplaceOptions only(const std::string& name) {
  LaplaceOptions opts;
  for (const auto& fp : free_parameters())
    if (fp.name() != name) opts.fixed.push_back(fp.name());
  return opts;
}

const UncertaintyEntry& entry(const UncertaintyReport& rep, const std::string& name) {
  for (const auto& e : rep.entries)
    if (e.parameter == name) return e;
  throw std::runtime_error("no entry " + name);
}

}  // namespace

TEST(Laplace, FreeParameterCount) { EXPECT_EQ(free_parameters().size(), 21u); }

TEST(Laplace, BernoulliToyMatchesClosedForm) {
  const auto [p, data] = bernoulli_toy();
  const std::string name = observation_name(TrustState::High, Complexity::Low, RobotAction::Autonomous);
  const auto rep = laplace_uncertainty(p, data, only(name));
  const auto& e = entry(rep, name);
  EXPECT_FALSE(rep.singular);
  EXPECT_NEAR(e.std_error, std::sqrt(0.5 * 0.5 / 100), 1e-6);
  EXPECT_NEAR(e.literal, std::sqrt(400.0), 1e-3);
  EXPECT_EQ(e.count, 100u);
  EXPECT_FALSE(e.boundary);
}

TEST(Laplace, UnseenContextIsUnidentifiable) {
  const auto [p, data] = bernoulli_toy();
  const auto rep = laplace_uncertainty(p, data, only(observation_name(TrustState::High, Complexity::Low, RobotAction::Autonomous)));
  const auto& e = entry(rep, transition_name(TrustState::Low, Experience::Reliable, Complexity::High,
                                             RobotAction::SeekAssistance));
  EXPECT_FALSE(e.identifiable);
  EXPECT_EQ(e.count, 0u);
  EXPECT_TRUE(std::isnan(e.std_error));
}

TEST(Laplace, BoundaryParametersUseOneSidedDifferences) {
  const auto data = study_scale_dataset(3);
  const auto rep = laplace_uncertainty(reference_params(), data);
  // P(rely | High, Low, auto) = 1.00 sits on the boundary.
  const auto& e = entry(rep, observation_name(TrustState::High, Complexity::Low, RobotAction::Autonomous));
  EXPECT_TRUE(e.boundary);
  EXPECT_TRUE(std::isfinite(e.std_error));
  for (const auto& x : rep.entries)
    if (x.identifiable) {
      EXPECT_GE(x.std_error, 0.0) << x.parameter;
    }
}
