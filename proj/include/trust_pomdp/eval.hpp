#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/special_functions/beta.hpp>

#include "trust_pomdp/model.hpp"
#include "trust_pomdp/parallel.hpp"
#include "trust_pomdp/rng.hpp"
#include "trust_pomdp/simulant.hpp"

namespace trust_pomdp {

class DegenerateFit : public Error {
 public:
  using Error::Error;
};

class OutOfRange : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Two-sample t-test

struct TTestResult {
  double t = 0.0;
  double p = 1.0;
  double dof = 0.0;
  /// Both samples constant: t is 0 (equal means) or infinite (different means).
  bool zero_variance = false;
};

inline double mean(std::span<const double> xs) {
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

inline double median(std::vector<double> xs) {
  if (xs.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

inline double sum_sq_dev(std::span<const double> xs, double m) {
  double s = 0.0;
  for (double x : xs) s += (x - m) * (x - m);
  return s;
}

/// Two-sided p-value of Student's t with `dof` degrees of freedom.
inline double student_t_two_sided_p(double t, double dof) {
  if (std::isinf(t)) return 0.0;
  const double x = dof / (dof + t * t);
  return std::clamp(boost::math::ibeta(0.5 * dof, 0.5, x), 0.0, 1.0);
}

/// Pooled-variance t-test by default; Welch-Satterthwaite when `welch` is set.
inline TTestResult two_sample_t_test(std::span<const double> xs, std::span<const double> ys,
                                     bool welch = false) {
  if (xs.size() < 2 || ys.size() < 2) throw Error("t-test needs at least two samples per group");
  const double nx = static_cast<double>(xs.size());
  const double ny = static_cast<double>(ys.size());
  const double mx = mean(xs);
  const double my = mean(ys);
  const double ssx = sum_sq_dev(xs, mx);
  const double ssy = sum_sq_dev(ys, my);

  TTestResult out;
  double se = 0.0;
  if (welch) {
    const double vx = ssx / (nx - 1) / nx;
    const double vy = ssy / (ny - 1) / ny;
    se = std::sqrt(vx + vy);
    out.dof = (vx + vy) * (vx + vy) / (vx * vx / (nx - 1) + vy * vy / (ny - 1));
  } else {
    out.dof = nx + ny - 2;
    const double pooled = (ssx + ssy) / out.dof;
    se = std::sqrt(pooled * (1.0 / nx + 1.0 / ny));
  }
  if (!(se > 0.0)) {
    out.zero_variance = true;
    if (mx == my) {
      out.t = 0.0;
      out.p = 1.0;
    } else {
      out.t = mx > my ? std::numeric_limits<double>::infinity()
                      : -std::numeric_limits<double>::infinity();
      out.p = 0.0;
    }
    if (welch) out.dof = nx + ny - 2;
    return out;
  }
  out.t = (mx - my) / se;
  out.p = student_t_two_sided_p(out.t, out.dof);
  return out;
}

// ---------------------------------------------------------------------------
// Curve fits

struct Point {
  double r;
  double y;
};

struct LogisticFit {
  double amplitude = 1.0;  // L
  double slope = 1.0;      // k
  double center = 0.0;     // r0
  double rss = 0.0;
  /// All responses equal; the curve is the constant `amplitude`.
  bool flat = false;

  double operator()(double r) const {
    if (flat) return amplitude;
    return amplitude / (1.0 + std::exp(-slope * (r - center)));
  }
};

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double rss = 0.0;

  double operator()(double r) const { return slope * r + intercept; }
};

struct LogisticGrid {
  double amp_lo = 0.5, amp_hi = 1.0, amp_step = 0.05;
  double k_lo = 0.1, k_hi = 5.0, k_step = 0.1;
  double r0_lo = 0.0, r0_hi = 10.0, r0_step = 0.25;
  int max_gauss_newton = 200;
};

namespace detail {

inline double logistic_rss(std::span<const Point> pts, double amp, double k, double r0) {
  double s = 0.0;
  for (const auto& p : pts) {
    const double d = p.y - amp / (1.0 + std::exp(-k * (p.r - r0)));
    s += d * d;
  }
  return s;
}

/// Values of lo, lo+step, ... up to hi (inclusive, tolerant of roundoff).
inline std::vector<double> grid_axis(double lo, double hi, double step) {
  std::vector<double> out;
  const auto n = static_cast<long>(std::floor((hi - lo) / step + 1e-9));
  for (long i = 0; i <= n; ++i) out.push_back(lo + static_cast<double>(i) * step);
  return out;
}

}  // namespace detail

/**
 * Least-squares fit of y = L / (1 + exp(-k (r - r0))).
 *
 * Coarse grid search, then Gauss-Newton from the best grid point with step
 * halving until the residual stops improving.
 */
inline LogisticFit fit_logistic(std::span<const Point> points, const LogisticGrid& grid = {}) {
  if (points.size() < 3) throw Error("logistic fit needs at least 3 points");
  const bool all_equal = std::all_of(points.begin(), points.end(),
                                     [&](const Point& p) { return p.y == points.front().y; });
  if (all_equal) {
    LogisticFit flat;
    flat.amplitude = points.front().y;
    flat.slope = 0.0;
    flat.center = 0.0;
    flat.flat = true;
    return flat;
  }

  double best_amp = 0, best_k = 0, best_r0 = 0;
  double best = std::numeric_limits<double>::infinity();
  for (double amp : detail::grid_axis(grid.amp_lo, grid.amp_hi, grid.amp_step))
    for (double k : detail::grid_axis(grid.k_lo, grid.k_hi, grid.k_step))
      for (double r0 : detail::grid_axis(grid.r0_lo, grid.r0_hi, grid.r0_step)) {
        const double s = detail::logistic_rss(points, amp, k, r0);
        if (s < best) {
          best = s;
          best_amp = amp;
          best_k = k;
          best_r0 = r0;
        }
      }

  Eigen::Vector3d theta(best_amp, best_k, best_r0);
  const auto m = static_cast<Eigen::Index>(points.size());
  for (int it = 0; it < grid.max_gauss_newton; ++it) {
    Eigen::MatrixXd jac(m, 3);
    Eigen::VectorXd resid(m);
    for (Eigen::Index i = 0; i < m; ++i) {
      const auto& p = points[static_cast<std::size_t>(i)];
      const double e = std::exp(-theta(1) * (p.r - theta(2)));
      const double s = 1.0 / (1.0 + e);
      const double f = theta(0) * s;
      const double ds = s * s * e;  // d s / d(k (r - r0))
      resid(i) = p.y - f;
      jac(i, 0) = s;
      jac(i, 1) = theta(0) * ds * (p.r - theta(2));
      jac(i, 2) = -theta(0) * ds * theta(1);
    }
    const Eigen::Vector3d delta = jac.colPivHouseholderQr().solve(resid);
    if (!delta.allFinite()) break;
    double lambda = 1.0;
    bool improved = false;
    for (int half = 0; half < 40; ++half, lambda *= 0.5) {
      const Eigen::Vector3d cand = theta + lambda * delta;
      const double s = detail::logistic_rss(points, cand(0), cand(1), cand(2));
      if (s < best) {
        best = s;
        theta = cand;
        improved = true;
        break;
      }
    }
    if (!improved) break;
  }
  return {theta(0), theta(1), theta(2), best, false};
}

inline LinearFit fit_linear(std::span<const Point> points) {
  if (points.size() < 2) throw DegenerateFit("linear fit needs at least 2 points");
  const double n = static_cast<double>(points.size());
  double mr = 0.0, my = 0.0;
  for (const auto& p : points) {
    mr += p.r;
    my += p.y;
  }
  mr /= n;
  my /= n;
  double srr = 0.0, sry = 0.0;
  for (const auto& p : points) {
    srr += (p.r - mr) * (p.r - mr);
    sry += (p.r - mr) * (p.y - my);
  }
  if (!(srr > 0.0)) throw DegenerateFit("all r values are equal");
  LinearFit fit;
  fit.slope = sry / srr;
  fit.intercept = my - fit.slope * mr;
  for (const auto& p : points) {
    const double d = p.y - fit(p.r);
    fit.rss += d * d;
  }
  return fit;
}

/// Survey score whose fitted belief equals `belief` (inverse of the logistic).
inline double belief_to_survey(const LogisticFit& fit, double belief) {
  if (fit.flat || fit.slope == 0.0) throw OutOfRange("flat fit has no inverse");
  if (!(belief > 0.0) || !(belief < fit.amplitude))
    throw OutOfRange("belief outside (0, L) of the fitted curve");
  return fit.center - std::log(fit.amplitude / belief - 1.0) / fit.slope;
}

// ---------------------------------------------------------------------------
// Monte Carlo comparison

struct ComparisonReport {
  std::vector<double> rewards_a;
  std::vector<double> rewards_b;
  double median_a = 0.0, median_b = 0.0;
  double mean_a = 0.0, mean_b = 0.0;
  TTestResult test;
  std::uint64_t seed = 0;
  int n_participants = 0;
  int n_trials = 0;
};

/**
 * Simulates `n_participants` episodes under each policy. Participant i uses
 * the same seed in both arms, so complexity draws and initial trust match.
 */
inline ComparisonReport monte_carlo_compare(const ModelParams& params, const EnvConfig& env,
                                            const RobotPolicy& policy_a,
                                            const RobotPolicy& policy_b, int n_participants,
                                            int n_trials, std::uint64_t seed, int threads = 1) {
  if (n_participants < 2) throw Error("need at least two participants");
  ComparisonReport rep;
  rep.seed = seed;
  rep.n_participants = n_participants;
  rep.n_trials = n_trials;
  const auto n = static_cast<std::size_t>(n_participants);
  rep.rewards_a.resize(n);
  rep.rewards_b.resize(n);

  auto total = [](const Episode& ep) {
    double s = 0.0;
    for (const auto& r : ep) s += r.reward;
    return s;
  };
  parallel_for(2 * n, threads, [&](std::size_t job) {
    const std::size_t i = job % n;
    EpisodeConfig cfg;
    cfg.n_trials = n_trials;
    cfg.seed = derive_seed(seed, i);
    cfg.episode_id = std::to_string(i);
    if (job < n)
      rep.rewards_a[i] = total(run_episode(params, env, policy_a, cfg));
    else
      rep.rewards_b[i] = total(run_episode(params, env, policy_b, cfg));
  });

  rep.mean_a = mean(rep.rewards_a);
  rep.mean_b = mean(rep.rewards_b);
  rep.median_a = median(rep.rewards_a);
  rep.median_b = median(rep.rewards_b);
  rep.test = two_sample_t_test(rep.rewards_a, rep.rewards_b);
  return rep;
}

}  // namespace trust_pomdp
