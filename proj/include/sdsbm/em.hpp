#pragma once

// Expectation-maximization for phi = {r, Q, mu0, Sigma0} of one block.
//
// The E-step filters and smooths the augmented state x*_t = [x_t, s~_t, m_{t-1}]
// so that the bias and seasonal innovations, d1 x*_t and d2 x*_t, have exact
// posterior second moments. The M-step is closed form for mu0, Sigma0, q_m and
// q_s; r maximizes a one-dimensional objective by golden-section search.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sdsbm/error.hpp"
#include "sdsbm/golden_section.hpp"
#include "sdsbm/graph_model.hpp"
#include "sdsbm/kalman.hpp"
#include "sdsbm/ssm.hpp"

namespace sdsbm {

/// Posterior moments of the augmented state. Ex/Exx cover t = 0..T;
/// Exx_lag[t-1] = E[x_t x_{t-1}^T] for t = 1..T.
struct SufficientStats {
  std::vector<Eigen::VectorXd> Ex;
  std::vector<Eigen::MatrixXd> Exx;
  std::vector<Eigen::MatrixXd> Exx_lag;
  GaussianBelief smoothed_initial;
  std::vector<double> obs_noise;  // u_t from the E-step's filter pass

  std::size_t steps() const { return Exx_lag.size(); }
};

struct EStepResult {
  SufficientStats stats;
  double loglik = 0.0;
  AugmentedStateSpace model;
};

/// Lifts a d-dimensional initial belief into the augmented space. The two
/// appended slots never feed forward through G*, so they start at zero.
inline GaussianBelief augment_initial(const GaussianBelief& belief) {
  const Eigen::Index d = belief.mean.size();
  GaussianBelief out;
  out.mean = Eigen::VectorXd::Zero(d + 2);
  out.mean.head(d) = belief.mean;
  out.cov = Eigen::MatrixXd::Zero(d + 2, d + 2);
  out.cov.topLeftCorner(d, d) = belief.cov;
  return out;
}

/// Moments computed from a smoothed belief sequence.
inline SufficientStats collect_stats(const BeliefSequence& beliefs) {
  if (!beliefs.has_smoothed()) throw InvalidArgument("collect_stats needs smoothed beliefs");
  SufficientStats stats;
  const std::size_t steps = beliefs.steps();
  stats.Ex.reserve(steps + 1);
  stats.Exx.reserve(steps + 1);
  stats.Exx_lag.reserve(steps);
  for (const auto& sm : beliefs.smoothed) {
    stats.Ex.push_back(sm.mean);
    stats.Exx.push_back(sm.cov + sm.mean * sm.mean.transpose());
  }
  // Cov(x_t, x_{t-1} | w_{1:T}) = Sigma_{t|T} J_{t-1}^T.
  for (std::size_t t = 1; t <= steps; ++t) {
    const auto& cur = beliefs.smoothed[t];
    const auto& prev = beliefs.smoothed[t - 1];
    stats.Exx_lag.push_back(cur.cov * beliefs.smoother_gains[t - 1].transpose() +
                            cur.mean * prev.mean.transpose());
  }
  stats.smoothed_initial = beliefs.smoothed.front();
  stats.obs_noise = beliefs.obs_noise;
  return stats;
}

/// Filter and smoother over the augmented state under `params`. When
/// `fixed_obs_noise` is non-empty it replaces the per-step u_t estimates.
inline EStepResult e_step(const BlockSeries& series, const ModelParams& params,
                          std::span<const double> fixed_obs_noise = {}) {
  params.validate();
  if (series.n < 1) throw InvalidArgument("e_step: block " + series.block.name() + " has n < 1");
  EStepResult out;
  out.model = augment(params.state_space(series.n));
  const BeliefSequence filtered = run_filter(series.counts, out.model.model,
                                             augment_initial(initial_belief(params)),
                                             fixed_obs_noise);
  const BeliefSequence smoothed = smooth(filtered, out.model.model);
  out.stats = collect_stats(smoothed);
  out.loglik = smoothed.total_loglik();
  return out;
}

/// mu0 and Sigma0 set to the smoothed belief at t = 0.
inline std::pair<Eigen::VectorXd, Eigen::MatrixXd> m_step_initial(const SufficientStats& stats,
                                                                  int period) {
  if (stats.Ex.empty()) throw InvalidArgument("m_step_initial needs stats at t = 0");
  const auto& b = stats.smoothed_initial;
  Eigen::MatrixXd sigma = b.cov.topLeftCorner(period, period);
  detail::symmetrize(sigma);
  return {b.mean.head(period), sigma};
}

/// Posterior expected squared residual of each observed count,
/// E[(w_t - H x_t)^2] = w^2 - 2 w H E[x_t] + H E[x_t x_t^T] H^T.
inline std::vector<std::optional<double>> expected_sq_residuals(const SufficientStats& stats,
                                                                const BlockSeries& series,
                                                                const Eigen::RowVectorXd& H) {
  std::vector<std::optional<double>> out(series.steps());
  for (std::size_t t = 1; t <= series.steps(); ++t) {
    const auto& w = series.counts[t - 1];
    if (!w) continue;
    const double wd = static_cast<double>(*w);
    out[t - 1] = wd * wd - 2.0 * wd * H.dot(stats.Ex[t]) + H * stats.Exx[t] * H.transpose();
  }
  return out;
}

/// Expected observation log-likelihood as a function of r, constants dropped:
/// sum_t -1/2 ln(u_t + n^2 r) - 1/2 quad_t / (u_t + n^2 r).
inline double r_objective(double r, std::span<const std::optional<double>> quad,
                          std::span<const double> u, std::int64_t n) {
  const double n_sq = static_cast<double>(n) * static_cast<double>(n);
  double total = 0.0;
  for (std::size_t t = 0; t < quad.size(); ++t) {
    if (!quad[t]) continue;
    const double v = u[t] + n_sq * r;
    if (!(v > 0.0)) return -std::numeric_limits<double>::infinity();
    total += -0.5 * std::log(v) - 0.5 * *quad[t] / v;
  }
  return total;
}

/// d/dr of r_objective.
inline double r_objective_slope(double r, std::span<const std::optional<double>> quad,
                                std::span<const double> u, std::int64_t n) {
  const double n_sq = static_cast<double>(n) * static_cast<double>(n);
  double total = 0.0;
  for (std::size_t t = 0; t < quad.size(); ++t) {
    if (!quad[t]) continue;
    const double v = u[t] + n_sq * r;
    total += 0.5 * n_sq * (*quad[t] - v) / (v * v);
  }
  return total;
}

inline constexpr double kDefaultRMax = 0.25;
inline constexpr double kRSearchFloor = 1e-12;

/// Maximizes the r-objective over [0, r_max]. The search runs on log r over
/// [1e-12, r_max]; r = 0 and `previous_r` are also evaluated so the result
/// never scores below either.
inline double maximize_r(std::span<const std::optional<double>> quad, std::span<const double> u,
                         std::int64_t n, double r_max = kDefaultRMax,
                         std::optional<double> previous_r = std::nullopt) {
  auto objective = [&](double r) { return r_objective(r, quad, u, n); };
  const auto best_log = golden_section_maximize(
      [&](double log_r) { return objective(std::exp(log_r)); }, std::log(kRSearchFloor),
      std::log(r_max), 0.0, 1e-10);
  double best_r = std::exp(best_log.x);
  // Bisect the slope near the golden-section point to full precision.
  auto slope = [&](double r) { return r_objective_slope(r, quad, u, n); };
  double lo = std::max(kRSearchFloor, best_r * (1.0 - 1e-6));
  double hi = std::min(r_max, best_r * (1.0 + 1e-6));
  if (lo < hi && slope(lo) > 0.0 && slope(hi) < 0.0) {
    for (int i = 0; i < 200 && std::nextafter(lo, hi) < hi; ++i) {
      const double mid = 0.5 * (lo + hi);
      (slope(mid) > 0.0 ? lo : hi) = mid;
    }
    best_r = 0.5 * (lo + hi);
  }
  double best_value = objective(best_r);
  if (previous_r && *previous_r >= 0.0 && *previous_r <= r_max) {
    const double prev_value = objective(*previous_r);
    if (prev_value > best_value) {
      best_r = *previous_r;
      best_value = prev_value;
    }
  }
  if (objective(0.0) >= best_value) return 0.0;
  return best_r;
}

/// r-update from E-step statistics.
inline double m_step_r(const SufficientStats& stats, const BlockSeries& series,
                       const Eigen::RowVectorXd& H, double r_max = kDefaultRMax,
                       std::optional<double> previous_r = std::nullopt) {
  const auto quad = expected_sq_residuals(stats, series, H);
  return maximize_r(quad, stats.obs_noise, series.n, r_max, previous_r);
}

inline constexpr double kProcessVarianceFloor = 1e-15;

/// Closed-form q_m, q_s: mean posterior second moments of the bias and
/// seasonal innovations d1 x*_t and d2 x*_t over t = 1..T.
inline std::pair<double, double> m_step_q(const SufficientStats& stats,
                                          const AugmentedStateSpace& aug) {
  const std::size_t steps = stats.steps();
  if (steps == 0) return {kProcessVarianceFloor, kProcessVarianceFloor};
  double sum_m = 0.0;
  double sum_s = 0.0;
  for (std::size_t t = 1; t <= steps; ++t) {
    sum_m += aug.d1 * stats.Exx[t] * aug.d1.transpose();
    sum_s += aug.d2 * stats.Exx[t] * aug.d2.transpose();
  }
  const double T = static_cast<double>(steps);
  return {std::max(sum_m / T, kProcessVarianceFloor), std::max(sum_s / T, kProcessVarianceFloor)};
}

struct EmConfig {
  int max_iter = 200;
  double tol = 1e-6;
  bool fix_r_to_zero = false;
  double r_max = kDefaultRMax;
};

struct EmTrace {
  std::vector<double> loglik_per_iter;
  std::vector<ModelParams> params_per_iter;  // parameters scored by each E-step
  bool converged = false;
  int iterations = 0;
};

struct EmResult {
  ModelParams params;
  EmTrace trace;
};

/// Initial parameters derived from the data. With `unit_variances` the three
/// variances start at 1; otherwise they are scaled to the count variance.
inline ModelParams default_initial_params(const BlockSeries& series, int period,
                                          bool unit_variances = false) {
  if (period < 2) throw InvalidArgument("period must be >= 2");
  if (series.n < 1) throw InvalidArgument("block " + series.block.name() + " has n < 1");
  const double n = static_cast<double>(series.n);

  std::vector<double> observed;
  for (const auto& c : series.counts) {
    if (c) observed.push_back(static_cast<double>(*c));
  }
  double mean_all = 0.0;
  for (double w : observed) mean_all += w;
  if (!observed.empty()) mean_all /= static_cast<double>(observed.size());
  double var = 0.0;
  for (double w : observed) var += (w - mean_all) * (w - mean_all);
  if (observed.size() > 1) var /= static_cast<double>(observed.size() - 1);
  var = std::max(var, 1.0);

  // Phase means over the first period, falling back to the overall mean.
  const std::size_t first = std::min<std::size_t>(series.steps(), static_cast<std::size_t>(period));
  std::vector<double> phase(period, mean_all / n);
  double sum = 0.0;
  int seen = 0;
  for (std::size_t t = 0; t < first; ++t) {
    if (series.counts[t]) {
      phase[t] = static_cast<double>(*series.counts[t]) / n;
      sum += phase[t];
      ++seen;
    }
  }
  const double bias = seen > 0 ? sum / seen : mean_all / n;
  for (std::size_t t = 0; t < first; ++t) {
    if (!series.counts[t]) phase[t] = bias;
  }

  ModelParams p;
  p.period = period;
  p.mu0 = Eigen::VectorXd::Zero(period);
  p.mu0[0] = bias;
  // x_0 = [m_0, s_0, s_{-1}, ..., s_{-d+2}] with s_0 sharing the phase of t = d.
  for (int i = 1; i < period; ++i) p.mu0[i] = phase[period - i] - bias;
  p.sigma0 = Eigen::MatrixXd::Identity(period, period) * 0.01;
  if (unit_variances) {
    p.q_m = p.q_s = p.r = 1.0;
  } else {
    const double steps = std::max<double>(1.0, static_cast<double>(series.steps()));
    p.q_m = p.q_s = var / (n * n) / steps;
    p.r = var / (n * n) / 10.0;
  }
  return p;
}

/// One M-step given E-step output.
inline ModelParams m_step(const EStepResult& e, const BlockSeries& series,
                          const ModelParams& current, const EmConfig& config) {
  ModelParams next = current;
  std::tie(next.mu0, next.sigma0) = m_step_initial(e.stats, current.period);
  std::tie(next.q_m, next.q_s) = m_step_q(e.stats, e.model);
  next.r = config.fix_r_to_zero
               ? 0.0
               : m_step_r(e.stats, series, e.model.model.H, config.r_max, current.r);
  return next;
}

/// Alternates E- and M-steps until the relative log-likelihood gain drops
/// below `tol` or `max_iter` E-steps have run.
inline EmResult em_fit(const BlockSeries& series, const ModelParams& init,
                       const EmConfig& config = {}) {
  if (config.max_iter < 1) throw InvalidArgument("em_fit: max_iter must be >= 1");
  ModelParams current = init;
  if (config.fix_r_to_zero) current.r = 0.0;
  current.validate();

  EmResult result;
  auto& trace = result.trace;
  for (int iter = 0; iter < config.max_iter; ++iter) {
    EStepResult e;
    try {
      e = e_step(series, current);
    } catch (const Error& err) {
      throw NumericalError("EM iteration " + std::to_string(iter + 1) + " on block " +
                           series.block.name() + ": " + err.what());
    }
    trace.loglik_per_iter.push_back(e.loglik);
    trace.params_per_iter.push_back(current);
    trace.iterations = iter + 1;
    if (iter > 0) {
      const double prev = trace.loglik_per_iter[iter - 1];
      if (e.loglik - prev < config.tol * std::abs(prev)) {
        trace.converged = true;
        result.params = current;
        return result;
      }
    }
    current = m_step(e, series, current, config);
  }
  result.params = current;
  return result;
}

}  // namespace sdsbm
