#pragma once

// Exact Gaussian filtering, smoothing and forecasting for one block.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sdsbm/error.hpp"
#include "sdsbm/graph_model.hpp"
#include "sdsbm/ssm.hpp"

namespace sdsbm {

struct GaussianBelief {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

/// Output of a filter pass, optionally extended by a smoother pass. Vectors
/// indexed by time hold entry t-1 for step t; `smoothed` and its gains start
/// at t = 0.
struct BeliefSequence {
  GaussianBelief initial;
  std::vector<GaussianBelief> predicted;
  std::vector<GaussianBelief> filtered;
  std::vector<Eigen::VectorXd> gains;
  std::vector<double> obs_noise;  // u_t used at each step
  std::vector<std::optional<double>> pred_loglik;
  std::vector<GaussianBelief> smoothed;       // t = 0..T after smooth()
  std::vector<Eigen::MatrixXd> smoother_gains;  // J_0..J_{T-1} after smooth()

  std::size_t steps() const { return filtered.size(); }
  bool has_smoothed() const { return !smoothed.empty(); }

  double total_loglik() const {
    double total = 0.0;
    for (const auto& l : pred_loglik) {
      if (l) total += *l;
    }
    return total;
  }
};

namespace detail {

inline void symmetrize(Eigen::MatrixXd& m) { m = 0.5 * (m + m.transpose()).eval(); }

inline double gaussian_logpdf(double x, double mean, double var) {
  const double resid = x - mean;
  return -0.5 * (std::log(2.0 * std::numbers::pi * var) + resid * resid / var);
}

/// Moore-Penrose inverse of a symmetric PSD matrix, discarding eigenvalues
/// below `rel_tol` times the largest one.
inline Eigen::MatrixXd psd_pseudo_inverse(const Eigen::MatrixXd& m, double rel_tol = 1e-12) {
  if (!m.allFinite()) throw NumericalError("covariance contains non-finite values");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m);
  const auto& values = eig.eigenvalues();
  const double largest = values.cwiseAbs().maxCoeff();
  if (largest == 0.0) return Eigen::MatrixXd::Zero(m.rows(), m.cols());
  const double cutoff = rel_tol * largest;
  if (values.minCoeff() < -std::max(cutoff, 1e-8 * largest)) {
    throw NumericalError("predicted covariance is not positive semidefinite");
  }
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(values.size());
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    if (values[i] > cutoff) inv[i] = 1.0 / values[i];
  }
  return eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose();
}

}  // namespace detail

inline GaussianBelief predict(const GaussianBelief& belief, const StateSpace& ss) {
  GaussianBelief out;
  out.mean = ss.G * belief.mean;
  out.cov = ss.G * belief.cov * ss.G.transpose() + ss.Q;
  detail::symmetrize(out.cov);
  return out;
}

struct UpdateResult {
  GaussianBelief posterior;
  Eigen::VectorXd gain;
  double loglik = 0.0;
  double innovation_mean = 0.0;      // H mu_{t|t-1}
  double innovation_variance = 0.0;  // H Sigma_{t|t-1} H^T + b_t
};

/// Conditions a predicted belief on one scalar count observation.
inline UpdateResult update(const GaussianBelief& predicted, double count, const StateSpace& ss,
                           double u) {
  const double b = observation_variance(u, ss.n, ss.r);
  const Eigen::VectorXd sigma_ht = predicted.cov * ss.H.transpose();
  const double innovation_var = ss.H.dot(sigma_ht) + b;
  if (!(innovation_var > 0.0) || !std::isfinite(innovation_var)) {
    throw NumericalError("non-positive innovation variance " + std::to_string(innovation_var));
  }
  UpdateResult out;
  out.innovation_mean = ss.H.dot(predicted.mean);
  out.innovation_variance = innovation_var;
  out.gain = sigma_ht / innovation_var;
  out.posterior.mean = predicted.mean + out.gain * (count - out.innovation_mean);
  out.posterior.cov = predicted.cov - out.gain * sigma_ht.transpose();
  detail::symmetrize(out.posterior.cov);
  out.loglik = detail::gaussian_logpdf(count, out.innovation_mean, innovation_var);
  return out;
}

/// Forward pass from `initial` (the belief at t = 0). u_t is recomputed at
/// every step from the predicted count unless `fixed_obs_noise` supplies one
/// value per step. Missing counts skip the update.
inline BeliefSequence run_filter(std::span<const std::optional<std::int64_t>> counts,
                                 const StateSpace& ss, const GaussianBelief& initial,
                                 std::span<const double> fixed_obs_noise = {}) {
  const std::size_t steps = counts.size();
  if (!fixed_obs_noise.empty() && fixed_obs_noise.size() != steps) {
    throw InvalidArgument("run_filter: fixed_obs_noise must have one entry per step");
  }
  BeliefSequence seq;
  seq.initial = initial;
  seq.predicted.reserve(steps);
  seq.filtered.reserve(steps);
  seq.gains.reserve(steps);
  seq.obs_noise.reserve(steps);
  seq.pred_loglik.reserve(steps);

  bool warned = false;
  const GaussianBelief* prev = &initial;
  for (std::size_t t = 0; t < steps; ++t) {
    GaussianBelief pred = predict(*prev, ss);
    const double predicted_count = ss.H.dot(pred.mean);
    const double u = fixed_obs_noise.empty() ? binomial_obs_noise(predicted_count, ss.n)
                                             : fixed_obs_noise[t];
    if (!warned && counts[t] && !normal_approximation_ok(predicted_count, ss.n)) {
      warn("block with n=" + std::to_string(ss.n) + ": predicted count " +
           std::to_string(predicted_count) + " at t=" + std::to_string(t + 1) +
           " is outside the normal-approximation range");
      warned = true;
    }
    seq.obs_noise.push_back(u);
    if (counts[t]) {
      UpdateResult upd;
      try {
        upd = update(pred, static_cast<double>(*counts[t]), ss, u);
      } catch (const NumericalError& e) {
        throw NumericalError("filter step t=" + std::to_string(t + 1) + ": " + e.what());
      }
      seq.filtered.push_back(std::move(upd.posterior));
      seq.gains.push_back(std::move(upd.gain));
      seq.pred_loglik.emplace_back(upd.loglik);
    } else {
      seq.filtered.push_back(pred);
      seq.gains.push_back(Eigen::VectorXd::Zero(ss.dim()));
      seq.pred_loglik.emplace_back(std::nullopt);
    }
    seq.predicted.push_back(std::move(pred));
    prev = &seq.filtered.back();
  }
  return seq;
}

inline GaussianBelief initial_belief(const ModelParams& params) {
  return GaussianBelief{params.mu0, params.sigma0};
}

/// Filters a block series under fitted parameters.
inline BeliefSequence filter(const BlockSeries& series, const ModelParams& params) {
  params.validate();
  if (series.n < 1) throw InvalidArgument("filter: block " + series.block.name() + " has n < 1");
  return run_filter(series.counts, params.state_space(series.n), initial_belief(params));
}

/// Rauch-Tung-Striebel backward pass. Returns a copy of `beliefs` with the
/// smoothed marginals for t = 0..T and the gains J_t filled in.
inline BeliefSequence smooth(const BeliefSequence& beliefs, const StateSpace& ss) {
  BeliefSequence out = beliefs;
  const std::size_t steps = beliefs.steps();
  out.smoothed.assign(steps + 1, GaussianBelief{});
  out.smoother_gains.assign(steps, Eigen::MatrixXd{});
  out.smoothed[steps] = steps == 0 ? beliefs.initial : beliefs.filtered[steps - 1];
  for (std::size_t t = steps; t-- > 0;) {
    const GaussianBelief& filt = t == 0 ? beliefs.initial : beliefs.filtered[t - 1];
    const GaussianBelief& pred_next = beliefs.predicted[t];
    const GaussianBelief& smooth_next = out.smoothed[t + 1];
    Eigen::MatrixXd pinv;
    try {
      pinv = detail::psd_pseudo_inverse(pred_next.cov);
    } catch (const NumericalError& e) {
      throw NumericalError("smoother step t=" + std::to_string(t) + ": " + e.what());
    }
    Eigen::MatrixXd J = filt.cov * ss.G.transpose() * pinv;
    GaussianBelief sm;
    sm.mean = filt.mean + J * (smooth_next.mean - pred_next.mean);
    sm.cov = filt.cov + J * (smooth_next.cov - pred_next.cov) * J.transpose();
    detail::symmetrize(sm.cov);
    out.smoothed[t] = std::move(sm);
    out.smoother_gains[t] = std::move(J);
  }
  return out;
}

struct ForecastStep {
  double mean = 0.0;                  // H mu
  double state_variance = 0.0;        // H Sigma H^T
  double binomial_variance = 0.0;     // u at the forecast mean
  double measurement_variance = 0.0;  // n^2 r
  double variance() const { return state_variance + binomial_variance + measurement_variance; }
};

/// Propagates the last filtered belief `horizon` steps without observations.
inline std::vector<ForecastStep> forecast(const GaussianBelief& last_filtered, const StateSpace& ss,
                                          std::size_t horizon) {
  if (horizon < 1) throw InvalidArgument("forecast horizon must be >= 1");
  std::vector<ForecastStep> out;
  out.reserve(horizon);
  GaussianBelief belief = last_filtered;
  for (std::size_t h = 0; h < horizon; ++h) {
    belief = predict(belief, ss);
    ForecastStep step;
    step.mean = ss.H.dot(belief.mean);
    step.state_variance = ss.H * belief.cov * ss.H.transpose();
    step.binomial_variance = binomial_obs_noise(step.mean, ss.n);
    step.measurement_variance = ss.n_sq() * ss.r;
    out.push_back(step);
  }
  return out;
}

}  // namespace sdsbm
