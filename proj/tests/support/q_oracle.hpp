#pragma once

// Numerical maximization of the expected complete-data transition
// log-likelihood over (q_m, q_s). Second moments of the innovations
// delta_t = x_t - G x_{t-1} come from a joint-Gaussian posterior, so the
// result is independent of the augmented-state selectors.

#include <boost/math/tools/minima.hpp>

#include <cmath>
#include <limits>
#include <utility>

#include "joint_gaussian_oracle.hpp"

namespace oracle {

struct InnovationMoments {
  double sum_m = 0.0;  // sum_t E[delta_{m,t}^2]
  double sum_s = 0.0;  // sum_t E[delta_{s,t}^2]
  int steps = 0;
};

inline InnovationMoments innovation_moments(const Posterior& post, const Eigen::MatrixXd& G) {
  InnovationMoments out;
  for (std::size_t t = 1; t < post.mean.size(); ++t) {
    const Eigen::MatrixXd Exx = post.cov[t] + post.mean[t] * post.mean[t].transpose();
    const Eigen::MatrixXd Epp = post.cov[t - 1] + post.mean[t - 1] * post.mean[t - 1].transpose();
    const Eigen::MatrixXd Elag = post.lag_cov[t - 1] + post.mean[t] * post.mean[t - 1].transpose();
    const Eigen::MatrixXd Edd = Exx - G * Elag.transpose() - Elag * G.transpose() + G * Epp * G.transpose();
    out.sum_m += Edd(0, 0);
    out.sum_s += Edd(1, 1);
    ++out.steps;
  }
  return out;
}

/// Expected transition log-likelihood in (q_m, q_s), constants dropped.
inline double transition_objective(double q_m, double q_s, const InnovationMoments& m) {
  const double T = m.steps;
  return -0.5 * T * std::log(q_m) - 0.5 * m.sum_m / q_m - 0.5 * T * std::log(q_s) - 0.5 * m.sum_s / q_s;
}

namespace detail {

// Brent on log q over a wide bracket, then Brent on the relative offset
// q = q0 (1 + eps) near the optimum.
template <typename F>
double maximize_positive(F&& f) {
  const int bits = std::numeric_limits<double>::digits / 2;
  auto neg_log = [&](double lq) { return -f(std::exp(lq)); };
  const double lq = boost::math::tools::brent_find_minima(neg_log, std::log(1e-14), std::log(1e2), bits).first;
  const double q0 = std::exp(lq);
  auto neg = [&](double eps) { return -f(q0 * (1.0 + eps)); };
  return q0 * (1.0 + boost::math::tools::brent_find_minima(neg, -1e-4, 1e-4, bits).first);
}

}  // namespace detail

/// Coordinate search over (q_m, q_s); the objective is evaluated jointly.
inline std::pair<double, double> maximize_q(const InnovationMoments& m) {
  double q_m = 1e-3, q_s = 1e-3;
  for (int sweep = 0; sweep < 3; ++sweep) {
    q_m = detail::maximize_positive([&](double q) { return transition_objective(q, q_s, m); });
    q_s = detail::maximize_positive([&](double q) { return transition_objective(q_m, q, m); });
  }
  return {q_m, q_s};
}

}  // namespace oracle
