#pragma once

// Linear-Gaussian state-space form of one block's seasonal density process.
//
//   x_t = G x_{t-1} + delta_t,   delta_t ~ N(0, Q)
//   w_t = H x_t + eps_t,         eps_t   ~ N(0, u_t + n^2 r)
//
// with x_t = [m_t, s_t, ..., s_{t-d+2}], H = (n, n, 0, ..., 0) and
// Q = diag(q_m, q_s, 0, ..., 0).

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>

#include "sdsbm/error.hpp"

namespace sdsbm {

struct StateSpace {
  int period = 0;
  std::int64_t n = 0;
  Eigen::MatrixXd G;
  Eigen::RowVectorXd H;
  Eigen::MatrixXd Q;
  double r = 0.0;

  Eigen::Index dim() const { return G.rows(); }
  double n_sq() const { return static_cast<double>(n) * static_cast<double>(n); }
};

inline StateSpace build_state_space(int d, std::int64_t n, double q_m, double q_s, double r) {
  if (d < 2) throw InvalidArgument("state space needs period d >= 2, got " + std::to_string(d));
  if (n < 1) throw InvalidArgument("state space needs n >= 1");
  if (!(q_m >= 0.0) || !(q_s >= 0.0) || !(r >= 0.0)) {
    throw InvalidArgument("state space variances must be non-negative");
  }
  StateSpace ss;
  ss.period = d;
  ss.n = n;
  ss.r = r;
  ss.G = Eigen::MatrixXd::Zero(d, d);
  ss.G(0, 0) = 1.0;
  ss.G.row(1).tail(d - 1).setConstant(-1.0);
  for (int i = 2; i < d; ++i) ss.G(i, i - 1) = 1.0;
  ss.H = Eigen::RowVectorXd::Zero(d);
  ss.H[0] = static_cast<double>(n);
  ss.H[1] = static_cast<double>(n);
  ss.Q = Eigen::MatrixXd::Zero(d, d);
  ss.Q(0, 0) = q_m;
  ss.Q(1, 1) = q_s;
  return ss;
}

/// Predicted counts are clamped into [eps*n, (1-eps)*n] before computing the
/// binomial variance so it never vanishes.
inline constexpr double kCountClampEps = 1e-6;

/// Binomial observation variance u_t = p(1 - p/n) at the predicted count p.
inline double binomial_obs_noise(double predicted_count, std::int64_t n) {
  if (n < 1) throw InvalidArgument("binomial_obs_noise: n must be >= 1");
  const double nd = static_cast<double>(n);
  const double p = std::clamp(predicted_count, kCountClampEps * nd, (1.0 - kCountClampEps) * nd);
  return p * (1.0 - p / nd);
}

/// True when the normal approximation to Binomial(n, p/n) is conventionally
/// acceptable (n*e >= 10 and n*(1-e) >= 10).
inline bool normal_approximation_ok(double predicted_count, std::int64_t n) {
  const double nd = static_cast<double>(n);
  return predicted_count >= 10.0 && nd - predicted_count >= 10.0;
}

/// Total observation variance b_t = u_t + n^2 r.
inline double observation_variance(double u, std::int64_t n, double r) {
  const double nd = static_cast<double>(n);
  return u + nd * nd * r;
}

/// State space extended with two slots, the noiseless seasonal prediction and
/// m_{t-1}, so the process innovations are linear in one augmented state.
struct AugmentedStateSpace {
  StateSpace model;  // dimension d + 2
  Eigen::RowVectorXd d1;  // selects m_t - m_{t-1}
  Eigen::RowVectorXd d2;  // selects s_t minus its noiseless prediction
};

/// Row d+1 of G* reproduces G's seasonal row, so after a transition slot d+1
/// holds the noiseless prediction of s_t (the offset leaving the window under
/// the zero-sum constraint); row d+2 copies m_{t-1}.
inline AugmentedStateSpace augment(const StateSpace& ss) {
  const Eigen::Index d = ss.dim();
  AugmentedStateSpace aug;
  StateSpace& m = aug.model;
  m.period = ss.period;
  m.n = ss.n;
  m.r = ss.r;
  m.G = Eigen::MatrixXd::Zero(d + 2, d + 2);
  m.G.topLeftCorner(d, d) = ss.G;
  m.G.row(d).head(d) = ss.G.row(1);
  m.G.row(d + 1).head(d) = ss.G.row(0);
  m.H = Eigen::RowVectorXd::Zero(d + 2);
  m.H.head(d) = ss.H;
  m.Q = Eigen::MatrixXd::Zero(d + 2, d + 2);
  m.Q.topLeftCorner(d, d) = ss.Q;

  aug.d1 = Eigen::RowVectorXd::Zero(d + 2);
  aug.d1[0] = 1.0;
  aug.d1[d + 1] = -1.0;
  aug.d2 = Eigen::RowVectorXd::Zero(d + 2);
  aug.d2[1] = 1.0;
  aug.d2[d] = -1.0;
  return aug;
}

/// Learned parameters of one block: phi = {r, Q, mu0, Sigma0} and the period.
struct ModelParams {
  int period = 0;
  double q_m = 0.0;
  double q_s = 0.0;
  double r = 0.0;
  Eigen::VectorXd mu0;
  Eigen::MatrixXd sigma0;

  void validate() const {
    if (period < 2) throw InvalidArgument("ModelParams.period must be >= 2");
    if (!(q_m >= 0.0) || !std::isfinite(q_m)) throw InvalidArgument("ModelParams.q_m must be >= 0");
    if (!(q_s >= 0.0) || !std::isfinite(q_s)) throw InvalidArgument("ModelParams.q_s must be >= 0");
    if (!(r >= 0.0) || !std::isfinite(r)) throw InvalidArgument("ModelParams.r must be >= 0");
    if (mu0.size() != period) throw InvalidArgument("ModelParams.mu0 must have length d");
    if (sigma0.rows() != period || sigma0.cols() != period) {
      throw InvalidArgument("ModelParams.sigma0 must be d x d");
    }
    if (!mu0.allFinite() || !sigma0.allFinite()) {
      throw InvalidArgument("ModelParams contains non-finite values");
    }
    const double scale = std::max(1.0, sigma0.cwiseAbs().maxCoeff());
    if (!(sigma0 - sigma0.transpose()).isZero(1e-10 * scale)) {
      throw InvalidArgument("ModelParams.sigma0 must be symmetric");
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sigma0, Eigen::EigenvaluesOnly);
    if (eig.eigenvalues().minCoeff() < -1e-8 * std::max(sigma0.trace(), 1e-300)) {
      throw InvalidArgument("ModelParams.sigma0 must be positive semidefinite");
    }
  }

  StateSpace state_space(std::int64_t n) const { return build_state_space(period, n, q_m, q_s, r); }

  friend bool operator==(const ModelParams& x, const ModelParams& y) {
    return x.period == y.period && x.q_m == y.q_m && x.q_s == y.q_s && x.r == y.r &&
           x.mu0.size() == y.mu0.size() && x.mu0 == y.mu0 && x.sigma0.rows() == y.sigma0.rows() &&
           x.sigma0.cols() == y.sigma0.cols() && x.sigma0 == y.sigma0;
  }
};

}  // namespace sdsbm
