#pragma once

// Sampling from the seasonal dynamic SBM: a random-walk bias plus a zero-sum
// seasonal offset drive each block's edge density, perturbed per step by
// measurement noise and realized through Bernoulli edges.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "sdsbm/error.hpp"
#include "sdsbm/graph_model.hpp"
#include "sdsbm/random.hpp"

namespace sdsbm {

/// Latent seasonal state of one block: bias m_t and the d-1 most recent
/// offsets (s_t, s_{t-1}, ..., s_{t-d+2}). The d-th offset is implied by the
/// zero-sum constraint.
struct SeasonalState {
  double bias = 0.0;
  Eigen::VectorXd offsets;

  int period() const { return static_cast<int>(offsets.size()) + 1; }
  double leading_offset() const { return offsets.size() > 0 ? offsets[0] : 0.0; }
  /// Offset implied by the zero-sum constraint over one full period.
  double implicit_offset() const { return -offsets.sum(); }
  double level() const { return bias + leading_offset(); }

  /// Stacks the state as x = [m, s_t, ..., s_{t-d+2}].
  Eigen::VectorXd to_vector() const {
    Eigen::VectorXd x(offsets.size() + 1);
    x[0] = bias;
    x.tail(offsets.size()) = offsets;
    return x;
  }

  static SeasonalState from_vector(const Eigen::VectorXd& x) {
    return SeasonalState{x[0], x.tail(x.size() - 1)};
  }

  /// Bias 0.5 with a flat seasonal profile.
  static SeasonalState flat(int period, double bias = 0.5) {
    return SeasonalState{bias, Eigen::VectorXd::Zero(period - 1)};
  }

  /// State whose next d steps trace the given per-phase profile. The profile
  /// is centred first so it satisfies the zero-sum constraint.
  static SeasonalState from_profile(double bias, const std::vector<double>& profile) {
    const auto d = static_cast<Eigen::Index>(profile.size());
    if (d < 2) throw InvalidArgument("seasonal profile needs at least two phases");
    double mean = 0.0;
    for (double p : profile) mean += p;
    mean /= static_cast<double>(d);
    // The state at t=0 holds s_0 = profile[d-1], s_{-1} = profile[d-2], ...
    Eigen::VectorXd offsets(d - 1);
    for (Eigen::Index i = 0; i < d - 1; ++i) offsets[i] = profile[d - 1 - i] - mean;
    return SeasonalState{bias, offsets};
  }
};

struct GenParams {
  int period = 7;
  double q_m = 0.0;
  double q_s = 0.0;
  double r = 0.0;
  SeasonalState init = SeasonalState::flat(7);

  void validate() const {
    if (period < 2) throw InvalidArgument("GenParams.period must be >= 2");
    if (!(q_m >= 0.0)) throw InvalidArgument("GenParams.q_m must be >= 0");
    if (!(q_s >= 0.0)) throw InvalidArgument("GenParams.q_s must be >= 0");
    if (!(r >= 0.0)) throw InvalidArgument("GenParams.r must be >= 0");
    if (init.period() != period) {
      throw InvalidArgument("GenParams.init has " + std::to_string(init.offsets.size()) +
                            " offsets, expected " + std::to_string(period - 1));
    }
  }
};

/// Advances the latent state one step. Both Gaussian draws are always taken
/// so a stream's consumption does not depend on the variances.
inline SeasonalState step_latent(const SeasonalState& state, const GenParams& params, Rng& rng) {
  if (state.period() != params.period) {
    throw InvalidArgument("step_latent: state period does not match params");
  }
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double bias_noise = gauss(rng) * std::sqrt(params.q_m);
  const double season_noise = gauss(rng) * std::sqrt(params.q_s);

  SeasonalState next;
  next.bias = state.bias + bias_noise;
  const auto k = state.offsets.size();
  next.offsets.resize(k);
  next.offsets[0] = -state.offsets.sum() + season_noise;
  for (Eigen::Index i = 1; i < k; ++i) next.offsets[i] = state.offsets[i - 1];
  return next;
}

/// Ground truth recorded at one generated time step.
struct LatentStep {
  SeasonalState state;
  double level = 0.0;    // c_t = m_t + s_t
  double density = 0.0;  // e_t after clamping to [0, 1]
  std::int64_t count = 0;
};

struct BlockTrace {
  std::vector<LatentStep> steps;

  std::vector<std::int64_t> counts() const {
    std::vector<std::int64_t> out;
    out.reserve(steps.size());
    for (const auto& s : steps) out.push_back(s.count);
    return out;
  }
};

/// Samples latent states and densities for t = 1..T; counts are left at 0.
inline BlockTrace simulate_latent(const GenParams& params, std::size_t steps, Rng& rng) {
  params.validate();
  BlockTrace trace;
  trace.steps.reserve(steps);
  std::normal_distribution<double> gauss(0.0, 1.0);
  SeasonalState state = params.init;
  for (std::size_t t = 0; t < steps; ++t) {
    state = step_latent(state, params, rng);
    LatentStep step;
    step.level = state.level();
    step.density = std::clamp(step.level + gauss(rng) * std::sqrt(params.r), 0.0, 1.0);
    step.state = state;
    trace.steps.push_back(std::move(step));
  }
  return trace;
}

/// Generates one block's count series directly as Binomial(n, e_t) draws.
inline BlockTrace generate_block_series(const GenParams& params, std::int64_t n, std::size_t steps,
                                        Rng& rng) {
  if (n < 1) throw InvalidArgument("generate_block_series: n must be >= 1");
  BlockTrace trace = simulate_latent(params, steps, rng);
  for (auto& step : trace.steps) {
    std::binomial_distribution<std::int64_t> draw(n, step.density);
    step.count = draw(rng);
  }
  return trace;
}

struct GeneratedNetwork {
  DynamicNetwork network;
  std::map<BlockKey, BlockTrace> truth;
};

/// Samples a full typed dynamic network. Each block draws from its own
/// sub-stream of `seed`, keyed by the block's labels.
inline GeneratedNetwork generate_network(const std::map<BlockKey, GenParams>& params,
                                         const VertexTyping& typing, std::size_t steps,
                                         std::uint64_t seed) {
  std::vector<Snapshot> snapshots(steps);
  GeneratedNetwork out;
  for (const auto& block : typing.blocks()) {
    auto it = params.find(block);
    if (it == params.end()) {
      throw InvalidArgument("generate_network: no parameters for block " + block.name());
    }
    Rng rng = substream(seed, "block:" + block.name());
    BlockTrace trace = simulate_latent(it->second, steps, rng);

    const auto ta = *typing.label_index(block.a);
    const auto tb = *typing.label_index(block.b);
    const auto va = typing.members(ta);
    const auto vb = typing.members(tb);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (std::size_t t = 0; t < steps; ++t) {
      const double e = trace.steps[t].density;
      auto& edges = snapshots[t].edges;
      std::int64_t formed = 0;
      auto trial = [&](VertexIndex i, VertexIndex j) {
        if (unif(rng) < e) {
          edges.emplace_back(i, j);
          ++formed;
        }
      };
      if (ta == tb) {
        for (std::size_t i = 0; i < va.size(); ++i) {
          for (std::size_t j = i + 1; j < va.size(); ++j) trial(va[i], va[j]);
        }
      } else {
        for (auto i : va) {
          for (auto j : vb) trial(i, j);
        }
      }
      trace.steps[t].count = formed;
    }
    out.truth.emplace(block, std::move(trace));
  }
  out.network = DynamicNetwork(typing, std::move(snapshots));
  return out;
}

}  // namespace sdsbm
