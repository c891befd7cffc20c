#pragma once

// Likelihood-based anomaly scoring of dynamic networks at graph and block
// level, with sigma and log-likelihood threshold policies.

#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "sdsbm/error.hpp"
#include "sdsbm/graph_model.hpp"
#include "sdsbm/kalman.hpp"
#include "sdsbm/ssm.hpp"

namespace sdsbm {

enum class ScoreMode {
  predictive,  // one-step-ahead moments mu_{t|t-1}, Sigma_{t|t-1}
  smoothed,    // smoothed moments mu_{t|T}, Sigma_{t|T}
};

inline std::string to_string(ScoreMode mode) {
  return mode == ScoreMode::predictive ? "predictive" : "smoothed";
}

struct BlockScore {
  std::optional<std::int64_t> count;
  double pred_mean = 0.0;
  double pred_var = 0.0;
  double loglik = 0.0;  // 0 for missing steps
  double z = 0.0;

  bool observed() const { return count.has_value(); }
};

/// Scores of every inferable block (n >= 1) over t = 1..T.
struct ScoreSeries {
  ScoreMode mode = ScoreMode::predictive;
  std::vector<BlockKey> blocks;
  std::vector<std::vector<BlockScore>> block_scores;  // [block][t-1]
  std::vector<double> graph_loglik;                   // [t-1]

  std::size_t steps() const { return graph_loglik.size(); }
};

/// Log-density of each count under the block's fitted model.
inline std::vector<BlockScore> score_block(const BlockSeries& series, const ModelParams& params,
                                           ScoreMode mode) {
  params.validate();
  if (series.n < 1) throw InvalidArgument("score_block: block " + series.block.name() + " has n < 1");
  const StateSpace ss = params.state_space(series.n);
  BeliefSequence beliefs = run_filter(series.counts, ss, initial_belief(params));
  if (mode == ScoreMode::smoothed) beliefs = smooth(beliefs, ss);

  std::vector<BlockScore> out(series.steps());
  for (std::size_t t = 0; t < series.steps(); ++t) {
    const GaussianBelief& b =
        mode == ScoreMode::predictive ? beliefs.predicted[t] : beliefs.smoothed[t + 1];
    BlockScore& s = out[t];
    s.count = series.counts[t];
    s.pred_mean = ss.H.dot(b.mean);
    s.pred_var = ss.H * b.cov * ss.H.transpose();
    s.pred_var += observation_variance(beliefs.obs_noise[t], ss.n, ss.r);
    if (s.count) {
      const double w = static_cast<double>(*s.count);
      s.loglik = detail::gaussian_logpdf(w, s.pred_mean, s.pred_var);
      s.z = (w - s.pred_mean) / std::sqrt(s.pred_var);
    }
  }
  return out;
}

/// Scores all blocks; params[i] belongs to series[i]. Blocks with no possible
/// edges carry no information and are left out.
inline ScoreSeries score(const std::vector<BlockSeries>& series,
                         const std::vector<ModelParams>& params,
                         ScoreMode mode = ScoreMode::predictive) {
  if (series.size() != params.size()) {
    throw InvalidArgument("score: one parameter set per block series is required");
  }
  ScoreSeries out;
  out.mode = mode;
  std::size_t steps = 0;
  bool first = true;
  for (std::size_t i = 0; i < series.size(); ++i) {
    if (series[i].n < 1) continue;
    if (first) {
      steps = series[i].steps();
      first = false;
    } else if (series[i].steps() != steps) {
      throw InvalidArgument("score: block series have different lengths");
    }
    out.blocks.push_back(series[i].block);
    out.block_scores.push_back(score_block(series[i], params[i], mode));
  }
  out.graph_loglik.assign(steps, 0.0);
  for (const auto& block : out.block_scores) {
    for (std::size_t t = 0; t < steps; ++t) out.graph_loglik[t] += block[t].loglik;
  }
  return out;
}

/// Flags block-steps whose predictive z-score exceeds k in magnitude.
struct SigmaRule {
  double k = 3.0;

  bool flags(double z) const { return std::abs(z) > k; }
  /// Probability that a standard normal draw is flagged.
  double null_rate() const {
    return 2.0 * boost::math::cdf(boost::math::complement(boost::math::normal(), k));
  }
};

inline SigmaRule threshold_sigma(double k) {
  if (!(k > 0.0)) throw InvalidArgument("sigma threshold k must be positive");
  return SigmaRule{k};
}

/// Flags graphs whose summed log-likelihood falls below c0.
struct LoglikRule {
  double c0 = -std::numeric_limits<double>::infinity();

  bool flags(double loglik) const { return loglik < c0; }
};

using ThresholdPolicy = std::variant<SigmaRule, LoglikRule>;

inline std::string describe(const ThresholdPolicy& policy) {
  std::ostringstream os;
  os.precision(17);
  if (const auto* s = std::get_if<SigmaRule>(&policy)) {
    os << "sigma k=" << s->k;
  } else {
    os << "loglik c0=" << std::get<LoglikRule>(policy).c0;
  }
  return os.str();
}

enum class Scope { graph, block };

struct RankedBlock {
  BlockKey block;
  double loglik = 0.0;
  double z = 0.0;
};

struct Flag {
  std::size_t t = 0;  // 1-based time step
  Scope scope = Scope::graph;
  std::optional<BlockKey> block;
  double score = 0.0;      // |z| in sigma mode, log-likelihood in loglik mode
  double threshold = 0.0;
  std::vector<RankedBlock> ranking;  // drill-down, graph flags only
};

struct AnomalyReport {
  std::string policy;
  std::vector<Flag> flagged;

  std::size_t graph_flags() const {
    return static_cast<std::size_t>(std::count_if(
        flagged.begin(), flagged.end(), [](const Flag& f) { return f.scope == Scope::graph; }));
  }
  std::size_t block_flags() const { return flagged.size() - graph_flags(); }
};

/// Blocks at step t in ascending log-likelihood; ties keep canonical order.
inline std::vector<RankedBlock> rank_blocks(const ScoreSeries& scores, std::size_t t) {
  std::vector<RankedBlock> ranking;
  for (std::size_t b = 0; b < scores.blocks.size(); ++b) {
    const auto& s = scores.block_scores[b][t - 1];
    if (!s.observed()) continue;
    ranking.push_back({scores.blocks[b], s.loglik, s.z});
  }
  std::stable_sort(ranking.begin(), ranking.end(),
                   [](const RankedBlock& x, const RankedBlock& y) { return x.loglik < y.loglik; });
  return ranking;
}

/// Applies a threshold policy. Sigma mode flags each block-step with |z| > k
/// and flags the graph at t when any of its blocks is flagged. Log-likelihood
/// mode flags graphs with L(G_t) < c0.
inline AnomalyReport detect(const ScoreSeries& scores, const ThresholdPolicy& policy,
                            bool drill_down = false) {
  AnomalyReport report;
  report.policy = describe(policy);
  for (std::size_t t = 1; t <= scores.steps(); ++t) {
    if (const auto* rule = std::get_if<SigmaRule>(&policy)) {
      double worst = 0.0;
      bool any = false;
      for (std::size_t b = 0; b < scores.blocks.size(); ++b) {
        const auto& s = scores.block_scores[b][t - 1];
        if (!s.observed()) continue;
        worst = std::max(worst, std::abs(s.z));
        if (rule->flags(s.z)) {
          any = true;
          report.flagged.push_back({t, Scope::block, scores.blocks[b], std::abs(s.z), rule->k, {}});
        }
      }
      if (any) {
        Flag g{t, Scope::graph, std::nullopt, worst, rule->k, {}};
        if (drill_down) g.ranking = rank_blocks(scores, t);
        report.flagged.push_back(std::move(g));
      }
    } else {
      const auto& rule_ll = std::get<LoglikRule>(policy);
      const double l = scores.graph_loglik[t - 1];
      if (rule_ll.flags(l)) {
        Flag g{t, Scope::graph, std::nullopt, l, rule_ll.c0, {}};
        if (drill_down) g.ranking = rank_blocks(scores, t);
        report.flagged.push_back(std::move(g));
      }
    }
  }
  return report;
}

}  // namespace sdsbm
