#pragma once

// Subcommand implementations behind the `sdsbm` executable. Each command
// reads and writes plain files and returns the process exit code; errors are
// raised as exceptions and mapped to exit codes by the caller.

#include <json.hpp>

#include <boost/math/distributions/normal.hpp>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "sdsbm/anomaly.hpp"
#include "sdsbm/em.hpp"
#include "sdsbm/error.hpp"
#include "sdsbm/generator.hpp"
#include "sdsbm/graph_model.hpp"
#include "sdsbm/ingest.hpp"
#include "sdsbm/kalman.hpp"
#include "sdsbm/model_file.hpp"
#include "sdsbm/random.hpp"

namespace sdsbm::cli {

enum ExitCode : int {
  kSuccess = 0,
  kUsageError = 1,
  kDataError = 2,
  kAnomaliesFound = 3,
  kNotConverged = 4,
};

struct CommonOptions {
  std::uint64_t seed = 0;
  int period = 7;
  std::string out_dir = ".";
};

/// Generation settings of one block. The initial seasonal profile is a sine
/// of the given amplitude over one period.
struct BlockGenSpec {
  double bias = 0.3;
  double amplitude = 0.1;
  double q_m = 1e-6;
  double q_s = 1e-6;
  double r = 1e-4;
};

struct SimulateOptions {
  CommonOptions common;
  std::size_t steps = 280;
  std::map<std::string, int> type_sizes{{"a", 32}, {"b", 32}};
  BlockGenSpec defaults;
  std::map<std::string, BlockGenSpec> block_overrides;  // keyed by "a-b"
  double origin = 0.0;
  double width = 1.0;
};

struct BucketOptions {
  double origin = 0.0;
  double width = 1.0;
  std::optional<std::size_t> steps;
  bool missing_as_unobserved = false;

  BucketingConfig config() const {
    BucketingConfig c;
    c.origin = origin;
    c.width = width;
    c.steps = steps;
    c.missing_policy =
        missing_as_unobserved ? MissingPolicy::missing_observation : MissingPolicy::empty_graph;
    return c;
  }
};

struct FitOptions {
  CommonOptions common;
  std::string events_path;
  std::string types_path;
  BucketOptions bucket;
  int max_iter = 200;
  double tol = 1e-6;
  bool fix_r_zero = false;
  bool paper_default_init = false;
  std::string init_model_path;  // optional warm start
};

struct ForecastOptions {
  CommonOptions common;
  std::string model_path;
  std::size_t horizon = 14;
  double level = 0.95;
};

struct DetectOptions {
  CommonOptions common;
  std::string model_path;
  std::string events_path;
  std::string types_path;
  BucketOptions bucket;
  std::optional<double> sigma;
  std::optional<double> loglik_threshold;
  ScoreMode mode = ScoreMode::predictive;
  bool drill_down = false;
};

namespace detail {

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::filesystem::path prepare_dir(const std::string& dir) {
  std::filesystem::path p(dir.empty() ? "." : dir);
  std::filesystem::create_directories(p);
  return p;
}

inline std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  auto out = open_out(path);
  out << j.dump(2) << '\n';
}

inline nlohmann::json to_json(const BlockGenSpec& s) {
  return {{"bias", s.bias}, {"amplitude", s.amplitude}, {"q_m", s.q_m}, {"q_s", s.q_s}, {"r", s.r}};
}

inline nlohmann::json to_json(const BucketOptions& b) {
  nlohmann::json j = {{"origin", b.origin},
                      {"width", b.width},
                      {"missing_policy", b.missing_as_unobserved ? "missing-observation" : "empty-graph"}};
  j["steps"] = b.steps ? nlohmann::json(*b.steps) : nlohmann::json(nullptr);
  return j;
}

inline GenParams gen_params(const BlockGenSpec& spec, int period) {
  std::vector<double> profile(period);
  for (int i = 0; i < period; ++i) {
    profile[i] = spec.amplitude * std::sin(2.0 * std::numbers::pi * i / period);
  }
  GenParams g;
  g.period = period;
  g.q_m = spec.q_m;
  g.q_s = spec.q_s;
  g.r = spec.r;
  g.init = SeasonalState::from_profile(spec.bias, profile);
  try {
    g.validate();
  } catch (const InvalidArgument& e) {
    throw InvalidArgument(std::string("simulate: ") + e.what());
  }
  return g;
}

inline std::vector<BlockSeries> load_series(const std::string& events_path,
                                            const std::string& types_path,
                                            const BucketOptions& bucket) {
  const ParsedInputs inputs = parse_inputs(events_path, types_path);
  return extract_block_series(bucketize(inputs.events, inputs.typing, bucket.config()));
}

inline std::string count_field(const std::optional<std::int64_t>& c) {
  return c ? std::to_string(*c) : std::string();
}

}  // namespace detail

/// Generates a typed dynamic network and writes events.csv, types.csv,
/// latent.csv and simulate_config.json into the output directory.
inline int cmd_simulate(const SimulateOptions& opt) {
  if (opt.common.period < 2) throw InvalidArgument("simulate: period must be >= 2");
  if (!(opt.width > 0.0)) throw InvalidArgument("simulate: width must be > 0");
  std::vector<std::pair<std::string, std::string>> vertices;
  for (const auto& [label, size] : opt.type_sizes) {
    if (size < 1) throw InvalidArgument("simulate: type '" + label + "' needs at least one vertex");
    for (int i = 0; i < size; ++i) vertices.emplace_back(label + std::to_string(i), label);
  }
  if (vertices.empty()) throw InvalidArgument("simulate: no vertex types given");
  const VertexTyping typing(vertices);

  std::map<BlockKey, GenParams> params;
  nlohmann::json block_json = nlohmann::json::object();
  for (const auto& block : typing.blocks()) {
    auto it = opt.block_overrides.find(block.name());
    const BlockGenSpec& spec = it != opt.block_overrides.end() ? it->second : opt.defaults;
    params.emplace(block, detail::gen_params(spec, opt.common.period));
    block_json[block.name()] = detail::to_json(spec);
  }
  for (const auto& [name, spec] : opt.block_overrides) {
    if (!block_json.contains(name)) throw InvalidArgument("simulate: unknown block '" + name + "'");
  }

  const GeneratedNetwork gen = generate_network(params, typing, opt.steps, opt.common.seed);
  const auto dir = detail::prepare_dir(opt.common.out_dir);

  {
    auto out = detail::open_out(dir / "types.csv");
    out << "vertex,type\n";
    for (VertexIndex v = 0; v < typing.vertex_count(); ++v) {
      out << typing.vertices()[v] << ',' << typing.type_label(v) << '\n';
    }
  }
  {
    auto out = detail::open_out(dir / "events.csv");
    out << "timestamp,src,dst\n";
    const auto& snaps = gen.network.snapshots();
    for (std::size_t t = 0; t < snaps.size(); ++t) {
      const std::string ts = detail::fmt(opt.origin + (static_cast<double>(t) + 0.5) * opt.width);
      for (const auto& e : snaps[t].edges) {
        out << ts << ',' << typing.vertices()[e.u] << ',' << typing.vertices()[e.v] << '\n';
      }
    }
  }
  {
    auto out = detail::open_out(dir / "latent.csv");
    out << "t,block_a,block_b,m,s,e,w\n";
    for (std::size_t t = 0; t < opt.steps; ++t) {
      for (const auto& [block, trace] : gen.truth) {
        const auto& s = trace.steps[t];
        out << t + 1 << ',' << block.a << ',' << block.b << ',' << detail::fmt(s.state.bias) << ','
            << detail::fmt(s.state.leading_offset()) << ',' << detail::fmt(s.density) << ','
            << s.count << '\n';
      }
    }
  }
  nlohmann::json config = {{"command", "simulate"},
                           {"seed", opt.common.seed},
                           {"period", opt.common.period},
                           {"steps", opt.steps},
                           {"origin", opt.origin},
                           {"width", opt.width},
                           {"types", opt.type_sizes},
                           {"blocks", block_json}};
  detail::write_json(dir / "simulate_config.json", config);
  return kSuccess;
}

/// Fits every inferable block by EM and writes model.json, em_trace.csv and
/// states.csv. Returns kNotConverged when any block stopped at max_iter.
inline int cmd_fit(const FitOptions& opt) {
  if (opt.common.period < 2) throw InvalidArgument("fit: period must be >= 2");
  if (opt.max_iter < 1) throw InvalidArgument("fit: max-iter must be >= 1");
  if (!(opt.tol >= 0.0)) throw InvalidArgument("fit: tol must be >= 0");
  const auto series = detail::load_series(opt.events_path, opt.types_path, opt.bucket);

  std::optional<ModelFile> warm;
  if (!opt.init_model_path.empty()) {
    warm = load_model(opt.init_model_path);
    if (warm->period != opt.common.period) {
      throw DataError("fit: initial model has period " + std::to_string(warm->period));
    }
  }

  EmConfig em;
  em.max_iter = opt.max_iter;
  em.tol = opt.tol;
  em.fix_r_to_zero = opt.fix_r_zero;

  ModelFile model;
  model.period = opt.common.period;
  model.config = {{"command", "fit"},
                  {"seed", opt.common.seed},
                  {"period", opt.common.period},
                  {"events", opt.events_path},
                  {"types", opt.types_path},
                  {"bucket", detail::to_json(opt.bucket)},
                  {"max_iter", opt.max_iter},
                  {"tol", opt.tol},
                  {"fix_r_zero", opt.fix_r_zero},
                  {"paper_default_init", opt.paper_default_init},
                  {"init_model", opt.init_model_path}};

  const auto dir = detail::prepare_dir(opt.common.out_dir);
  auto trace_out = detail::open_out(dir / "em_trace.csv");
  trace_out << "block_a,block_b,iter,loglik,q_m,q_s,r\n";
  auto states_out = detail::open_out(dir / "states.csv");
  states_out << "t,block_a,block_b,w,m,s,density,density_sd\n";

  bool all_converged = true;
  for (const auto& s : series) {
    if (s.n < 1) continue;
    ModelParams init;
    const FittedBlock* prior = warm ? warm->find(s.block) : nullptr;
    if (warm && (!prior || prior->n != s.n)) {
      throw DataError("fit: initial model does not match block " + s.block.name());
    }
    init = prior ? prior->params : default_initial_params(s, opt.common.period, opt.paper_default_init);

    EmResult fit;
    try {
      fit = em_fit(s, init, em);
    } catch (const Error& e) {
      throw NumericalError("fit: block " + s.block.name() + ": " + e.what());
    }
    all_converged = all_converged && fit.trace.converged;
    for (std::size_t i = 0; i < fit.trace.loglik_per_iter.size(); ++i) {
      const auto& p = fit.trace.params_per_iter[i];
      trace_out << s.block.a << ',' << s.block.b << ',' << i + 1 << ','
                << detail::fmt(fit.trace.loglik_per_iter[i]) << ',' << detail::fmt(p.q_m) << ','
                << detail::fmt(p.q_s) << ',' << detail::fmt(p.r) << '\n';
    }

    const StateSpace ss = fit.params.state_space(s.n);
    const BeliefSequence beliefs = smooth(run_filter(s.counts, ss, initial_belief(fit.params)), ss);
    const double n = static_cast<double>(s.n);
    for (std::size_t t = 1; t <= s.steps(); ++t) {
      const auto& b = beliefs.smoothed[t];
      const double density = ss.H.dot(b.mean) / n;
      const double sd = std::sqrt(std::max(0.0, double(ss.H * b.cov * ss.H.transpose()))) / n;
      states_out << t << ',' << s.block.a << ',' << s.block.b << ','
                 << detail::count_field(s.counts[t - 1]) << ',' << detail::fmt(b.mean[0]) << ','
                 << detail::fmt(b.mean[1]) << ',' << detail::fmt(density) << ','
                 << detail::fmt(sd) << '\n';
    }

    FittedBlock fb;
    fb.block = s.block;
    fb.n = s.n;
    fb.params = fit.params;
    fb.steps = s.steps();
    fb.terminal = s.steps() > 0 ? beliefs.filtered.back() : beliefs.initial;
    model.blocks.push_back(std::move(fb));
  }
  save_model(model, (dir / "model.json").string());
  return all_converged ? kSuccess : kNotConverged;
}

/// Two-sided Gaussian quantile for a central confidence level.
inline double gaussian_half_width_z(double level) {
  if (!(level > 0.0 && level < 1.0)) throw InvalidArgument("confidence level must be in (0, 1)");
  return boost::math::quantile(boost::math::normal(), 0.5 + 0.5 * level);
}

/// Forecasts each block from its terminal filtered belief and writes
/// forecast.csv with Gaussian confidence bounds.
inline int cmd_forecast(const ForecastOptions& opt) {
  if (opt.horizon < 1) throw InvalidArgument("forecast: horizon must be >= 1");
  const double z = gaussian_half_width_z(opt.level);
  const ModelFile model = load_model(opt.model_path);
  const auto dir = detail::prepare_dir(opt.common.out_dir);
  auto out = detail::open_out(dir / "forecast.csv");
  out << "t,block_a,block_b,mean,variance,lower,upper\n";
  for (const auto& b : model.blocks) {
    if (!b.terminal) throw DataError("forecast: block " + b.block.name() + " has no terminal belief");
    const auto steps = forecast(*b.terminal, b.params.state_space(b.n), opt.horizon);
    for (std::size_t h = 0; h < steps.size(); ++h) {
      const double var = steps[h].variance();
      const double half = z * std::sqrt(var);
      out << b.steps + h + 1 << ',' << b.block.a << ',' << b.block.b << ','
          << detail::fmt(steps[h].mean) << ',' << detail::fmt(var) << ','
          << detail::fmt(steps[h].mean - half) << ',' << detail::fmt(steps[h].mean + half) << '\n';
    }
  }
  nlohmann::json config = {{"command", "forecast"},  {"seed", opt.common.seed},
                           {"model", opt.model_path}, {"horizon", opt.horizon},
                           {"level", opt.level},      {"z", z}};
  detail::write_json(dir / "forecast_config.json", config);
  return kSuccess;
}

/// Scores data under a fitted model and writes scores.csv and report.json.
/// Returns kAnomaliesFound when any graph-level anomaly is flagged.
inline int cmd_detect(const DetectOptions& opt) {
  if (opt.sigma && opt.loglik_threshold) {
    throw InvalidArgument("detect: give either --sigma or --loglik-threshold, not both");
  }
  ThresholdPolicy policy = threshold_sigma(opt.sigma.value_or(3.0));
  if (opt.loglik_threshold) policy = LoglikRule{*opt.loglik_threshold};

  const ModelFile model = load_model(opt.model_path);
  const auto all_series = detail::load_series(opt.events_path, opt.types_path, opt.bucket);
  std::vector<BlockSeries> series;
  std::vector<ModelParams> params;
  for (const auto& s : all_series) {
    if (s.n < 1) continue;
    const FittedBlock* fb = model.find(s.block);
    if (!fb || fb->n != s.n) {
      throw DataError("detect: typing mismatch between model and data at block " + s.block.name());
    }
    series.push_back(s);
    params.push_back(fb->params);
  }
  if (series.size() != model.blocks.size()) {
    throw DataError("detect: typing mismatch, model has blocks absent from the data");
  }

  const ScoreSeries scores = score(series, params, opt.mode);
  const AnomalyReport report = detect(scores, policy, opt.drill_down);

  std::vector<std::vector<bool>> block_flag(scores.blocks.size(),
                                            std::vector<bool>(scores.steps(), false));
  std::vector<bool> graph_flag(scores.steps(), false);
  for (const auto& f : report.flagged) {
    if (f.scope == Scope::graph) {
      graph_flag[f.t - 1] = true;
    } else {
      for (std::size_t b = 0; b < scores.blocks.size(); ++b) {
        if (scores.blocks[b] == *f.block) block_flag[b][f.t - 1] = true;
      }
    }
  }

  const auto dir = detail::prepare_dir(opt.common.out_dir);
  {
    auto out = detail::open_out(dir / "scores.csv");
    out << "t,scope,block_a,block_b,w,pred_mean,pred_var,loglik,z,flagged\n";
    for (std::size_t t = 1; t <= scores.steps(); ++t) {
      double w_sum = 0.0;
      double mean_sum = 0.0;
      double var_sum = 0.0;
      bool any_observed = false;
      for (std::size_t b = 0; b < scores.blocks.size(); ++b) {
        const auto& s = scores.block_scores[b][t - 1];
        out << t << ",block," << scores.blocks[b].a << ',' << scores.blocks[b].b << ','
            << detail::count_field(s.count) << ',' << detail::fmt(s.pred_mean) << ','
            << detail::fmt(s.pred_var) << ',';
        if (s.observed()) {
          out << detail::fmt(s.loglik) << ',' << detail::fmt(s.z);
          w_sum += static_cast<double>(*s.count);
          mean_sum += s.pred_mean;
          var_sum += s.pred_var;
          any_observed = true;
        } else {
          out << ',';
        }
        out << ',' << (block_flag[b][t - 1] ? 1 : 0) << '\n';
      }
      out << t << ",graph,,,";
      if (any_observed) {
        out << detail::fmt(w_sum) << ',' << detail::fmt(mean_sum) << ',' << detail::fmt(var_sum)
            << ',' << detail::fmt(scores.graph_loglik[t - 1]) << ','
            << detail::fmt((w_sum - mean_sum) / std::sqrt(var_sum));
      } else {
        out << ",,,,";
      }
      out << ',' << (graph_flag[t - 1] ? 1 : 0) << '\n';
    }
  }

  nlohmann::json flagged = nlohmann::json::array();
  for (const auto& f : report.flagged) {
    nlohmann::json jf = {{"t", f.t},
                         {"scope", f.scope == Scope::graph ? "graph" : "block"},
                         {"score", f.score},
                         {"threshold", f.threshold}};
    if (f.block) {
      jf["block_a"] = f.block->a;
      jf["block_b"] = f.block->b;
    }
    if (!f.ranking.empty()) {
      nlohmann::json ranking = nlohmann::json::array();
      for (const auto& r : f.ranking) {
        ranking.push_back({{"block_a", r.block.a}, {"block_b", r.block.b}, {"loglik", r.loglik}, {"z", r.z}});
      }
      jf["ranking"] = std::move(ranking);
    }
    flagged.push_back(std::move(jf));
  }
  nlohmann::json config = {{"command", "detect"},
                           {"seed", opt.common.seed},
                           {"model", opt.model_path},
                           {"events", opt.events_path},
                           {"types", opt.types_path},
                           {"bucket", detail::to_json(opt.bucket)},
                           {"mode", to_string(opt.mode)},
                           {"drill_down", opt.drill_down}};
  nlohmann::json summary = {{"config", config},
                            {"policy", report.policy},
                            {"mode", to_string(opt.mode)},
                            {"steps", scores.steps()},
                            {"counts", {{"graph", report.graph_flags()}, {"block", report.block_flags()}}},
                            {"flagged", std::move(flagged)}};
  detail::write_json(dir / "report.json", summary);
  return report.graph_flags() > 0 ? kAnomaliesFound : kSuccess;
}

}  // namespace sdsbm::cli
