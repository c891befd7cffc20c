// Command-line front end: simulate, fit, forecast and detect.

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <functional>
#include <iostream>
#include <string>

#include "sdsbm/cli.hpp"

namespace {

using nlohmann::json;
using namespace sdsbm::cli;

/// Values from a --config JSON file fill every option that was not given on
/// the command line. Keys are the long flag names without leading dashes.
class ConfigOverlay {
 public:
  void load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw sdsbm::InvalidArgument("cannot open config file " + path);
    try {
      doc_ = json::parse(in);
    } catch (const json::exception& e) {
      throw sdsbm::InvalidArgument("config file " + path + ": " + e.what());
    }
    if (!doc_.is_object()) throw sdsbm::InvalidArgument("config file must hold a JSON object");
  }

  template <typename T>
  void apply(const CLI::App& app, const std::string& key, T& target) const {
    apply_with(app, key, [&](const json& v) { target = v.get<T>(); });
  }

  void apply_with(const CLI::App& app, const std::string& key,
                  const std::function<void(const json&)>& set) const {
    if (!doc_.contains(key)) return;
    const CLI::Option* opt = app.get_option_no_throw("--" + key);
    if (opt != nullptr && opt->count() > 0) return;
    try {
      set(doc_.at(key));
    } catch (const json::exception& e) {
      throw sdsbm::InvalidArgument("config key '" + key + "': " + e.what());
    }
  }

  const json& doc() const { return doc_; }

 private:
  json doc_ = json::object();
};

BlockGenSpec spec_from_json(const json& j, BlockGenSpec base) {
  base.bias = j.value("bias", base.bias);
  base.amplitude = j.value("amplitude", base.amplitude);
  base.q_m = j.value("q_m", base.q_m);
  base.q_s = j.value("q_s", base.q_s);
  base.r = j.value("r", base.r);
  return base;
}

void add_common(CLI::App& app, CommonOptions& common, std::string& config_path) {
  app.add_option("--seed", common.seed, "Seed for every random draw");
  app.add_option("--period", common.period, "Seasonal period d (time steps)")->check(CLI::Range(2, 1 << 20));
  app.add_option("--out-dir", common.out_dir, "Output directory");
  app.add_option("--config", config_path, "JSON file with option values");
}

void add_bucket(CLI::App& app, BucketOptions& bucket, std::size_t& steps) {
  app.add_option("--origin", bucket.origin, "Timestamp of the start of bucket 1");
  app.add_option("--width", bucket.width, "Bucket width in timestamp units");
  app.add_option("--steps", steps, "Number of time steps T (default: up to the last event)");
  app.add_flag("--missing-as-unobserved", bucket.missing_as_unobserved,
               "Treat buckets without events as missing observations");
}

void overlay_common(const ConfigOverlay& cfg, const CLI::App& app, CommonOptions& common) {
  cfg.apply(app, "seed", common.seed);
  cfg.apply(app, "period", common.period);
  cfg.apply(app, "out-dir", common.out_dir);
}

void overlay_bucket(const ConfigOverlay& cfg, const CLI::App& app, BucketOptions& bucket,
                    std::size_t& steps) {
  cfg.apply(app, "origin", bucket.origin);
  cfg.apply(app, "width", bucket.width);
  cfg.apply(app, "steps", steps);
  cfg.apply(app, "missing-as-unobserved", bucket.missing_as_unobserved);
  if (app.get_option("--steps")->count() > 0 || cfg.doc().contains("steps")) bucket.steps = steps;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Seasonal dynamic stochastic block model toolkit"};
  app.require_subcommand(1);

  SimulateOptions sim;
  FitOptions fit;
  ForecastOptions fc;
  DetectOptions det;
  std::string sim_config, fit_config, fc_config, det_config;
  std::size_t fit_steps = 0, det_steps = 0;
  std::string mode = "predictive";

  auto* simulate = app.add_subcommand("simulate", "Generate a synthetic seasonal dynamic network");
  add_common(*simulate, sim.common, sim_config);
  simulate->add_option("--steps", sim.steps, "Number of time steps T");
  std::vector<std::string> type_specs;
  auto* types_opt = simulate->add_option("--types", type_specs, "Type sizes as label=count pairs");
  simulate->add_option("--bias", sim.defaults.bias, "Initial bias (edge density)");
  simulate->add_option("--amplitude", sim.defaults.amplitude, "Seasonal amplitude (edge density)");
  simulate->add_option("--q-m", sim.defaults.q_m, "Bias process variance");
  simulate->add_option("--q-s", sim.defaults.q_s, "Seasonal process variance");
  simulate->add_option("--r", sim.defaults.r, "Measurement variance");
  simulate->add_option("--width", sim.width, "Timestamp width of one step");

  auto* fit_cmd = app.add_subcommand("fit", "Learn per-block parameters by EM");
  add_common(*fit_cmd, fit.common, fit_config);
  fit_cmd->add_option("--events", fit.events_path, "Events CSV (timestamp,src,dst)");
  fit_cmd->add_option("--types", fit.types_path, "Types CSV (vertex,type)");
  add_bucket(*fit_cmd, fit.bucket, fit_steps);
  fit_cmd->add_option("--max-iter", fit.max_iter, "Maximum EM iterations");
  fit_cmd->add_option("--tol", fit.tol, "Relative log-likelihood tolerance");
  fit_cmd->add_flag("--fix-r-zero", fit.fix_r_zero, "Pin the measurement variance r to 0");
  fit_cmd->add_flag("--paper-default-init", fit.paper_default_init,
                    "Start q_m, q_s and r at 1 instead of data-scaled guesses");
  fit_cmd->add_option("--init-model", fit.init_model_path, "Warm-start from a saved model");

  auto* forecast_cmd = app.add_subcommand("forecast", "Forecast counts with confidence bounds");
  add_common(*forecast_cmd, fc.common, fc_config);
  forecast_cmd->add_option("--model", fc.model_path, "Model file from fit");
  forecast_cmd->add_option("--horizon", fc.horizon, "Steps ahead");
  forecast_cmd->add_option("--level", fc.level, "Central confidence level");

  auto* detect_cmd = app.add_subcommand("detect", "Score data and flag anomalous graphs");
  add_common(*detect_cmd, det.common, det_config);
  detect_cmd->add_option("--model", det.model_path, "Model file from fit");
  detect_cmd->add_option("--events", det.events_path, "Events CSV (timestamp,src,dst)");
  detect_cmd->add_option("--types", det.types_path, "Types CSV (vertex,type)");
  add_bucket(*detect_cmd, det.bucket, det_steps);
  double sigma = 3.0, c0 = 0.0;
  auto* sigma_opt = detect_cmd->add_option("--sigma", sigma, "Flag block-steps with |z| > k");
  auto* c0_opt = detect_cmd->add_option("--loglik-threshold", c0, "Flag graphs with log-likelihood < c0");
  sigma_opt->excludes(c0_opt);
  detect_cmd->add_option("--mode", mode, "Scoring moments")
      ->check(CLI::IsMember({"predictive", "smoothed"}));
  detect_cmd->add_flag("--drill-down", det.drill_down, "Rank blocks for each flagged graph");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kSuccess : kUsageError;
  }

  try {
    ConfigOverlay cfg;
    if (simulate->parsed()) {
      if (!sim_config.empty()) cfg.load(sim_config);
      overlay_common(cfg, *simulate, sim.common);
      cfg.apply(*simulate, "steps", sim.steps);
      if (types_opt->count() > 0) {
        sim.type_sizes.clear();
        for (const auto& spec : type_specs) {
          const auto eq = spec.find('=');
          if (eq == std::string::npos || eq == 0) {
            throw sdsbm::InvalidArgument("--types expects label=count, got '" + spec + "'");
          }
          sim.type_sizes[spec.substr(0, eq)] = std::stoi(spec.substr(eq + 1));
        }
      }
      cfg.apply(*simulate, "types", sim.type_sizes);
      cfg.apply(*simulate, "width", sim.width);
      cfg.apply_with(*simulate, "bias", [&](const json& v) { sim.defaults.bias = v.get<double>(); });
      cfg.apply_with(*simulate, "amplitude", [&](const json& v) { sim.defaults.amplitude = v.get<double>(); });
      cfg.apply_with(*simulate, "q-m", [&](const json& v) { sim.defaults.q_m = v.get<double>(); });
      cfg.apply_with(*simulate, "q-s", [&](const json& v) { sim.defaults.q_s = v.get<double>(); });
      cfg.apply_with(*simulate, "r", [&](const json& v) { sim.defaults.r = v.get<double>(); });
      cfg.apply_with(*simulate, "blocks", [&](const json& v) {
        for (const auto& [name, spec] : v.items()) sim.block_overrides[name] = spec_from_json(spec, sim.defaults);
      });
      return cmd_simulate(sim);
    }
    if (fit_cmd->parsed()) {
      if (!fit_config.empty()) cfg.load(fit_config);
      overlay_common(cfg, *fit_cmd, fit.common);
      overlay_bucket(cfg, *fit_cmd, fit.bucket, fit_steps);
      cfg.apply(*fit_cmd, "events", fit.events_path);
      cfg.apply(*fit_cmd, "types", fit.types_path);
      cfg.apply(*fit_cmd, "max-iter", fit.max_iter);
      cfg.apply(*fit_cmd, "tol", fit.tol);
      cfg.apply(*fit_cmd, "fix-r-zero", fit.fix_r_zero);
      cfg.apply(*fit_cmd, "paper-default-init", fit.paper_default_init);
      cfg.apply(*fit_cmd, "init-model", fit.init_model_path);
      if (fit.events_path.empty() || fit.types_path.empty()) {
        throw sdsbm::InvalidArgument("fit needs --events and --types");
      }
      return cmd_fit(fit);
    }
    if (forecast_cmd->parsed()) {
      if (!fc_config.empty()) cfg.load(fc_config);
      overlay_common(cfg, *forecast_cmd, fc.common);
      cfg.apply(*forecast_cmd, "model", fc.model_path);
      cfg.apply(*forecast_cmd, "horizon", fc.horizon);
      cfg.apply(*forecast_cmd, "level", fc.level);
      if (fc.model_path.empty()) throw sdsbm::InvalidArgument("forecast needs --model");
      return cmd_forecast(fc);
    }
    if (!det_config.empty()) cfg.load(det_config);
    overlay_common(cfg, *detect_cmd, det.common);
    overlay_bucket(cfg, *detect_cmd, det.bucket, det_steps);
    cfg.apply(*detect_cmd, "model", det.model_path);
    cfg.apply(*detect_cmd, "events", det.events_path);
    cfg.apply(*detect_cmd, "types", det.types_path);
    cfg.apply(*detect_cmd, "drill-down", det.drill_down);
    cfg.apply(*detect_cmd, "mode", mode);
    if (sigma_opt->count() > 0) det.sigma = sigma;
    if (c0_opt->count() > 0) det.loglik_threshold = c0;
    if (!det.sigma && !det.loglik_threshold) {
      if (cfg.doc().contains("loglik-threshold")) {
        det.loglik_threshold = cfg.doc()["loglik-threshold"].get<double>();
      } else if (cfg.doc().contains("sigma")) {
        det.sigma = cfg.doc()["sigma"].get<double>();
      }
    }
    det.mode = mode == "smoothed" ? sdsbm::ScoreMode::smoothed : sdsbm::ScoreMode::predictive;
    if (det.model_path.empty() || det.events_path.empty() || det.types_path.empty()) {
      throw sdsbm::InvalidArgument("detect needs --model, --events and --types");
    }
    return cmd_detect(det);
  } catch (const sdsbm::InvalidArgument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const sdsbm::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kDataError;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kDataError;
  }
}
