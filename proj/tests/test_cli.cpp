#include <gtest/gtest.h>
#include <json.hpp>
#include <sys/wait.h>

#include <boost/math/distributions/binomial.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "sdsbm/cli.hpp"

namespace sdsbm {
namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<std::string> lines_of(const fs::path& p) {
  std::vector<std::string> out;
  std::ifstream in(p);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

std::vector<std::string> fields(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  for (std::string f; std::getline(ss, f, ',');) out.push_back(f);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

int run(const std::string& args) {
  const std::string cmd = std::string(SDSBM_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("sdsbm_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
};

TEST_F(Cli, SimulateIsDeterministic) {
  const std::string args = " --seed 7 --period 5 --steps 40 --types a=8 --types b=6 --out-dir ";
  ASSERT_EQ(run("simulate" + args + path("x")), 0);
  ASSERT_EQ(run("simulate" + args + path("y")), 0);
  for (const char* f : {"events.csv", "types.csv", "latent.csv", "simulate_config.json"}) {
    EXPECT_EQ(slurp(dir_ / "x" / f), slurp(dir_ / "y" / f)) << f;
    EXPECT_FALSE(slurp(dir_ / "x" / f).empty()) << f;
  }
  const auto cfg = nlohmann::json::parse(slurp(dir_ / "x" / "simulate_config.json"));
  EXPECT_EQ(cfg["seed"], 7);
  ASSERT_EQ(run("simulate --seed 8 --period 5 --steps 40 --types a=8 --types b=6 --out-dir " + path("z")), 0);
  EXPECT_NE(slurp(dir_ / "x" / "events.csv"), slurp(dir_ / "z" / "events.csv"));
}

TEST_F(Cli, SimulateZeroStepsWritesHeaders) {
  ASSERT_EQ(run("simulate --steps 0 --out-dir " + path("s")), 0);
  EXPECT_EQ(slurp(dir_ / "s" / "events.csv"), "timestamp,src,dst\n");
  EXPECT_EQ(slurp(dir_ / "s" / "latent.csv"), "t,block_a,block_b,m,s,e,w\n");
}

TEST_F(Cli, SimulateDefaultScenarioIsFast) {
  const auto start = std::chrono::steady_clock::now();
  ASSERT_EQ(run("simulate --seed 1 --out-dir " + path("s")), 0);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  EXPECT_LT(secs, 5.0);
  EXPECT_EQ(lines_of(dir_ / "s" / "latent.csv").size(), 1u + 280u * 3u);
}

TEST_F(Cli, SimulateLatentMatchesEvents) {
  ASSERT_EQ(run("simulate --seed 3 --period 4 --steps 12 --types a=6 --types b=5 --out-dir " + path("s")), 0);
  std::int64_t latent_total = 0;
  const auto latent = lines_of(dir_ / "s" / "latent.csv");
  for (std::size_t i = 1; i < latent.size(); ++i) latent_total += std::stoll(fields(latent[i])[6]);
  EXPECT_EQ(static_cast<std::int64_t>(lines_of(dir_ / "s" / "events.csv").size()) - 1, latent_total);
}

TEST_F(Cli, UsageErrors) {
  EXPECT_EQ(run(""), 1);
  EXPECT_EQ(run("bogus"), 1);
  EXPECT_EQ(run("simulate --types a"), 1);
  EXPECT_EQ(run("simulate --period 1"), 1);
  EXPECT_EQ(run("fit --out-dir " + path("f")), 1);
  EXPECT_EQ(run("detect --sigma 3 --loglik-threshold -5"), 1);
  EXPECT_EQ(run("forecast --model x --horizon 0 --out-dir " + path("f")), 1);
}

TEST_F(Cli, InvalidGeneratorParamsNameTheField) {
  std::ofstream(path("cfg.json")) << R"({"q-m": -1})";
  const std::string cmd = std::string(SDSBM_CLI_PATH) + " simulate --config " + path("cfg.json") +
                          " --out-dir " + path("s") + " 2>" + path("err.txt");
  const int status = std::system(cmd.c_str());
  EXPECT_EQ(WEXITSTATUS(status), 1);
  EXPECT_NE(slurp(dir_ / "err.txt").find("q_m"), std::string::npos);
}

TEST_F(Cli, DataErrors) {
  std::ofstream(path("types.csv")) << "vertex,type\n1,a\n2,a\n";
  std::ofstream(path("events.csv")) << "timestamp,src,dst\n1,1,9\n";
  EXPECT_EQ(run("fit --events " + path("events.csv") + " --types " + path("types.csv") + " --out-dir " +
                path("f")),
            2);
  std::ofstream(path("model.json")) << "{\"version\": 1, \"d\": 3";
  EXPECT_EQ(run("forecast --model " + path("model.json") + " --out-dir " + path("f")), 2);
}

class Pipeline : public Cli {
 protected:
  void SetUp() override {
    Cli::SetUp();
    ASSERT_EQ(run("simulate --seed 11 --period 7 --steps 140 --types a=40 --types b=30 --r 1e-3 --out-dir " +
                  path("sim")),
              0);
  }

  std::string data_args() const {
    return " --events " + path("sim/events.csv") + " --types " + path("sim/types.csv") +
           " --period 7 --steps 140";
  }
};

TEST_F(Pipeline, FitWritesTraceAndModel) {
  const int code = run("fit" + data_args() + " --out-dir " + path("fit"));
  ASSERT_TRUE(code == 0 || code == 4) << code;
  const auto model = load_model(path("fit/model.json"));
  EXPECT_EQ(model.period, 7);
  EXPECT_EQ(model.blocks.size(), 3u);
  EXPECT_EQ(model.config["command"], "fit");
  const auto trace = lines_of(dir_ / "fit" / "em_trace.csv");
  ASSERT_GT(trace.size(), 1u);
  EXPECT_EQ(trace[0], "block_a,block_b,iter,loglik,q_m,q_s,r");
  // The log-likelihood column is monotone within each block.
  std::map<std::string, double> last;
  for (std::size_t i = 1; i < trace.size(); ++i) {
    const auto f = fields(trace[i]);
    const std::string key = f[0] + "-" + f[1];
    const double ll = std::stod(f[3]);
    if (last.count(key)) EXPECT_GE(ll - last[key], -1e-8) << trace[i];
    last[key] = ll;
  }
  EXPECT_TRUE(fs::exists(dir_ / "fit" / "states.csv"));
}

TEST_F(Pipeline, FixedRTraceHasZeroR) {
  const int code = run("fit" + data_args() + " --fix-r-zero --max-iter 20 --out-dir " + path("fit"));
  ASSERT_TRUE(code == 0 || code == 4) << code;
  const auto trace = lines_of(dir_ / "fit" / "em_trace.csv");
  for (std::size_t i = 1; i < trace.size(); ++i) EXPECT_EQ(std::stod(fields(trace[i])[6]), 0.0) << trace[i];
  for (const auto& b : load_model(path("fit/model.json")).blocks) EXPECT_EQ(b.params.r, 0.0);
}

TEST_F(Pipeline, NonConvergenceExitCode) {
  EXPECT_EQ(run("fit" + data_args() + " --max-iter 2 --tol 0 --out-dir " + path("fit")), 4);
}

TEST_F(Pipeline, RefitFromSavedModelConvergesImmediately) {
  ASSERT_EQ(run("fit" + data_args() + " --max-iter 1000 --out-dir " + path("fit")), 0);
  ASSERT_EQ(run("fit" + data_args() + " --max-iter 1000 --init-model " + path("fit/model.json") +
                " --out-dir " + path("refit")),
            0);
  std::map<std::string, int> iters;
  const auto trace = lines_of(dir_ / "refit" / "em_trace.csv");
  for (std::size_t i = 1; i < trace.size(); ++i) {
    const auto f = fields(trace[i]);
    iters[f[0] + "-" + f[1]] = std::max(iters[f[0] + "-" + f[1]], std::stoi(f[2]));
  }
  ASSERT_EQ(iters.size(), 3u);
  for (const auto& [block, n] : iters) EXPECT_LE(n, 2) << block;
}

TEST_F(Pipeline, ForecastMatchesLibrary) {
  ASSERT_EQ(run("fit" + data_args() + " --max-iter 30 --out-dir " + path("fit")), 4);
  ASSERT_EQ(run("forecast --model " + path("fit/model.json") + " --horizon 1 --out-dir " + path("fc")), 0);
  const auto model = load_model(path("fit/model.json"));
  const auto rows = lines_of(dir_ / "fc" / "forecast.csv");
  ASSERT_EQ(rows.size(), 1u + model.blocks.size());
  EXPECT_EQ(rows[0], "t,block_a,block_b,mean,variance,lower,upper");
  for (std::size_t i = 0; i < model.blocks.size(); ++i) {
    const auto& b = model.blocks[i];
    const auto f = forecast(*b.terminal, b.params.state_space(b.n), 1);
    const auto cols = fields(rows[i + 1]);
    EXPECT_EQ(std::stoul(cols[0]), b.steps + 1);
    EXPECT_EQ(std::stod(cols[3]), f[0].mean);
    EXPECT_EQ(std::stod(cols[4]), f[0].variance());
    const double half = cli::gaussian_half_width_z(0.95) * std::sqrt(f[0].variance());
    EXPECT_NEAR(std::stod(cols[6]) - std::stod(cols[3]), half, 1e-9 * half);
  }
}

TEST_F(Pipeline, DetectExitCodesAndReport) {
  ASSERT_EQ(run("fit" + data_args() + " --max-iter 30 --out-dir " + path("fit")), 4);
  const std::string common = " --model " + path("fit/model.json") + data_args();
  EXPECT_EQ(run("detect" + common + " --loglik-threshold -inf --out-dir " + path("d0")), 0);
  const auto report = nlohmann::json::parse(slurp(dir_ / "d0" / "report.json"));
  EXPECT_TRUE(report["flagged"].empty());
  // Everything is below an enormous threshold.
  EXPECT_EQ(run("detect" + common + " --loglik-threshold 1e9 --drill-down --out-dir " + path("d1")), 3);
  const auto all = nlohmann::json::parse(slurp(dir_ / "d1" / "report.json"));
  EXPECT_EQ(all["flagged"].size(), 140u);
  EXPECT_EQ(all["flagged"][0]["ranking"].size(), 3u);
  const auto scores = lines_of(dir_ / "d1" / "scores.csv");
  EXPECT_EQ(scores[0], "t,scope,block_a,block_b,w,pred_mean,pred_var,loglik,z,flagged");
  EXPECT_EQ(scores.size(), 1u + 140u * 4u);
  EXPECT_EQ(run("detect" + common + " --mode smoothed --sigma 3 --out-dir " + path("d2")) % 3, 0);
}

TEST_F(Pipeline, DetectRejectsTypingMismatch) {
  ASSERT_EQ(run("fit" + data_args() + " --max-iter 3 --out-dir " + path("fit")), 4);
  ASSERT_EQ(run("simulate --seed 1 --period 7 --steps 20 --types a=5 --types c=5 --out-dir " + path("other")), 0);
  EXPECT_EQ(run("detect --model " + path("fit/model.json") + " --events " + path("other/events.csv") +
                " --types " + path("other/types.csv") + " --period 7 --out-dir " + path("d")),
            2);
}

TEST_F(Pipeline, ConfigFileFillsUnsetOptions) {
  std::ofstream(path("fit.json")) << nlohmann::json{{"events", path("sim/events.csv")},
                                                    {"types", path("sim/types.csv")},
                                                    {"period", 7},
                                                    {"steps", 140},
                                                    {"max-iter", 3},
                                                    {"fix-r-zero", true}}
                                         .dump();
  ASSERT_EQ(run("fit --config " + path("fit.json") + " --out-dir " + path("fit")), 4);
  const auto model = load_model(path("fit/model.json"));
  EXPECT_EQ(model.config["max_iter"], 3);
  for (const auto& b : model.blocks) EXPECT_EQ(b.params.r, 0.0);
  // Command-line flags win over the file.
  ASSERT_EQ(run("fit --config " + path("fit.json") + " --max-iter 2 --out-dir " + path("fit2")), 4);
  EXPECT_EQ(load_model(path("fit2/model.json")).config["max_iter"], 2);
}

TEST(CliHelpers, GaussianHalfWidth) {
  EXPECT_NEAR(cli::gaussian_half_width_z(0.95), 1.959964, 1e-6);
  EXPECT_NEAR(cli::gaussian_half_width_z(0.95) * std::sqrt(25.0), 9.79982, 1e-5);
  EXPECT_THROW(cli::gaussian_half_width_z(1.0), InvalidArgument);
  EXPECT_THROW(cli::gaussian_half_width_z(0.0), InvalidArgument);
}

// Null data scored with the generating parameters: graph flags at k = 3 over
// 3700 single-block graph-steps fall in the 99% binomial band.
TEST_F(Cli, DetectCalibrationOnNullData) {
  const int d = 7;
  const std::size_t T = 3700;
  ASSERT_EQ(run("simulate --seed 5 --period 7 --steps 3700 --types a=64 --bias 0.05 --amplitude 0.01 "
                "--q-m 1e-9 --q-s 1e-9 --r 1e-6 --out-dir " +
                path("sim")),
            0);
  cli::BlockGenSpec spec;
  spec.bias = 0.05;
  spec.amplitude = 0.01;
  spec.q_m = spec.q_s = 1e-9;
  spec.r = 1e-6;
  const auto g = cli::detail::gen_params(spec, d);
  ModelFile m;
  m.period = d;
  FittedBlock fb;
  fb.block = BlockKey("a", "a");
  fb.n = 64 * 63 / 2;
  fb.params.period = d;
  fb.params.q_m = fb.params.q_s = 1e-9;
  fb.params.r = 1e-6;
  fb.params.mu0 = g.init.to_vector();
  fb.params.sigma0 = Eigen::MatrixXd::Zero(d, d);
  fb.steps = T;
  m.blocks.push_back(fb);
  save_model(m, path("model.json"));
  const int code = run("detect --model " + path("model.json") + " --events " + path("sim/events.csv") +
                       " --types " + path("sim/types.csv") + " --period 7 --steps 3700 --sigma 3 --out-dir " +
                       path("det"));
  ASSERT_TRUE(code == 0 || code == 3) << code;
  const auto report = nlohmann::json::parse(slurp(dir_ / "det" / "report.json"));
  std::size_t graph_flags = 0;
  for (const auto& f : report["flagged"]) graph_flags += f["scope"] == "graph";
  const boost::math::binomial_distribution<double> null(static_cast<double>(T), 0.0026997960632601866);
  const double lo = boost::math::quantile(null, 0.005);
  const double hi = boost::math::quantile(boost::math::complement(null, 0.005));
  EXPECT_GE(static_cast<double>(graph_flags), lo);
  EXPECT_LE(static_cast<double>(graph_flags), hi);
}

}  // namespace
}  // namespace sdsbm
