#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "dimclt/cli.hpp"

using namespace dimclt;
namespace fs = std::filesystem;

namespace {

Json lebesgue_config() {
  return {{"schema_version", 1}, {"mode", "thermo"}, {"k", 2}, {"l", 3},
          {"potential", {{"type", "neg_log_det"}}}, {"depth", 3}};
}

// Bernoulli(1/4) on the base of the perturbed coupled map
Json skew_clt_config(double eps, int n) {
  return {{"schema_version", 1}, {"mode", "clt"}, {"k", 2}, {"a", 0.5}, {"l", 3}, {"b", 0.5}, {"c", 0.3},
          {"potential", {{"type", "bernoulli"}, {"weights", {0.25, 0.75}}}},
          {"depth", 4}, {"eps_list", {eps}}, {"n_samples", n}};
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("dimclt_test_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RunOptions in_dir(const fs::path& dir, bool cache = true) {
  RunOptions opt;
  opt.out_dir = dir.string();
  opt.use_cache = cache;
  return opt;
}

int count_lines(const std::string& s) { return static_cast<int>(std::count(s.begin(), s.end(), '\n')); }

std::string reason_for(Json cfg) {
  try {
    parse_run_config(cfg);
  } catch (const ModelError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(ParseRunConfigTest, Defaults) {
  const auto rc = parse_run_config(lebesgue_config());
  EXPECT_EQ(rc.mode, "thermo");
  EXPECT_EQ(rc.experiment.t_grid.size(), 101u);
  EXPECT_EQ(rc.experiment.n_samples, 4000);
  EXPECT_EQ(rc.experiment.eps_list, std::vector<double>{0x1p-40});
  EXPECT_EQ(rc.experiment.kind, ProcessKind::birkhoff);
  EXPECT_EQ(rc.echo, lebesgue_config());
}

TEST(ParseRunConfigTest, Rejections) {
  auto cfg = lebesgue_config();
  cfg["a"] = 1.0;
  EXPECT_NE(reason_for(cfg).find("expansion violated"), std::string::npos);
  cfg = lebesgue_config();
  cfg["colour"] = 1;
  EXPECT_NE(reason_for(cfg).find("unknown config field \"colour\""), std::string::npos);
  cfg = lebesgue_config();
  cfg.erase("schema_version");
  EXPECT_NE(reason_for(cfg).find("schema_version"), std::string::npos);
  cfg = lebesgue_config();
  cfg["mode"] = "everything";
  EXPECT_NE(reason_for(cfg).find("unknown mode"), std::string::npos);
  cfg = lebesgue_config();
  cfg["depth"] = 12;
  EXPECT_NE(reason_for(cfg).find("budget"), std::string::npos);
  cfg = lebesgue_config();
  cfg["est_depth"] = 3;
  EXPECT_NE(reason_for(cfg).find("est_depth"), std::string::npos);
  cfg = lebesgue_config();
  cfg["k"] = "two";
  EXPECT_NE(reason_for(cfg).find("wrong type"), std::string::npos);
  cfg = lebesgue_config();
  cfg["eps_list"] = {0.5, 0.25, 0.3};
  EXPECT_NE(reason_for(cfg).find("decreasing"), std::string::npos);
  cfg = lebesgue_config();
  cfg["c"] = 0.2;
  cfg["process_kind"] = "direct";
  EXPECT_NE(reason_for(cfg).find("direct process"), std::string::npos);
  cfg = lebesgue_config();
  cfg["mode"] = "conformal1d";
  cfg["process_kind"] = "markov";
  EXPECT_NE(reason_for(cfg).find("birkhoff"), std::string::npos);
  cfg = lebesgue_config();
  cfg["potential"] = {{"type", "bernoulli"}, {"weights", {0.5, 0.6}}};
  EXPECT_NE(reason_for(cfg).find("sum to 1"), std::string::npos);
  EXPECT_NE(reason_for(Json::array()).find("object"), std::string::npos);
}

TEST(RunTest, ThermoOnLebesgue) {
  const auto dir = scratch("thermo");
  const auto opt = in_dir(dir);
  const auto out = run(lebesgue_config(), opt);
  EXPECT_EQ(out.exit_code, 0) << out.reason;
  EXPECT_NEAR(out.report["model"]["delta"].get<double>(), 2.0, 1e-12);
  EXPECT_NEAR(out.report["model"]["sigma2"].get<double>(), 0.0, 1e-12);
  EXPECT_EQ(out.report["config"], lebesgue_config());
  EXPECT_EQ(out.report["mode"], "thermo");
  EXPECT_EQ(out.report["artifact_hash"].get<std::string>().size(), 16u);
  for (const char* f : {"report.json", "timing.json", "summary.csv", "report.txt"}) EXPECT_TRUE(fs::exists(dir / f)) << f;
  EXPECT_EQ(Json::parse(slurp(dir / "report.json")), out.report);
  fs::remove_all(dir);
}

TEST(RunTest, HypothesisGuardExitTwo) {
  auto cfg = lebesgue_config();
  cfg["k"] = 3;
  cfg["l"] = 2;
  const auto dir = scratch("guard");
  const auto out = run(cfg, in_dir(dir));
  EXPECT_EQ(out.exit_code, 2);
  EXPECT_NE(out.reason.find("lambda_u >= lambda_uu"), std::string::npos);
  fs::remove_all(dir);
}

TEST(RunTest, ExpansionViolatedExitTwo) {
  auto cfg = lebesgue_config();
  cfg["b"] = 2.5;
  const auto dir = scratch("expansion");
  const auto opt = in_dir(dir);
  const auto out = run(cfg, opt);
  EXPECT_EQ(out.exit_code, 2);
  EXPECT_NE(out.reason.find("expansion violated"), std::string::npos);
  // the failure report is still machine readable
  EXPECT_EQ(Json::parse(slurp(dir / "report.json"))["reason"], out.reason);
  fs::remove_all(dir);
}

TEST(RunTest, NumericalFailureExitThree) {
  auto cfg = lebesgue_config();
  cfg["potential"] = {{"type", "piecewise"}, {"depth", 1}, {"values", {0, 0, 0, -800, -800, -800}}};
  const auto dir = scratch("numerical");
  const auto out = run(cfg, in_dir(dir));
  EXPECT_EQ(out.exit_code, 3);
  EXPECT_FALSE(out.reason.empty());
  fs::remove_all(dir);
}

TEST(RunTest, CltOnSkewBernoulliPasses) {
  const auto dir = scratch("clt");
  const auto opt = in_dir(dir);
  const auto out = run(skew_clt_config(0x1p-40, 4000), opt);
  EXPECT_EQ(out.exit_code, 0) << out.reason;
  ASSERT_EQ(out.tests.size(), 1u);
  EXPECT_EQ(out.tests[0].name, "clt");
  EXPECT_TRUE(out.tests[0].pass);
  const auto cdf = slurp(dir / "clt_cdf.csv");
  EXPECT_EQ(cdf.rfind("empirical,reference\n", 0), 0u);
  EXPECT_EQ(count_lines(cdf), 513);
  fs::remove_all(dir);
}

TEST(RunTest, PreAsymptoticCltFailsExitOne) {
  const auto dir = scratch("coarse");
  const auto out = run(skew_clt_config(0x1p-8, 4000), in_dir(dir));
  EXPECT_EQ(out.exit_code, 1);
  EXPECT_EQ(out.reason, "test failure");
  fs::remove_all(dir);
}

TEST(ReproducibilityProperty, ThreadsAndEchoedConfig) {
  auto cfg = skew_clt_config(0x1p-24, 300);
  cfg["mode"] = "all";
  cfg["eps_list"] = {0x1p-12, 0x1p-24};
  cfg["oracle_paths"] = 2000;
  const auto d1 = scratch("repro1"), d2 = scratch("repro2"), d3 = scratch("repro3");
  auto o1 = in_dir(d1, false);
  o1.threads = 1;
  auto o2 = in_dir(d2, false);
  o2.threads = 3;
  const auto a = run(cfg, o1);
  const auto b = run(cfg, o2);
  EXPECT_EQ(slurp(d1 / "report.json"), slurp(d2 / "report.json"));
  EXPECT_EQ(slurp(d1 / "summary.csv"), slurp(d2 / "summary.csv"));
  // rerun from the echoed config alone
  const auto c = run(Json::parse(slurp(d1 / "report.json"))["config"], in_dir(d3, false));
  EXPECT_EQ(c.report, a.report);
  EXPECT_EQ(a.report["artifact_hash"], b.report["artifact_hash"]);
  for (const auto& d : {d1, d2, d3}) fs::remove_all(d);
}

TEST(CacheTest, HitSkipsBuildAndMatchesFreshModel) {
  const auto dir = scratch("cache"), fresh = scratch("fresh");
  auto cfg = lebesgue_config();
  cfg["a"] = 0.3;
  cfg["c"] = 0.2;
  cfg["potential"] = {{"type", "trig"}, {"cos_x", {0.2}}, {"sin_y", {0.1}}};
  const auto first = run(cfg, in_dir(dir));
  EXPECT_FALSE(Json::parse(slurp(dir / "timing.json"))["cache_hit"].get<bool>());
  const auto second = run(cfg, in_dir(dir));
  EXPECT_TRUE(Json::parse(slurp(dir / "timing.json"))["cache_hit"].get<bool>());
  const auto third = run(cfg, in_dir(fresh, false));
  EXPECT_EQ(first.report, second.report);
  EXPECT_EQ(second.report, third.report);
  // a different potential misses
  cfg["potential"]["cos_x"] = {0.21};
  run(cfg, in_dir(dir));
  EXPECT_FALSE(Json::parse(slurp(dir / "timing.json"))["cache_hit"].get<bool>());
  fs::remove_all(dir);
  fs::remove_all(fresh);
}

TEST(RenderTest, EmptyListHeaderOnly) {
  EXPECT_EQ(render_summary_csv({}), "statistic,empirical,reference,band_low,band_high\n");
  EXPECT_EQ(render_text({}), "");
}

TEST(RenderTest, ArcsineCdfTable) {
  std::mt19937_64 rng(stream_seed(2, 0));
  const auto grid = uniform_grid(101);
  const auto r = arcsine_test(brownian_oracle(rng, 1000, grid, 1.0), grid, 1.0);
  const auto csv = render_cdf_csv(r);
  EXPECT_EQ(count_lines(csv), 513);
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "empirical,reference");
  while (std::getline(in, line)) {
    const auto comma = line.find(',');
    ASSERT_NE(comma, std::string::npos);
    const double u = std::stod(line.substr(0, comma)), ref = std::stod(line.substr(comma + 1));
    ASSERT_NEAR(ref, arcsine_cdf(u), 1e-9);
  }
}

TEST(RenderTest, SummaryRowsAndNumberFormat) {
  TestReport r;
  r.name = "median";
  r.rows.push_back({"fraction_nonpositive", 0.5, 0.5, 0.25, 0.75});
  EXPECT_EQ(render_summary_csv({r}),
            "statistic,empirical,reference,band_low,band_high\nmedian.fraction_nonpositive,0.5,0.5,0.25,0.75\n");
  EXPECT_EQ(csv_number(-1.25e-7), "-1.25e-07");
  r.pre_asymptotic = true;
  EXPECT_EQ(render_text({r}).rfind("[REPORT] median", 0), 0u);
  r.pre_asymptotic = false;
  r.refused = true;
  EXPECT_EQ(render_text({r}).rfind("[REFUSED] median", 0), 0u);
  EXPECT_FALSE(report_to_json(r)["pre_asymptotic"].get<bool>());
}

TEST(RenderTest, PathDump) {
  const auto dir = scratch("dump");
  auto cfg = skew_clt_config(0x1p-20, 5);
  cfg["t_grid_points"] = 3;
  cfg["dump_paths"] = true;
  run(cfg, in_dir(dir));
  const auto csv = slurp(dir / "paths_0.csv");
  EXPECT_EQ(csv.rfind("sample_id,t,value\n", 0), 0u);
  EXPECT_EQ(count_lines(csv), 1 + 5 * 3);
  fs::remove_all(dir);
}

namespace {

// runs the built binary; returns its exit status
int run_binary(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + " " DIMCLT_BIN " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path write_config(const fs::path& dir, const Json& cfg) {
  fs::create_directories(dir);
  const auto p = dir / "config.json";
  std::ofstream(p) << cfg.dump();
  return p;
}

}  // namespace

TEST(BinaryTest, ExitCodes) {
  const auto dir = scratch("binary");
  const auto ok = write_config(dir / "ok", lebesgue_config());
  EXPECT_EQ(run_binary("run " + ok.string() + " --out " + (dir / "o1").string()), 0);
  EXPECT_TRUE(fs::exists(dir / "o1" / "report.json"));
  auto bad = lebesgue_config();
  bad["a"] = 1.5;
  EXPECT_EQ(run_binary("run " + write_config(dir / "bad", bad).string() + " --out " + (dir / "o2").string()), 2);
  EXPECT_EQ(run_binary("run " + (dir / "missing.json").string()), 2);
  std::ofstream(dir / "garbage.json") << "{ not json";
  EXPECT_EQ(run_binary("run " + (dir / "garbage.json").string()), 2);
  EXPECT_EQ(run_binary("frobnicate"), 2);
  EXPECT_EQ(run_binary("run " + ok.string() + " --threads 0"), 2);
  fs::remove_all(dir);
}

TEST(BinaryTest, EnvironmentOverridesAndFlagsWin) {
  const auto dir = scratch("env");
  const auto cfg = write_config(dir / "cfg", lebesgue_config());
  EXPECT_EQ(run_binary("run " + cfg.string(), "DIMCLT_OUT=" + (dir / "from_env").string()), 0);
  EXPECT_TRUE(fs::exists(dir / "from_env" / "report.json"));
  EXPECT_EQ(run_binary("run " + cfg.string() + " --out " + (dir / "from_flag").string(),
                       "DIMCLT_OUT=" + (dir / "ignored").string()),
            0);
  EXPECT_TRUE(fs::exists(dir / "from_flag" / "report.json"));
  EXPECT_FALSE(fs::exists(dir / "ignored"));
  EXPECT_EQ(run_binary("run " + cfg.string() + " --out " + (dir / "t").string(), "DIMCLT_THREADS=abc"), 2);
  fs::remove_all(dir);
}

TEST(BinaryTest, NumericalFailureAndTestFailure) {
  const auto dir = scratch("binfail");
  auto num = lebesgue_config();
  num["potential"] = {{"type", "piecewise"}, {"depth", 1}, {"values", {0, 0, 0, -800, -800, -800}}};
  EXPECT_EQ(run_binary("run " + write_config(dir / "num", num).string() + " --out " + (dir / "o1").string()), 3);
  const auto coarse = write_config(dir / "coarse", skew_clt_config(0x1p-8, 4000));
  EXPECT_EQ(run_binary("run " + coarse.string() + " --out " + (dir / "o2").string()), 1);
  fs::remove_all(dir);
}

TEST(RunTest, Conformal1dMode) {
  const auto dir = scratch("c1d");
  const Json cfg = {{"schema_version", 1}, {"mode", "conformal1d"}, {"k", 2}, {"a", 0.3},
                    {"potential", {{"type", "trig"}, {"cos_x", {0.3}}, {"sin_x", {0.1}}}},
                    {"depth", 7}, {"eps_list", {0x1p-160}}, {"n_samples", 4000}, {"oracle_paths", 20000}};
  const auto out = run(cfg, in_dir(dir));
  ASSERT_EQ(out.tests.size(), 4u);
  EXPECT_EQ(out.report["mode"], "conformal1d");
  EXPECT_GT(out.report["model"]["sigma2"].get<double>(), 0.0);
  for (const auto& t : out.tests) EXPECT_TRUE(t.pass) << t.name << " " << t.empirical;
  EXPECT_EQ(out.exit_code, 0) << out.reason;
  fs::remove_all(dir);
}

TEST(RunTest, DiagnosticsMode) {
  const auto dir = scratch("diag");
  auto cfg = skew_clt_config(0x1p-40, 300);
  cfg["mode"] = "diagnostics";
  cfg["eps_list"] = {0x1p-16, 0x1p-24, 0x1p-32, 0x1p-40};
  const auto out = run(cfg, in_dir(dir));
  ASSERT_EQ(out.tests.size(), 4u);
  for (const auto& t : out.tests) EXPECT_TRUE(t.pass) << t.name << " " << t.empirical;
  EXPECT_EQ(out.exit_code, 0) << out.reason;
  fs::remove_all(dir);
}
