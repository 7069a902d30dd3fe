#include "melnikov/cli.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

using namespace melnikov;

namespace {

struct Captured {
  int status;
  std::string out, err;
};

Captured run_text(const std::string& cfg) {
  std::ostringstream o, e;
  const int s = cli::run(parse_config(cfg), o, e);
  return {s, o.str(), e.str()};
}

Captured run_main(std::vector<std::string> args) {
  args.insert(args.begin(), "melnikov");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream o, e;
  const int s = cli::main(static_cast<int>(argv.size()), argv.data(), o, e);
  return {s, o.str(), e.str()};
}

std::vector<std::string> lines(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

const std::string kConfigs = MELNIKOV_CONFIG_DIR;

}  // namespace

TEST(Config, RoundTrip) {
  RunConfig c;
  c.command = "zeros";
  c.model.id = "rtbp-mcgehee";
  c.model.params = {{"rho0", 3.0}, {"T", 1e4}};
  c.model.h0 = 0.0;
  c.N = 32;
  c.tol = 1e-9;
  c.eps = {3e-2, 1e-3};
  c.format = "json";
  c.seed = 42;
  c.phase = 0.1;
  c.checks = 3;
  EXPECT_EQ(parse_config(write_config(c)), c);
}

TEST(Config, Rejections) {
  EXPECT_THROW(parse_config("run.N = 4\nrun.N = 5\n"), Error);
  EXPECT_THROW(parse_config("run.bogus = 1\n"), Error);
  EXPECT_THROW(parse_config("run.tol = abc\n"), Error);
  EXPECT_THROW(parse_config("just words\n"), Error);
  EXPECT_NO_THROW(parse_config("# comment only\n\nmodel.id = rtbp-mcgehee  # trailing\n"));
}

TEST(Cli, DuffingScanCsv) {
  const auto r = run_text("run.command = scan\nmodel.id = duffing-oscillator\nmodel.alpha = 1\nmodel.g0 = 0.5\nrun.N = 16\nrun.tol = 1e-10\n");
  ASSERT_EQ(r.status, 0) << r.err;
  const auto ls = lines(r.out);
  ASSERT_EQ(ls.size(), 17u);
  EXPECT_EQ(ls[0], "phase,M,err,class,T,Tstar");
  // M is -A K sin(phase) with K > 0: negative on (0, pi), positive on (pi, 2pi).
  for (int k = 1; k < 16; ++k) {
    if (k == 8) continue;
    const auto& l = ls[static_cast<std::size_t>(k + 1)];
    const double m = std::stod(l.substr(l.find(',') + 1));
    EXPECT_EQ(m < 0.0, k < 8) << l;
  }
}

TEST(Cli, Deterministic) {
  const std::string cfg = "run.command = zeros\nmodel.id = duffing-oscillator\nrun.N = 16\nrun.tol = 1e-10\nrun.format = json\n";
  EXPECT_EQ(run_text(cfg).out, run_text(cfg).out);
}

TEST(Cli, UsageErrors) {
  EXPECT_EQ(run_text("run.command = scan\nmodel.id = duffing-oscillator\nrun.N = 0\n").status, 1);
  EXPECT_EQ(run_text("run.command = scan\nmodel.id = pendulum\n").status, 1);
  EXPECT_EQ(run_text("run.command = scan\nmodel.id = duffing-oscillator\nmodel.alpha = -1\n").status, 1);
  EXPECT_EQ(run_text("run.command = scan\nmodel.id = duffing-oscillator\nmodel.beta = 1\n").status, 1);
  EXPECT_EQ(run_text("run.command = derivative\nmodel.id = holmes-marsden\nrun.N = 1\n").status, 1);
  EXPECT_EQ(run_text("run.command = verify-splitting\nmodel.id = rtbp-mcgehee\nmodel.rho0 = 3\n").status, 1);
}

TEST(Cli, UnwritableOutputLeavesNoFile) {
  const std::string path = "/nonexistent-dir/out.csv";
  const auto r = run_text("run.command = scan\nmodel.id = duffing-oscillator\nrun.N = 8\nrun.out = " + path + "\n");
  EXPECT_EQ(r.status, 1);
  EXPECT_FALSE(std::filesystem::exists(path));
}

TEST(Cli, MainParsesArguments) {
  const auto tmp = std::filesystem::temp_directory_path() / "melnikov_cli_test.csv";
  std::filesystem::remove(tmp);
  const auto r = run_main({"scan", "--config", kConfigs + "/duffing_scan.cfg", "--out", tmp.string()});
  ASSERT_EQ(r.status, 0) << r.err;
  std::ifstream f(tmp);
  std::stringstream buf;
  buf << f.rdbuf();
  EXPECT_EQ(lines(buf.str()).size(), 17u);
  std::filesystem::remove(tmp);

  EXPECT_EQ(run_main({"scan"}).status, 1);
  EXPECT_EQ(run_main({"scan", "--config", "/does/not/exist.cfg"}).status, 1);
  EXPECT_EQ(run_main({"scan", "--config", kConfigs + "/duffing_scan.cfg", "--format", "xml"}).status, 1);
}

TEST(Cli, RtbpZerosJson) {
  const auto r = run_main({"zeros", "--config", kConfigs + "/rtbp_zeros.cfg"});
  ASSERT_EQ(r.status, 0) << r.err;
  const auto j = cli::Json::parse(r.out);
  bool at0 = false, atpi = false;
  for (const auto& c : j["certificates"]) {
    const double p = c["phase"].get<double>();
    at0 = at0 || std::abs(wrap_difference(p)) < 1e-6;
    atpi = atpi || std::abs(wrap_difference(p - kPi)) < 1e-6;
    EXPECT_GT(c["margin"].get<double>(), 0.0);
  }
  EXPECT_TRUE(at0);
  EXPECT_TRUE(atpi);
  EXPECT_EQ(j["records"].size(), 64u);
}

TEST(Cli, HolmesMarsdenDiagnostics) {
  const auto r = run_main({"diagnostics", "--config", kConfigs + "/hm_diagnostics.cfg"});
  ASSERT_EQ(r.status, 0) << r.err;
  const auto j = cli::Json::parse(r.out);
  const auto& meta = j["meta"];
  EXPECT_EQ(meta["class"], "conditional");
  EXPECT_GE(meta["spread_mismatched_j5_15"].get<double>(), 10.0 * meta["spread_matched_j5_15"].get<double>());
  EXPECT_LE(meta["drift_H0"].get<double>(), 1e-9);
}

TEST(Cli, DuffingDiagnosticsTracesAgree) {
  const auto r = run_text("run.command = diagnostics\nmodel.id = duffing-oscillator\nrun.tol = 1e-10\nrun.format = json\n");
  ASSERT_EQ(r.status, 0) << r.err;
  const auto meta = cli::Json::parse(r.out)["meta"];
  EXPECT_EQ(meta["class"], "absolute");
  EXPECT_LE(meta["trace_gap"].get<double>(), 1e-8);
}

TEST(Cli, RtbpTailAudit) {
  const auto r = run_text("run.command = diagnostics\nmodel.id = rtbp-mcgehee\nmodel.rho0 = 3\nrun.phase = 1\nrun.format = json\n");
  ASSERT_EQ(r.status, 0) << r.err;
  const auto tail = cli::Json::parse(r.out)["meta"]["tail"];
  EXPECT_LE(tail["bound_total"].get<double>(), tail["half_tol"].get<double>());
}
