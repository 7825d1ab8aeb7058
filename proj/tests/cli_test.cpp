#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "resq/cli.hpp"

using namespace resq;
namespace fs = std::filesystem;
using io::json;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run resq_run(std::vector<std::string> args) {
  args.insert(args.begin(), "resq");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out;
  std::ostringstream err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / "resq_cli_test" / info->name();
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }
  std::string write(const std::string& name, const std::string& text) const {
    io::write_file(dir_ / name, text);
    return path(name);
  }
  json read(const std::string& name) const { return io::read_json(dir_ / name); }

  std::string sweep_params(double sigma = 1e-3, int count = 12) const {
    json p = {{"tls", {{"f_delta_tls", 11.3e-7}, {"delta0", 0.69e-7}, {"n_c", 3.9}, {"beta", 0.40}}},
              {"design", {{"f_r", 6e9}, {"q_c_mag", 5e5}, {"phi", 0.1}, {"a", 0.8}, {"alpha", 0.3}, {"tau", 40e-9}}},
              {"powers", {{"start", -90.0}, {"stop", -30.0}, {"count", count}}},
              {"attenuators", {20.0, 20.0, 40.0}},
              {"temperature_k", 0.02},
              {"n_points", 401},
              {"resonator_id", "nbta-test"},
              {"noise", {{"kind", "complex-gaussian"}, {"sigma", sigma}, {"seed", 5}}}};
    return write("sweep_params.json", io::dump(p));
  }

  fs::path dir_;
};

}  // namespace

TEST_F(CliTest, FitTraceRoundTripViaSynth) {
  json params = {{"params", {{"f_r", 5e9}, {"q_i", 4e5}, {"q_c_mag", 1e5}, {"phi", 0.15}, {"a", 0.7},
                             {"alpha", -1.0}, {"tau", 35e-9}}},
                 {"n_points", 1001}};
  const auto pfile = write("trace_params.json", io::dump(params));
  ASSERT_EQ(resq_run({"synth", "trace", "--input", pfile, "--output", path("gen")}).code, 0);
  const auto oracle = read("gen/oracle.json");
  const auto r = resq_run({"fit-trace", "--input", path("gen/trace.csv"), "--output", path("fit.json"),
                           "--plot", path("fit.svg")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rep = read("fit.json");
  const auto& fit = rep["result"];
  EXPECT_NEAR(fit["params"]["f_r"].get<double>(), 5e9, 1e-9 * 5e9);
  EXPECT_NEAR(fit["q_i"].get<double>(), oracle["q_i"].get<double>(), 1e-3 * 4e5);
  EXPECT_NEAR(fit["params"]["q_l"].get<double>(), oracle["params"]["q_l"].get<double>(),
              1e-3 * oracle["params"]["q_l"].get<double>());
  EXPECT_TRUE(rep.contains("error_metric"));
  const auto& prov = rep["provenance"];
  EXPECT_EQ(prov["inputs"][0]["sha256"], io::sha256_hex(io::read_file(path("gen/trace.csv"))));
  EXPECT_EQ(prov["config_hash"], io::sha256_hex(prov["config"].dump()));
  const auto svg = io::read_file(path("fit.svg"));
  EXPECT_NE(svg.find("<svg"), std::string::npos);
  EXPECT_NE(svg.find("</svg>"), std::string::npos);
}

TEST_F(CliTest, FitTraceToStdoutAndTouchstone) {
  NotchModelParams p;
  p.f_r = 6e9;
  p.q_l = 5e4;
  p.q_c_mag = 1e5;
  p.phi = 0.05;
  const auto t = gen_trace(p, 801, 20.0 * p.f_r / p.q_l);
  std::string s2p = "# Hz S RI R 50\n";
  for (std::size_t i = 0; i < t.size(); ++i) {
    s2p += io::format_double(t.frequencies[i]) + " 0 0 " + io::format_double(t.s21[i].real()) + " " +
           io::format_double(t.s21[i].imag()) + " 0 0 0 0\n";
  }
  const auto file = write("t.s2p", s2p);
  const auto r = resq_run({"fit-trace", "--input", file, "--format", "touchstone"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rep = io::parse_json(r.out, "stdout");
  const double qi = internal_q(p.q_l, p.q_c_mag, p.phi);
  EXPECT_NEAR(rep["result"]["q_i"].get<double>(), qi, 1e-3 * qi);
  EXPECT_EQ(rep["provenance"]["config"]["format"], "touchstone");
}

TEST_F(CliTest, FitTraceInputErrors) {
  const auto empty = resq_run({"fit-trace", "--input", write("empty.csv", "")});
  EXPECT_EQ(empty.code, 2);
  EXPECT_NE(empty.err.find("empty.csv:1:1"), std::string::npos) << empty.err;

  std::string eight = "frequency_hz,s21_real,s21_imag\n";
  for (int i = 0; i < 8; ++i) eight += std::to_string(6e9 + i) + ",1,0\n";
  const auto short_trace = resq_run({"fit-trace", "--input", write("eight.csv", eight)});
  EXPECT_EQ(short_trace.code, 2);
  EXPECT_NE(short_trace.err.find("16"), std::string::npos) << short_trace.err;

  const auto bad = resq_run({"fit-trace", "--input", write("bad.csv", "frequency_hz,s21_real,s21_imag\n1,2,x\n")});
  EXPECT_EQ(bad.code, 2);
  EXPECT_NE(bad.err.find("bad.csv:2:5"), std::string::npos) << bad.err;

  const auto missing = resq_run({"fit-trace", "--input", path("nope.csv")});
  EXPECT_EQ(missing.code, 4);
  EXPECT_NE(missing.err.find("nope.csv"), std::string::npos);
}

TEST_F(CliTest, FitFailureNamesStage) {
  std::string flat = "frequency_hz,s21_real,s21_imag\n";
  for (int i = 0; i < 200; ++i) flat += std::to_string(6e9 + 1e3 * i) + ",0.9,0.1\n";
  const auto r = resq_run({"fit-trace", "--input", write("flat.csv", flat)});
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("stage"), std::string::npos) << r.err;
}

TEST_F(CliTest, UsageErrors) {
  EXPECT_EQ(resq_run({}).code, 1);
  EXPECT_EQ(resq_run({"frobnicate"}).code, 1);
  EXPECT_EQ(resq_run({"fit-trace"}).code, 1);
  EXPECT_EQ(resq_run({"fit-trace", "--input", "x", "--format", "xlsx"}).code, 1);
  EXPECT_EQ(resq_run({"--help"}).code, 0);
  EXPECT_EQ(resq_run({"--version"}).code, 0);
}

TEST_F(CliTest, PowerSweepReportAndCompleteness) {
  ASSERT_EQ(resq_run({"synth", "sweep", "--input", sweep_params(), "--output", path("sw")}).code, 0);
  const auto r = resq_run({"power-sweep", "--input", path("sw/manifest.json"), "--output", path("rep.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rep = read("rep.json");
  const auto oracle = read("sw/oracle.json");
  const auto manifest = read("sw/manifest.json");
  EXPECT_EQ(rep["results"].size() + rep["discarded"].size(), manifest["traces"].size());
  EXPECT_EQ(rep["results"].size(), 12u);
  EXPECT_EQ(rep["resonator_id"], "nbta-test");
  EXPECT_EQ(rep["provenance"]["inputs"].size(), 13u);
  // Per-trace n and Q_i track the generator's oracle.
  for (std::size_t i = 0; i < rep["results"].size(); ++i) {
    const auto& res = rep["results"][i];
    const auto& o = oracle["points"][i];
    EXPECT_EQ(res["path"], manifest["traces"][i]["path"]);
    EXPECT_NEAR(res["n"].get<double>(), o["n"].get<double>(), 0.01 * o["n"].get<double>());
    EXPECT_NEAR(res["fit"]["q_i"].get<double>(), o["q_i"].get<double>(), 0.01 * o["q_i"].get<double>());
    EXPECT_GT(res["thermal_ratio"].get<double>(), 10.0);
  }
  EXPECT_FALSE(rep["tls_params"].is_null());
  EXPECT_GE(rep["curve"]["bins"].size(), 5u);
}

TEST_F(CliTest, PowerSweepPerPointBinsMatchOracleDelta) {
  ASSERT_EQ(resq_run({"synth", "sweep", "--input", sweep_params(), "--output", path("sw")}).code, 0);
  const auto r = resq_run({"power-sweep", "--input", path("sw/manifest.json"), "--bins", "none"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rep = io::parse_json(r.out, "stdout");
  const auto oracle = read("sw/oracle.json");
  const auto curve = io::curve_from_json(rep);
  ASSERT_EQ(curve.bins.size(), 12u);
  for (std::size_t i = 0; i < 12; ++i) {
    const double delta = 1.0 / curve.bins[i].mean_q_i;
    const double truth = 1.0 / oracle["points"][i]["q_i"].get<double>();
    EXPECT_NEAR(delta, truth, 0.01 * truth);
  }
}

TEST_F(CliTest, PowerSweepResultIndependentOfThreadCount) {
  ASSERT_EQ(resq_run({"synth", "sweep", "--input", sweep_params(), "--output", path("sw")}).code, 0);
  const auto one = resq_run({"power-sweep", "--input", path("sw/manifest.json"), "--jobs", "1"});
  const auto many = resq_run({"power-sweep", "--input", path("sw/manifest.json"), "--jobs", "8"});
  ASSERT_EQ(one.code, 0);
  ASSERT_EQ(many.code, 0);
  auto a = io::parse_json(one.out, "a");
  auto b = io::parse_json(many.out, "b");
  a["provenance"]["config"].erase("jobs");
  b["provenance"]["config"].erase("jobs");
  a["provenance"].erase("config_hash");
  b["provenance"].erase("config_hash");
  EXPECT_EQ(a, b);
  // Re-running with identical inputs and config gives an identical report.
  EXPECT_EQ(resq_run({"power-sweep", "--input", path("sw/manifest.json"), "--jobs", "1"}).out, one.out);
}

TEST_F(CliTest, PowerSweepZeroThresholdDiscardsEverything) {
  ASSERT_EQ(resq_run({"synth", "sweep", "--input", sweep_params(), "--output", path("sw")}).code, 0);
  const auto r = resq_run({"power-sweep", "--input", path("sw/manifest.json"), "--discard-rel-err", "0"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rep = io::parse_json(r.out, "stdout");
  EXPECT_EQ(rep["results"].size(), 0u);
  ASSERT_EQ(rep["discarded"].size(), 12u);
  for (const auto& d : rep["discarded"]) {
    EXPECT_NE(d["reason"].get<std::string>().find("exceeds threshold"), std::string::npos);
  }
  EXPECT_TRUE(rep["tls_params"].is_null());
  EXPECT_TRUE(rep["curve"]["bins"].empty());
}

TEST_F(CliTest, PowerSweepCorruptTrace) {
  ASSERT_EQ(resq_run({"synth", "sweep", "--input", sweep_params(), "--output", path("sw")}).code, 0);
  const auto victim = path("sw/trace_003.csv");
  io::write_file(victim, "frequency_hz,s21_real,s21_imag\n6e9,garbage,0\n");
  const auto fail = resq_run({"power-sweep", "--input", path("sw/manifest.json")});
  EXPECT_EQ(fail.code, 2);
  EXPECT_NE(fail.err.find("trace_003.csv"), std::string::npos) << fail.err;
  EXPECT_TRUE(fail.out.empty());

  const auto partial = resq_run({"power-sweep", "--input", path("sw/manifest.json"), "--partial-results"});
  ASSERT_EQ(partial.code, 0) << partial.err;
  const auto rep = io::parse_json(partial.out, "stdout");
  EXPECT_EQ(rep["results"].size() + rep["discarded"].size(), 12u);
  ASSERT_EQ(rep["discarded"].size(), 1u);
  EXPECT_EQ(rep["discarded"][0]["path"], "trace_003.csv");
  EXPECT_NE(rep["discarded"][0]["reason"].get<std::string>().find("unreadable"), std::string::npos);

  fs::remove(victim);
  const auto gone = resq_run({"power-sweep", "--input", path("sw/manifest.json")});
  EXPECT_EQ(gone.code, 4);
  EXPECT_NE(gone.err.find("trace_003.csv"), std::string::npos);
}

TEST_F(CliTest, PowerSweepBadFlags) {
  ASSERT_EQ(resq_run({"synth", "sweep", "--input", sweep_params(), "--output", path("sw")}).code, 0);
  EXPECT_EQ(resq_run({"power-sweep", "--input", path("sw/manifest.json"), "--bins", "lin:3"}).code, 1);
  EXPECT_EQ(resq_run({"power-sweep", "--input", path("sw/manifest.json"), "--discard-rel-err", "-1"}).code, 1);
  const auto bad_manifest = resq_run({"power-sweep", "--input", write("m.json", R"({"traces": []})")});
  EXPECT_EQ(bad_manifest.code, 2);
}

TEST_F(CliTest, TlsFitFromCurveWithExclusionAndPlot) {
  const TLSParams truth{29.1e-7, 0.5e-7, 11.0, 0.24, {}};
  EnsembleCurve c;
  for (int i = 0; i < 10; ++i) {
    const double n = std::pow(10.0, -2.0 + 8.0 * i / 9.0);
    c.bins.push_back({n, 1.0 / tls_delta(n, truth), 0.0, 1});
  }
  const auto file = write("curve.json", io::dump(io::to_json(c)));
  const auto full = resq_run({"tls-fit", "--input", file});
  ASSERT_EQ(full.code, 0) << full.err;
  const auto rep = io::parse_json(full.out, "stdout");
  const auto p = io::tls_params_from_json(rep["tls_params"]);
  EXPECT_NEAR(p.f_delta_tls, truth.f_delta_tls, 0.01 * truth.f_delta_tls);
  EXPECT_NEAR(p.delta0, truth.delta0, 0.01 * truth.delta0);
  EXPECT_NEAR(p.n_c, truth.n_c, 0.01 * truth.n_c);
  EXPECT_NEAR(p.beta, truth.beta, 0.01 * truth.beta);

  const auto ex = resq_run({"tls-fit", "--input", file, "--exclude-top", "2", "--plot", path("tls.svg")});
  ASSERT_EQ(ex.code, 0) << ex.err;
  const auto exrep = io::parse_json(ex.out, "stdout");
  EXPECT_EQ(exrep["bins_total"], 10);
  EXPECT_EQ(exrep["excluded_top"], 2);
  EXPECT_EQ(exrep["bins_used"], 8);
  EXPECT_EQ(exrep["curve"]["bins"].size(), 8u);
  EXPECT_NE(io::read_file(path("tls.svg")).find("<svg"), std::string::npos);

  const auto too_many = resq_run({"tls-fit", "--input", file, "--exclude-top", "10"});
  EXPECT_NE(too_many.code, 0);
}

TEST_F(CliTest, TlsFitFewBinsWarns) {
  EnsembleCurve c;
  c.bins = {{0.1, 5e5, 0.0, 1}, {10.0, 7e5, 0.0, 1}, {1000.0, 9e5, 0.0, 1}};
  const auto r = resq_run({"tls-fit", "--input", write("c3.json", io::dump(io::to_json(c)))});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rep = io::parse_json(r.out, "stdout");
  EXPECT_TRUE(rep["non_identifiable"].get<bool>());
  EXPECT_FALSE(rep["warnings"].empty());
}

TEST_F(CliTest, TlsFitAcceptsPowerSweepReport) {
  ASSERT_EQ(resq_run({"synth", "sweep", "--input", sweep_params(), "--output", path("sw")}).code, 0);
  ASSERT_EQ(resq_run({"power-sweep", "--input", path("sw/manifest.json"), "--output", path("rep.json")}).code, 0);
  const auto r = resq_run({"tls-fit", "--input", path("rep.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(io::parse_json(r.out, "o")["bins_total"], read("rep.json")["curve"]["bins"].size());
}

TEST_F(CliTest, XrdPhaseLabelAndWindow) {
  json params = {{"peak", {{"center", 38.3}, {"fwhm", 0.4}, {"eta", 0.5}, {"amplitude", 5000.0}, {"background", 20.0}}},
                 {"mode", "theta2theta"},
                 {"angle_min", 30.0},
                 {"angle_max", 45.0},
                 {"n_points", 1501},
                 {"noise", {{"kind", "poisson-like"}, {"sigma", 1.0}, {"seed", 3}}}};
  ASSERT_EQ(resq_run({"synth", "rocking", "--input", write("x.json", io::dump(params)), "--output", path("x")}).code, 0);
  const auto r = resq_run({"xrd", "--input", path("x/scan.csv"), "--mode", "theta2theta"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rep = io::parse_json(r.out, "stdout");
  EXPECT_EQ(rep["phase"], "alpha-Ta(110)");
  EXPECT_NEAR(rep["peak"]["center"].get<double>(), 38.3, 0.01);
  EXPECT_NEAR(rep["peak"]["fwhm"].get<double>(), 0.4, 0.02 * 0.4);

  const auto rocking = io::parse_json(resq_run({"xrd", "--input", path("x/scan.csv"), "--mode", "rocking"}).out, "o");
  EXPECT_TRUE(rocking["phase"].is_null());

  const auto narrow = resq_run({"xrd", "--input", path("x/scan.csv"), "--window", "30:36"});
  EXPECT_EQ(narrow.code, 3);
  EXPECT_NE(narrow.err.find("maximum"), std::string::npos) << narrow.err;
  EXPECT_EQ(resq_run({"xrd", "--input", path("x/scan.csv"), "--window", "36"}).code, 1);
  EXPECT_EQ(resq_run({"xrd", "--input", path("x/scan.csv"), "--window", "36:41"}).code, 0);
}

TEST_F(CliTest, XrdRockingWidthUnderPoissonNoise) {
  json params = {{"peak", {{"center", 0.0}, {"fwhm", 5.2}, {"eta", 0.5}, {"amplitude", 1e4}, {"background", 50.0}}},
                 {"noise", {{"kind", "poisson-like"}, {"sigma", 1.0}, {"seed", 8}}}};
  ASSERT_EQ(resq_run({"synth", "rocking", "--input", write("r.json", io::dump(params)), "--output", path("r")}).code, 0);
  const auto r = resq_run({"xrd", "--input", path("r/scan.csv"), "--mode", "rocking", "--poisson-weights"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NEAR(io::parse_json(r.out, "o")["peak"]["fwhm"].get<double>(), 5.2, 0.02 * 5.2);
}

TEST_F(CliTest, TcTwoStepConstantAndBadCriterion) {
  json params = {{"steps", {{{"t_c", 7.9}, {"level", 0.5}}, {{"t_c", 7.7}, {"level", 1e-3}}}},
                 {"normal_resistance", 5.0},
                 {"noise_floor", 1e-3},
                 {"temperatures", {{"start", 7.0}, {"stop", 10.0}, {"count", 301}}}};
  ASSERT_EQ(resq_run({"synth", "rt", "--input", write("rt.json", io::dump(params)), "--output", path("rt")}).code, 0);
  const auto r = resq_run({"tc", "--input", path("rt/rt.csv")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rep = io::parse_json(r.out, "stdout");
  ASSERT_EQ(rep["transitions"].size(), 2u);
  EXPECT_NEAR(rep["transitions"][0]["t_c"].get<double>(), 7.9, 0.01);
  EXPECT_NEAR(rep["transitions"][1]["t_c"].get<double>(), 7.7, 0.01);
  EXPECT_EQ(rep["criterion"], "midpoint");
  EXPECT_TRUE(rep["t_c"].is_number());

  json flat = params;
  flat["steps"] = json::array();
  ASSERT_EQ(resq_run({"synth", "rt", "--input", write("flat.json", io::dump(flat)), "--output", path("flat")}).code, 0);
  const auto c = resq_run({"tc", "--input", path("flat/rt.csv"), "--criterion", "onset"});
  ASSERT_EQ(c.code, 0) << c.err;
  const auto crep = io::parse_json(c.out, "stdout");
  EXPECT_TRUE(crep["transitions"].empty());
  EXPECT_TRUE(crep["t_c"].is_null());

  const auto bad = resq_run({"tc", "--input", path("rt/rt.csv"), "--criterion", "halfway"});
  EXPECT_EQ(bad.code, 1);
  EXPECT_FALSE(bad.err.empty());
}

TEST_F(CliTest, SynthDeterministicAndSeedOverride) {
  const auto params = sweep_params(1e-3, 4);
  ASSERT_EQ(resq_run({"synth", "sweep", "--input", params, "--output", path("a")}).code, 0);
  const auto first_trace = io::read_file(path("a/trace_000.csv"));
  const auto first_oracle = io::read_file(path("a/oracle.json"));
  const auto first_manifest = io::read_file(path("a/manifest.json"));
  ASSERT_EQ(resq_run({"synth", "sweep", "--input", params, "--output", path("a")}).code, 0);
  EXPECT_EQ(io::read_file(path("a/trace_000.csv")), first_trace);
  EXPECT_EQ(io::read_file(path("a/oracle.json")), first_oracle);
  EXPECT_EQ(io::read_file(path("a/manifest.json")), first_manifest);

  ASSERT_EQ(resq_run({"synth", "sweep", "--input", params, "--output", path("b")}).code, 0);
  for (int i = 0; i < 4; ++i) {
    const auto name = "trace_00" + std::to_string(i) + ".csv";
    EXPECT_EQ(io::read_file(path("a/" + name)), io::read_file(path("b/" + name)));
  }

  ASSERT_EQ(resq_run({"synth", "sweep", "--input", params, "--output", path("c"), "--seed", "77"}).code, 0);
  EXPECT_NE(io::read_file(path("c/trace_000.csv")), first_trace);
  EXPECT_EQ(read("c/oracle.json")["noise"]["seed"], 77);
  EXPECT_EQ(read("c/oracle.json")["provenance"]["seeds"][0], split_seed(77, 0));
}

TEST_F(CliTest, SynthMissingOrInvalidParams) {
  const auto missing = resq_run({"synth", "trace", "--input", path("absent.json"), "--output", path("o")});
  EXPECT_EQ(missing.code, 4);
  EXPECT_NE(missing.err.find("absent.json"), std::string::npos) << missing.err;
  const auto broken = resq_run({"synth", "trace", "--input", write("broken.json", "{"), "--output", path("o")});
  EXPECT_EQ(broken.code, 2);
  EXPECT_EQ(resq_run({"synth", "bogus", "--input", write("e.json", "{}"), "--output", path("o")}).code, 1);
  const auto steps = resq_run({"synth", "rt",
                               "--input", write("s.json", R"({"normal_resistance": 5, "steps": [{"t_c": 7, "level": 1}, {"t_c": 8, "level": 0.1}],
                                   "temperatures_k": [1,2,3,4,5,6,7,8,9,10]})"),
                               "--output", path("o")});
  EXPECT_EQ(steps.code, 2);
}
