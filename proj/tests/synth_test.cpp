#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "resq/synth.hpp"

using namespace resq;

namespace {

NotchModelParams params() {
  NotchModelParams p;
  p.f_r = 6e9;
  p.q_l = 5e4;
  p.q_c_mag = 8e4;
  p.phi = 0.2;
  p.a = 1.0;
  p.alpha = -0.4;
  p.tau = 30e-9;
  return p;
}

const TLSParams kNbTa{11.3e-7, 0.69e-7, 3.9, 0.40, {}};

ResonatorDesign design() {
  ResonatorDesign d;
  d.f_r = 6e9;
  d.q_c_mag = 5e5;
  d.phi = 0.1;
  d.a = 0.8;
  d.alpha = 0.3;
  d.tau = 40e-9;
  return d;
}

std::vector<double> powers(double lo, double hi, int count) {
  std::vector<double> p;
  for (int i = 0; i < count; ++i) p.push_back(lo + (hi - lo) * i / (count - 1));
  return p;
}

}  // namespace

TEST(SplitSeed, MatchesSplitmix64Reference) {
  // Reference outputs of the splitmix64 generator started from state 0.
  EXPECT_EQ(split_seed(0, 0), 16294208416658607535ULL);
  EXPECT_EQ(split_seed(0, 1), 7960286522194355700ULL);
  EXPECT_EQ(split_seed(1234567, 4), 16408922859458223821ULL);
}

TEST(Rng, UniformUsesTopBitsOfMt19937_64) {
  Rng rng(5489);
  // First mt19937_64 output for the default seed is 14514284786278117030.
  const double expected = (static_cast<double>(14514284786278117030ULL >> 11) + 0.5) * 0x1.0p-53;
  EXPECT_EQ(rng.uniform(), expected);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform();
    ASSERT_GT(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
}

TEST(Rng, NormalMoments) {
  Rng rng(99);
  double s = 0.0;
  double ss = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    s += x;
    ss += x * x;
  }
  EXPECT_NEAR(s / n, 0.0, 0.01);
  EXPECT_NEAR(ss / n, 1.0, 0.01);
}

TEST(GenTrace, NoiselessEqualsModel) {
  const auto p = params();
  const auto t = gen_trace(p, 101, 1e6);
  ASSERT_EQ(t.size(), 101u);
  EXPECT_DOUBLE_EQ(t.frequencies[50], p.f_r);
  EXPECT_NEAR(t.frequencies.back() - t.frequencies.front(), 1e6, 1e-6);
  for (std::size_t i = 0; i < t.size(); ++i) {
    EXPECT_EQ(t.s21[i], s21_notch(p, t.frequencies[i]));
  }
}

TEST(GenTrace, DeterministicPerSeed) {
  const auto p = params();
  for (auto kind : {NoiseKind::complex_gaussian, NoiseKind::multiplicative, NoiseKind::poisson_like}) {
    const NoiseSpec n1{kind, 0.01, 5};
    const NoiseSpec n2{kind, 0.01, 6};
    const auto a = gen_trace(p, 64, 1e6, n1);
    const auto b = gen_trace(p, 64, 1e6, n1);
    const auto c = gen_trace(p, 64, 1e6, n2);
    EXPECT_EQ(a.s21, b.s21);
    EXPECT_NE(a.s21, c.s21);
  }
}

TEST(GenTrace, ComplexGaussianStdMatchesSigma) {
  const auto p = params();
  const auto clean = gen_trace(p, 10000, 2e6);
  const auto noisy = gen_trace(p, 10000, 2e6, {NoiseKind::complex_gaussian, 0.01, 1});
  double ss_re = 0.0;
  double ss_im = 0.0;
  for (std::size_t i = 0; i < clean.size(); ++i) {
    const cplx d = noisy.s21[i] - clean.s21[i];
    ss_re += d.real() * d.real();
    ss_im += d.imag() * d.imag();
  }
  EXPECT_NEAR(std::sqrt(ss_re / 10000.0), 0.01, 0.05 * 0.01);
  EXPECT_NEAR(std::sqrt(ss_im / 10000.0), 0.01, 0.05 * 0.01);
}

TEST(GenTrace, Preconditions) {
  EXPECT_THROW(gen_trace(params(), 15, 1e6), Error);
  EXPECT_THROW(gen_trace(params(), 16, 0.0), Error);
  EXPECT_NO_THROW(gen_trace(params(), 16, 1e6));
}

TEST(GenPowerSweep, PowerIndependentWithoutTls) {
  const TLSParams flat{0.0, 2e-6, 1.0, 0.5, {}};
  const auto pw = powers(-90.0, -30.0, 7);
  const auto sweep = gen_power_sweep(flat, design(), pw, {{60.0}});
  for (const auto& o : sweep.oracle) {
    EXPECT_DOUBLE_EQ(o.q_i, 1.0 / 2e-6);
  }
}

TEST(GenPowerSweep, NbTaOracleSpansDecadesAndIsSelfConsistent) {
  const auto pw = powers(-90.0, -30.0, 30);
  const AttenuationChain chain{{20.0, 20.0, 40.0}};
  const auto sweep = gen_power_sweep(kNbTa, design(), pw, chain, {NoiseKind::complex_gaussian, 1e-3, 11});
  ASSERT_EQ(sweep.traces.size(), 30u);
  ASSERT_EQ(sweep.oracle.size(), 30u);
  EXPECT_GE(std::log10(sweep.oracle.back().n / sweep.oracle.front().n), 5.0);
  for (std::size_t i = 0; i < sweep.oracle.size(); ++i) {
    const auto& o = sweep.oracle[i];
    EXPECT_NEAR(tls_delta(o.n, kNbTa) * o.q_i, 1.0, 1e-9);
    EXPECT_LT(o.final_rel_step, 1e-9);
    EXPECT_EQ(o.seed, split_seed(11, i));
    EXPECT_EQ(o.vna_power_dbm, pw[i]);
    EXPECT_DOUBLE_EQ(o.p_in, input_power(pw[i], chain));
    // n is consistent with the loaded Q the trace was generated with.
    EXPECT_NEAR(photon_number(o.p_in, 6e9, o.q_l, 5e5), o.n, 1e-8 * o.n);
    EXPECT_DOUBLE_EQ(sweep.traces[i].vna_power_dbm, pw[i]);
    EXPECT_DOUBLE_EQ(sweep.traces[i].total_attenuation_db, 80.0);
    if (i > 0) {
      EXPECT_GT(o.n, sweep.oracle[i - 1].n);
      EXPECT_GE(o.q_i, sweep.oracle[i - 1].q_i);
    }
  }
}

TEST(GenPowerSweep, DeterministicAndRejectsInvalidTls) {
  const auto pw = powers(-80.0, -40.0, 5);
  const NoiseSpec noise{NoiseKind::complex_gaussian, 1e-3, 3};
  const auto a = gen_power_sweep(kNbTa, design(), pw, {{70.0}}, noise);
  const auto b = gen_power_sweep(kNbTa, design(), pw, {{70.0}}, noise);
  for (std::size_t i = 0; i < pw.size(); ++i) EXPECT_EQ(a.traces[i].s21, b.traces[i].s21);
  EXPECT_THROW(gen_power_sweep({0.0, 0.0, 1.0, 0.5, {}}, design(), pw, {{70.0}}), Error);
  EXPECT_THROW(gen_power_sweep({1e-6, 0.0, -1.0, 0.5, {}}, design(), pw, {{70.0}}), Error);
}

TEST(SolveOperatingPoint, NonConvergenceIsReported) {
  SweepOptions opt;
  opt.max_iterations = 1;
  try {
    solve_operating_point(kNbTa, design(), 1e-14, opt);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::no_fixed_point);
  }
}

TEST(LinearGrid, Endpoints) {
  const auto g = linear_grid(1.0, 2.0, 11);
  EXPECT_EQ(g.front(), 1.0);
  EXPECT_EQ(g.back(), 2.0);
  EXPECT_DOUBLE_EQ(g[5], 1.5);
  EXPECT_EQ(linear_grid(3.0, 4.0, 1), std::vector<double>{3.0});
}
