#include <gtest/gtest.h>

#include <boost/multiprecision/cpp_bin_float.hpp>
#include <cmath>
#include <random>

#include "dimclt/thermodynamics.hpp"

using namespace dimclt;
using Big = boost::multiprecision::cpp_bin_float_50;

namespace {

const double kP = 0.25, kQ = 0.75;

double binary_entropy(double p) { return -p * std::log(p) - (1 - p) * std::log(1 - p); }

GibbsModel bernoulli_model(int depth = 3) {
  return build_gibbs(SkewMap(2, 0.0, 3, 0.0, 0.0), bernoulli_potential({kP, kQ}, 3), depth);
}

GibbsModel lebesgue_model(int depth = 3) {
  return build_gibbs(SkewMap(2, 0.0, 3, 0.0, 0.0), NegLogDetJacobian{1.0}, depth);
}

int count_base_zeros(const BlockChain& chain, std::size_t w, int l) {
  int zeros = 0;
  for (int pos = 0; pos < chain.depth(); ++pos) zeros += chain.symbol_at(w, pos) / l == 0;
  return zeros;
}

}  // namespace

TEST(BuildGibbsTest, LebesgueIsUniform) {
  auto g = lebesgue_model(3);
  EXPECT_NEAR(g.raw_pressure, 0.0, 1e-12);
  EXPECT_EQ(g.pressure, 0.0);
  for (double w : g.mu_weights()) ASSERT_NEAR(w, std::pow(6.0, -3), 1e-14);
  EXPECT_NEAR(g.delta, 2.0, 1e-12);
  EXPECT_NEAR(g.delta_u, 1.0, 1e-12);
  EXPECT_NEAR(g.delta_uu, 1.0, 1e-12);
  for (double d : g.density()) EXPECT_GT(d, 0.0);
}

TEST(BuildGibbsTest, BernoulliProductWeights) {
  auto g = bernoulli_model(3);
  for (std::size_t w = 0; w < g.chain.states(); ++w) {
    const int zeros = count_base_zeros(g.chain, w, 3);
    const double expect = std::pow(kP, zeros) * std::pow(kQ, 3 - zeros) * std::pow(3.0, -3);
    ASSERT_NEAR(g.mu_weights()[w], expect, 1e-14);
  }
}

TEST(BuildGibbsTest, TrigWeightsStableAcrossDepth) {
  SkewMap m(2, 0.0, 3, 0.0, 0.0);
  TrigPoly t{0.0, {0.2}, {}, {}, {}};
  // centre evaluation converges at first order in the cylinder size
  auto a = build_gibbs(m, t, 5), b = build_gibbs(m, t, 7);
  const auto coarse = b.chain.word_marginals(5);
  double tv = 0.0;
  for (std::size_t w = 0; w < coarse.size(); ++w) tv += std::fabs(coarse[w] - a.mu_weights()[w]);
  EXPECT_LT(0.5 * tv, 1e-3);
}

TEST(BuildGibbsTest, Guards) {
  SkewMap m(2, 0.0, 3, 0.0, 0.0);
  EXPECT_THROW(build_gibbs(m, NegLogDetJacobian{1.0}, 1), ModelError);
  EXPECT_THROW(build_gibbs(m, NegLogDetJacobian{1.0}, 10), ModelError);  // 6^10 > 1e7
  // base expands faster than the fiber
  EXPECT_THROW(build_gibbs(SkewMap(3, 0.0, 2, 0.0, 0.0), NegLogDetJacobian{1.0}, 2), ModelError);
  EXPECT_THROW(build_gibbs(m, CylinderPiecewiseConstant{3, std::vector<double>(216, 0.0)}, 2), ModelError);
}

TEST(GibbsInvariants, WeightsAndShiftInvariance) {
  SkewMap m(2, 0.5, 3, 0.4, 0.3);
  auto g = build_gibbs(m, TrigPoly{0.1, {0.2}, {0.1}, {0.15}, {}}, 4);
  const auto& mu = g.mu_weights();
  double total = 0.0;
  for (double w : mu) total += w;
  EXPECT_NEAR(total, 1.0, 1e-10);
  // Sum over one-symbol extensions on the left equals the weight of the word
  const auto shorter = g.chain.word_marginals(3);
  const std::size_t tail = shorter.size();
  std::vector<double> left_sum(tail, 0.0);
  for (std::size_t w = 0; w < mu.size(); ++w) left_sum[w % tail] += mu[w];
  for (std::size_t v = 0; v < tail; ++v) ASSERT_NEAR(left_sum[v], shorter[v], 1e-8);
}

TEST(PressureTest, ZeroPotentialIsLogAlphabet) {
  EXPECT_NEAR(pressure(SkewMap(2, 0.0, 3, 0.0, 0.0), TrigPoly{}, 3), std::log(6.0), 1e-12);
  EXPECT_NEAR(pressure(SkewMap(2, 0.5, 3, 0.4, 0.3), TrigPoly{}, 3), std::log(6.0), 1e-12);
}

TEST(PressureTest, NegLogDetJacobianIsZero) {
  EXPECT_NEAR(pressure(SkewMap(2, 0.0, 3, 0.0, 0.0), NegLogDetJacobian{1.0}, 3), 0.0, 1e-12);
  EXPECT_NEAR(pressure(SkewMap(3, 0.0, 4, 0.0, 0.0), NegLogDetJacobian{1.0}, 2), 0.0, 1e-12);
  // discretized at cylinder centres; error shrinks with depth
  const double p5 = pressure(SkewMap(2, 0.5, 3, 0.4, 0.3), NegLogDetJacobian{1.0}, 5);
  const double p3 = pressure(SkewMap(2, 0.5, 3, 0.4, 0.3), NegLogDetJacobian{1.0}, 3);
  EXPECT_LT(std::fabs(p5), 1e-4);
  EXPECT_LT(std::fabs(p5), std::fabs(p3));
}

TEST(PressureTest, DepthOneClosedForm) {
  SkewMap m(2, 0.0, 3, 0.0, 0.0);
  const std::vector<double> v{0.3, -1.2, 0.7, 0.0, 2.1, -0.4};
  for (double t : {-2.0, 0.5, 1.0, 3.0}) {
    CylinderPiecewiseConstant pc{1, {}};
    Big sum = 0;
    for (double x : v) {
      pc.values.push_back(t * x);
      sum += exp(Big(t) * Big(x));
    }
    // full shift with a one-symbol potential: eigenvalue sum_s e^{t v_s}
    EXPECT_NEAR(pressure(m, pc, 2), log(sum).convert_to<double>(), 1e-12) << t;
  }
}

TEST(VariationalProperty, EntropyPlusIntegral) {
  for (const auto& g : {build_gibbs(SkewMap(2, 0.5, 3, 0.4, 0.3), TrigPoly{0.0, {0.3}, {}, {0.2}, {}}, 4),
                        bernoulli_model(3)}) {
    EXPECT_NEAR(g.h_mu_blocks + g.chain.expectation(g.phi_state), 0.0, 2e-3);
    EXPECT_NEAR(g.chain.entropy_rate(), g.h_mu_blocks, 1e-10);
  }
}

TEST(ProjectMeasureTest, BernoulliMarginal) {
  auto g = bernoulli_model(3);
  auto nu = project_measure(g);
  ASSERT_EQ(nu.size(), 8u);
  for (std::size_t b = 0; b < 8; ++b) {
    const int zeros = !(b & 4) + !(b & 2) + !(b & 1);
    EXPECT_NEAR(nu[b], std::pow(kP, zeros) * std::pow(kQ, 3 - zeros), 1e-14);
  }
}

TEST(ProjectMeasureTest, ConstantPotentialUniform) {
  auto g = build_gibbs(SkewMap(2, 0.0, 3, 0.0, 0.0), TrigPoly{1.7, {}, {}, {}, {}}, 3);
  for (double v : project_measure(g)) EXPECT_NEAR(v, 0.125, 1e-14);
}

TEST(ProjectMeasureTest, GenericSumsToOneAndInvariant) {
  auto g = build_gibbs(SkewMap(2, 0.5, 3, 0.4, 0.3), TrigPoly{0.0, {0.2}, {}, {0.3}, {}}, 4);
  auto nu = project_measure(g);
  double s = 0.0;
  for (double v : nu) s += v;
  EXPECT_NEAR(s, 1.0, 1e-12);
  const auto head = base_marginals(nu, 2, 4, 3);
  std::vector<double> left(8, 0.0);
  for (std::size_t b = 0; b < nu.size(); ++b) left[b % 8] += nu[b];
  for (int b = 0; b < 8; ++b) EXPECT_NEAR(left[b], head[b], 1e-8);
}

TEST(ProjectedPotentialTest, BernoulliExact) {
  auto g = bernoulli_model(4);
  for (int est = 0; est < 4; ++est) {
    auto psi = projected_potential(g, est);
    for (std::size_t b = 0; b < psi.values.size(); ++b) {
      const bool first_zero = b < psi.values.size() / 2;
      ASSERT_NEAR(psi.values[b], std::log(first_zero ? kP : kQ), 1e-12);
    }
  }
}

TEST(ProjectedPotentialTest, LebesgueIsMinusLogK) {
  auto g = lebesgue_model(3);
  for (double v : g.psi.values) EXPECT_NEAR(v, -std::log(2.0), 1e-12);
  EXPECT_THROW(projected_potential(g, 3), std::invalid_argument);
}

TEST(ProjectedPotentialTest, CoupledVariationDecays) {
  auto g = build_gibbs(SkewMap(2, 0.5, 3, 0.4, 0.3), TrigPoly{0.0, {0.3}, {}, {0.2}, {}}, 6);
  auto fine = projected_potential(g, 5), coarse = projected_potential(g, 3);
  const auto& prof = fine.variation_profile;
  ASSERT_EQ(prof.size(), 6u);
  for (std::size_t j = 1; j < prof.size(); ++j) EXPECT_LE(prof[j], prof[j - 1] * 1.05 + 1e-12);
  EXPECT_LT(prof.back(), 0.1 * prof.front());
  // the coarse ratio is a mediant of the fine ratios sharing its first 4 symbols
  double gap = 0.0;
  for (std::size_t b = 0; b < fine.values.size(); ++b) gap = std::max(gap, std::fabs(fine.values[b] - coarse.values[b / 4]));
  EXPECT_LE(gap, prof[4] + 1e-12);
}

TEST(GibbsPropertyTest, ProjectedPotential) {
  auto g = build_gibbs(SkewMap(2, 0.5, 3, 0.4, 0.3), TrigPoly{0.0, {0.3}, {}, {0.2}, {}}, 6);
  const auto psi = projected_potential(g, 2);
  const int est = psi.depth;
  const auto coding = g.coding();
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const double x = u(rng);
    for (int n = 1; n <= g.depth; ++n) {
      const auto bw = coding.base_code(x, n + est);
      double s = 0.0;
      for (int j = 0; j < n; ++j) s += psi.at([&](int q) { return bw[j + q]; }, 2);
      std::size_t idx = 0;
      for (int j = 0; j < n; ++j) idx = idx * 2 + bw[j];
      const double lognu = std::log(base_marginals(g.nu_weights, 2, g.depth, n)[idx]);
      worst = std::max(worst, std::fabs(lognu - s));
    }
  }
  EXPECT_LT(worst, 1.0);
}

TEST(GibbsPropertyTest, EquilibriumState) {
  SkewMap m(2, 0.5, 3, 0.4, 0.3);
  TrigPoly t{0.0, {0.3}, {}, {0.2}, {}};
  auto g = build_gibbs(m, t, 5);
  const auto coding = g.coding();
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> worst(g.depth + 1, 0.0);
  for (int i = 0; i < 1000; ++i) {
    TorusPoint p(u(rng), u(rng));
    const auto w = coding.code(p, g.depth);
    for (int n = 1; n <= g.depth; ++n) {
      std::size_t idx = 0;
      for (int j = 0; j < n; ++j) idx = idx * 6 + w[j];
      const double logmu = std::log(g.chain.word_marginals(n)[idx]);
      const double sn = birkhoff_sum(m, [&](const TorusPoint& q) { return eval_trig(t, q.x, q.y) - g.raw_pressure; }, p, n);
      worst[n] = std::max(worst[n], std::fabs(logmu - sn));
    }
  }
  for (int n = 1; n <= g.depth; ++n) EXPECT_LT(worst[n], 1.5) << n;
  // no growth with n
  EXPECT_LT(worst[g.depth], worst[1] + 0.5);
}

TEST(ConformalityProperty, ShiftedCylinders) {
  auto g = build_gibbs(SkewMap(2, 0.5, 3, 0.4, 0.3), TrigPoly{0.0, {0.3}, {}, {0.2}, {}}, 3);
  const auto& chain = g.chain;
  const auto& h = chain.left();
  std::mt19937_64 rng(7);
  for (int i = 0; i < 300; ++i) {
    const int len = chain.depth() + 1 + i % 3;
    std::vector<SymbolSet> pat;
    std::vector<int> word;
    for (int j = 0; j < len; ++j) {
      word.push_back(static_cast<int>(rng() % 6));
      pat.push_back(SymbolSet::exactly(word.back()));
    }
    const double mu_c = chain.pattern_measure(pat);
    const double mu_tc = chain.pattern_measure(std::span<const SymbolSet>(pat).subspan(1));
    // normalized potential: phi - P + log h - log h o T, with h the operator's eigenfunction
    const std::size_t w0 = chain.index_of(word), w1 = chain.index_of(std::span<const int>(word).subspan(1));
    const double phi_n = chain.potential(w0) + std::log(h[w0]) - std::log(h[w1]);
    EXPECT_NEAR(mu_tc, mu_c * std::exp(-phi_n), 1e-6 * mu_tc);
  }
}

TEST(LyapunovTest, LinearProduct) {
  for (const auto& g : {bernoulli_model(3), lebesgue_model(3),
                        build_gibbs(SkewMap(2, 0.0, 3, 0.0, 0.0), TrigPoly{0.0, {0.3}, {}, {}, {0.3}}, 3)}) {
    auto le = lyapunov_exponents(g);
    EXPECT_NEAR(le.lambda_u, std::log(2.0), 1e-14);
    EXPECT_NEAR(le.lambda_uu, std::log(3.0), 1e-14);
  }
}

TEST(LyapunovTest, PerturbedBaseAgainstTimeAverage) {
  SkewMap m(2, 0.5, 3, 0.0, 0.0);
  auto g = build_gibbs(m, NegLogDetJacobian{1.0}, 6);
  // the acim is ergodic and equivalent to Lebesgue: time averages from Lebesgue points
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double s = 0.0;
  long n = 0;
  for (int o = 0; o < 100; ++o) {
    double x = u(rng);
    for (int j = 0; j < 100000; ++j, ++n) {
      s += std::log(m.base().derivative(x));
      x = m.base()(x);
    }
  }
  EXPECT_NEAR(g.lambda_u, s / n, 2e-4);
  // Lebesgue integral differs: the acim is not Lebesgue for a != 0
  const double lebesgue = std::log((2 + std::sqrt(4 - 0.25)) / 2);
  EXPECT_GT(std::fabs(g.lambda_u - lebesgue), 3e-3);
  // pointwise quadrature: a Lebesgue-weighted midpoint rule reproduces the closed form
  double quad = 0.0;
  for (int i = 0; i < 4096; ++i) quad += std::log(m.base().derivative((i + 0.5) / 4096)) / 4096;
  EXPECT_NEAR(quad, lebesgue, 1e-12);
}

TEST(LyapunovTest, BernoulliOnDoublingIsLog2) {
  for (double p : {0.1, 0.25, 0.5}) {
    auto g = build_gibbs(SkewMap(2, 0.0, 3, 0.0, 0.0), bernoulli_potential({p, 1 - p}, 3), 2);
    EXPECT_NEAR(g.lambda_u, std::log(2.0), 1e-14);
  }
}

TEST(EntropiesTest, LinearLebesgue) {
  auto e = entropies(lebesgue_model(3));
  EXPECT_NEAR(e.h_u, std::log(2.0), 1e-12);
  EXPECT_NEAR(e.h_uu, std::log(3.0), 1e-12);
}

TEST(EntropiesTest, BernoulliClosedForm) {
  auto g = bernoulli_model(3);
  EXPECT_NEAR(g.h_u, binary_entropy(kP), 1e-12);
  EXPECT_NEAR(g.h_uu, std::log(3.0), 1e-12);
}

TEST(EntropiesTest, SumMatchesBlockEntropy) {
  for (const auto& m : {SkewMap(2, 0.5, 3, 0.4, 0.3), SkewMap(2, 0.0, 3, 0.0, 0.7)}) {
    auto g = build_gibbs(m, TrigPoly{0.0, {0.3}, {0.1}, {0.2}, {}}, 4);
    EXPECT_NEAR(g.h_u + g.h_uu, g.h_mu_blocks, 2e-2);
    EXPECT_GE(g.h_u, -1e-6);
    EXPECT_GE(g.h_uu, -1e-6);
  }
}

TEST(DimensionTest, ClosedForms) {
  auto leb = dimension(lebesgue_model(3));
  EXPECT_NEAR(leb.delta_u, 1.0, 1e-12);
  EXPECT_NEAR(leb.delta_uu, 1.0, 1e-12);
  EXPECT_NEAR(leb.delta, 2.0, 1e-12);
  auto g = bernoulli_model(3);
  const double du = binary_entropy(kP) / std::log(2.0);
  EXPECT_NEAR(g.delta_u, du, 1e-12);
  EXPECT_NEAR(g.delta_uu, 1.0, 1e-12);
  EXPECT_NEAR(g.delta, 1.0 + du, 1e-12);
  EXPECT_NEAR(g.delta, 1.8112781244591329, 1e-12);
}

TEST(DimensionTest, ConstructionIdentityAndRange) {
  for (const auto& g : {build_gibbs(SkewMap(2, 0.5, 3, 0.4, 0.3), TrigPoly{0.0, {0.3}, {}, {0.2}, {}}, 4),
                        build_gibbs(SkewMap(2, 0.3, 5, 1.0, 0.0), TrigPoly{0.0, {}, {0.4}, {}, {0.3}}, 3)}) {
    EXPECT_NEAR(g.delta, g.h_uu / g.lambda_uu + g.h_u / g.lambda_u, 1e-9);
    EXPECT_GE(g.delta, 0.0);
    EXPECT_LE(g.delta, 2.0 + 1e-9);
  }
}

TEST(CenteredObservablesTest, LebesgueVanish) {
  auto g = lebesgue_model(3);
  auto obs = centered_observables(g);
  const auto coding = g.coding();
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 100; ++i) {
    TorusPoint p(u(rng), u(rng));
    const auto w = coding.code(p, obs.coding_depth());
    EXPECT_NEAR(obs.phi1(p, w), 0.0, 1e-12);
    EXPECT_NEAR(obs.phi2(p, w), 0.0, 1e-12);
  }
}

TEST(CenteredObservablesTest, BernoulliClosedForm) {
  auto g = bernoulli_model(3);
  auto obs = centered_observables(g);
  const auto coding = g.coding();
  for (TorusPoint p : {TorusPoint(0.2, 0.3), TorusPoint(0.7, 0.9), TorusPoint(0.45, 0.05)}) {
    const auto w = coding.code(p, obs.coding_depth());
    const double first = w[0] / 3 == 0 ? kP : kQ;
    EXPECT_NEAR(obs.phi2(p, w), std::log(first) + g.delta_u * std::log(2.0), 1e-12);
    EXPECT_NEAR(obs.phi1(p, w), 0.0, 1e-12);
  }
}

TEST(CenteredObservablesTest, GenericCentering) {
  for (const auto& m : {SkewMap(2, 0.5, 3, 0.4, 0.3), SkewMap(2, 0.0, 4, 1.5, -0.8)}) {
    auto g = build_gibbs(m, TrigPoly{0.0, {0.3}, {0.1}, {0.2}, {-0.1}}, 4);
    EXPECT_NEAR(g.chain.expectation(g.phi1_state), 0.0, 1e-6);
    EXPECT_NEAR(g.chain.expectation(g.phi2_state), 0.0, 1e-6);
    // evaluator at cylinder centres reproduces the state vectors
    auto obs = centered_observables(g);
    const auto centers = cylinder_centers(g.coding(), g.depth);
    double i1 = 0.0, i2 = 0.0;
    for (std::size_t w = 0; w < centers.size(); ++w) {
      const auto word = state_word(g.chain, w);
      i1 += g.mu_weights()[w] * obs.phi1(centers[w], word);
      i2 += g.mu_weights()[w] * obs.phi2(centers[w], word);
    }
    EXPECT_NEAR(i1, 0.0, 1e-6);
    EXPECT_NEAR(i2, 0.0, 1e-6);
  }
}

TEST(CovarianceTest, LebesgueZero) {
  auto g = lebesgue_model(3);
  for (auto& row : g.Q)
    for (double v : row) EXPECT_NEAR(v, 0.0, 1e-20);
  EXPECT_NEAR(g.sigma2, 0.0, 1e-20);
}

TEST(CovarianceTest, BernoulliClosedForm) {
  auto g = bernoulli_model(3);
  const double q22 = kP * kQ * std::pow(std::log(kP / kQ), 2);
  EXPECT_NEAR(g.Q[0][0], 0.0, 1e-14);
  EXPECT_NEAR(g.Q[0][1], 0.0, 1e-14);
  EXPECT_NEAR(g.Q[1][1], q22, 1e-12);
  auto info = covariance_matrix(g);
  EXPECT_TRUE(info.converged);
  EXPECT_NEAR(info.Q[1][1], q22, 1e-12);
}

TEST(CovarianceProperty, SymmetricPsd) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  for (int i = 0; i < 8; ++i) {
    SkewMap m(2, u(rng), 3 + i % 2, u(rng), u(rng));
    auto g = build_gibbs(m, TrigPoly{0.0, {u(rng)}, {u(rng)}, {u(rng)}, {u(rng)}}, 3);
    EXPECT_EQ(g.Q[0][1], g.Q[1][0]);
    const auto e = eigen_symmetric(g.Q);
    EXPECT_GE(e.values[1], -1e-10);
    EXPECT_GE(g.sigma2, 0.0);
  }
}

TEST(LimitVarianceTest, SimpleCases) {
  EXPECT_EQ(limit_variance(Matrix2{}, 0.5, 1.0), 0.0);
  const Matrix2 diag{{{0.3, 0.0}, {0.0, 0.7}}};
  EXPECT_NEAR(limit_variance(diag, std::log(2.0), std::log(3.0)), 0.3 / std::log(3.0) + 0.7 / std::log(2.0), 1e-14);
  EXPECT_THROW(limit_variance(diag, 1.0, 1.0), ModelError);
  EXPECT_THROW(limit_variance(diag, 1.1, 1.0), ModelError);
}

TEST(LimitVarianceTest, BernoulliClosedForm) {
  auto g = bernoulli_model(3);
  EXPECT_NEAR(g.sigma2, kP * kQ * std::pow(std::log(kP / kQ), 2) / std::log(2.0), 1e-12);
}

TEST(LimitVarianceTest, EigenAndClosedFormsAgreeOnRandomMatrices) {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_real_distribution<double> lam(0.1, 3.0);
  for (int i = 0; i < 1000; ++i) {
    const double a = u(rng), b = u(rng), c = u(rng);
    // Q = L L^T, always PSD
    const Matrix2 q{{{a * a, a * b}, {a * b, b * b + c * c}}};
    double lu = lam(rng), luu = lam(rng);
    if (lu > luu) std::swap(lu, luu);
    if (lu == luu) continue;
    const double t1 = 1 / luu, t2 = 1 / lu;
    ASSERT_NEAR(limit_variance_eigen(q, t1, t2), limit_variance_closed(q, t1, t2), 1e-12);
  }
}

TEST(LimitVarianceTest, ClosedFormMatchesBrownianSimulation) {
  // Var(B1(t1) + B2(t2)) for a planar Brownian motion with covariance Q, t1 < t2
  const Matrix2 q{{{0.5, -0.3}, {-0.3, 0.8}}};
  const double t1 = 0.6, t2 = 1.4;
  const double l11 = std::sqrt(q[0][0]), l21 = q[1][0] / l11, l22 = std::sqrt(q[1][1] - l21 * l21);
  std::mt19937_64 rng(29);
  std::normal_distribution<double> z(0.0, 1.0);
  const int n = 200000;
  double s = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z1 = z(rng) * std::sqrt(t1), z2 = z(rng) * std::sqrt(t1);
    const double w2 = z(rng) * std::sqrt(t2 - t1);  // extra increment of B2 after t1
    const double w1 = z(rng) * std::sqrt(t2 - t1);
    const double b1 = l11 * z1;
    const double b2 = l21 * z1 + l22 * z2 + l21 * w1 + l22 * w2;
    const double x = b1 + b2;
    s += x;
    s2 += x * x;
  }
  const double var = s2 / n - (s / n) * (s / n);
  const double expect = limit_variance_closed(q, t1, t2);
  EXPECT_NEAR(var, expect, 4 * expect * std::sqrt(2.0 / n));
}

TEST(DegeneracyTest, Verdicts) {
  auto acim = degeneracy_test(build_gibbs(SkewMap(2, 0.5, 3, 0.4, 0.3), NegLogDetJacobian{1.0}, 3));
  EXPECT_TRUE(acim.degenerate);
  EXPECT_TRUE(acim.consistent);
  EXPECT_NEAR(acim.total_variation, 0.0, 1e-12);
  auto bern = degeneracy_test(bernoulli_model(3));
  EXPECT_FALSE(bern.degenerate);
  EXPECT_TRUE(bern.consistent);
  auto half = degeneracy_test(build_gibbs(SkewMap(2, 0.0, 3, 0.0, 0.0), bernoulli_potential({0.5, 0.5}, 3), 3));
  EXPECT_TRUE(half.degenerate);
  EXPECT_TRUE(half.consistent);
  EXPECT_NEAR(half.acim_pressure, 0.0, 1e-12);
}

TEST(DepthConvergenceProperty, TrigPotentials) {
  for (const auto& m : {SkewMap(2, 0.0, 3, 0.0, 0.0), SkewMap(2, 0.1, 3, 0.1, 0.1)}) {
    TrigPoly t{0.0, {0.3}, {}, {0.2}, {0.3}};
    auto a = build_gibbs(m, t, 5), b = build_gibbs(m, t, 7);
    EXPECT_LT(std::fabs(a.lambda_u - b.lambda_u), 1e-3);
    EXPECT_LT(std::fabs(a.lambda_uu - b.lambda_uu), 1e-3);
    EXPECT_LT(std::fabs(a.h_u - b.h_u), 1e-3);
    EXPECT_LT(std::fabs(a.h_uu - b.h_uu), 1e-3);
    EXPECT_LT(std::fabs(a.delta - b.delta), 1e-3);
    EXPECT_LT(std::fabs(a.sigma2 - b.sigma2), 1e-3);
  }
}
