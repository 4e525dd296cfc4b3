#include <cmath>

#include <gtest/gtest.h>

#include "qkpz/identities.hpp"
#include "support/oracles.hpp"

using namespace qkpz;

TEST(TestFunctions, SecondDerivativeMatchesFiniteDifferences) {
  for (const TestFunction& f : {TestFunction::gaussian_bump(0.1), TestFunction::gaussian_bump(0.25),
                                TestFunction::raised_cosine(0.5)}) {
    const double h = 1e-4;
    for (double X = -f.support() * 0.99; X < f.support(); X += f.support() / 37) {
      const double fd2 = (f(X + h) - 2 * f(X) + f(X - h)) / (h * h);
      const double fd1 = (f(X + h) - f(X - h)) / (2 * h);
      const double scale = 1.0 / (f.width * f.width);
      EXPECT_NEAR(f.d2(X), fd2, 1e-6 * scale + 1e-6) << X;
      EXPECT_NEAR(f.d1(X), fd1, 1e-6 / f.width + 1e-7) << X;
    }
    EXPECT_EQ(f(f.support()), 0.0);
    EXPECT_EQ(f(-1.01 * f.support()), 0.0);
  }
  EXPECT_THROW(test_function_from_string("box", 1.0), DomainError);
}

TEST(Drift, BlockedBondLeavesNuLogQ) {
  const auto p = QParameters::asep(1, 0.7);
  Configuration c = initial_condition(InitialKind::step, 3, p);
  EXPECT_NEAR(drift_coefficient(c, -2, p), p.nu * p.log_q, 1e-16);
}

TEST(Drift, ExhaustiveAsep) {
  RngStream rng(1, 0);
  for (int tj = 1; tj <= 4; ++tj)
    for (double q : {0.3, 0.5, 0.6, 0.9, 0.99}) {
      const IdentityReport r = verify_drift_identity(QParameters::asep(tj, q), 0, rng);
      EXPECT_EQ(r.cases, static_cast<std::size_t>((tj + 1) * (tj + 1)));
      EXPECT_LE(r.max_rel_residual, 1e-12) << tj << " " << q;
    }
}

TEST(Drift, LaplacianRatioMatchesDefinition) {
  const auto p = QParameters::asep(3, 0.8);
  RngStream rng(2, 0);
  Configuration c = initial_condition(InitialKind::bernoulli_product, 20, p, &rng);
  const GartnerField z = gartner(c, p);
  for (int x = -19; x < 19; ++x) {
    const double lap = 0.5 * (z.at(x + 1) + z.at(x - 1) - 2 * z.at(x)) / z.at(x);
    EXPECT_NEAR(half_laplacian_ratio(c.count(x), c.count(x + 1), p), lap, 1e-12) << x;
    // Omega Z = Lap Z / 2 on a real configuration
    EXPECT_NEAR(drift_coefficient(c, x, p), lap, 1e-12);
  }
}

TEST(Drift, AsipSampled) {
  RngStream rng(3, 0);
  for (double k : {0.5, 1.0, 2.3})
    for (double q : {0.5, 0.9}) {
      const IdentityReport r = verify_drift_identity(QParameters::asip(k, q), 2000, rng);
      EXPECT_LE(r.max_rel_residual, 1e-12) << k << " " << q;
    }
}

TEST(Drift, PerturbedNuIsDetected) {
  RngStream rng(4, 0);
  const auto p = QParameters::asep(1, 0.9);
  DriftOptions o;
  o.nu_shift = 1e-6;
  const IdentityReport r = verify_drift_identity(p, 0, rng, o);
  EXPECT_NEAR(r.max_rel_residual, 1e-6 * std::abs(p.log_q), 1e-9);
}

TEST(Bracket, ExactMatchesClosedForm) {
  RngStream rng(5, 0);
  for (int tj = 1; tj <= 4; ++tj)
    for (double q : {0.3, 0.6, 0.9}) {
      const IdentityReport r = verify_bracket_exact(QParameters::asep(tj, q), 0, rng);
      EXPECT_LE(r.max_rel_residual, 1e-12);
      EXPECT_GE(r.params["min_bracket"].get<double>(), 0.0);
    }
  for (double k : {0.5, 2.3}) {
    const IdentityReport r = verify_bracket_exact(QParameters::asip(k, 0.8), 500, rng);
    EXPECT_LE(r.max_rel_residual, 1e-12);
  }
}

TEST(Bracket, BlockedIsZeroAndBoundedByEps) {
  const auto p = QParameters::asep(1, 0.7);
  const Configuration c = initial_condition(InitialKind::step, 3, p);
  EXPECT_EQ(bracket_exact(c, -2, p), 0.0);
  EXPECT_EQ(bracket_exact(c, 2, p), 0.0);
  for (int tj = 1; tj <= 4; ++tj) {
    const double j = 0.5 * tj;
    for (double eps : {1e-3, 1e-4}) {
      auto [q, s] = weak_asymmetry(eps, j, Model::asep);
      double worst = 0;
      for (int a = 0; a <= tj; ++a)
        for (int b = 0; b <= tj; ++b) worst = std::max(worst, bracket_ratio(a, b, q) / eps);
      EXPECT_LE(worst, 8 * j * j + 1) << j;
    }
  }
}

TEST(Bracket, AsymptoticDefectDecreases) {
  const std::vector<double> eps{1e-2, 1e-3, 1e-4};
  for (int tj : {1, 2, 3}) {
    const AsymptoticReport r = bracket_asymptotic_check(tj, eps);
    EXPECT_TRUE(r.defect_decreasing) << tj;
    EXPECT_TRUE(r.alt_defect_decreasing) << tj;
  }
  const AsymptoticReport h = bracket_asymptotic_check(1, eps);
  EXPECT_NEAR(h.rows.back().leading_coefficient, 1.0, 1e-3);
  EXPECT_THROW(bracket_asymptotic_check(1, std::vector<double>{1e-2, 1e-3}), DomainError);
}

TEST(R1, CoefficientIsOrderEps) {
  for (double j : {0.5, 1.0, 1.5, 2.0}) {
    // 2j/[2j]_q - 1 = -(4j^2 - 1) eps / 6 + O(eps^2)
    for (double eps : {1e-2, 1e-3, 1e-4})
      EXPECT_NEAR(r1_coefficient_ratio(eps, j), (4 * j * j - 1) / 6.0, 2 * (4 * j * j + 1) * eps);
  }
}

TEST(Gradient, IdentitiesOnSnapshots) {
  for (const auto& p : {QParameters::asep(1, 0.9), QParameters::asep(3, 0.95), QParameters::asip(2.3, 0.9)}) {
    RngStream rng(6, 0);
    Configuration c = initial_condition(InitialKind::bernoulli_product, 60, p, &rng);
    simulate_until(c, p, 30.0, {}, rng);
    const GradientCheck g = check_gradient_identities(c, p);
    EXPECT_GT(g.sites, 100u);
    EXPECT_LE(g.max_rel_residual, 1e-13);
    // |grad Z| <= C sqrt(eps) Z with C from max |2 eta| plus slack
    const double max_eta = p.model == Model::asep ? p.spin : 20 + p.spin;
    EXPECT_LE(g.max_grad_ratio, std::exp(2 * max_eta * -p.log_q) * 2 * max_eta + 1);
  }
}

TEST(MeanOracle, FlatAndStep) {
  const auto p = QParameters::asep(2, std::exp(-0.1));
  const auto flat = mean_oracle(InitialKind::flat_pairing, p, 50.0, -5, 5);
  for (double v : flat) EXPECT_NEAR(v, 1.0, 1e-10);
  auto [q, s] = weak_asymmetry(1e-2, 0.5, Model::asep);
  const auto step0 = mean_oracle(InitialKind::step, q, 0.0, -5, 5);
  for (int x = -5; x <= 5; ++x) EXPECT_NEAR(step0[x + 5], std::exp(-0.1 * std::abs(x)), 1e-14);
  // p_t * Z0 by a Bessel-series oracle
  const double t = 3.0;
  const auto st = mean_oracle(InitialKind::step, q, t, 0, 0);
  long double acc = 0;
  for (long y = -200; y <= 200; ++y) acc += oracle::bessel_kernel(t, y) * std::exp(-0.1L * std::abs(y));
  EXPECT_NEAR(st[0], static_cast<double>(acc), 1e-12);
}

TEST(MeanTest, ExactAtTimeZeroAndPowerCheck) {
  std::vector<std::vector<double>> s(100, std::vector<double>{1.0, 2.0});
  s[0] = {1.0 + 1e-9, 2.0};
  s[1] = {1.0 - 1e-9, 2.0};
  const std::vector<double> orc{1.0, 2.0};
  const MeanTestResult r = martingale_mean_test(s, orc);
  EXPECT_TRUE(r.passed());
  EXPECT_LE(r.max_abs_z, 1e-6);
  std::vector<std::vector<double>> few(99, std::vector<double>{1.0, 2.0});
  EXPECT_THROW(martingale_mean_test(few, orc), StatisticalPowerError);
}

TEST(MicroFields, FrozenDynamics) {
  // fully packed segment: no jump is possible
  auto [p, s] = weak_asymmetry(1e-2, 1.0, Model::asep);
  const int L = 200;
  std::vector<std::int32_t> full(2 * L + 1, 2);
  const TestFunction phi = TestFunction::gaussian_bump(0.1);
  MicroFieldAccumulator acc(p, s, phi, L);
  const int n = 20;
  const double T = 0.5 / (s.eps_j * s.eps_j);
  std::vector<double> A;
  for (int k = 0; k <= n; ++k) {
    Configuration c = initial_condition(InitialKind::custom, L, p, nullptr, full);
    c.time = T * k / n;
    acc.add(c);
  }
  const MicroFields f = acc.finish();
  // independent evaluation: Z(x,t) = q^{-2h(x) + nu t}, h(x) = x for x >= 0 (eta = 1)
  auto pairing = [&](double t, bool lap) {
    long double sum = 0;
    for (int x = -150; x <= 150; ++x) {
      const double X = s.eps_j * x;
      const double w = lap ? phi(X + s.eps_j) + phi(X - s.eps_j) - 2 * phi(X) : phi(X);
      sum += w * std::exp((-2.0L * x + p.nu * t) * p.log_q);
    }
    return static_cast<double>(s.eps_j * sum);
  };
  double drift = 0;
  for (int k = 0; k < n; ++k)
    drift += 0.5 * (T / n) * (pairing(T * k / n, true) + pairing(T * (k + 1) / n, true));
  const double N = pairing(T, false) - pairing(0, false) - 0.5 * drift;
  EXPECT_NEAR(f.N, N, 1e-9 * std::max(1.0, std::abs(N)));
  EXPECT_EQ(f.bracket, 0.0);
  EXPECT_EQ(f.snapshots, 21u);
}

TEST(MicroFields, SupportMustFit) {
  auto [p, s] = weak_asymmetry(1e-2, 0.5, Model::asep);
  EXPECT_THROW(MicroFieldAccumulator(p, s, TestFunction::gaussian_bump(0.25), 100), RangeError);
}

TEST(KeyTerm, DecayTable) {
  const std::vector<double> eps{4e-2, 1e-2, 2.5e-3};
  std::vector<std::vector<double>> r(3);
  RngStream rng(7, 0);
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 200; ++k) r[i].push_back(rng.normal() / (i + 1));
  const KeyTermTable t = key_term_decay(eps, r);
  EXPECT_TRUE(t.decreasing);
  EXPECT_EQ(t.rows[1].replicas, 200u);
  r[2].resize(50);
  EXPECT_THROW(key_term_decay(eps, r), StatisticalPowerError);
}
