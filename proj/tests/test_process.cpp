#include <cmath>

#include <gtest/gtest.h>

#include "qkpz/process.hpp"
#include "qkpz/stats.hpp"
#include "qkpz/transform.hpp"
#include "support/oracles.hpp"

using namespace qkpz;

TEST(Rates, AsepExamples) {
  const auto p = QParameters::asep(1, 0.9);
  const BondRates r = asep_pair_rates(1, 0, p);
  EXPECT_NEAR(r.plus, 1.0 / 0.9 / 2.0, 1e-14);
  EXPECT_NEAR(r.plus, 0.55556, 1e-5);
  EXPECT_EQ(r.minus, 0.0);
  EXPECT_EQ(asep_pair_rates(0, 0, p).plus, 0.0);
  const auto p1 = QParameters::asep(2, 0.5);
  const BondRates r1 = asep_pair_rates(1, 1, p1);
  EXPECT_NEAR(r1.plus, 1.6, 1e-13);
  EXPECT_NEAR(r1.minus, 0.025, 1e-15);
}

TEST(Rates, CentredMatchesUncentred) {
  for (int tj = 1; tj <= 4; ++tj)
    for (double q : {0.3, 0.6, 0.9, 0.99}) {
      const auto p = QParameters::asep(tj, q);
      for (int a = 0; a <= tj; ++a)
        for (int b = 0; b <= tj; ++b) {
          const auto o = oracle::asep_uncentred(a, b, tj, q);
          const BondRates r = asep_pair_rates(a, b, p);
          const BondRates c = centered_rates(p.spin, a - p.spin, b - p.spin, p.log_q);
          EXPECT_NEAR(r.plus, static_cast<double>(o.plus), 1e-13 * static_cast<double>(o.plus) + 1e-300);
          EXPECT_NEAR(r.minus, static_cast<double>(o.minus), 1e-13 * static_cast<double>(o.minus) + 1e-300);
          EXPECT_NEAR(c.plus, r.plus, 1e-13 * r.plus + 1e-300);
          EXPECT_NEAR(c.minus, r.minus, 1e-13 * r.minus + 1e-300);
        }
    }
}

TEST(Rates, AsipThreeForms) {
  for (double k : {0.5, 1.0, 2.3})
    for (double q : {0.6, 0.9}) {
      const auto p = QParameters::asip(k, q);
      for (int a = 0; a <= 6; ++a)
        for (int b = 0; b <= 6; ++b) {
          const auto o = oracle::asip_uncentred(a, b, k, q);
          const BondRates r = asip_pair_rates(a, b, p);
          const BondRates c = asip_centered_rates(k, a + k, b + k, p.log_q);
          const BondRates m = centered_rates(-k, a + k, b + k, p.log_q); // j -> -k
          for (auto [x, y] : {std::pair{r.plus, static_cast<double>(o.plus)}, std::pair{r.minus, static_cast<double>(o.minus)},
                              std::pair{c.plus, r.plus}, std::pair{c.minus, r.minus}, std::pair{m.plus, r.plus},
                              std::pair{m.minus, r.minus}})
            EXPECT_NEAR(x, y, 1e-13 * std::abs(y) + 1e-300);
        }
      EXPECT_EQ(asip_pair_rates(0, 3, p).plus, 0.0);
    }
  const auto p = QParameters::asip(0.5, 0.9);
  const auto o = oracle::asip_uncentred(1, 0, 0.5L, 0.9L);
  EXPECT_NEAR(asip_pair_rates(1, 0, p).plus, static_cast<double>(o.plus), 1e-14);
}

TEST(Rates, OffLattice) {
  const auto p = QParameters::asep(1, 0.5);
  Configuration c = initial_condition(InitialKind::step, 3, p);
  EXPECT_THROW(rates_asep(c, 3, p), RangeError);
  EXPECT_THROW(rates_asep(c, -4, p), RangeError);
  EXPECT_NO_THROW(rates_asep(c, -3, p));
}

TEST(InitialCondition, Step) {
  const auto p = QParameters::asep(1, 0.5);
  Configuration c = initial_condition(InitialKind::step, 3, p);
  EXPECT_EQ(c.num_sites(), 7);
  for (int x = -3; x <= 3; ++x) EXPECT_DOUBLE_EQ(eta(c, x, p), x <= 0 ? 0.5 : -0.5);
  const HeightField h = height_from_config(c, p);
  for (int x = -3; x <= 3; ++x) EXPECT_DOUBLE_EQ(h.at(x), -0.5 * std::abs(x));
}

TEST(InitialCondition, FlatAndBernoulli) {
  const auto p2 = QParameters::asep(2, 0.5);
  Configuration c = initial_condition(InitialKind::flat_pairing, 10, p2);
  for (int x = -10; x <= 10; ++x) EXPECT_DOUBLE_EQ(eta(c, x, p2), 0.0);
  const auto p3 = QParameters::asep(3, 0.5);
  Configuration c3 = initial_condition(InitialKind::flat_pairing, 10, p3);
  const HeightField h = height_from_config(c3, p3);
  double sum = 0;
  for (int x = -10; x <= 10; ++x) {
    EXPECT_LE(std::abs(h.at(x)), 3.0);
    sum += eta(c3, x, p3);
  }
  EXPECT_LE(std::abs(sum), 0.5);
  RngStream rng(1, 0);
  Configuration b = initial_condition(InitialKind::bernoulli_product, 50, p3, &rng);
  for (int x = -50; x <= 50; ++x) EXPECT_LE(b.count(x), 3);
  EXPECT_THROW(initial_condition(InitialKind::bernoulli_product, 5, p3), DomainError);
  EXPECT_THROW(initial_condition(InitialKind::step, 0, p3), DomainError);
  EXPECT_THROW(initial_condition(InitialKind::step, 4, p3, nullptr, {}, Boundary::periodic), DomainError);
}

TEST(RateIndex, EmptyAndSingleParticle) {
  const auto p = QParameters::asep(1, 0.7);
  std::vector<std::int32_t> occ(9, 0);
  Configuration c = initial_condition(InitialKind::custom, 4, p, nullptr, occ);
  const RateEvaluator ev(p);
  EXPECT_EQ(build_rate_index(c, ev).total(), 0.0);
  RngStream rng(1, 0);
  EXPECT_FALSE(propose_jump(c, build_rate_index(c, ev), rng).has_value());
  occ[4] = 1;
  c = initial_condition(InitialKind::custom, 4, p, nullptr, occ);
  const BondRateIndex idx = build_rate_index(c, ev);
  int nonzero = 0;
  for (int b = 0; b < c.num_bonds(); ++b) nonzero += idx.rates(static_cast<std::size_t>(b)).total() > 0.0;
  EXPECT_EQ(nonzero, 2);
}

TEST(RateIndex, BruteForceTotal) {
  const auto p = QParameters::asep(3, 0.8);
  RngStream rng(9, 1);
  Configuration c = initial_condition(InitialKind::bernoulli_product, 16, p, &rng);
  const RateEvaluator ev(p);
  const BondRateIndex idx = build_rate_index(c, ev);
  double brute = 0;
  for (int x = -16; x < 16; ++x) brute += bond_rates(c, x, p).total();
  EXPECT_NEAR(idx.total(), brute, 1e-12 * brute);
  EXPECT_NEAR(idx.brute_force_total(), brute, 1e-12 * brute);
}

TEST(Step, DirectionFrequencies) {
  const auto p = QParameters::asep(1, 0.6);
  std::vector<std::int32_t> occ{1, 0, 0};
  const RateEvaluator ev(p);
  RngStream rng(5, 0);
  // particle at -1 next to an empty site 0; bond -1 only (site 1 empty too)
  Configuration c = initial_condition(InitialKind::custom, 1, p, nullptr, occ);
  const BondRates r = asep_pair_rates(1, 0, p);
  int right = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    Configuration d = c;
    BondRateIndex idx = build_rate_index(d, ev);
    auto e = propose_jump(d, idx, rng);
    ASSERT_TRUE(e.has_value());
    EXPECT_EQ(e->bond, -1);
    right += e->direction > 0;
  }
  const double pr = r.plus / r.total();
  EXPECT_NEAR(static_cast<double>(right) / n, pr, 3 * std::sqrt(pr * (1 - pr) / n) + 1e-12);
}

TEST(Step, FlowCounterSign) {
  const auto p = QParameters::asep(1, 0.5);
  const RateEvaluator ev(p);
  // particle at 1 jumps left across bond (0,1): h(0) += 1
  Configuration c = initial_condition(InitialKind::custom, 2, p, nullptr, std::vector<std::int32_t>{0, 0, 0, 1, 0});
  BondRateIndex idx = build_rate_index(c, ev);
  apply_jump(c, idx, ev, JumpEvent{0.1, 0, -1});
  EXPECT_EQ(c.flow, 1);
  EXPECT_EQ(c.count(0), 1);
  apply_jump(c, idx, ev, JumpEvent{0.1, 0, +1});
  EXPECT_EQ(c.flow, 0);
  EXPECT_EQ(c.count(1), 1);
}

TEST(Simulate, ReplayConservationAndHeights) {
  const auto p = QParameters::asep(2, 0.8);
  RngStream r0(11, 3);
  Configuration c0 = initial_condition(InitialKind::flat_pairing, 100, p);
  const int n0 = c0.particles();
  const std::vector<double> ts{0.0, 50.0, 100.0};
  Configuration c1 = c0, c2 = c0;
  RngStream a(11, 3), b(11, 3);
  const Trajectory t1 = simulate_until(c1, p, 100.0, ts, a);
  const Trajectory t2 = simulate_until(c2, p, 100.0, ts, b);
  ASSERT_EQ(t1.snapshots.size(), 3u);
  EXPECT_EQ(t1.snapshots[0].occupancy, c0.occupancy);
  EXPECT_EQ(t1.snapshots[2].occupancy, t2.snapshots[2].occupancy);
  EXPECT_EQ(t1.snapshots[2].flow, t2.snapshots[2].flow);
  EXPECT_EQ(t1.jump_count, t2.jump_count);
  EXPECT_GT(t1.jump_count, 0u);
  for (const auto& s : t1.snapshots) {
    EXPECT_EQ(s.particles(), n0);
    for (int x = -100; x <= 100; ++x) EXPECT_LE(s.count(x), 2);
    const HeightField h = height_from_config(s, p);
    EXPECT_DOUBLE_EQ(h.at(0), static_cast<double>(s.flow));
    for (int x = -100; x < 100; ++x) EXPECT_DOUBLE_EQ(h.at(x + 1) - h.at(x), eta(s, x + 1, p));
  }
  EXPECT_DOUBLE_EQ(t1.snapshots[1].time, 50.0);
}

TEST(Simulate, ZeroHorizon) {
  const auto p = QParameters::asep(1, 0.8);
  Configuration c = initial_condition(InitialKind::step, 10, p);
  RngStream r(1, 1);
  const std::vector<double> ts{0.0};
  const Trajectory t = simulate_until(c, p, 0.0, ts, r);
  ASSERT_EQ(t.snapshots.size(), 1u);
  EXPECT_EQ(t.jump_count, 0u);
}

TEST(Simulate, Budget) {
  const auto p = QParameters::asep(1, 0.8);
  Configuration c = initial_condition(InitialKind::flat_pairing, 50, p);
  RngStream r(1, 1);
  SimOptions o;
  o.max_jumps = 10;
  EXPECT_THROW(simulate_until(c, p, 100.0, {}, r, o), BudgetError);
}

TEST(Simulate, AsipCap) {
  const auto p = QParameters::asip(1.0, 0.5);
  std::vector<std::int32_t> occ(21, 0);
  occ[10] = 6;
  Configuration c = initial_condition(InitialKind::custom, 10, p, nullptr, occ);
  RngStream r(2, 0);
  SimOptions o;
  o.asip_cap = 3;
  EXPECT_THROW(simulate_until(c, p, 1e4, {}, r, o), BudgetError);
}

TEST(Simulate, PeriodicConservesAndWraps) {
  const auto p = QParameters::asep(1, 0.5);
  Configuration c = initial_condition(InitialKind::flat_pairing, 6, p, nullptr, {}, Boundary::periodic);
  EXPECT_EQ(c.num_sites(), 12);
  EXPECT_EQ(c.num_bonds(), 12);
  const int n0 = c.particles();
  RngStream r(4, 0);
  simulate_until(c, p, 200.0, {}, r);
  EXPECT_EQ(c.particles(), n0);
}

TEST(Simulate, RateIndexStaysConsistent) {
  const auto p = QParameters::asep(3, 0.9);
  RngStream r(8, 0);
  Configuration c = initial_condition(InitialKind::bernoulli_product, 64, p, &r);
  const RateEvaluator ev(p);
  BondRateIndex idx = build_rate_index(c, ev);
  for (int i = 0; i < 1000000; ++i) {
    auto e = propose_jump(c, idx, r);
    ASSERT_TRUE(e.has_value());
    apply_jump(c, idx, ev, *e);
  }
  const BondRateIndex fresh = build_rate_index(c, ev);
  for (int b = 0; b < c.num_bonds(); ++b) {
    EXPECT_NEAR(idx.rates(static_cast<std::size_t>(b)).plus, fresh.rates(static_cast<std::size_t>(b)).plus, 1e-9 * fresh.rates(static_cast<std::size_t>(b)).plus + 1e-300);
    EXPECT_NEAR(idx.rates(static_cast<std::size_t>(b)).minus, fresh.rates(static_cast<std::size_t>(b)).minus, 1e-9 * fresh.rates(static_cast<std::size_t>(b)).minus + 1e-300);
  }
  EXPECT_NEAR(idx.total(), fresh.total(), 1e-10 * fresh.total());
}

// The uniformized engine must reproduce the law of the Gillespie engine.
TEST(Simulate, UniformizedMatchesGillespie) {
  const auto p = QParameters::asep(1, 0.7);
  const int n = 4000;
  std::vector<double> hg, hu, ng, nu;
  for (int i = 0; i < n; ++i) {
    for (Engine e : {Engine::gillespie, Engine::uniformized}) {
      Configuration c = initial_condition(InitialKind::step, 20, p);
      RngStream r(77, static_cast<std::uint64_t>(i) * 2 + (e == Engine::uniformized));
      SimOptions o;
      o.engine = e;
      simulate_until(c, p, 15.0, {}, r, o);
      (e == Engine::gillespie ? hg : hu).push_back(static_cast<double>(c.flow));
      (e == Engine::gillespie ? ng : nu).push_back(static_cast<double>(c.count(3)));
    }
  }
  const Summary a = summarize(hg), b = summarize(hu);
  EXPECT_LT(std::abs(a.mean - b.mean), 4 * std::hypot(a.stderr_mean, b.stderr_mean));
  EXPECT_NEAR(a.variance / b.variance, 1.0, 0.1);
  const Summary c = summarize(ng), d = summarize(nu);
  EXPECT_LT(std::abs(c.mean - d.mean), 4 * std::hypot(c.stderr_mean, d.stderr_mean));
}

TEST(Simulate, MirrorSymmetry) {
  // mirroring the lattice and swapping the bias: E h_t(0) changes sign
  const auto p = QParameters::asep(1, 0.7);
  const int n = 4000;
  std::vector<double> h;
  for (int i = 0; i < n; ++i) {
    Configuration c = initial_condition(InitialKind::step, 20, p);
    RngStream r(5, i);
    SimOptions o;
    o.engine = Engine::uniformized;
    simulate_until(c, p, 10.0, {}, r, o);
    h.push_back(static_cast<double>(c.flow));
  }
  // step data with a rightward bias drives particles right: flow negative
  EXPECT_LT(summarize(h).mean, -4 * summarize(h).stderr_mean);
}
