#include <gtest/gtest.h>

#include <cmath>

#include "meco/closed_form.hpp"
#include "meco/oracle.hpp"
#include "meco/subgradient.hpp"
#include "test_support.hpp"

using namespace meco;
using meco::support::device;
using meco::units::mbps;

TEST(OracleLambda, ComputeLimitedWorkedPoint) {
  const auto d = device(50, 1, 1);
  const auto r = oracle::oracle_lambda(d, 0.01, 1.0, mbps(40));
  EXPECT_DOUBLE_EQ(r.step, 1e-5);
  EXPECT_LE(std::abs(r.lambda - 0.5037), 5e-5);
  EXPECT_LE(std::abs(r.lambda - optimal_lambda(d, 0.01, 1.0, mbps(40))), r.step);
}

TEST(OracleLambda, ChannelLimitedWorkedPoint) {
  const auto d = device(50, 1, 1);
  const auto r = oracle::oracle_lambda(d, 0.01, 0.5, mbps(40));
  EXPECT_LE(std::abs(r.lambda - 0.6667), 5e-5);
  EXPECT_LE(std::abs(r.lambda - 2.0 / 3.0), r.step);
}

TEST(OracleLambda, ProfileIsUnimodal) {
  CounterRng rng(31, 1);
  for (int i = 0; i < 200; ++i) {
    const auto d = device(rng.uniform(10, 100), rng.uniform(0.5, 2), std::pow(10.0, rng.uniform(-0.5, 2.5)));
    const double t = std::pow(10.0, rng.uniform(-3, 0));
    const double vc = mbps(rng.uniform(0.1, 40));
    const auto prof = oracle::lambda_profile(d, 0.01, t, vc, {2000});
    EXPECT_TRUE(oracle::is_unimodal(prof));
    const auto r = oracle::oracle_lambda(d, 0.01, t, vc, {2000});
    EXPECT_LE(std::abs(r.lambda - optimal_lambda(d, 0.01, t, vc)), r.step);
  }
}

TEST(OracleLambda, UnimodalityCheckRejectsTwoDips) {
  EXPECT_TRUE(oracle::is_unimodal({3, 2, 1, 1, 2, 5}));
  EXPECT_FALSE(oracle::is_unimodal({3, 1, 2, 0.5, 2}));
}

TEST(OracleLambda, GridValidation) {
  EXPECT_THROW(oracle::lambda_profile(device(1, 1, 1), 0.01, 1, 1e6, {1}), ValidationError);
  EXPECT_THROW(oracle::lambda_profile(device(1, 1, 1), 0.01, 1, 1e6, {10, 1.0, 0.0}), ValidationError);
}

TEST(OracleAllocation, SingleDeviceGetsEverything) {
  const auto s = validate_scenario({device(50, 1, 10)}, {});
  const auto r = oracle::oracle_allocation(s);
  EXPECT_EQ(r.allocation.t[0], 1.0);
  EXPECT_EQ(r.allocation.vc[0], mbps(40));
  EXPECT_EQ(r.objective, optimal_partial_delay(s[0], 0.01, 1.0, mbps(40)).delay);
}

TEST(OracleAllocation, IdenticalPairMeetsInTheMiddle) {
  const auto s = validate_scenario({device(50, 1, 10), device(50, 1, 10)}, {});
  const auto r = oracle::oracle_allocation(s);
  EXPECT_LE(std::abs(r.allocation.t[0] - 0.5), r.resolution + 1e-12);
  EXPECT_LE(std::abs(r.allocation.vc[0] / mbps(40) - 0.5), r.resolution + 1e-12);
}

TEST(OracleAllocation, BracketsTheSubgradientSolver) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto s = support::random_rated(2, 600 + seed);
    const auto o = oracle::oracle_allocation(s, {500, 0});
    const double sub = solve_partial(s).report.best_objective;
    EXPECT_GE(o.objective, sub - 1e-3 * o.objective);
    // grid slack: the coarse grid is within 2e-3 of any point on each simplex
    EXPECT_LE(o.objective, sub * (1 + 1e-2));
  }
}

TEST(OracleAllocation, RefinementOnlyImproves) {
  const auto s = support::random_rated(2, 32);
  const auto coarse = oracle::oracle_allocation(s, {100, 0});
  const auto fine = oracle::oracle_allocation(s, {100, 2});
  EXPECT_LE(fine.objective, coarse.objective);
  EXPECT_DOUBLE_EQ(fine.resolution, 1e-4);
}

TEST(OracleAllocation, ThreeDevices) {
  const auto s = support::random_rated(3, 33);
  const auto o = oracle::oracle_allocation(s);
  const double sub = solve_partial(s).report.best_objective;
  EXPECT_GE(o.objective, sub * (1 - 1e-3));
  EXPECT_LE(o.objective, sub * (1 + 2e-2));
}

TEST(OracleAllocation, Guards) {
  EXPECT_THROW(oracle::oracle_allocation(support::random_rated(4, 1)), ValidationError);
  EXPECT_THROW(oracle::oracle_allocation(support::random_rated(2, 1), {}, Model::partial_special), ValidationError);
  EXPECT_THROW(oracle::oracle_allocation(support::random_rated(2, 1), {1, 0}), ValidationError);
}

TEST(OracleAllocation, DelaysDecreaseInBothResources) {
  CounterRng rng(34, 1);
  for (int i = 0; i < 500; ++i) {
    const auto d = device(rng.uniform(10, 100), rng.uniform(0.5, 2), std::pow(10.0, rng.uniform(-0.5, 2.5)));
    const double t = rng.uniform(0.001, 0.9), vc = mbps(rng.uniform(0.1, 35));
    const double base = optimal_partial_delay(d, 0.01, t, vc).delay;
    EXPECT_LT(optimal_partial_delay(d, 0.01, t * 1.01, vc).delay, base);
    EXPECT_LE(optimal_partial_delay(d, 0.01, t, vc * 1.01).delay, base);
    EXPECT_LT(local_delay(d, 0.01, t * 1.01).seconds(), local_delay(d, 0.01, t).seconds());
    EXPECT_LT(edge_delay(d, t * 1.01, vc).seconds(), edge_delay(d, t, vc).seconds());
    EXPECT_LT(edge_delay(d, t, vc * 1.01).seconds(), edge_delay(d, t, vc).seconds());
  }
}

TEST(OracleAllocation, ClosedFormsAreNeverBeaten) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto s = support::random_rated(2 + seed % 2, 700 + seed);
    const double local = solve_local(s).system_delay;
    const double edge = solve_edge(s).system_delay;
    const auto ol = oracle::oracle_allocation(s, {}, Model::local);
    const auto oe = oracle::oracle_allocation(s, {}, Model::edge);
    EXPECT_GE(ol.objective, local * (1 - 1e-12));
    EXPECT_GE(oe.objective, edge * (1 - 1e-12));
    EXPECT_LE(ol.objective, local * (1 + 1e-3));
    EXPECT_LE(oe.objective, edge * (1 + 1e-3));
  }
}

TEST(OracleAllocation, PartialDominatesSingleSiteModels) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto s = support::random_rated(2 + seed % 2, 800 + seed);
    const double partial = oracle::oracle_allocation(s).objective;
    EXPECT_LE(partial, std::min(solve_local(s).system_delay, solve_edge(s).system_delay) * (1 + 1e-3));
  }
}

TEST(Kkt, ClosedFormsHaveNoSpread) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto s = support::random_rated(2 + seed % 9, 900 + seed);
    const auto lk = oracle::kkt_residuals(s, solve_local(s).allocation, Model::local);
    const auto ek = oracle::kkt_residuals(s, solve_edge(s).allocation, Model::edge);
    EXPECT_LE(lk.spread_t, 1e-10);
    EXPECT_EQ(lk.spread_vc, 0.0);
    EXPECT_LE(ek.spread_t, 1e-10);
    EXPECT_LE(ek.spread_vc, 1e-10);
    EXPECT_LE(lk.worst(), 1e-10);
    EXPECT_LE(ek.worst(), 1e-10);
    EXPECT_GT(lk.multiplier_t, 0.0);
  }
}

TEST(Kkt, PerturbationIsDetected) {
  const auto s = support::random_rated(4, 35);
  for (Model m : {Model::local, Model::edge}) {
    auto a = (m == Model::local ? solve_local(s) : solve_edge(s)).allocation;
    a.t[0] += 0.01;
    for (double& t : a.t) t /= 1.01;
    EXPECT_GT(oracle::kkt_residuals(s, a, m).spread_t, 1e-3);
  }
}

TEST(Kkt, SubgradientSolutionIsNearlyStationary) {
  const auto s = support::random_rated(3, 36);
  SolverConfig c;
  c.tol = 1e-9;
  const auto r = solve_partial(s, c);
  const auto k = oracle::kkt_residuals(s, r.allocation, Model::partial);
  EXPECT_LE(k.gap_t, 1e-3);
  EXPECT_LE(k.gap_vc, 1e-3);
  EXPECT_LE(k.spread_t, 5e-2);
}

TEST(Kkt, ModelMismatchIsAnError) {
  const auto s = support::random_rated(3, 37);
  EXPECT_THROW(oracle::kkt_residuals(s, solve_local(s).allocation, Model::edge), ValidationError);
}
