#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "msda/enumeration.hpp"
#include "msda/ffe.hpp"
#include "msda/rng.hpp"
#include "msda/scan_weights.hpp"
#include "support/generators.hpp"
#include "support/oracle.hpp"

using namespace msda;
using namespace msda::testing;

namespace {

ScanWeights ones_1x1() {
  ScanWeights sw(1, 1);
  sw.w(1, 1) = 1.0;
  sw.w(1, 0) = 1.0;
  sw.w(0, 1) = 1.0;
  return sw;
}

double max_abs_belief_diff(const BeliefMatrix& a, const BeliefMatrix& b) {
  double d = 0.0;
  for (int i = 0; i <= a.n; ++i)
    for (int j = 0; j <= a.m; ++j)
      if (!(i == 0 && j == 0)) d = std::max(d, std::abs(a.q(i, j) - b.q(i, j)));
  return d;
}

}  // namespace

TEST_CASE("validate_weights: spec cases") {
  SUBCASE("1x1 all positive is case 3") {
    auto d = validate_weights(ones_1x1());
    CHECK(d.ok);
    CHECK(d.feasible);
    CHECK(d.det_case == FeasibilityCase::kFull);
    CHECK(d.components.size() == 1);
  }
  SUBCASE("diagonal support without borders is case 1, two components") {
    ScanWeights sw(2, 2);
    sw.w(1, 1) = 1.0;
    sw.w(2, 2) = 1.0;
    auto d = validate_weights(sw);
    CHECK(d.ok);
    CHECK(d.feasible);
    CHECK(d.det_case == FeasibilityCase::kNoBorders);
    CHECK(d.components.size() == 2);
  }
  SUBCASE("two targets one measurement no borders is infeasible") {
    ScanWeights sw(2, 1);
    sw.w(1, 1) = 1.0;
    sw.w(2, 1) = 1.0;
    auto d = validate_weights(sw);
    CHECK(d.ok);
    CHECK(!d.feasible);
  }
  SUBCASE("all-zero row rejected") {
    ScanWeights sw(1, 1);
    sw.w(0, 1) = 1.0;
    auto d = validate_weights(sw);
    CHECK(!d.ok);
  }
  SUBCASE("negative entry rejected") {
    ScanWeights sw = ones_1x1();
    sw.w(1, 1) = -0.5;
    auto d = validate_weights(sw);
    CHECK(!d.ok);
  }
  SUBCASE("edge on no perfect matching rejected") {
    // i1-j1, i1-j2, i2-j2: (1,2) forces i2 unmatched
    ScanWeights sw(2, 2);
    sw.w(1, 1) = 1.0;
    sw.w(1, 2) = 1.0;
    sw.w(2, 2) = 1.0;
    auto d = validate_weights(sw);
    CHECK(d.ok);
    CHECK(!d.feasible);
  }
}

TEST_CASE("csv round trip") {
  StreamRng rng(7, {1});
  ScanWeights sw = random_instance(rng, 3, 4, true);
  std::stringstream ss;
  sw.to_csv(ss);
  ScanWeights back = ScanWeights::from_csv(ss);
  REQUIRE(back.n == 3);
  REQUIRE(back.m == 4);
  for (int i = 0; i <= 3; ++i)
    for (int j = 0; j <= 4; ++j) CHECK(back.w(i, j) == sw.w(i, j));
}

TEST_CASE("brute force: independent diagonal targets") {
  ScanWeights sw(2, 2);
  sw.w(1, 1) = 1.0;
  sw.w(2, 2) = 1.0;
  sw.w(1, 0) = 1.0;
  sw.w(2, 0) = 1.0;
  sw.w(0, 1) = 1.0;
  sw.w(0, 2) = 1.0;
  auto r = brute_force_marginals(sw);
  CHECK(r.log_z == doctest::Approx(std::log(4.0)).epsilon(1e-12));
  CHECK(r.marginals.q(1, 1) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(r.marginals.q(2, 2) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(r.event_count == 4);
}

TEST_CASE("brute force: 1x1 all ones") {
  auto r = brute_force_marginals(ones_1x1());
  CHECK(r.log_z == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(r.marginals.q(1, 1) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("brute force: size guard") {
  ScanWeights sw(7, 6);
  CHECK_THROWS(brute_force_marginals(sw));
}

TEST_CASE("solver: 1x1 ones, gamma=1 gives 0.5 beliefs") {
  FfeParams p;
  p.gamma = 1.0;
  auto res = solve_single_scan_ffe(ones_1x1(), p);
  REQUIRE(res.stats.converged);
  CHECK(res.belief_matrix().q(1, 1) == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(res.belief_matrix().q(1, 0) == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(res.belief_matrix().q(0, 1) == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(res.messages.kappa == doctest::Approx(0.0));
}

TEST_CASE("solver: 1x1 ones, gamma=0 analytic stationary point") {
  FfeParams p;
  p.gamma = 0.0;
  auto res = solve_single_scan_ffe(ones_1x1(), p);
  REQUIRE(res.stats.converged);
  const double e = std::exp(1.0);
  double expected = ((2.0 * e + 1.0) - std::sqrt(4.0 * e + 1.0)) / (2.0 * e);
  CHECK(res.belief_matrix().q(1, 1) == doctest::Approx(expected).epsilon(1e-8));
  // stationarity: log(q/(1-q)^2) = 1
  double q = res.belief_matrix().q(1, 1);
  CHECK(std::log(q / ((1 - q) * (1 - q))) == doctest::Approx(1.0).epsilon(1e-7));
}

TEST_CASE("objective: tree exactness and gamma=0 reduction") {
  ScanWeights sw = ones_1x1();
  BeliefMatrix q(1, 1);
  q.q(1, 1) = q.q(1, 0) = q.q(0, 1) = 0.5;
  FfeParams p;
  p.gamma = 1.0;
  CHECK(ffe_objective(q, sw, p) == doctest::Approx(-std::log(2.0)).epsilon(1e-12));

  // gamma=0, unit weights: plain sum q log q
  StreamRng rng(3, {2});
  ScanWeights big(3, 3);
  for (int i = 0; i <= 3; ++i)
    for (int j = 0; j <= 3; ++j)
      if (!(i == 0 && j == 0)) big.w(i, j) = 1.0;
  BeliefMatrix fq = random_feasible_beliefs(big, rng);
  FfeParams p0;
  p0.gamma = 0.0;
  double expect = 0.0;
  for (int i = 0; i <= 3; ++i)
    for (int j = 0; j <= 3; ++j) {
      if (i == 0 && j == 0) continue;
      double v = fq.q(i, j);
      if (v > 0) expect += v * std::log(v);
    }
  CHECK(ffe_objective(fq, big, p0) == doctest::Approx(expect).epsilon(1e-12));

  // mass outside support is a domain error
  BeliefMatrix bad(1, 1);
  bad.q(1, 1) = 1.0;
  ScanWeights hole(1, 1);
  hole.w(1, 0) = 1.0;
  hole.w(0, 1) = 1.0;
  CHECK_THROWS_AS((void)ffe_objective(bad, hole, p0), std::domain_error);
}

TEST_CASE("solver matches optimizer oracle on random 3x3") {
  StreamRng rng(11, {4});
  ScanWeights sw = random_instance(rng, 3, 3, false);
  for (int i = 1; i <= 3; ++i) sw.w(i, 0) = 1.0;
  for (int j = 1; j <= 3; ++j) sw.w(0, j) = 1.0;
  FfeParams p;
  p.gamma = 0.5;
  auto res = solve_single_scan_ffe(sw, p);
  REQUIRE(res.stats.converged);
  BeliefMatrix oracle = oracle_single_scan(sw, p);
  CHECK(max_abs_belief_diff(res.belief_matrix(), oracle) < 1e-6);
  CHECK(kkt_residual(oracle, sw, p) < 1e-8);

  // solver output beats 1000 random feasible points
  double f_star = ffe_objective(res.belief_matrix(), sw, p);
  for (int k = 0; k < 1000; ++k) {
    BeliefMatrix cand = random_feasible_beliefs(sw, rng);
    CHECK(ffe_objective(cand, sw, p) >= f_star - 1e-9);
  }
}

TEST_CASE("kkt residual: fixed point, perturbation, sentinel") {
  FfeParams p;
  p.gamma = 1.0;
  auto res = solve_single_scan_ffe(ones_1x1(), p);
  CHECK(kkt_residual(res.belief_matrix(), ones_1x1(), p) < 1e-10);

  BeliefMatrix pert = res.belief_matrix();
  pert.q(1, 1) += 0.01;
  pert.q(1, 0) -= 0.005;
  pert.q(0, 1) -= 0.005;
  CHECK(kkt_residual(pert, ones_1x1(), p) > 1e-3);

  BeliefMatrix boundary(1, 1);
  boundary.q(1, 1) = 1.0;
  CHECK(std::isinf(kkt_residual(boundary, ones_1x1(), p)));
}

TEST_CASE("row/column normalisation within 1e-9 on random instances") {
  StreamRng rng(23, {9});
  for (int k = 0; k < 25; ++k) {
    int n = 1 + rng.next_index(5);
    int m = 1 + rng.next_index(5);
    ScanWeights sw = random_instance(rng, n, m, true);
    FfeParams p;
    p.gamma = 0.25 * rng.next_index(4);
    auto res = solve_single_scan_ffe(sw, p);
    REQUIRE(res.stats.converged);
    CHECK(res.belief_matrix().max_consistency_violation() < 1e-9);
    CHECK(kkt_residual(res.belief_matrix(), sw, p) < 1e-8);
  }
}

TEST_CASE("bp reduction: gamma=1 messages equal 1/(T - wx)") {
  StreamRng rng(31, {12});
  for (int k = 0; k < 10; ++k) {
    int n = 2 + rng.next_index(4);
    int m = 2 + rng.next_index(4);
    ScanWeights sw = random_instance(rng, n, m, true);
    FfeParams p;
    p.gamma = 1.0;
    p.max_iters = 40;
    p.tol = 1e-30;  // run a fixed number of iterations
    auto res = solve_single_scan_ffe(sw, p);
    // recompute the plain BP update from the final x messages
    for (int i = 1; i <= n; ++i) {
      double t = sw.w(i, 0) * std::exp(res.messages.log_x(i, 0));
      for (int j = 1; j <= m; ++j) t += sw.w(i, j) * std::exp(res.messages.log_x(i, j));
      for (int j = 1; j <= m; ++j) {
        double excl = t - sw.w(i, j) * std::exp(res.messages.log_x(i, j));
        double expect = 1.0 / excl;
        double got = std::exp(res.messages.log_y(i, j));
        CHECK(std::abs(got - expect) <= 1e-12 * std::abs(expect));
      }
    }
  }
}

TEST_CASE("contraction: distances non-increasing and fixed point stable") {
  StreamRng rng(41, {13});
  for (int k = 0; k < 20; ++k) {
    int n = 1 + rng.next_index(6);
    int m = 1 + rng.next_index(6);
    ScanWeights sw = random_instance(rng, n, m, true);
    FfeParams p;
    p.gamma = rng.next_unit() * 0.9;
    auto res = solve_single_scan_ffe(sw, p);
    REQUIRE(res.stats.converged);
    const auto& tr = res.stats.distance_trace;
    for (size_t t = 2; t + 1 < tr.size(); ++t) {
      CHECK(tr[t + 1] <= tr[t] * (1.0 + 1e-9) + 1e-14);
    }
  }
}

TEST_CASE("row scaling leaves the optimum unchanged") {
  StreamRng rng(43, {17});
  ScanWeights sw = random_instance(rng, 3, 4, true);
  FfeParams p;
  p.gamma = 0.4;
  auto base = solve_single_scan_ffe(sw, p);
  ScanWeights scaled = sw;
  for (int j = 0; j <= 4; ++j) scaled.w(2, j) *= 7.5;
  auto res = solve_single_scan_ffe(scaled, p);
  CHECK(max_abs_belief_diff(base.belief_matrix(), res.belief_matrix()) < 1e-8);
}

TEST_CASE("permutation equivariance") {
  StreamRng rng(47, {19});
  ScanWeights sw = random_instance(rng, 3, 3, true);
  FfeParams p;
  p.gamma = 0.6;
  auto base = solve_single_scan_ffe(sw, p);
  // swap targets 1 and 2, measurements 2 and 3
  ScanWeights perm(3, 3);
  int pi[4] = {0, 2, 1, 3};
  int pj[4] = {0, 1, 3, 2};
  for (int i = 0; i <= 3; ++i)
    for (int j = 0; j <= 3; ++j)
      if (!(i == 0 && j == 0)) perm.w(pi[i], pj[j]) = sw.w(i, j);
  auto res = solve_single_scan_ffe(perm, p);
  for (int i = 0; i <= 3; ++i)
    for (int j = 0; j <= 3; ++j)
      if (!(i == 0 && j == 0))
        CHECK(res.belief_matrix().q(pi[i], pj[j]) ==
              doctest::Approx(base.belief_matrix().q(i, j)).epsilon(1e-8));
}

TEST_CASE("well-separated blocks match per-block enumeration for any gamma") {
  // Block-diagonal support without borders: each single-edge block is forced.
  ScanWeights sw(2, 2);
  sw.w(1, 1) = 3.0;
  sw.w(2, 2) = 0.25;
  for (double gamma : {0.0, 0.3, 0.7, 1.0}) {
    FfeParams p;
    p.gamma = gamma;
    auto res = solve_single_scan_ffe(sw, p);
    auto exact = brute_force_marginals(sw);
    CHECK(max_abs_belief_diff(res.belief_matrix(), exact.marginals) < 1e-6);
  }
}

TEST_CASE("zero-support cells keep zero belief") {
  StreamRng rng(53, {21});
  ScanWeights sw = random_instance(rng, 3, 3, true);
  sw.w(1, 2) = 0.0;
  sw.w(3, 1) = 0.0;
  FfeParams p;
  p.gamma = 0.5;
  auto res = solve_single_scan_ffe(sw, p);
  REQUIRE(res.stats.converged);
  CHECK(res.belief_matrix().q(1, 2) == 0.0);
  CHECK(res.belief_matrix().q(3, 1) == 0.0);
  auto exact = brute_force_marginals(sw);
  (void)exact;
  CHECK(res.belief_matrix().max_consistency_violation() < 1e-9);
}

TEST_CASE("no measurements: miss beliefs are certain") {
  ScanWeights sw(2, 0);
  sw.w(1, 0) = 0.4;
  sw.w(2, 0) = 1.1;
  FfeParams p;
  auto res = solve_single_scan_ffe(sw, p);
  CHECK(res.belief_matrix().q(1, 0) == 1.0);
  CHECK(res.belief_matrix().q(2, 0) == 1.0);
}

TEST_CASE("message distance metric reports geometric tail") {
  StreamRng rng(59, {23});
  ScanWeights sw = random_instance(rng, 4, 4, true);
  FfeParams p;
  p.gamma = 0.5;
  auto res = solve_single_scan_ffe(sw, p);
  REQUIRE(res.stats.converged);
  const auto& tr = res.stats.distance_trace;
  REQUIRE(tr.size() >= 4);
  size_t last = tr.size() - 1;
  size_t lo = last > 20 ? last - 20 : 2;
  for (size_t t = lo; t < last; ++t) {
    if (tr[t] > 0) CHECK(tr[t + 1] / tr[t] < 1.0);
  }
}
