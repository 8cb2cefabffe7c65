#pragma once

#include <cmath>
#include <vector>

#include "msda/enumeration.hpp"
#include "msda/rng.hpp"
#include "msda/scan_weights.hpp"

namespace msda::testing {

// Interior entries log-uniform in [lo, hi]; borders positive (log-uniform in
// [0.2, 2]) or zero.
inline ScanWeights random_instance(StreamRng& rng, int n, int m, bool positive_borders,
                                   double lo = 0.1, double hi = 10.0) {
  ScanWeights sw(n, m);
  auto log_uniform = [&](double a, double b) {
    return std::exp(rng.next_uniform(std::log(a), std::log(b)));
  };
  for (int i = 1; i <= n; ++i)
    for (int j = 1; j <= m; ++j) sw.w(i, j) = log_uniform(lo, hi);
  if (positive_borders) {
    for (int i = 1; i <= n; ++i) sw.w(i, 0) = log_uniform(0.2, 2.0);
    for (int j = 1; j <= m; ++j) sw.w(0, j) = log_uniform(0.2, 2.0);
  }
  return sw;
}

// Feasible belief matrix as a random convex combination of consistent
// events (Dirichlet-ish weights from exponentials).
inline BeliefMatrix random_feasible_beliefs(const ScanWeights& sw, StreamRng& rng) {
  auto events = enumerate_events(sw);
  std::vector<double> wts(events.size());
  double total = 0.0;
  for (double& v : wts) {
    v = -std::log(1.0 - rng.next_unit());
    total += v;
  }
  BeliefMatrix q(sw.n, sw.m);
  for (size_t e = 0; e < events.size(); ++e) {
    double p = wts[e] / total;
    std::vector<char> used(sw.m + 1, 0);
    for (int i = 1; i <= sw.n; ++i) {
      q.q(i, events[e][i - 1]) += p;
      if (events[e][i - 1] > 0) used[events[e][i - 1]] = 1;
    }
    for (int j = 1; j <= sw.m; ++j)
      if (!used[j]) q.q(0, j) += p;
  }
  return q;
}

}  // namespace msda::testing
