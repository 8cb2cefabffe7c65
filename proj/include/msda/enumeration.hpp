#pragma once

#include <cstdint>
#include <vector>

#include "msda/belief_matrix.hpp"
#include "msda/scan_weights.hpp"

namespace msda {

struct EnumerationResult {
  BeliefMatrix marginals;
  double log_z = 0.0;
  uint64_t event_count = 0;
};

// Exact association marginals by enumerating every consistent event: each
// target is missed or takes a distinct measurement; unassigned measurements
// are false alarms. Guarded to n + m <= 12.
EnumerationResult brute_force_marginals(const ScanWeights& w);

// All consistent events as assignment vectors a[i] in {0..m} (a[i] = 0 means
// miss), restricted to the positive support incl. borders. Used by feasible
// point samplers in tests.
std::vector<std::vector<int>> enumerate_events(const ScanWeights& w);

}  // namespace msda
