#pragma once

#include <string>
#include <vector>

namespace msda {

// Entropy-coefficient decomposition used by the primal-dual coordinate
// ascent. The sum rules
//   kf_x + sum_s (k1x + k2x) = -(S - 1)
//   kf_s + k1s + k2s = 1   for every s
// keep the decomposed objective equal to the convex free energy. Guaranteed
// mode additionally makes every block convex; heuristic mode trades the
// guarantee for fewer non-trivial blocks.
struct KappaSchedule {
  enum class Mode { kGuaranteed, kHeuristic };

  struct PerScan {
    double k1x = 0.0, k1s = 0.0, k2x = 0.0, k2s = 0.0;
  };

  Mode mode = Mode::kGuaranteed;
  double kf_x = 0.0;
  double kf_s = 0.0;
  std::vector<PerScan> scans;

  int scan_count() const { return static_cast<int>(scans.size()); }
  double block1_denom(int s) const { return kf_s + scans[s].k1s; }
  double block2_denom(int s) const { return kf_s + scans[s].k2s; }
  double block2_state_denom(int s) const {
    return kf_x + kf_s + scans[s].k2x + scans[s].k2s;
  }
  bool block2_trivial(int s) const {
    return scans[s].k2x == 0.0 && scans[s].k2s == 0.0;
  }

  // Maximum violation of the sum rules given the gamma list.
  double sum_rule_violation() const;
};

// gammas: fractional coefficient per scan. Guaranteed mode requires
// sum(gammas) < 1 and every gamma >= 0; throws std::invalid_argument
// otherwise.
KappaSchedule kappa_schedule(const std::vector<double>& gammas, KappaSchedule::Mode mode);

}  // namespace msda
