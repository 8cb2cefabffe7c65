#include "msda/kappa.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace msda {

double KappaSchedule::sum_rule_violation() const {
  const int s_count = scan_count();
  double x_sum = kf_x;
  double worst = 0.0;
  for (const PerScan& ps : scans) {
    x_sum += ps.k1x + ps.k2x;
    worst = std::max(worst, std::abs(kf_s + ps.k1s + ps.k2s - 1.0));
  }
  worst = std::max(worst, std::abs(x_sum + (s_count - 1)));
  return worst;
}

KappaSchedule kappa_schedule(const std::vector<double>& gammas, KappaSchedule::Mode mode) {
  KappaSchedule ks;
  ks.mode = mode;
  const int s_count = static_cast<int>(gammas.size());
  ks.scans.resize(s_count);
  if (mode == KappaSchedule::Mode::kHeuristic) {
    ks.kf_x = 1.0;
    ks.kf_s = 1.0;
    for (auto& ps : ks.scans) {
      ps.k1x = -1.0;
      ps.k1s = 0.0;
      ps.k2x = 0.0;
      ps.k2s = 0.0;
    }
    return ks;
  }
  double gsum = 0.0;
  for (double g : gammas) {
    if (g < 0.0) throw std::invalid_argument("kappa_schedule: negative gamma");
    gsum += g;
  }
  if (!(gsum < 1.0)) {
    throw std::invalid_argument("kappa_schedule: guaranteed mode needs sum(gamma) < 1");
  }
  const double eta = 1.0 - gsum;
  const double share = eta / (s_count + 1);
  ks.kf_x = share;
  ks.kf_s = share;
  for (int s = 0; s < s_count; ++s) {
    ks.scans[s].k1x = -share;
    ks.scans[s].k1s = gammas[s] + share;
    double rest = 1.0 - gammas[s] - 2.0 * share;
    ks.scans[s].k2x = -rest;
    ks.scans[s].k2s = rest;
  }
  return ks;
}

}  // namespace msda
