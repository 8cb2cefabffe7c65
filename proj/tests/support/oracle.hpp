#pragma once

#include <functional>
#include <vector>

#include "msda/belief_matrix.hpp"
#include "msda/ffe.hpp"
#include "msda/matrix.hpp"
#include "msda/scan_weights.hpp"

namespace msda::testing {

// Generic feasible-start barrier-Newton minimiser for
//     min f(x) + tau * barrier(x)   s.t.  A x = b
// used as the independent optimizer oracle. Steps stay in the null space of
// A, so a strictly feasible start remains feasible throughout.
class BarrierNewton {
 public:
  // Callbacks evaluate f + tau*barrier. grad/hess accumulate into
  // pre-zeroed containers. domain_ok must be true strictly inside.
  std::function<double(const std::vector<double>&, double tau)> value;
  std::function<void(const std::vector<double>&, double tau, std::vector<double>&)> gradient;
  std::function<void(const std::vector<double>&, double tau, Matrix&)> hessian;
  std::function<bool(const std::vector<double>&)> domain_ok;

  // Minimise along the barrier path tau: 1 -> tau_min (factor 0.1).
  // Returns the final iterate.
  std::vector<double> solve(const Matrix& a_eq, std::vector<double> x0, double tau_min = 1e-12,
                            int max_newton = 80) const;
};

// Independent minimiser of the single-scan fractional free energy over the
// consistency polytope. Requires a validated instance; the strictly
// feasible start is the exact marginal of the support-indicator weights.
BeliefMatrix oracle_single_scan(const ScanWeights& w, const FfeParams& p,
                                double tau_min = 1e-12);

}  // namespace msda::testing
