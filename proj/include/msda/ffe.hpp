#pragma once

#include <string>
#include <vector>

#include "msda/belief_matrix.hpp"
#include "msda/matrix.hpp"
#include "msda/scan_weights.hpp"

namespace msda {

// Coefficients of the single-scan fractional free energy
//
//   sum_{i,j>=1} q log(q/w) + alpha sum_i q_i0 log(q_i0/w_i0)
//   + beta sum_j q_0j log(q_0j/w_0j) - gamma sum_{i,j>=1} (1-q) log(1-q)
//
// gamma < 1 (with alpha, beta > 0.5 and gamma <= min(alpha, beta)) gives the
// strictly convex regime with guaranteed convergence; gamma == 1 with
// alpha == beta == 1 reproduces plain belief propagation and is accepted as
// a compatibility mode without the guarantee.
struct FfeParams {
  double alpha = 1.0;
  double beta = 1.0;
  double gamma = 0.5;
  double tol = 1e-10;
  int max_iters = 10000;
  double damping = 0.0;
  bool keep_trace = true;  // per-iteration distance trace in the stats

  // Empty string when valid.
  std::string validate() const;
  bool bp_mode() const { return gamma >= 1.0; }
  double kappa() const { return -1.0 - gamma + alpha + beta; }
};

// Log-domain messages of the alternating half-iterations. Cells outside the
// positive support hold NaN and are never read.
struct MessageState {
  Matrix log_x;
  Matrix log_y;
  double kappa = 0.0;
};

struct FfeStats {
  int iters = 0;
  double final_distance = 0.0;
  bool converged = false;
  double recovery_gap = 0.0;  // row vs column belief recovery agreement at exit
  std::vector<double> distance_trace;
  std::string error;  // non-empty on structural/numerical failure
};

struct FfeResult {
  AssocBeliefs beliefs;
  MessageState messages;
  FfeStats stats;

  const BeliefMatrix& belief_matrix() const { return beliefs.linear; }
};

// Solver on log-weights; -inf entries mark zero weights. This is the entry
// point used by the multi-scan blocks, where weights exist only in the log
// domain.
FfeResult solve_single_scan_ffe_log(const Matrix& log_w, const FfeParams& p,
                                    const MessageState* warm_start = nullptr);

FfeResult solve_single_scan_ffe(const ScanWeights& w, const FfeParams& p,
                                const MessageState* warm_start = nullptr);

// Objective value; throws std::domain_error when q places mass outside the
// support of w. Convention: 0 log 0 = 0 and q/w = 1 when both vanish.
double ffe_objective(const BeliefMatrix& q, const ScanWeights& w, const FfeParams& p);

// Maximum violation of the stationarity conditions plus feasibility
// violations. Dual variables are reconstructed from the border cells where
// border weights are positive; remaining ones come from a gauge-fixed least
// squares over the interior stationarity equations. Boundary beliefs on
// support cells yield +inf.
double kkt_residual(const BeliefMatrix& q, const ScanWeights& w, const FfeParams& p);

Matrix log_weights(const ScanWeights& w);

}  // namespace msda
