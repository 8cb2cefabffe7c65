#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "msda/belief_matrix.hpp"
#include "msda/ffe.hpp"
#include "msda/kappa.hpp"
#include "msda/matrix.hpp"

namespace msda {

// One scan of the multi-scan model: per-target conditional log-factors over
// (support point, association event). Column 0 is the miss event and must be
// finite everywhere; measurement columns may hold -inf for zero-likelihood
// cells.
struct ScanFactors {
  int m = 0;
  std::vector<Matrix> log_factor;  // per target: K_i x (m+1)
  double gamma = 0.0;
  double beta = 1.0;
};

// Discrete-state multi-scan association model. Target state supports are
// frozen; inference only reweights them.
struct MultiScanModel {
  std::vector<std::vector<double>> log_prior;  // per target
  std::vector<ScanFactors> scans;

  int target_count() const { return static_cast<int>(log_prior.size()); }
  int scan_count() const { return static_cast<int>(scans.size()); }
  int support_size(int i) const { return static_cast<int>(log_prior[i].size()); }
  std::vector<double> gammas() const;
  std::vector<double> betas() const;

  // Empty when consistent (shapes agree, miss columns finite).
  std::string validate() const;

  void to_json(std::ostream& out) const;
  static MultiScanModel from_json(std::istream& in);
};

// Dual variables of the coordinate ascent; one block pair per scan. Blocks
// never hold duals for other scans' conditionals, so per-scan storage is the
// full zero structure.
struct DualState {
  struct Block {
    std::vector<std::vector<double>> lambda_x;  // per target: K_i
    std::vector<Matrix> lambda_s;               // per target: K_i x (m_s+1)
  };
  std::vector<Block> block1;  // per scan
  std::vector<Block> block2;
};

struct PrimalBeliefs {
  std::vector<std::vector<double>> q_x;      // per target (normalised)
  std::vector<std::vector<double>> log_q_x;  // per target
  std::vector<std::vector<Matrix>> q_xa;     // [scan][target]: K_i x (m_s+1)
  std::vector<AssocBeliefs> assoc;           // per scan

  // Max violation over the coupling constraints at the stated tolerance:
  // normalisation, state-marginal agreement, scan-belief consistency and
  // measurement sum-to-one.
  double max_constraint_violation(const MultiScanModel& model) const;
};

struct PdcaOptions {
  double tol = 1e-8;
  int max_sweeps = 500;
  FfeParams inner;                  // alpha/beta/gamma overridden per block
  bool damp_on_oscillation = false; // halve dual steps once sweeps oscillate
  bool backward_first = false;      // sweep S..1 then 1..S instead
  int forced_sweeps = 0;            // >0: run exactly this many sweeps
  bool heuristic_fallback = true;   // revert to the guaranteed schedule when
                                    // a heuristic run hits the sweep cap

  PdcaOptions() {
    inner.tol = 1e-10;
    inner.max_iters = 10000;
    inner.keep_trace = false;
  }
};

struct PdcaStats {
  int sweeps = 0;
  double final_change = 0.0;
  bool converged = false;
  bool reverted_to_guaranteed = false;
  std::string error;
};

// Rejects model/schedule combinations outside the convergence hypotheses of
// the single-scan solver (guaranteed mode) or outside the compatibility
// range (heuristic mode). Empty when fine.
std::string validate_configuration(const MultiScanModel& model, const KappaSchedule& schedule);

// Coordinate-ascent state machine. Owns the model so the sequential variant
// can modify factors and append scans between runs.
class PdcaSolver {
 public:
  PdcaSolver(MultiScanModel model, KappaSchedule schedule);

  const MultiScanModel& model() const { return model_; }
  const KappaSchedule& schedule() const { return schedule_; }
  DualState& duals() { return duals_; }

  PdcaStats run(const PdcaOptions& opts);

  PrimalBeliefs beliefs() const;

  // Solve a single block in isolation (testing / stationarity checks).
  void solve_block1(int s);
  void solve_block2(int s);

  // Sequential machinery: modify scan s per the factor-correction rule so
  // the current solution stays optimal under (gamma+dg, beta+db), then
  // append a new scan with zero-initialised duals.
  void apply_sequential_modify(int s, double dgamma, double dbeta);
  void append_scan(ScanFactors scan);
  void set_schedule(KappaSchedule schedule);

 private:
  double solve_block1_impl(int s);  // returns assoc-belief change
  void refresh_lambda_total(int i);

  MultiScanModel model_;
  KappaSchedule schedule_;
  DualState duals_;
  std::vector<std::vector<double>> lambda_x_total_;  // per target

  struct ScanCache {
    AssocBeliefs assoc;
    std::vector<Matrix> q_xa;      // linear
    std::vector<Matrix> log_q_xa;  // log
    MessageState inner_msg;
    bool has_assoc = false;
    bool has_inner = false;
  };
  std::vector<ScanCache> cache_;
  std::vector<std::vector<double>> latest_log_q_x_;  // per target, last block
  bool have_state_beliefs_ = false;
  PdcaOptions active_opts_;
  bool dual_damping_ = false;
};

// Free-function forms of the operations.
PdcaStats run_pdca(PdcaSolver& solver, const PdcaOptions& opts);

double convex_free_energy(const PrimalBeliefs& beliefs, const MultiScanModel& model,
                          const std::vector<double>& gammas, const std::vector<double>& betas);

// Factor correction preserving the optimum when (gamma, beta) of scan s
// change by (dgamma, dbeta). beliefs must be the converged solution at the
// current coefficients.
MultiScanModel sequential_modify(const MultiScanModel& model, const PrimalBeliefs& beliefs,
                                 int s, double dgamma, double dbeta);

// One step of the sequential pipeline: demote every existing scan to
// gamma = 0 (factor-corrected), set betas so the scaled false-alarm
// coefficient is 1 under the new schedule, append the new scan with
// gamma_new, and re-run warm-started sweeps.
struct CvsOptions {
  double gamma_new = 0.55;
  KappaSchedule::Mode mode = KappaSchedule::Mode::kGuaranteed;
  int sweep_limit = 0;  // 0 = run to convergence; 1 = single backward-forward sweep
  PdcaOptions pdca;
};

struct CvsState {
  std::optional<PdcaSolver> solver;
  PdcaStats last_stats;
};

void cvs_step(CvsState& state, ScanFactors new_scan, const CvsOptions& opts);

}  // namespace msda
