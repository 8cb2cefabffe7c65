#include "msda/multiscan.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <stdexcept>

#include <json.hpp>

#include "msda/logsumexp.hpp"

namespace msda {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

void mean_centre(std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  double mean = s / static_cast<double>(v.size());
  for (double& x : v) x -= mean;
}

// Mean-centre over finite entries; -inf cells (zero support) carry zero.
void mean_centre_finite(Matrix& m) {
  double s = 0.0;
  int count = 0;
  for (double v : m.flat()) {
    if (std::isfinite(v)) {
      s += v;
      ++count;
    }
  }
  if (count == 0) return;
  double mean = s / count;
  for (double& v : m.flat()) {
    if (std::isfinite(v)) v -= mean;
    else v = 0.0;
  }
}
}  // namespace

std::vector<double> MultiScanModel::gammas() const {
  std::vector<double> g;
  g.reserve(scans.size());
  for (const auto& s : scans) g.push_back(s.gamma);
  return g;
}

std::vector<double> MultiScanModel::betas() const {
  std::vector<double> b;
  b.reserve(scans.size());
  for (const auto& s : scans) b.push_back(s.beta);
  return b;
}

std::string MultiScanModel::validate() const {
  const int n = target_count();
  for (int i = 0; i < n; ++i) {
    if (log_prior[i].empty()) return "target with empty support";
    for (double v : log_prior[i]) {
      if (!std::isfinite(v)) return "non-finite log prior entry";
    }
  }
  for (size_t s = 0; s < scans.size(); ++s) {
    const ScanFactors& sc = scans[s];
    if (static_cast<int>(sc.log_factor.size()) != n) return "scan factor count != target count";
    for (int i = 0; i < n; ++i) {
      const Matrix& f = sc.log_factor[i];
      if (f.rows() != support_size(i) || f.cols() != sc.m + 1) {
        return "scan factor shape mismatch";
      }
      for (int x = 0; x < f.rows(); ++x) {
        if (!std::isfinite(f(x, 0))) return "miss column must be finite";
        for (int a = 1; a <= sc.m; ++a) {
          double v = f(x, a);
          if (std::isnan(v) || v == kInf) return "factor entries must be finite or -inf";
        }
      }
    }
    if (!(sc.beta > 0.0)) return "beta must be positive";
    if (sc.gamma < 0.0) return "gamma must be non-negative";
  }
  return {};
}

double PrimalBeliefs::max_constraint_violation(const MultiScanModel& model) const {
  double worst = 0.0;
  const int n = model.target_count();
  for (int i = 0; i < n; ++i) {
    double s = 0.0;
    for (double v : q_x[i]) {
      s += v;
      worst = std::max(worst, std::max(0.0, -v));
    }
    worst = std::max(worst, std::abs(s - 1.0));
  }
  for (int s = 0; s < model.scan_count(); ++s) {
    const int m = model.scans[s].m;
    for (int i = 0; i < n; ++i) {
      const Matrix& q = q_xa[s][i];
      double total = 0.0;
      for (int x = 0; x < q.rows(); ++x) {
        double row = 0.0;
        for (int a = 0; a <= m; ++a) {
          row += q(x, a);
          worst = std::max(worst, std::max(0.0, -q(x, a)));
        }
        total += row;
        worst = std::max(worst, std::abs(row - q_x[i][x]));
      }
      worst = std::max(worst, std::abs(total - 1.0));
      for (int j = 1; j <= m; ++j) {
        double col = 0.0;
        for (int x = 0; x < q.rows(); ++x) col += q(x, j);
        worst = std::max(worst, std::abs(col - assoc[s].linear.q(i + 1, j)));
      }
    }
    for (int j = 1; j <= m; ++j) {
      worst = std::max(worst, std::abs(assoc[s].linear.col_sum(j) - 1.0));
    }
  }
  return worst;
}

std::string validate_configuration(const MultiScanModel& model, const KappaSchedule& schedule) {
  std::string err = model.validate();
  if (!err.empty()) return err;
  if (schedule.scan_count() != model.scan_count()) return "schedule scan count mismatch";
  const bool guaranteed = schedule.mode == KappaSchedule::Mode::kGuaranteed;
  double gsum = 0.0;
  for (int s = 0; s < model.scan_count(); ++s) {
    const ScanFactors& sc = model.scans[s];
    gsum += sc.gamma;
    double c1 = schedule.block1_denom(s);
    if (!(c1 > 0.0)) return "block-1 entropy coefficient must be positive";
    double beta_eff = sc.beta / c1;
    double gamma_eff = sc.gamma / c1;
    if (!(beta_eff > 0.5)) {
      return "scaled false-alarm coefficient must exceed 0.5 (scan " + std::to_string(s) + ")";
    }
    if (guaranteed) {
      if (!(gamma_eff >= 0.0 && gamma_eff < 1.0)) {
        return "scaled fractional coefficient outside [0,1) (scan " + std::to_string(s) + ")";
      }
      if (gamma_eff > beta_eff + 1e-12) {
        return "scaled fractional coefficient exceeds scaled false-alarm coefficient";
      }
      if (!schedule.block2_trivial(s)) {
        if (!(schedule.block2_denom(s) > 0.0)) return "block-2 entropy coefficient must be positive";
        if (!(schedule.block2_state_denom(s) > 0.0)) return "block-2 state coefficient must be positive";
      }
    } else {
      if (gamma_eff > 1.0) return "heuristic mode supports gamma at most 1";
      if (gamma_eff < 1.0 && gamma_eff > beta_eff + 1e-12) {
        return "scaled fractional coefficient exceeds scaled false-alarm coefficient";
      }
    }
  }
  if (guaranteed && !(gsum < 1.0)) return "guaranteed mode needs sum(gamma) < 1";
  return {};
}

PdcaSolver::PdcaSolver(MultiScanModel model, KappaSchedule schedule)
    : model_(std::move(model)), schedule_(std::move(schedule)) {
  const int n = model_.target_count();
  const int s_count = model_.scan_count();
  duals_.block1.resize(s_count);
  duals_.block2.resize(s_count);
  cache_.resize(s_count);
  lambda_x_total_.resize(n);
  latest_log_q_x_.resize(n);
  for (int i = 0; i < n; ++i) {
    lambda_x_total_[i].assign(model_.support_size(i), 0.0);
    latest_log_q_x_[i].assign(model_.support_size(i),
                              -std::log(static_cast<double>(model_.support_size(i))));
  }
  for (int s = 0; s < s_count; ++s) {
    for (auto* blk : {&duals_.block1[s], &duals_.block2[s]}) {
      blk->lambda_x.resize(n);
      blk->lambda_s.resize(n);
      for (int i = 0; i < n; ++i) {
        blk->lambda_x[i].assign(model_.support_size(i), 0.0);
        blk->lambda_s[i] = Matrix(model_.support_size(i), model_.scans[s].m + 1, 0.0);
      }
    }
  }
}

void PdcaSolver::append_scan(ScanFactors scan) {
  const int n = model_.target_count();
  model_.scans.push_back(std::move(scan));
  const ScanFactors& sc = model_.scans.back();
  DualState::Block b;
  b.lambda_x.resize(n);
  b.lambda_s.resize(n);
  for (int i = 0; i < n; ++i) {
    b.lambda_x[i].assign(model_.support_size(i), 0.0);
    b.lambda_s[i] = Matrix(model_.support_size(i), sc.m + 1, 0.0);
  }
  duals_.block1.push_back(b);
  duals_.block2.push_back(std::move(b));
  cache_.emplace_back();
}

void PdcaSolver::set_schedule(KappaSchedule schedule) { schedule_ = std::move(schedule); }

double PdcaSolver::solve_block1_impl(int s) {
  const int n = model_.target_count();
  const ScanFactors& scan = model_.scans[s];
  const int m = scan.m;
  const double c1 = schedule_.block1_denom(s);
  ScanCache& cache = cache_[s];

  Matrix inner_log_w(n + 1, m + 1, kNegInf);
  for (int j = 1; j <= m; ++j) inner_log_w(0, j) = 0.0;

  std::vector<std::vector<double>> phi_x(n);
  std::vector<std::vector<double>> log_wt(n);  // unshifted eliminated log weights
  std::vector<double> terms;
  for (int i = 0; i < n; ++i) {
    const int k = model_.support_size(i);
    phi_x[i].resize(k);
    const std::vector<double>& l1x = duals_.block1[s].lambda_x[i];
    for (int x = 0; x < k; ++x) {
      phi_x[i][x] = model_.log_prior[i][x] - (lambda_x_total_[i][x] - l1x[x]);
    }
    const Matrix& lf = scan.log_factor[i];
    const Matrix& mu_s = duals_.block2[s].lambda_s[i];
    log_wt[i].assign(m + 1, kNegInf);
    terms.resize(k);
    double shift = kNegInf;
    for (int a = 0; a <= m; ++a) {
      for (int x = 0; x < k; ++x) {
        double f = lf(x, a);
        terms[x] = std::isfinite(f) ? (phi_x[i][x] + f - mu_s(x, a)) / c1 : kNegInf;
      }
      log_wt[i][a] = log_sum_exp(terms.data(), k);
      shift = std::max(shift, log_wt[i][a]);
    }
    for (int a = 0; a <= m; ++a) inner_log_w(i + 1, a) = log_wt[i][a] - shift;
  }

  FfeParams inner = active_opts_.inner;
  inner.alpha = 1.0;
  inner.beta = scan.beta / c1;
  inner.gamma = scan.gamma / c1;
  FfeResult r =
      solve_single_scan_ffe_log(inner_log_w, inner, cache.has_inner ? &cache.inner_msg : nullptr);
  if (!r.stats.error.empty() && inner_error_.empty()) inner_error_ = r.stats.error;
  cache.inner_msg = std::move(r.messages);
  cache.has_inner = true;

  double change = 0.0;
  if (cache.has_assoc) {
    for (int i = 0; i <= n; ++i)
      for (int j = 0; j <= m; ++j) {
        if (i == 0 && j == 0) continue;
        change = std::max(change,
                          std::abs(r.beliefs.linear.q(i, j) - cache.assoc.linear.q(i, j)));
      }
  } else {
    change = kInf;
  }

  if (cache.q_xa.empty()) {
    cache.q_xa.resize(n);
    cache.log_q_xa.resize(n);
  }
  const double kf_x = schedule_.kf_x;
  const double kf_s = schedule_.kf_s;
  for (int i = 0; i < n; ++i) {
    const int k = model_.support_size(i);
    const Matrix& lf = scan.log_factor[i];
    const Matrix& mu_s = duals_.block2[s].lambda_s[i];
    Matrix log_qxa(k, m + 1, kNegInf);
    for (int a = 0; a <= m; ++a) {
      double lq_a = r.beliefs.log_q(i + 1, a);
      if (lq_a == kNegInf) continue;
      for (int x = 0; x < k; ++x) {
        double f = lf(x, a);
        if (!std::isfinite(f)) continue;
        log_qxa(x, a) = lq_a + (phi_x[i][x] + f - mu_s(x, a)) / c1 - log_wt[i][a];
      }
    }
    std::vector<double> log_qx(k);
    for (int x = 0; x < k; ++x) log_qx[x] = log_sum_exp(log_qxa.row_ptr(x), m + 1);
    double lz = log_sum_exp(log_qx);
    for (int x = 0; x < k; ++x) log_qx[x] -= lz;

    std::vector<double> l1x_new(k);
    for (int x = 0; x < k; ++x) l1x_new[x] = phi_x[i][x] - kf_x * log_qx[x];
    mean_centre(l1x_new);
    Matrix l1s_new(k, m + 1, 0.0);
    for (int x = 0; x < k; ++x) {
      for (int a = 0; a <= m; ++a) {
        double f = lf(x, a);
        l1s_new(x, a) =
            std::isfinite(f) ? (f - mu_s(x, a)) - kf_s * log_qxa(x, a) : kNegInf;
      }
    }
    mean_centre_finite(l1s_new);

    std::vector<double>& l1x_old = duals_.block1[s].lambda_x[i];
    Matrix& l1s_old = duals_.block1[s].lambda_s[i];
    if (dual_damping_) {
      for (int x = 0; x < k; ++x) l1x_new[x] = 0.5 * (l1x_new[x] + l1x_old[x]);
      for (size_t t = 0; t < l1s_new.flat().size(); ++t) {
        l1s_new.flat()[t] = 0.5 * (l1s_new.flat()[t] + l1s_old.flat()[t]);
      }
    }
    for (int x = 0; x < k; ++x) {
      lambda_x_total_[i][x] += l1x_new[x] - l1x_old[x];
      l1x_old[x] = l1x_new[x];
    }
    l1s_old = std::move(l1s_new);

    Matrix qxa(k, m + 1, 0.0);
    for (int x = 0; x < k; ++x)
      for (int a = 0; a <= m; ++a) {
        double v = log_qxa(x, a);
        qxa(x, a) = v == kNegInf ? 0.0 : std::exp(v);
      }
    cache.q_xa[i] = std::move(qxa);
    cache.log_q_xa[i] = std::move(log_qxa);
    latest_log_q_x_[i] = std::move(log_qx);
  }
  cache.assoc = std::move(r.beliefs);
  cache.has_assoc = true;
  have_state_beliefs_ = true;
  return change;
}

void PdcaSolver::solve_block1(int s) {
  active_opts_ = PdcaOptions{};
  (void)solve_block1_impl(s);
}

void PdcaSolver::solve_block2(int s) {
  if (schedule_.block2_trivial(s)) return;
  const int n = model_.target_count();
  const ScanFactors& scan = model_.scans[s];
  const int m = scan.m;
  const double c2 = schedule_.block2_denom(s);
  const double kt = schedule_.block2_state_denom(s);
  const double kf_x = schedule_.kf_x;
  const double kf_s = schedule_.kf_s;

  std::vector<double> terms;
  for (int i = 0; i < n; ++i) {
    const int k = model_.support_size(i);
    const std::vector<double>& l2x = duals_.block2[s].lambda_x[i];
    const Matrix& lf = scan.log_factor[i];
    const Matrix& mu_s = duals_.block1[s].lambda_s[i];

    std::vector<double> phi_x(k), phi_t(k), log_qx(k);
    Matrix phi_s(k, m + 1, kNegInf);
    terms.assign(m + 1, kNegInf);
    for (int x = 0; x < k; ++x) {
      phi_x[x] = model_.log_prior[i][x] - (lambda_x_total_[i][x] - l2x[x]);
      for (int a = 0; a <= m; ++a) {
        double f = lf(x, a);
        if (std::isfinite(f)) phi_s(x, a) = f - mu_s(x, a);
        terms[a] = std::isfinite(f) ? phi_s(x, a) / c2 : kNegInf;
      }
      phi_t[x] = c2 * log_sum_exp(terms.data(), m + 1);
      log_qx[x] = (phi_x[x] + phi_t[x]) / kt;
    }
    double lz = log_sum_exp(log_qx);
    for (int x = 0; x < k; ++x) log_qx[x] -= lz;

    Matrix log_qxa(k, m + 1, kNegInf);
    for (int x = 0; x < k; ++x)
      for (int a = 0; a <= m; ++a) {
        if (std::isfinite(phi_s(x, a))) {
          log_qxa(x, a) = log_qx[x] + (phi_s(x, a) - phi_t[x]) / c2;
        }
      }

    std::vector<double> l2x_new(k);
    for (int x = 0; x < k; ++x) l2x_new[x] = phi_x[x] - kf_x * log_qx[x];
    mean_centre(l2x_new);
    Matrix l2s_new(k, m + 1, 0.0);
    for (int x = 0; x < k; ++x)
      for (int a = 0; a <= m; ++a) {
        l2s_new(x, a) = std::isfinite(phi_s(x, a)) ? phi_s(x, a) - kf_s * log_qxa(x, a) : kNegInf;
      }
    mean_centre_finite(l2s_new);

    std::vector<double>& l2x_old = duals_.block2[s].lambda_x[i];
    Matrix& l2s_old = duals_.block2[s].lambda_s[i];
    if (dual_damping_) {
      for (int x = 0; x < k; ++x) l2x_new[x] = 0.5 * (l2x_new[x] + l2x_old[x]);
      for (size_t t = 0; t < l2s_new.flat().size(); ++t) {
        l2s_new.flat()[t] = 0.5 * (l2s_new.flat()[t] + l2s_old.flat()[t]);
      }
    }
    for (int x = 0; x < k; ++x) {
      lambda_x_total_[i][x] += l2x_new[x] - l2x_old[x];
      l2x_old[x] = l2x_new[x];
    }
    l2s_old = std::move(l2s_new);
    latest_log_q_x_[i] = std::move(log_qx);
  }
  have_state_beliefs_ = true;
}

PdcaStats PdcaSolver::run(const PdcaOptions& opts) {
  PdcaStats stats;
  active_opts_ = opts;
  dual_damping_ = false;
  inner_error_.clear();
  std::string cfg = validate_configuration(model_, schedule_);
  if (!cfg.empty()) {
    stats.error = cfg;
    return stats;
  }
  const int s_count = model_.scan_count();
  if (s_count == 0) {
    stats.converged = true;
    return stats;
  }

  const int sweep_budget = opts.forced_sweeps > 0 ? opts.forced_sweeps : opts.max_sweeps;
  double prev_change = kInf;
  int rise_streak = 0;
  for (int sweep = 0; sweep < sweep_budget; ++sweep) {
    double change = 0.0;
    auto visit = [&](int s) {
      change = std::max(change, solve_block1_impl(s));
      solve_block2(s);
    };
    if (opts.backward_first) {
      for (int s = s_count - 1; s >= 0; --s) visit(s);
      for (int s = 0; s < s_count; ++s) visit(s);
    } else {
      for (int s = 0; s < s_count; ++s) visit(s);
      for (int s = s_count - 1; s >= 0; --s) visit(s);
    }
    stats.sweeps = sweep + 1;
    stats.final_change = change;
    if (opts.forced_sweeps == 0 && change < opts.tol) {
      stats.converged = true;
      break;
    }
    if (change > prev_change) {
      if (++rise_streak >= 2 && opts.damp_on_oscillation) dual_damping_ = true;
    } else {
      rise_streak = 0;
    }
    prev_change = change;
  }
  if (opts.forced_sweeps > 0) {
    stats.converged = stats.final_change < opts.tol;
  }
  if (!inner_error_.empty()) stats.error = "inner solver: " + inner_error_;

  if (!stats.converged && opts.forced_sweeps == 0 && opts.heuristic_fallback &&
      schedule_.mode == KappaSchedule::Mode::kHeuristic) {
    std::vector<double> gammas = model_.gammas();
    double gsum = 0.0;
    for (double g : gammas) gsum += g;
    if (gsum < 1.0) {
      schedule_ = kappa_schedule(gammas, KappaSchedule::Mode::kGuaranteed);
      for (int s = 0; s < s_count; ++s) {
        for (auto* blk : {&duals_.block1[s], &duals_.block2[s]}) {
          for (auto& v : blk->lambda_x) std::fill(v.begin(), v.end(), 0.0);
          for (auto& mt : blk->lambda_s) mt.fill(0.0);
        }
        cache_[s].has_assoc = false;
      }
      for (auto& v : lambda_x_total_) std::fill(v.begin(), v.end(), 0.0);
      PdcaOptions retry = opts;
      retry.heuristic_fallback = false;
      stats = run(retry);
      stats.reverted_to_guaranteed = true;
    }
  }
  return stats;
}

PrimalBeliefs PdcaSolver::beliefs() const {
  PrimalBeliefs out;
  const int n = model_.target_count();
  out.q_x.resize(n);
  out.log_q_x.resize(n);
  for (int i = 0; i < n; ++i) {
    out.log_q_x[i] = latest_log_q_x_[i];
    out.q_x[i].resize(latest_log_q_x_[i].size());
    for (size_t x = 0; x < out.q_x[i].size(); ++x) {
      out.q_x[i][x] = std::exp(latest_log_q_x_[i][x]);
    }
  }
  out.q_xa.resize(model_.scan_count());
  out.assoc.resize(model_.scan_count());
  for (int s = 0; s < model_.scan_count(); ++s) {
    if (!cache_[s].has_assoc) throw std::logic_error("beliefs(): scan never solved");
    out.q_xa[s] = cache_[s].q_xa;
    out.assoc[s] = cache_[s].assoc;
  }
  return out;
}

void PdcaSolver::apply_sequential_modify(int s, double dgamma, double dbeta) {
  if (dgamma == 0.0 && dbeta == 0.0) return;
  if (!cache_[s].has_assoc) throw std::logic_error("sequential modify before solving scan");
  const AssocBeliefs& ab = cache_[s].assoc;
  ScanFactors& scan = model_.scans[s];
  for (int i = 0; i < model_.target_count(); ++i) {
    Matrix& lf = scan.log_factor[i];
    for (int j = 1; j <= scan.m; ++j) {
      double l1mq = ab.log_1mq(i + 1, j);
      double lq0 = ab.log_q(0, j);
      if (dgamma != 0.0 && l1mq == kNegInf) {
        throw std::domain_error("sequential modify: association belief at 1");
      }
      if (dbeta != 0.0 && lq0 == kNegInf) {
        throw std::domain_error("sequential modify: false-alarm belief at 0");
      }
      for (int x = 0; x < lf.rows(); ++x) {
        if (!std::isfinite(lf(x, j))) continue;
        lf(x, j) += dgamma * (1.0 + l1mq) - dbeta * (1.0 + lq0);
      }
    }
  }
  scan.gamma += dgamma;
  scan.beta += dbeta;
}

PdcaStats run_pdca(PdcaSolver& solver, const PdcaOptions& opts) { return solver.run(opts); }

double convex_free_energy(const PrimalBeliefs& beliefs, const MultiScanModel& model,
                          const std::vector<double>& gammas, const std::vector<double>& betas) {
  if (beliefs.max_constraint_violation(model) > 1e-6) {
    throw std::domain_error("convex_free_energy: infeasible beliefs");
  }
  const int n = model.target_count();
  double f = 0.0;
  for (int i = 0; i < n; ++i) {
    for (size_t x = 0; x < beliefs.q_x[i].size(); ++x) {
      double q = beliefs.q_x[i][x];
      if (q <= 0.0) continue;
      f += q * std::log(q);                      // -H(x)
      f -= q * model.log_prior[i][x];            // -E[log psi]
    }
  }
  for (int s = 0; s < model.scan_count(); ++s) {
    const ScanFactors& scan = model.scans[s];
    for (int i = 0; i < n; ++i) {
      const Matrix& q = beliefs.q_xa[s][i];
      const Matrix& lf = scan.log_factor[i];
      for (int x = 0; x < q.rows(); ++x) {
        double qx = beliefs.q_x[i][x];
        for (int a = 0; a <= scan.m; ++a) {
          double v = q(x, a);
          if (v <= 0.0) continue;
          if (!std::isfinite(lf(x, a))) {
            throw std::domain_error("convex_free_energy: belief mass outside factor support");
          }
          f += v * (std::log(v) - std::log(qx));  // -H(a|x)
          f -= v * lf(x, a);
        }
      }
    }
    for (int j = 1; j <= scan.m; ++j) {
      double q0 = beliefs.assoc[s].linear.q(0, j);
      if (q0 > 0.0) f += betas[s] * q0 * std::log(q0);
    }
    for (int i = 1; i <= n; ++i) {
      for (int j = 1; j <= scan.m; ++j) {
        double r = 1.0 - beliefs.assoc[s].linear.q(i, j);
        if (r > 0.0) f -= gammas[s] * r * std::log(r);
      }
    }
  }
  return f;
}

MultiScanModel sequential_modify(const MultiScanModel& model, const PrimalBeliefs& beliefs,
                                 int s, double dgamma, double dbeta) {
  MultiScanModel out = model;
  if (dgamma == 0.0 && dbeta == 0.0) return out;
  const AssocBeliefs& ab = beliefs.assoc.at(s);
  ScanFactors& scan = out.scans.at(s);
  for (int i = 0; i < model.target_count(); ++i) {
    Matrix& lf = scan.log_factor[i];
    for (int j = 1; j <= scan.m; ++j) {
      double l1mq = ab.log_1mq(i + 1, j);
      double lq0 = ab.log_q(0, j);
      if (dgamma != 0.0 && l1mq == kNegInf) {
        throw std::domain_error("sequential_modify: association belief at 1");
      }
      if (dbeta != 0.0 && lq0 == kNegInf) {
        throw std::domain_error("sequential_modify: false-alarm belief at 0");
      }
      for (int x = 0; x < lf.rows(); ++x) {
        if (!std::isfinite(lf(x, j))) continue;
        lf(x, j) += dgamma * (1.0 + l1mq) - dbeta * (1.0 + lq0);
      }
    }
  }
  scan.gamma += dgamma;
  scan.beta += dbeta;
  return out;
}

void cvs_step(CvsState& state, ScanFactors new_scan, const CvsOptions& opts) {
  if (!state.solver) throw std::logic_error("cvs_step: state must hold a scanless solver");
  PdcaSolver& solver = *state.solver;
  const int old_count = solver.model().scan_count();

  std::vector<double> gammas(old_count + 1, 0.0);
  gammas.back() = opts.gamma_new;
  KappaSchedule sched = kappa_schedule(gammas, opts.mode);
  const bool guaranteed = opts.mode == KappaSchedule::Mode::kGuaranteed;

  for (int s = 0; s < old_count; ++s) {
    double beta_target = guaranteed ? sched.block1_denom(s) : 1.0;
    double dg = 0.0 - solver.model().scans[s].gamma;
    double db = beta_target - solver.model().scans[s].beta;
    solver.apply_sequential_modify(s, dg, db);
  }
  new_scan.gamma = opts.gamma_new;
  new_scan.beta = guaranteed ? sched.block1_denom(old_count) : 1.0;
  solver.append_scan(std::move(new_scan));
  solver.set_schedule(std::move(sched));

  PdcaOptions popts = opts.pdca;
  if (opts.sweep_limit > 0) {
    popts.forced_sweeps = opts.sweep_limit;
    popts.backward_first = true;
  }
  state.last_stats = solver.run(popts);
}

// ---------------------------------------------------------------------------
// JSON serialisation

void MultiScanModel::to_json(std::ostream& out) const {
  nlohmann::json j;
  j["targets"] = nlohmann::json::array();
  for (const auto& lp : log_prior) {
    j["targets"].push_back({{"log_prior", lp}});
  }
  j["scans"] = nlohmann::json::array();
  for (const auto& sc : scans) {
    nlohmann::json js;
    js["m"] = sc.m;
    js["gamma"] = sc.gamma;
    js["beta"] = sc.beta;
    js["log_factors"] = nlohmann::json::array();
    for (const auto& f : sc.log_factor) {
      nlohmann::json rows = nlohmann::json::array();
      for (int x = 0; x < f.rows(); ++x) {
        nlohmann::json row = nlohmann::json::array();
        for (int a = 0; a < f.cols(); ++a) {
          if (std::isfinite(f(x, a))) row.push_back(f(x, a));
          else row.push_back(nullptr);  // -inf
        }
        rows.push_back(row);
      }
      js["log_factors"].push_back(rows);
    }
    j["scans"].push_back(js);
  }
  out << j.dump(2) << "\n";
}

MultiScanModel MultiScanModel::from_json(std::istream& in) {
  nlohmann::json j;
  in >> j;
  MultiScanModel model;
  for (const auto& t : j.at("targets")) {
    model.log_prior.push_back(t.at("log_prior").get<std::vector<double>>());
  }
  for (const auto& js : j.at("scans")) {
    ScanFactors sc;
    sc.m = js.at("m").get<int>();
    sc.gamma = js.at("gamma").get<double>();
    sc.beta = js.at("beta").get<double>();
    for (const auto& rows : js.at("log_factors")) {
      int k = static_cast<int>(rows.size());
      Matrix f(k, sc.m + 1, kNegInf);
      for (int x = 0; x < k; ++x) {
        const auto& row = rows.at(x);
        for (int a = 0; a < f.cols(); ++a) {
          if (!row.at(a).is_null()) f(x, a) = row.at(a).get<double>();
        }
      }
      sc.log_factor.push_back(std::move(f));
    }
    model.scans.push_back(std::move(sc));
  }
  std::string err = model.validate();
  if (!err.empty()) throw std::runtime_error("model json: " + err);
  return model;
}

}  // namespace msda
