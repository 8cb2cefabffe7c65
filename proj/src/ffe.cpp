#include "msda/ffe.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "msda/linalg.hpp"
#include "msda/logsumexp.hpp"

namespace msda {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kInf = std::numeric_limits<double>::infinity();

struct Structure {
  int n = 0, m = 0;
  std::vector<char> miss_sup;        // per row (1..n)
  std::vector<char> fa_sup;          // per col (1..m)
  std::vector<char> alive_row, alive_col;
  Matrix sup;                        // 1.0 where weight positive
  Matrix pin;                        // pinned belief values; NaN = free
  std::string error;

  bool cell_active(int i, int j) const {
    return sup(i, j) > 0.0 && alive_row[i] && alive_col[j] && std::isnan(pin(i, j));
  }
};

// Resolve the cells whose beliefs are forced by the constraint structure:
// rows/columns without interior support, and single-edge rows/columns that
// lack the corresponding border event. Validated instances only ever hit
// consistent cases; inconsistent forcing reports an error.
Structure analyse_structure(const Matrix& log_w) {
  Structure st;
  st.n = log_w.rows() - 1;
  st.m = log_w.cols() - 1;
  const int n = st.n, m = st.m;
  st.sup = Matrix(n + 1, m + 1, 0.0);
  st.pin = Matrix(n + 1, m + 1, kNaN);
  st.miss_sup.assign(n + 1, 0);
  st.fa_sup.assign(m + 1, 0);
  st.alive_row.assign(n + 1, 1);
  st.alive_col.assign(m + 1, 1);
  for (int i = 1; i <= n; ++i) st.miss_sup[i] = std::isfinite(log_w(i, 0)) ? 1 : 0;
  for (int j = 1; j <= m; ++j) st.fa_sup[j] = std::isfinite(log_w(0, j)) ? 1 : 0;
  for (int i = 1; i <= n; ++i)
    for (int j = 1; j <= m; ++j)
      if (std::isfinite(log_w(i, j))) st.sup(i, j) = 1.0;
  for (int i = 0; i <= n; ++i) st.pin(i, 0) = kNaN;

  auto alive_edges_in_row = [&](int i) {
    std::vector<int> js;
    for (int j = 1; j <= m; ++j)
      if (st.sup(i, j) > 0.0 && st.alive_col[j] && std::isnan(st.pin(i, j))) js.push_back(j);
    return js;
  };
  auto alive_edges_in_col = [&](int j) {
    std::vector<int> is;
    for (int i = 1; i <= n; ++i)
      if (st.sup(i, j) > 0.0 && st.alive_row[i] && std::isnan(st.pin(i, j))) is.push_back(i);
    return is;
  };

  bool changed = true;
  while (changed) {
    changed = false;
    for (int i = 1; i <= n; ++i) {
      if (!st.alive_row[i]) continue;
      auto js = alive_edges_in_row(i);
      if (js.empty()) {
        if (!st.miss_sup[i]) {
          st.error = "target row with no remaining support and no miss weight";
          return st;
        }
        st.pin(i, 0) = 1.0;
        st.alive_row[i] = 0;
        changed = true;
      } else if (js.size() == 1 && !st.miss_sup[i]) {
        int j = js[0];
        st.pin(i, j) = 1.0;  // target i must take measurement j
        // Measurement j is consumed: its false-alarm event and any other
        // target edge into it are forced off.
        if (st.fa_sup[j]) st.pin(0, j) = 0.0;
        for (int i2 = 1; i2 <= n; ++i2) {
          if (i2 != i && st.sup(i2, j) > 0.0 && std::isnan(st.pin(i2, j))) st.pin(i2, j) = 0.0;
        }
        st.alive_row[i] = 0;
        st.alive_col[j] = 0;
        changed = true;
      }
    }
    for (int j = 1; j <= m; ++j) {
      if (!st.alive_col[j]) continue;
      auto is = alive_edges_in_col(j);
      if (is.empty()) {
        if (!st.fa_sup[j]) {
          st.error = "measurement column with no remaining support and no false-alarm weight";
          return st;
        }
        st.pin(0, j) = 1.0;
        st.alive_col[j] = 0;
        changed = true;
      } else if (is.size() == 1 && !st.fa_sup[j]) {
        int i = is[0];
        st.pin(i, j) = 1.0;
        if (st.miss_sup[i]) st.pin(i, 0) = 0.0;
        for (int j2 = 1; j2 <= m; ++j2) {
          if (j2 != j && st.sup(i, j2) > 0.0 && std::isnan(st.pin(i, j2))) st.pin(i, j2) = 0.0;
        }
        st.alive_row[i] = 0;
        st.alive_col[j] = 0;
        changed = true;
      }
    }
  }
  // Pinned-off support cells mean a positive edge was forced to zero; such
  // instances fail validate_weights, but keep the solve well-defined.
  return st;
}

}  // namespace

std::string FfeParams::validate() const {
  if (!(alpha > 0.5)) return "alpha must exceed 0.5";
  if (!(beta > 0.5)) return "beta must exceed 0.5";
  if (!(gamma >= 0.0) || gamma > 1.0) return "gamma must lie in [0, 1]";
  if (gamma < 1.0 && gamma > std::min(alpha, beta)) {
    return "gamma must not exceed min(alpha, beta)";
  }
  if (!(tol > 0.0)) return "tol must be positive";
  if (max_iters <= 0) return "max_iters must be positive";
  if (damping < 0.0 || damping >= 1.0) return "damping must lie in [0, 1)";
  return {};
}

Matrix log_weights(const ScanWeights& sw) {
  Matrix lw(sw.n + 1, sw.m + 1, kNegInf);
  for (int i = 0; i <= sw.n; ++i) {
    for (int j = 0; j <= sw.m; ++j) {
      if (i == 0 && j == 0) continue;
      double v = sw.w(i, j);
      lw(i, j) = v > 0.0 ? std::log(v) : kNegInf;
    }
  }
  return lw;
}

FfeResult solve_single_scan_ffe_log(const Matrix& log_w, const FfeParams& p,
                                    const MessageState* warm_start) {
  FfeResult res;
  std::string perr = p.validate();
  if (!perr.empty()) throw std::invalid_argument("solve_single_scan_ffe: " + perr);

  Structure st = analyse_structure(log_w);
  const int n = st.n, m = st.m;
  const double gamma = p.gamma;
  const double kappa = p.kappa();

  res.beliefs.linear = BeliefMatrix(n, m);
  res.beliefs.log_q = Matrix(n + 1, m + 1, kNegInf);
  res.beliefs.log_1mq = Matrix(n + 1, m + 1, 0.0);
  res.messages.kappa = kappa;
  if (!st.error.empty()) {
    res.stats.error = st.error;
    return res;
  }

  Matrix lx(n + 1, m + 1, kNaN), ly(n + 1, m + 1, kNaN);

  // Message cells in play.
  auto use_xy = [&](int i, int j) { return st.cell_active(i, j); };
  for (int i = 1; i <= n; ++i) {
    if (!st.alive_row[i]) continue;
    if (st.miss_sup[i]) {
      lx(i, 0) = 0.0;
      ly(i, 0) = 0.0;
    }
    for (int j = 1; j <= m; ++j)
      if (use_xy(i, j)) {
        lx(i, j) = 0.0;
        ly(i, j) = 0.0;
      }
  }
  for (int j = 1; j <= m; ++j) {
    if (st.alive_col[j] && st.fa_sup[j]) {
      lx(0, j) = 0.0;
      ly(0, j) = 0.0;
    }
  }
  if (warm_start && warm_start->log_y.rows() == n + 1 && warm_start->log_y.cols() == m + 1) {
    for (int i = 0; i <= n; ++i)
      for (int j = 0; j <= m; ++j) {
        if (!std::isnan(ly(i, j)) && std::isfinite(warm_start->log_y(i, j)))
          ly(i, j) = warm_start->log_y(i, j);
        if (!std::isnan(lx(i, j)) && std::isfinite(warm_start->log_x(i, j)))
          lx(i, j) = warm_start->log_x(i, j);
      }
  }

  std::vector<double> terms;
  terms.reserve(std::max(n, m) + 1);
  std::vector<int> owners;
  owners.reserve(std::max(n, m) + 1);

  const double damp = p.damping;
  bool numerical_failure = false;

  auto apply = [&](Matrix& mt, int i, int j, double fresh, double& dist) {
    double old = mt(i, j);
    double next = damp > 0.0 ? damp * old + (1.0 - damp) * fresh : fresh;
    if (!std::isfinite(next)) {
      numerical_failure = true;
      next = old;
    }
    dist = std::max(dist, std::abs(next - old));
    mt(i, j) = next;
  };

  double dist = kInf;
  int iter = 0;
  for (iter = 0; iter < p.max_iters && !numerical_failure; ++iter) {
    dist = 0.0;
    // x half-iteration: column sums of y messages.
    for (int j = 1; j <= m; ++j) {
      if (!st.alive_col[j]) continue;
      terms.clear();
      owners.clear();
      if (st.fa_sup[j]) {
        terms.push_back(log_w(0, j) + ly(0, j));
        owners.push_back(0);
      }
      for (int i = 1; i <= n; ++i) {
        if (use_xy(i, j)) {
          terms.push_back(log_w(i, j) + ly(i, j));
          owners.push_back(i);
        }
      }
      double log_s = log_sum_exp(terms.data(), static_cast<int>(terms.size()));
      if (st.fa_sup[j]) apply(lx, 0, j, -log_s, dist);
      for (size_t k = 0; k < owners.size(); ++k) {
        int i = owners[k];
        if (i == 0) continue;
        double saved = terms[k];
        terms[k] = kNegInf;
        double log_excl = log_sum_exp(terms.data(), static_cast<int>(terms.size()));
        terms[k] = saved;
        apply(lx, i, j, kappa - (1.0 - gamma) * log_s - gamma * log_excl, dist);
      }
    }
    for (int i = 1; i <= n; ++i) {
      if (st.alive_row[i] && st.miss_sup[i]) {
        apply(lx, i, 0, (1.0 / p.alpha - 1.0) * ly(i, 0), dist);
      }
    }
    // y half-iteration: row sums of x messages.
    for (int i = 1; i <= n; ++i) {
      if (!st.alive_row[i]) continue;
      terms.clear();
      owners.clear();
      if (st.miss_sup[i]) {
        terms.push_back(log_w(i, 0) + lx(i, 0));
        owners.push_back(0);
      }
      for (int j = 1; j <= m; ++j) {
        if (use_xy(i, j)) {
          terms.push_back(log_w(i, j) + lx(i, j));
          owners.push_back(j);
        }
      }
      double log_t = log_sum_exp(terms.data(), static_cast<int>(terms.size()));
      if (st.miss_sup[i]) apply(ly, i, 0, -log_t, dist);
      for (size_t k = 0; k < owners.size(); ++k) {
        int j = owners[k];
        if (j == 0) continue;
        double saved = terms[k];
        terms[k] = kNegInf;
        double log_excl = log_sum_exp(terms.data(), static_cast<int>(terms.size()));
        terms[k] = saved;
        apply(ly, i, j, kappa - (1.0 - gamma) * log_t - gamma * log_excl, dist);
      }
    }
    for (int j = 1; j <= m; ++j) {
      if (st.alive_col[j] && st.fa_sup[j]) {
        apply(ly, 0, j, (1.0 / p.beta - 1.0) * lx(0, j), dist);
      }
    }
    if (p.keep_trace) res.stats.distance_trace.push_back(dist);
    if (dist < p.tol) {
      ++iter;
      break;
    }
  }
  res.stats.iters = iter;
  res.stats.final_distance = dist;
  res.stats.converged = !numerical_failure && dist < p.tol;
  if (numerical_failure) res.stats.error = "non-finite message update";

  // Belief recovery. Columns are normalised exactly by construction; the
  // miss column absorbs the row residual so both sum families are exact.
  BeliefMatrix& q = res.beliefs.linear;
  Matrix& log_q = res.beliefs.log_q;
  Matrix& log_1mq = res.beliefs.log_1mq;

  double gap = 0.0;
  std::vector<double> log_t_row(n + 1, kNegInf);
  for (int i = 1; i <= n; ++i) {
    if (!st.alive_row[i]) continue;
    terms.clear();
    if (st.miss_sup[i]) terms.push_back(log_w(i, 0) + lx(i, 0));
    for (int j = 1; j <= m; ++j)
      if (use_xy(i, j)) terms.push_back(log_w(i, j) + lx(i, j));
    log_t_row[i] = log_sum_exp(terms.data(), static_cast<int>(terms.size()));
  }
  for (int j = 1; j <= m; ++j) {
    if (!st.alive_col[j]) continue;
    terms.clear();
    owners.clear();
    if (st.fa_sup[j]) {
      terms.push_back(log_w(0, j) + ly(0, j));
      owners.push_back(0);
    }
    for (int i = 1; i <= n; ++i) {
      if (use_xy(i, j)) {
        terms.push_back(log_w(i, j) + ly(i, j));
        owners.push_back(i);
      }
    }
    double log_s = log_sum_exp(terms.data(), static_cast<int>(terms.size()));
    for (size_t k = 0; k < owners.size(); ++k) {
      int i = owners[k];
      double lq = terms[k] - log_s;
      log_q(i, j) = lq;
      q.q(i, j) = std::exp(lq);
      if (i > 0) {
        double saved = terms[k];
        terms[k] = kNegInf;
        double log_excl = log_sum_exp(terms.data(), static_cast<int>(terms.size()));
        terms[k] = saved;
        log_1mq(i, j) = log_excl - log_s;
        // row-vs-column recovery agreement
        double row_rec = std::exp(log_w(i, j) + lx(i, j) - log_t_row[i]);
        gap = std::max(gap, std::abs(row_rec - q.q(i, j)));
      }
    }
  }
  for (int i = 1; i <= n; ++i) {
    if (!st.alive_row[i]) continue;
    double rest = 0.0;
    for (int j = 1; j <= m; ++j) rest += q.q(i, j);
    double miss = std::max(0.0, 1.0 - rest);
    q.q(i, 0) = miss;
    if (st.miss_sup[i]) {
      log_q(i, 0) = log_w(i, 0) + lx(i, 0) - log_t_row[i];
      gap = std::max(gap, std::abs(std::exp(log_q(i, 0)) - miss));
    }
  }
  // Pinned cells.
  for (int i = 0; i <= n; ++i) {
    for (int j = 0; j <= m; ++j) {
      if (i == 0 && j == 0) continue;
      double pv = st.pin(i, j);
      if (!std::isnan(pv)) {
        q.q(i, j) = pv;
        log_q(i, j) = pv > 0.0 ? 0.0 : kNegInf;
        if (i > 0 && j > 0) log_1mq(i, j) = pv >= 1.0 ? kNegInf : 0.0;
      }
    }
  }
  res.stats.recovery_gap = gap;
  res.messages.log_x = std::move(lx);
  res.messages.log_y = std::move(ly);
  return res;
}

FfeResult solve_single_scan_ffe(const ScanWeights& w, const FfeParams& p,
                                const MessageState* warm_start) {
  return solve_single_scan_ffe_log(log_weights(w), p, warm_start);
}

double ffe_objective(const BeliefMatrix& q, const ScanWeights& w, const FfeParams& p) {
  if (q.n != w.n || q.m != w.m) throw std::invalid_argument("ffe_objective: shape mismatch");
  double obj = 0.0;
  for (int i = 0; i <= q.n; ++i) {
    for (int j = 0; j <= q.m; ++j) {
      if (i == 0 && j == 0) continue;
      double qv = q.q(i, j);
      double wv = w.w(i, j);
      if (qv < -1e-12) throw std::domain_error("ffe_objective: negative belief");
      if (qv <= 0.0) continue;  // 0 log 0 = 0
      if (wv <= 0.0) throw std::domain_error("ffe_objective: belief mass outside support");
      double coef = (i == 0) ? p.beta : (j == 0 ? p.alpha : 1.0);
      obj += coef * qv * std::log(qv / wv);
    }
  }
  for (int i = 1; i <= q.n; ++i) {
    for (int j = 1; j <= q.m; ++j) {
      double r = 1.0 - q.q(i, j);
      if (r > 0.0) obj -= p.gamma * r * std::log(r);
    }
  }
  return obj;
}

double kkt_residual(const BeliefMatrix& q, const ScanWeights& w, const FfeParams& p) {
  const int n = w.n, m = w.m;
  if (q.n != n || q.m != m) throw std::invalid_argument("kkt_residual: shape mismatch");

  double violation = q.max_consistency_violation();
  for (int i = 0; i <= n; ++i) {
    for (int j = 0; j <= m; ++j) {
      if (i == 0 && j == 0) continue;
      if (w.w(i, j) <= 0.0) {
        violation = std::max(violation, std::abs(q.q(i, j)));
        continue;
      }
      double qv = q.q(i, j);
      if (qv <= 0.0 || qv >= 1.0) return kInf;  // boundary sentinel
    }
  }

  // Dual variables: index 0..n-1 for targets, n..n+m-1 for measurements.
  std::vector<double> dual(n + m, kNaN);
  std::vector<char> known(n + m, 0);
  for (int i = 1; i <= n; ++i) {
    if (w.w(i, 0) > 0.0) {
      dual[i - 1] = p.alpha * (std::log(q.q(i, 0) / w.w(i, 0)) + 1.0);
      known[i - 1] = 1;
    }
  }
  for (int j = 1; j <= m; ++j) {
    if (w.w(0, j) > 0.0) {
      dual[n + j - 1] = p.beta * (std::log(q.q(0, j) / w.w(0, j)) + 1.0);
      known[n + j - 1] = 1;
    }
  }

  struct Edge {
    int i, j;
    double c;
  };
  std::vector<Edge> edges;
  for (int i = 1; i <= n; ++i) {
    for (int j = 1; j <= m; ++j) {
      if (w.w(i, j) > 0.0) {
        double c = std::log(q.q(i, j) / w.w(i, j)) + p.gamma * std::log(1.0 - q.q(i, j)) +
                   1.0 + p.gamma;
        edges.push_back({i - 1, n + j - 1, c});
      }
    }
  }

  int unknown_count = 0;
  std::vector<int> unknown_index(n + m, -1);
  for (int v = 0; v < n + m; ++v) {
    if (!known[v]) unknown_index[v] = unknown_count++;
  }
  if (unknown_count > 0) {
    // Least squares over the interior stationarity equations; components of
    // the support graph with no anchored vertex get one gauge equation.
    std::vector<int> comp(n + m, -1);
    int comps = 0;
    for (int v = 0; v < n + m; ++v) {
      if (comp[v] >= 0) continue;
      std::vector<int> stack{v};
      comp[v] = comps;
      while (!stack.empty()) {
        int u = stack.back();
        stack.pop_back();
        for (const Edge& e : edges) {
          int other = (e.i == u) ? e.j : (e.j == u ? e.i : -1);
          if (other >= 0 && comp[other] < 0) {
            comp[other] = comps;
            stack.push_back(other);
          }
        }
      }
      ++comps;
    }
    std::vector<char> comp_anchored(comps, 0);
    for (int v = 0; v < n + m; ++v)
      if (known[v]) comp_anchored[comp[v]] = 1;

    Matrix ata(unknown_count, unknown_count, 0.0);
    std::vector<double> atb(unknown_count, 0.0);
    auto add_equation = [&](int va, int vb, double rhs) {
      // lambda_va + lambda_vb = rhs with possible knowns folded in
      double r = rhs;
      std::vector<std::pair<int, double>> cols;
      for (int v : {va, vb}) {
        if (v < 0) continue;
        if (known[v]) r -= dual[v];
        else cols.push_back({unknown_index[v], 1.0});
      }
      if (cols.empty()) return;
      for (auto& [ci, cv] : cols) {
        atb[ci] += cv * r;
        for (auto& [cj, cw] : cols) ata(ci, cj) += cv * cw;
      }
    };
    for (const Edge& e : edges) add_equation(e.i, e.j, e.c);
    for (int c = 0; c < comps; ++c) {
      if (comp_anchored[c]) continue;
      for (int v = 0; v < n + m; ++v) {
        if (comp[v] == c && !known[v] && v < n) {
          add_equation(v, -1, 0.0);  // gauge: first unknown target in component
          break;
        }
      }
    }
    for (int k = 0; k < unknown_count; ++k) ata(k, k) += 1e-12;  // harmless regularisation
    std::vector<double> sol = solve_linear(ata, atb);
    for (int v = 0; v < n + m; ++v)
      if (!known[v]) dual[v] = sol[unknown_index[v]];
  }

  double resid = violation;
  for (const Edge& e : edges) {
    resid = std::max(resid, std::abs(e.c - dual[e.i] - dual[e.j]));
  }
  return resid;
}

}  // namespace msda
