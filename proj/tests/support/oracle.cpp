#include "support/oracle.hpp"

#include <cmath>
#include <stdexcept>

#include "msda/enumeration.hpp"
#include "msda/linalg.hpp"

namespace msda::testing {

namespace {

// Null-space basis of A via Gauss-Jordan; returns Z with columns spanning
// {x : A x = 0}.
Matrix null_space_basis(Matrix a) {
  const int rows = a.rows(), cols = a.cols();
  std::vector<int> pivot_col_of_row;
  int r = 0;
  for (int c = 0; c < cols && r < rows; ++c) {
    int piv = -1;
    double best = 1e-9;
    for (int rr = r; rr < rows; ++rr) {
      if (std::abs(a(rr, c)) > best) {
        best = std::abs(a(rr, c));
        piv = rr;
      }
    }
    if (piv < 0) continue;
    for (int cc = 0; cc < cols; ++cc) std::swap(a(piv, cc), a(r, cc));
    double d = a(r, c);
    for (int cc = 0; cc < cols; ++cc) a(r, cc) /= d;
    for (int rr = 0; rr < rows; ++rr) {
      if (rr == r) continue;
      double f = a(rr, c);
      if (f == 0.0) continue;
      for (int cc = 0; cc < cols; ++cc) a(rr, cc) -= f * a(r, cc);
    }
    pivot_col_of_row.push_back(c);
    ++r;
  }
  std::vector<char> is_pivot(cols, 0);
  for (int pc : pivot_col_of_row) is_pivot[pc] = 1;
  std::vector<int> free_cols;
  for (int c = 0; c < cols; ++c)
    if (!is_pivot[c]) free_cols.push_back(c);
  Matrix z(cols, static_cast<int>(free_cols.size()), 0.0);
  for (size_t k = 0; k < free_cols.size(); ++k) {
    int fc = free_cols[k];
    z(fc, static_cast<int>(k)) = 1.0;
    for (size_t rr = 0; rr < pivot_col_of_row.size(); ++rr) {
      z(pivot_col_of_row[rr], static_cast<int>(k)) = -a(static_cast<int>(rr), fc);
    }
  }
  return z;
}

}  // namespace

std::vector<double> BarrierNewton::solve(const Matrix& a_eq, std::vector<double> x0,
                                         double tau_min, int max_newton) const {
  const int nv = static_cast<int>(x0.size());
  Matrix z = null_space_basis(a_eq);
  const int nf = z.cols();
  if (!domain_ok(x0)) throw std::runtime_error("oracle: infeasible start");
  if (nf == 0) return x0;  // fully determined by the constraints

  std::vector<double> x = std::move(x0);
  std::vector<double> grad(nv), gz(nf), du(nf), dx(nv), xt(nv);
  Matrix hess(nv, nv, 0.0);

  for (double tau = 1.0; tau >= tau_min * 0.999; tau *= 0.1) {
    for (int it = 0; it < max_newton; ++it) {
      std::fill(grad.begin(), grad.end(), 0.0);
      hess.fill(0.0);
      gradient(x, tau, grad);
      hessian(x, tau, hess);
      // reduced gradient and Hessian
      for (int k = 0; k < nf; ++k) {
        double s = 0.0;
        for (int v = 0; v < nv; ++v) s += z(v, k) * grad[v];
        gz[k] = s;
      }
      Matrix hz(nv, nf, 0.0);
      for (int v = 0; v < nv; ++v)
        for (int k = 0; k < nf; ++k) {
          double s = 0.0;
          for (int u = 0; u < nv; ++u) s += hess(v, u) * z(u, k);
          hz(v, k) = s;
        }
      Matrix red(nf, nf, 0.0);
      for (int k = 0; k < nf; ++k)
        for (int l = 0; l < nf; ++l) {
          double s = 0.0;
          for (int v = 0; v < nv; ++v) s += z(v, k) * hz(v, l);
          red(k, l) = s;
        }
      double gnorm = 0.0;
      for (double g : gz) gnorm = std::max(gnorm, std::abs(g));
      if (gnorm < std::max(1e-11, tau * 1e-3)) break;

      double lev = 0.0;
      std::vector<double> rhs(nf);
      for (int k = 0; k < nf; ++k) rhs[k] = -gz[k];
      bool solved = false;
      for (int attempt = 0; attempt < 8 && !solved; ++attempt) {
        Matrix sys = red;
        for (int k = 0; k < nf; ++k) sys(k, k) += lev;
        try {
          du = solve_linear(sys, rhs);
          double descent = 0.0;
          for (int k = 0; k < nf; ++k) descent += du[k] * gz[k];
          if (descent < 0.0) solved = true;
          else lev = lev == 0.0 ? 1e-8 : lev * 100.0;
        } catch (const std::exception&) {
          lev = lev == 0.0 ? 1e-8 : lev * 100.0;
        }
      }
      if (!solved) break;

      for (int v = 0; v < nv; ++v) {
        double s = 0.0;
        for (int k = 0; k < nf; ++k) s += z(v, k) * du[k];
        dx[v] = s;
      }
      double f0 = value(x, tau);
      double slope = 0.0;
      for (int k = 0; k < nf; ++k) slope += gz[k] * du[k];
      double t = 1.0;
      bool stepped = false;
      for (int bt = 0; bt < 60; ++bt) {
        for (int v = 0; v < nv; ++v) xt[v] = x[v] + t * dx[v];
        if (domain_ok(xt) && value(xt, tau) <= f0 + 1e-4 * t * slope) {
          x = xt;
          stepped = true;
          break;
        }
        t *= 0.5;
      }
      if (!stepped) break;
    }
  }
  return x;
}

BeliefMatrix oracle_single_scan(const ScanWeights& w, const FfeParams& p, double tau_min) {
  const int n = w.n, m = w.m;
  struct Cell {
    int i, j;
  };
  std::vector<Cell> cells;
  Matrix var_of(n + 1, m + 1, -1.0);
  for (int i = 0; i <= n; ++i)
    for (int j = 0; j <= m; ++j) {
      if (i == 0 && j == 0) continue;
      if (w.w(i, j) > 0.0) {
        var_of(i, j) = static_cast<double>(cells.size());
        cells.push_back({i, j});
      }
    }
  const int nv = static_cast<int>(cells.size());

  Matrix a_eq(n + m, nv, 0.0);
  for (int v = 0; v < nv; ++v) {
    if (cells[v].i >= 1) a_eq(cells[v].i - 1, v) = 1.0;
    if (cells[v].j >= 1) a_eq(n + cells[v].j - 1, v) = 1.0;
  }

  // Strictly feasible start: exact marginals of the support indicator.
  ScanWeights ind(n, m);
  for (int i = 0; i <= n; ++i)
    for (int j = 0; j <= m; ++j)
      if (!(i == 0 && j == 0)) ind.w(i, j) = w.w(i, j) > 0.0 ? 1.0 : 0.0;
  BeliefMatrix start = brute_force_marginals(ind).marginals;
  std::vector<double> x0(nv);
  for (int v = 0; v < nv; ++v) x0[v] = start.q(cells[v].i, cells[v].j);

  auto coef = [&](int v) {
    if (cells[v].i == 0) return p.beta;
    if (cells[v].j == 0) return p.alpha;
    return 1.0;
  };
  auto interior = [&](int v) { return cells[v].i >= 1 && cells[v].j >= 1; };

  BarrierNewton bn;
  bn.domain_ok = [&](const std::vector<double>& x) {
    for (int v = 0; v < nv; ++v) {
      if (x[v] <= 0.0) return false;
      if (interior(v) && x[v] >= 1.0) return false;
    }
    return true;
  };
  bn.value = [&](const std::vector<double>& x, double tau) {
    double f = 0.0;
    for (int v = 0; v < nv; ++v) {
      double q = x[v];
      f += coef(v) * q * std::log(q / w.w(cells[v].i, cells[v].j));
      f -= tau * std::log(q);
      if (interior(v)) {
        f -= p.gamma * (1.0 - q) * std::log(1.0 - q);
        f -= tau * std::log(1.0 - q);
      }
    }
    return f;
  };
  bn.gradient = [&](const std::vector<double>& x, double tau, std::vector<double>& g) {
    for (int v = 0; v < nv; ++v) {
      double q = x[v];
      g[v] += coef(v) * (std::log(q / w.w(cells[v].i, cells[v].j)) + 1.0);
      g[v] -= tau / q;
      if (interior(v)) {
        g[v] += p.gamma * (std::log(1.0 - q) + 1.0);
        g[v] += tau / (1.0 - q);
      }
    }
  };
  bn.hessian = [&](const std::vector<double>& x, double tau, Matrix& h) {
    for (int v = 0; v < nv; ++v) {
      double q = x[v];
      double d = coef(v) / q + tau / (q * q);
      if (interior(v)) d += -p.gamma / (1.0 - q) + tau / ((1.0 - q) * (1.0 - q));
      h(v, v) += d;
    }
  };

  std::vector<double> sol = bn.solve(a_eq, x0, tau_min);
  BeliefMatrix out(n, m);
  for (int v = 0; v < nv; ++v) out.q(cells[v].i, cells[v].j) = sol[v];
  return out;
}

}  // namespace msda::testing
