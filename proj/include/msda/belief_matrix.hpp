#pragma once

#include <cmath>

#include "msda/matrix.hpp"

namespace msda {

// Marginal association beliefs with the same border convention as
// ScanWeights: row 0 false alarms, column 0 missed detections.
struct BeliefMatrix {
  int n = 0;
  int m = 0;
  Matrix q;

  BeliefMatrix() = default;
  BeliefMatrix(int n_, int m_) : n(n_), m(m_), q(n_ + 1, m_ + 1, 0.0) {}

  double row_sum(int i) const {
    double s = 0.0;
    for (int j = 0; j <= m; ++j) s += q(i, j);
    return s;
  }
  double col_sum(int j) const {
    double s = 0.0;
    for (int i = 0; i <= n; ++i) s += q(i, j);
    return s;
  }
  double max_consistency_violation() const {
    double v = 0.0;
    for (int i = 1; i <= n; ++i) v = std::max(v, std::abs(row_sum(i) - 1.0));
    for (int j = 1; j <= m; ++j) v = std::max(v, std::abs(col_sum(j) - 1.0));
    return v;
  }
};

// Beliefs together with their log-domain companions. The linear matrix is
// the external surface; log q and log(1-q) are kept because downstream
// updates (factor modification, particle reweighting) need them at
// magnitudes where the linear values round to 0 or 1.
struct AssocBeliefs {
  BeliefMatrix linear;
  Matrix log_q;       // (n+1)x(m+1); -inf off support
  Matrix log_1mq;     // interior cells only; 0 elsewhere

  int n() const { return linear.n; }
  int m() const { return linear.m; }
};

}  // namespace msda
