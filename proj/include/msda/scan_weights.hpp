#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "msda/matrix.hpp"

namespace msda {

// Association weight matrix for one scan. Entry layout:
//   w(i, j), i in 1..n, j in 1..m : target-i / measurement-j likelihood ratio
//   w(i, 0)                       : missed-detection weight of target i
//   w(0, j)                       : false-alarm weight of measurement j
//   w(0, 0)                       : unused, fixed to zero
struct ScanWeights {
  int n = 0;
  int m = 0;
  Matrix w;

  ScanWeights() = default;
  ScanWeights(int n_, int m_) : n(n_), m(m_), w(n_ + 1, m_ + 1, 0.0) {}

  static ScanWeights from_csv(std::istream& in);
  void to_csv(std::ostream& out) const;
};

// Feasibility case of the convergence analysis:
//   kNoBorders : n == m, no miss / false-alarm weights (square core problem)
//   kMissOnly  : all miss weights positive, no false-alarm weights
//   kFull      : all border weights positive
//   kMixed     : anything else (per-cell border support)
enum class FeasibilityCase { kMixed = 0, kNoBorders = 1, kMissOnly = 2, kFull = 3 };

struct SupportComponent {
  std::vector<int> targets;       // 1-based target indices
  std::vector<int> measurements;  // 1-based measurement indices
};

struct WeightsDiagnostics {
  bool ok = false;        // shape and entries valid
  bool feasible = false;  // a valid association event exists and every
                          // positive edge participates in one
  FeasibilityCase det_case = FeasibilityCase::kMixed;
  std::vector<SupportComponent> components;  // of the positive interior support
  std::vector<std::string> errors;

  bool usable() const { return ok && feasible; }
};

WeightsDiagnostics validate_weights(const ScanWeights& w);

const char* to_string(FeasibilityCase c);

}  // namespace msda
