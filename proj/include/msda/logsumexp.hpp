#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace msda {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// log(sum_i exp(v_i)). Empty input and all -inf both yield -inf.
inline double log_sum_exp(const double* v, int n) {
  double mx = kNegInf;
  for (int i = 0; i < n; ++i) mx = std::max(mx, v[i]);
  if (!std::isfinite(mx)) return mx;  // -inf (empty/all -inf) or +inf propagates
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += std::exp(v[i] - mx);
  return mx + std::log(s);
}

inline double log_sum_exp(const std::vector<double>& v) {
  return log_sum_exp(v.data(), static_cast<int>(v.size()));
}

// Streaming accumulator for log-domain sums where the terms are produced
// one at a time (event enumeration, per-particle sums).
class LogSumExpAccumulator {
 public:
  void add(double log_term) {
    if (log_term == kNegInf) return;
    if (log_term <= max_) {
      sum_ += std::exp(log_term - max_);
    } else {
      sum_ = sum_ * std::exp(max_ - log_term) + 1.0;
      max_ = log_term;
    }
  }
  double value() const {
    if (max_ == kNegInf) return kNegInf;
    return max_ + std::log(sum_);
  }

 private:
  double max_ = kNegInf;
  double sum_ = 0.0;
};

}  // namespace msda
