#include "msda/enumeration.hpp"

#include <cmath>
#include <stdexcept>

#include "msda/logsumexp.hpp"

namespace msda {

namespace {

struct EnumContext {
  int n = 0, m = 0;
  Matrix log_w;
  std::vector<int> assign;  // per target, 0 = miss
  std::vector<char> used;   // per measurement
};

EnumContext make_context(const ScanWeights& w) {
  EnumContext ctx;
  ctx.n = w.n;
  ctx.m = w.m;
  ctx.log_w = Matrix(w.n + 1, w.m + 1, kNegInf);
  for (int i = 0; i <= w.n; ++i)
    for (int j = 0; j <= w.m; ++j)
      if (!(i == 0 && j == 0) && w.w(i, j) > 0.0) ctx.log_w(i, j) = std::log(w.w(i, j));
  ctx.assign.assign(w.n + 1, 0);
  ctx.used.assign(w.m + 1, 0);
  return ctx;
}

// Recurse over targets; at the leaf, unassigned measurements become false
// alarms (events where one lacks a false-alarm weight are inconsistent and
// skipped). cb receives (assignment, log event weight).
template <typename Cb>
void visit_events(EnumContext& ctx, int i, double log_weight, Cb&& cb) {
  if (i > ctx.n) {
    double lw = log_weight;
    for (int j = 1; j <= ctx.m; ++j) {
      if (ctx.used[j]) continue;
      if (!std::isfinite(ctx.log_w(0, j))) return;
      lw += ctx.log_w(0, j);
    }
    cb(ctx.assign, lw);
    return;
  }
  if (std::isfinite(ctx.log_w(i, 0))) {
    ctx.assign[i] = 0;
    visit_events(ctx, i + 1, log_weight + ctx.log_w(i, 0), cb);
  }
  for (int j = 1; j <= ctx.m; ++j) {
    if (ctx.used[j] || !std::isfinite(ctx.log_w(i, j))) continue;
    ctx.used[j] = 1;
    ctx.assign[i] = j;
    visit_events(ctx, i + 1, log_weight + ctx.log_w(i, j), cb);
    ctx.used[j] = 0;
  }
  ctx.assign[i] = 0;
}

}  // namespace

EnumerationResult brute_force_marginals(const ScanWeights& w) {
  if (w.n + w.m > 12) throw std::invalid_argument("brute_force_marginals: n + m exceeds 12");
  EnumerationResult out;
  out.marginals = BeliefMatrix(w.n, w.m);

  // Two passes: the first finds the max log weight so the second can
  // accumulate in a numerically safe scale.
  EnumContext ctx = make_context(w);
  double max_lw = kNegInf;
  uint64_t count = 0;
  visit_events(ctx, 1, 0.0, [&](const std::vector<int>&, double lw) {
    max_lw = std::max(max_lw, lw);
    ++count;
  });
  out.event_count = count;
  if (count == 0) {
    out.log_z = kNegInf;
    return out;
  }

  double z = 0.0;
  Matrix acc(w.n + 1, w.m + 1, 0.0);
  visit_events(ctx, 1, 0.0, [&](const std::vector<int>& a, double lw) {
    double ev = std::exp(lw - max_lw);
    z += ev;
    std::vector<char> used(w.m + 1, 0);
    for (int i = 1; i <= w.n; ++i) {
      acc(i, a[i]) += ev;
      if (a[i] > 0) used[a[i]] = 1;
    }
    for (int j = 1; j <= w.m; ++j)
      if (!used[j]) acc(0, j) += ev;
  });
  out.log_z = max_lw + std::log(z);
  for (int i = 0; i <= w.n; ++i)
    for (int j = 0; j <= w.m; ++j)
      if (!(i == 0 && j == 0)) out.marginals.q(i, j) = acc(i, j) / z;
  return out;
}

std::vector<std::vector<int>> enumerate_events(const ScanWeights& w) {
  if (w.n + w.m > 12) throw std::invalid_argument("enumerate_events: n + m exceeds 12");
  EnumContext ctx = make_context(w);
  std::vector<std::vector<int>> events;
  visit_events(ctx, 1, 0.0, [&](const std::vector<int>& a, double) {
    events.push_back(std::vector<int>(a.begin() + 1, a.end()));
  });
  return events;
}

}  // namespace msda
