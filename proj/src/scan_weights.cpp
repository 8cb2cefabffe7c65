#include "msda/scan_weights.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace msda {

namespace {

std::vector<double> parse_csv_row(const std::string& line) {
  std::vector<double> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    out.push_back(std::stod(cell));
  }
  return out;
}

}  // namespace

ScanWeights ScanWeights::from_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("weights csv: empty file");
  std::stringstream header(line);
  std::string cell;
  std::vector<long> dims;
  while (std::getline(header, cell, ',')) dims.push_back(std::stol(cell));
  if (dims.size() != 2 || dims[0] < 0 || dims[1] < 0) {
    throw std::runtime_error("weights csv: header must be `n,m`");
  }
  ScanWeights sw(static_cast<int>(dims[0]), static_cast<int>(dims[1]));
  for (int i = 0; i <= sw.n; ++i) {
    if (!std::getline(in, line)) throw std::runtime_error("weights csv: missing row");
    std::vector<double> row = parse_csv_row(line);
    if (static_cast<int>(row.size()) != sw.m + 1) {
      throw std::runtime_error("weights csv: row has wrong number of cells");
    }
    for (int j = 0; j <= sw.m; ++j) sw.w(i, j) = row[j];
  }
  return sw;
}

void ScanWeights::to_csv(std::ostream& out) const {
  out << n << "," << m << "\n";
  char buf[64];
  for (int i = 0; i <= n; ++i) {
    for (int j = 0; j <= m; ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", w(i, j));
      out << (j ? "," : "") << buf;
    }
    out << "\n";
  }
}

const char* to_string(FeasibilityCase c) {
  switch (c) {
    case FeasibilityCase::kNoBorders: return "case-1 (no miss/false-alarm weights)";
    case FeasibilityCase::kMissOnly: return "case-2 (miss weights only)";
    case FeasibilityCase::kFull: return "case-3 (miss and false-alarm weights)";
    default: return "mixed border support";
  }
}

namespace {

// Max-flow on a tiny dense graph (Edmonds-Karp). Nodes are indexed 0..v-1.
class FlowNetwork {
 public:
  explicit FlowNetwork(int vertex_count)
      : v_(vertex_count), cap_(vertex_count, std::vector<int>(vertex_count, 0)) {}

  void add_edge(int from, int to, int cap) { cap_[from][to] += cap; }

  int max_flow(int s, int t) {
    int total = 0;
    while (true) {
      std::vector<int> parent(v_, -1);
      parent[s] = s;
      std::vector<int> queue{s};
      for (size_t qi = 0; qi < queue.size() && parent[t] < 0; ++qi) {
        int u = queue[qi];
        for (int w = 0; w < v_; ++w) {
          if (parent[w] < 0 && cap_[u][w] > 0) {
            parent[w] = u;
            queue.push_back(w);
          }
        }
      }
      if (parent[t] < 0) break;
      for (int u = t; u != s; u = parent[u]) {
        cap_[parent[u]][u] -= 1;
        cap_[u][parent[u]] += 1;
      }
      ++total;
    }
    return total;
  }

 private:
  int v_;
  std::vector<std::vector<int>> cap_;
};

// A valid association event is a partial matching on the positive interior
// support in which every target without a miss weight is matched and every
// measurement without a false-alarm weight is matched. Optionally one edge
// is forced into the event. Existence is a circulation-with-lower-bounds
// feasibility test, reduced to plain max flow.
bool event_exists(const ScanWeights& sw, int forced_i, int forced_j) {
  const int n = sw.n, m = sw.m;
  // Nodes: 0 = source, 1 = sink, 2 = super-source, 3 = super-sink,
  // 4..4+n-1 targets, 4+n..4+n+m-1 measurements.
  const int kSource = 0, kSink = 1, kSuper = 2, kSuperSink = 3;
  FlowNetwork net(4 + n + m);
  int lower_total = 0;
  auto target_node = [&](int i) { return 4 + (i - 1); };
  auto meas_node = [&](int j) { return 4 + n + (j - 1); };

  for (int i = 1; i <= n; ++i) {
    if (forced_i == i) continue;  // forced edge consumes this target
    bool required = !(sw.w(i, 0) > 0.0);
    if (required) {
      // lower bound 1: route through super nodes
      net.add_edge(kSuper, target_node(i), 1);
      net.add_edge(kSource, kSuperSink, 1);
      ++lower_total;
    } else {
      net.add_edge(kSource, target_node(i), 1);
    }
  }
  for (int j = 1; j <= m; ++j) {
    if (forced_j == j) continue;
    bool required = !(sw.w(0, j) > 0.0);
    if (required) {
      net.add_edge(meas_node(j), kSuperSink, 1);
      net.add_edge(kSuper, kSink, 1);
      ++lower_total;
    } else {
      net.add_edge(meas_node(j), kSink, 1);
    }
  }
  for (int i = 1; i <= n; ++i) {
    if (forced_i == i) continue;
    for (int j = 1; j <= m; ++j) {
      if (forced_j == j) continue;
      if (sw.w(i, j) > 0.0) net.add_edge(target_node(i), meas_node(j), 1);
    }
  }
  // Close the circulation.
  net.add_edge(kSink, kSource, n + m);
  return net.max_flow(kSuper, kSuperSink) == lower_total;
}

}  // namespace

WeightsDiagnostics validate_weights(const ScanWeights& sw) {
  WeightsDiagnostics d;
  const int n = sw.n, m = sw.m;
  if (sw.w.rows() != n + 1 || sw.w.cols() != m + 1) {
    d.errors.push_back("weight matrix shape does not match (n+1)x(m+1)");
    return d;
  }
  for (int i = 0; i <= n; ++i) {
    for (int j = 0; j <= m; ++j) {
      double v = sw.w(i, j);
      if (std::isnan(v) || !std::isfinite(v)) {
        d.errors.push_back("non-finite weight entry");
        return d;
      }
      if (v < 0.0) {
        d.errors.push_back("negative weight entry");
        return d;
      }
    }
  }
  for (int i = 1; i <= n; ++i) {
    bool any = false;
    for (int j = 0; j <= m; ++j) any = any || sw.w(i, j) > 0.0;
    if (!any) {
      d.errors.push_back("target row " + std::to_string(i) + " has no positive weight");
      return d;
    }
  }
  for (int j = 1; j <= m; ++j) {
    bool any = false;
    for (int i = 0; i <= n; ++i) any = any || sw.w(i, j) > 0.0;
    if (!any) {
      d.errors.push_back("measurement column " + std::to_string(j) + " has no positive weight");
      return d;
    }
  }
  d.ok = true;

  bool all_miss = true, any_miss = false, all_fa = true, any_fa = false;
  for (int i = 1; i <= n; ++i) {
    if (sw.w(i, 0) > 0.0) any_miss = true;
    else all_miss = false;
  }
  for (int j = 1; j <= m; ++j) {
    if (sw.w(0, j) > 0.0) any_fa = true;
    else all_fa = false;
  }
  if (n > 0 && m > 0 && !any_miss && !any_fa && n == m) {
    d.det_case = FeasibilityCase::kNoBorders;
  } else if (n > 0 && all_miss && !any_fa) {
    d.det_case = FeasibilityCase::kMissOnly;
  } else if ((n == 0 || all_miss) && (m == 0 || all_fa)) {
    d.det_case = FeasibilityCase::kFull;
  } else {
    d.det_case = FeasibilityCase::kMixed;
  }

  // Connected components of the positive interior support.
  std::vector<int> parent(n + m + 1);
  for (size_t k = 0; k < parent.size(); ++k) parent[k] = static_cast<int>(k);
  auto find = [&](int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (int i = 1; i <= n; ++i) {
    for (int j = 1; j <= m; ++j) {
      if (sw.w(i, j) > 0.0) {
        int a = find(i - 1), b = find(n + j - 1);
        if (a != b) parent[a] = b;
      }
    }
  }
  std::vector<int> root_to_comp(n + m, -1);
  for (int i = 1; i <= n; ++i) {
    int r = find(i - 1);
    if (root_to_comp[r] < 0) {
      root_to_comp[r] = static_cast<int>(d.components.size());
      d.components.emplace_back();
    }
    d.components[root_to_comp[r]].targets.push_back(i);
  }
  for (int j = 1; j <= m; ++j) {
    int r = find(n + j - 1);
    if (root_to_comp[r] < 0) {
      root_to_comp[r] = static_cast<int>(d.components.size());
      d.components.emplace_back();
    }
    d.components[root_to_comp[r]].measurements.push_back(j);
  }

  if (d.det_case == FeasibilityCase::kFull) {
    d.feasible = true;  // all-miss / all-false-alarm event is interior
    return d;
  }

  if (!event_exists(sw, 0, 0)) {
    d.feasible = false;
    d.errors.push_back("no consistent association event exists (relative interior is empty)");
    return d;
  }
  for (int i = 1; i <= n; ++i) {
    for (int j = 1; j <= m; ++j) {
      if (sw.w(i, j) > 0.0 && !event_exists(sw, i, j)) {
        d.feasible = false;
        d.errors.push_back("edge (" + std::to_string(i) + "," + std::to_string(j) +
                           ") lies on no consistent association event");
        return d;
      }
    }
  }
  d.feasible = true;
  return d;
}

}  // namespace msda
