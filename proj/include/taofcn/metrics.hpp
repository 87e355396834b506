#pragma once

// CR/AR string metrics over a minimum-edit-distance alignment with unit
// costs. CR = (N - Sub - Del) / N, AR = (N - Sub - Del - Ins) / N. Among
// minimum-cost alignments, substitutions are preferred over insert+delete
// pairs, so the DP minimizes (cost, Del + Ins) lexicographically.

#include <algorithm>
#include <stdexcept>
#include <string>
#include <vector>

namespace tao {

struct EditCounts {
  int n = 0;    // ground-truth length
  int m = 0;    // prediction length
  int sub = 0;
  int del = 0;
  int ins = 0;
};

struct StringScore {
  double cr = 0.0;
  double ar = 0.0;
  EditCounts counts;
};

inline StringScore cr_ar(const std::string& ground_truth,
                         const std::string& prediction) {
  const int n = static_cast<int>(ground_truth.size());
  const int m = static_cast<int>(prediction.size());
  struct Cell {
    int cost;
    int insdel;
  };
  std::vector<Cell> dp(static_cast<std::size_t>(n + 1) * (m + 1));
  auto at = [&](int i, int j) -> Cell& { return dp[static_cast<std::size_t>(i) * (m + 1) + j]; };
  for (int i = 0; i <= n; ++i) at(i, 0) = {i, i};
  for (int j = 0; j <= m; ++j) at(0, j) = {j, j};
  auto less = [](const Cell& a, const Cell& b) {
    return a.cost != b.cost ? a.cost < b.cost : a.insdel < b.insdel;
  };
  for (int i = 1; i <= n; ++i) {
    for (int j = 1; j <= m; ++j) {
      const int sub_cost = ground_truth[i - 1] == prediction[j - 1] ? 0 : 1;
      Cell best = {at(i - 1, j - 1).cost + sub_cost, at(i - 1, j - 1).insdel};
      const Cell del = {at(i - 1, j).cost + 1, at(i - 1, j).insdel + 1};
      const Cell ins = {at(i, j - 1).cost + 1, at(i, j - 1).insdel + 1};
      if (less(del, best)) best = del;
      if (less(ins, best)) best = ins;
      at(i, j) = best;
    }
  }
  const Cell final = at(n, m);
  StringScore s;
  s.counts.n = n;
  s.counts.m = m;
  s.counts.sub = final.cost - final.insdel;
  // Del - Ins = n - m and Del + Ins = insdel
  s.counts.del = (final.insdel + (n - m)) / 2;
  s.counts.ins = final.insdel - s.counts.del;
  if (n == 0) {
    // degenerate ground truth: CR is defined as 1; AR charges insertions
    // against a unit length
    s.cr = 1.0;
    s.ar = m == 0 ? 1.0 : -static_cast<double>(s.counts.ins);
    return s;
  }
  s.cr = static_cast<double>(n - s.counts.sub - s.counts.del) / n;
  s.ar = static_cast<double>(n - s.counts.sub - s.counts.del - s.counts.ins) / n;
  return s;
}

// Aggregate over a test set: totals first, then the ratios.
struct AggregateScore {
  long long n = 0, sub = 0, del = 0, ins = 0;

  void add(const EditCounts& c) {
    n += c.n;
    sub += c.sub;
    del += c.del;
    ins += c.ins;
  }
  double cr() const { return n == 0 ? 1.0 : static_cast<double>(n - sub - del) / static_cast<double>(n); }
  double ar() const { return n == 0 ? 1.0 : static_cast<double>(n - sub - del - ins) / static_cast<double>(n); }
};

}  // namespace tao
