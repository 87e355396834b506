#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <map>
#include <string>
#include <vector>

#include "taofcn/metrics.hpp"

using namespace tao;

namespace {

// Independent oracle: memoized edit DP minimizing (cost, del + ins)
// lexicographically, written top-down so it shares nothing with cr_ar.
struct OraclePair {
  int cost;
  int insdel;
};

OraclePair oracle_edit(const std::string& gt, const std::string& pred, int i, int j,
                       std::map<std::pair<int, int>, OraclePair>& memo) {
  if (i == 0) return {j, j};
  if (j == 0) return {i, i};
  const auto key = std::make_pair(i, j);
  if (auto it = memo.find(key); it != memo.end()) return it->second;
  auto better = [](OraclePair a, OraclePair b) {
    return a.cost != b.cost ? a.cost < b.cost : a.insdel < b.insdel;
  };
  const OraclePair diag = oracle_edit(gt, pred, i - 1, j - 1, memo);
  OraclePair best = {diag.cost + (gt[i - 1] == pred[j - 1] ? 0 : 1), diag.insdel};
  const OraclePair up = oracle_edit(gt, pred, i - 1, j, memo);
  if (better({up.cost + 1, up.insdel + 1}, best)) best = {up.cost + 1, up.insdel + 1};
  const OraclePair left = oracle_edit(gt, pred, i, j - 1, memo);
  if (better({left.cost + 1, left.insdel + 1}, best)) best = {left.cost + 1, left.insdel + 1};
  memo[key] = best;
  return best;
}

}  // namespace

TEST_CASE("identical strings score 100%") {
  for (const std::string s : {"1", "123", "0.5-7", ""}) {
    const StringScore r = cr_ar(s, s);
    CHECK(r.cr == doctest::Approx(1.0));
    CHECK(r.ar == doctest::Approx(1.0));
    CHECK(r.counts.sub == 0);
    CHECK(r.counts.del == 0);
    CHECK(r.counts.ins == 0);
  }
}

TEST_CASE("deletion lowers both rates") {
  const StringScore r = cr_ar("123", "13");
  CHECK(r.counts.sub == 0);
  CHECK(r.counts.del == 1);
  CHECK(r.counts.ins == 0);
  CHECK(r.cr == doctest::Approx(2.0 / 3.0));
  CHECK(r.ar == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("insertion lowers AR but not CR") {
  const StringScore r = cr_ar("123", "1223");
  CHECK(r.counts.sub == 0);
  CHECK(r.counts.del == 0);
  CHECK(r.counts.ins == 1);
  CHECK(r.cr == doctest::Approx(1.0));
  CHECK(r.ar == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("substitution is preferred over delete plus insert") {
  const StringScore r = cr_ar("123", "183");
  CHECK(r.counts.sub == 1);
  CHECK(r.counts.del == 0);
  CHECK(r.counts.ins == 0);
  CHECK(r.cr == doctest::Approx(2.0 / 3.0));
  CHECK(r.ar == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("completely disjoint strings") {
  const StringScore r = cr_ar("111", "222");
  CHECK(r.counts.sub == 3);
  CHECK(r.cr == doctest::Approx(0.0));
  CHECK(r.ar == doctest::Approx(0.0));
}

TEST_CASE("empty ground truth") {
  SUBCASE("empty prediction is perfect") {
    const StringScore r = cr_ar("", "");
    CHECK(r.cr == doctest::Approx(1.0));
    CHECK(r.ar == doctest::Approx(1.0));
  }
  SUBCASE("spurious output charges AR") {
    const StringScore r = cr_ar("", "42");
    CHECK(r.cr == doctest::Approx(1.0));
    CHECK(r.ar == doctest::Approx(-2.0));
    CHECK(r.counts.ins == 2);
  }
}

TEST_CASE("counts reconstruct the edit distance identity") {
  // N - Del + Ins = M must hold for every alignment
  const std::string syms = "abc";
  std::vector<std::string> all;
  all.emplace_back("");
  std::size_t begin = 0;
  for (int len = 1; len <= 3; ++len) {
    const std::size_t end = all.size();
    for (std::size_t i = begin; i < end; ++i)
      for (char c : syms) all.push_back(all[i] + c);
    begin = end;
  }
  for (const auto& gt : all)
    for (const auto& pred : all) {
      const StringScore r = cr_ar(gt, pred);
      CHECK(r.counts.n - r.counts.del + r.counts.ins == r.counts.m);
      CHECK(r.counts.sub >= 0);
      CHECK(r.counts.del >= 0);
      CHECK(r.counts.ins >= 0);
    }
}

TEST_CASE("matches the brute-force oracle over all short pairs") {
  // every pair of strings up to length 5 over {a, b, c}
  const std::string syms = "abc";
  std::vector<std::string> all;
  all.emplace_back("");
  std::size_t begin = 0;
  for (int len = 1; len <= 5; ++len) {
    const std::size_t end = all.size();
    for (std::size_t i = begin; i < end; ++i)
      for (char c : syms) all.push_back(all[i] + c);
    begin = end;
  }
  // 364 strings -> ~132k pairs; sample the full cross product of lengths <= 4
  // and a strided slice of the length-5 block to keep the runtime modest
  std::vector<std::string> pool;
  for (const auto& s : all)
    if (s.size() <= 4 || (std::hash<std::string>{}(s) % 9) == 0) pool.push_back(s);
  for (const auto& gt : pool)
    for (const auto& pred : pool) {
      std::map<std::pair<int, int>, OraclePair> memo;
      const OraclePair o = oracle_edit(gt, pred,
                                       static_cast<int>(gt.size()),
                                       static_cast<int>(pred.size()), memo);
      const StringScore r = cr_ar(gt, pred);
      CHECK(r.counts.sub + r.counts.del + r.counts.ins == o.cost);
      CHECK(r.counts.del + r.counts.ins == o.insdel);
    }
}

TEST_CASE("aggregate pools counts before dividing") {
  AggregateScore agg;
  agg.add(cr_ar("123", "123").counts);   // 3 correct
  agg.add(cr_ar("45", "4").counts);      // 1 deletion
  agg.add(cr_ar("6", "66").counts);      // 1 insertion
  CHECK(agg.n == 6);
  CHECK(agg.cr() == doctest::Approx(5.0 / 6.0));
  CHECK(agg.ar() == doctest::Approx(4.0 / 6.0));
  const AggregateScore empty;
  CHECK(empty.cr() == doctest::Approx(1.0));
  CHECK(empty.ar() == doctest::Approx(1.0));
}
