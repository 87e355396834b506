#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "taofcn/decode.hpp"
#include "taofcn/selftest.hpp"

using namespace tao;

namespace {

// columns as rows of per-channel probabilities
ColumnSeries series_of(const std::vector<std::vector<float>>& cols) {
  ColumnSeries s;
  s.width = static_cast<int>(cols.size());
  s.channels = static_cast<int>(cols[0].size());
  for (const auto& col : cols)
    s.probs.insert(s.probs.end(), col.begin(), col.end());
  return s;
}

}  // namespace

TEST_CASE("integrate_columns") {
  SUBCASE("two-row column averages to (0.5, 0.5)") {
    DenseOutput d;
    d.probs = Tensor(2, 2, 1);
    d.probs.at(0, 0, 0) = 1.0f;
    d.probs.at(1, 1, 0) = 1.0f;
    const ColumnSeries s = integrate_columns(d);
    CHECK(s.at(0, 0) == doctest::Approx(0.5f));
    CHECK(s.at(0, 1) == doctest::Approx(0.5f));
  }
  SUBCASE("single-row image passes through") {
    DenseOutput d;
    d.probs = Tensor(3, 1, 4, 0.0f);
    for (int x = 0; x < 4; ++x) d.probs.at(x % 3, 0, x) = 1.0f;
    const ColumnSeries s = integrate_columns(d);
    for (int x = 0; x < 4; ++x)
      for (int c = 0; c < 3; ++c)
        CHECK(s.at(x, c) == d.probs.at(c, 0, x));
  }
  SUBCASE("column sums stay normalized") {
    std::mt19937_64 rng(1);
    DenseOutput d;
    d.probs = Tensor(5, 7, 9);
    std::uniform_real_distribution<float> dist(0.01f, 1.0f);
    for (int y = 0; y < 7; ++y)
      for (int x = 0; x < 9; ++x) {
        float sum = 0.0f;
        for (int c = 0; c < 5; ++c) {
          d.probs.at(c, y, x) = dist(rng);
          sum += d.probs.at(c, y, x);
        }
        for (int c = 0; c < 5; ++c) d.probs.at(c, y, x) /= sum;
      }
    const ColumnSeries s = integrate_columns(d);
    for (int x = 0; x < 9; ++x) {
      double sum = 0.0;
      for (int c = 0; c < 5; ++c) sum += s.at(x, c);
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-5));
    }
  }
}

TEST_CASE("score_path") {
  // channels: a, b, background
  const ColumnSeries s = series_of({{0.9f, 0.05f, 0.05f}, {0.1f, 0.8f, 0.1f}});
  SUBCASE("mean of per-column label probabilities") {
    DecodePath p;
    p.segments = {{0, 1, 0}, {1, 2, 1}};
    CHECK(score_path(p, s) == doctest::Approx(0.85));
  }
  SUBCASE("all-background path scores the background mass") {
    const ColumnSeries bg = series_of({{0.1f, 0.1f, 0.8f}, {0.1f, 0.1f, 0.8f}});
    DecodePath p;
    p.segments = {{0, 2, 2}};
    CHECK(score_path(p, bg) == doctest::Approx(0.8));
  }
  SUBCASE("matches a direct summation oracle on random paths") {
    std::mt19937_64 rng(2);
    const ColumnSeries rs = random_series(rng, 6, 4);
    DecodePath p;
    p.segments = {{0, 2, 1}, {2, 3, 3}, {3, 6, 0}};
    double expect = 0.0;
    for (const auto& seg : p.segments)
      for (int col = seg.begin; col < seg.end; ++col)
        expect += rs.at(col, seg.label);
    CHECK(score_path(p, rs) == doctest::Approx(expect / 6));
  }
  SUBCASE("non-tiling paths are rejected") {
    DecodePath gap;
    gap.segments = {{0, 1, 0}};
    CHECK_THROWS_AS(score_path(gap, s), std::invalid_argument);
    DecodePath overlap;
    overlap.segments = {{0, 2, 0}, {1, 2, 1}};
    CHECK_THROWS_AS(score_path(overlap, s), std::invalid_argument);
  }
}

TEST_CASE("beam_search") {
  BeamConfig cfg;
  cfg.beam_width = 1000;
  SUBCASE("all-background series decodes to the empty transcript") {
    const ColumnSeries s = series_of({{0.005f, 0.005f, 0.99f},
                                      {0.005f, 0.005f, 0.99f},
                                      {0.005f, 0.005f, 0.99f}});
    CHECK(beam_search(s, cfg, "ab").transcript == "");
  }
  SUBCASE("a clear three-column character is found") {
    // alphabet "7" only: channels = {7, background}
    std::vector<std::vector<float>> cols(6, {0.02f, 0.98f});
    cols[2] = cols[3] = cols[4] = {0.95f, 0.05f};
    const ColumnSeries s = series_of(cols);
    const DecodeResult r = beam_search(s, cfg, "7");
    CHECK(r.transcript == "7");
    const DecodeResult ex = exhaustive_decode(s, cfg, "7");
    CHECK(ex.transcript == "7");
    CHECK(r.score == doctest::Approx(ex.score));
  }
  SUBCASE("best score is non-decreasing in beam width") {
    std::mt19937_64 rng(3);
    const ColumnSeries s = random_series(rng, 8, 4);
    double prev = -1.0;
    for (int b : {1, 2, 4, 16, 256, 100000}) {
      BeamConfig c;
      c.beam_width = b;
      const double score = beam_search(s, c, "abc").score;
      CHECK(score >= prev - 1e-12);
      prev = score;
    }
  }
  SUBCASE("scaling every column leaves the decoded path unchanged") {
    std::mt19937_64 rng(4);
    ColumnSeries s = random_series(rng, 7, 3);
    const DecodeResult a = beam_search(s, cfg, "ab");
    ColumnSeries scaled = s;
    for (auto& v : scaled.probs) v *= 3.0f;
    const DecodeResult b = beam_search(scaled, cfg, "ab");
    CHECK(a.transcript == b.transcript);
    CHECK(b.score == doctest::Approx(3.0 * a.score));
  }
}

TEST_CASE("exhaustive_decode") {
  BeamConfig cfg;
  SUBCASE("single column takes the argmax label") {
    const ColumnSeries s = series_of({{0.2f, 0.7f, 0.1f}});
    cfg.min_char_width = 1;
    CHECK(exhaustive_decode(s, cfg, "ab").transcript == "b");
  }
  SUBCASE("min_char_width 2 forces background on a single column") {
    const ColumnSeries s = series_of({{0.2f, 0.7f, 0.1f}});
    cfg.min_char_width = 2;
    CHECK(exhaustive_decode(s, cfg, "ab").transcript == "");
  }
  SUBCASE("uniform columns tie-break to the empty transcript") {
    const float u = 1.0f / 3.0f;
    const ColumnSeries s = series_of({{u, u, u}, {u, u, u}});
    const DecodeResult r = exhaustive_decode(s, cfg, "ab");
    CHECK(r.transcript == "");
    CHECK(r.score == doctest::Approx(u));
  }
  SUBCASE("guard refuses an unenumerable space") {
    std::mt19937_64 rng(5);
    const ColumnSeries s = random_series(rng, 20, 13);
    CHECK_THROWS_AS(exhaustive_decode(s, cfg), std::invalid_argument);
  }
}

TEST_CASE("beam equals the exhaustive oracle on random series") {
  const SuiteResult r = beam_oracle_suite(40, 6);
  INFO(r.detail);
  CHECK(r.pass);
}

TEST_CASE("per-segment score mode variant") {
  BeamConfig cfg;
  cfg.score_mode = ScoreMode::SegmentMean;
  cfg.beam_width = 100000;
  const ColumnSeries s = series_of({{0.9f, 0.05f, 0.05f},
                                    {0.85f, 0.1f, 0.05f},
                                    {0.05f, 0.05f, 0.9f}});
  const DecodeResult r = exhaustive_decode(s, cfg, "ab");
  DecodePath p;
  p.segments = r.path.segments;
  CHECK(score_path(p, s, ScoreMode::SegmentMean) == doctest::Approx(r.score));
}
