#pragma once

// Pipeline stages two and three: vertical probability integration into a
// one-dimensional series, then a left-to-right beam search over contiguous
// segment tilings. Scores are plain probability means; since every live
// hypothesis at column t covers exactly t + 1 columns, ranking by running
// sum equals ranking by mean. An exhaustive enumerator over the same path
// grammar serves as the oracle.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "taofcn/net.hpp"
#include "taofcn/tensor.hpp"

namespace tao {

struct ColumnSeries {
  int width = 0;
  int channels = 0;            // characters + background (last channel)
  std::vector<float> probs;    // width * channels, column-major by column
  int stride = 1;
  int offset_x = 0;

  float at(int col, int ch) const {
    return probs[static_cast<std::size_t>(col) * channels + ch];
  }
  float& at(int col, int ch) {
    return probs[static_cast<std::size_t>(col) * channels + ch];
  }
  int background() const { return channels - 1; }
};

template <typename T>
ColumnSeries integrate_columns(const DenseOutputT<T>& dense) {
  if (dense.probs.height < 1)
    throw std::invalid_argument("integrate_columns: zero-height input");
  ColumnSeries s;
  s.width = dense.probs.width;
  s.channels = dense.probs.channels;
  s.stride = dense.stride;
  s.offset_x = dense.offset_x;
  s.probs.assign(static_cast<std::size_t>(s.width) * s.channels, 0.0f);
  const double inv_h = 1.0 / dense.probs.height;
  for (int col = 0; col < s.width; ++col)
    for (int c = 0; c < s.channels; ++c) {
      double sum = 0.0;
      for (int y = 0; y < dense.probs.height; ++y)
        sum += static_cast<double>(dense.probs.at(c, y, col));
      s.at(col, c) = static_cast<float>(sum * inv_h);
    }
  return s;
}

struct Segment {
  int begin = 0, end = 0;  // [begin, end)
  int label = 0;           // class id; background = channels - 1
};

struct DecodePath {
  std::vector<Segment> segments;
  double score_sum = 0.0;  // sum over columns of p(column, segment label)
};

enum class ScoreMode { PixelMean, SegmentMean };

struct BeamConfig {
  int beam_width = 64;
  int min_char_width = 2;
  ScoreMode score_mode = ScoreMode::PixelMean;
};

struct DecodeResult {
  std::string transcript;
  DecodePath path;
  double score = 0.0;
};

inline double score_path(const DecodePath& path, const ColumnSeries& series,
                         ScoreMode mode = ScoreMode::PixelMean) {
  int covered = 0;
  for (std::size_t i = 0; i < path.segments.size(); ++i) {
    const Segment& seg = path.segments[i];
    if (seg.begin != covered || seg.end <= seg.begin || seg.label < 0 ||
        seg.label >= series.channels)
      throw std::invalid_argument("score_path: path does not tile the series");
    covered = seg.end;
  }
  if (covered != series.width)
    throw std::invalid_argument("score_path: path does not tile the series");
  if (mode == ScoreMode::PixelMean) {
    double sum = 0.0;
    for (const Segment& seg : path.segments)
      for (int col = seg.begin; col < seg.end; ++col)
        sum += static_cast<double>(series.at(col, seg.label));
    return sum / series.width;
  }
  double sum = 0.0;
  for (const Segment& seg : path.segments) {
    double ssum = 0.0;
    for (int col = seg.begin; col < seg.end; ++col)
      ssum += static_cast<double>(series.at(col, seg.label));
    sum += ssum / (seg.end - seg.begin);
  }
  return sum / static_cast<double>(path.segments.size());
}

namespace detail {

// score desc, then shorter transcript, then lexicographic, then fewer segments
inline bool better_result(double score_a, const std::string& ta, std::size_t segs_a,
                          double score_b, const std::string& tb, std::size_t segs_b) {
  if (score_a != score_b) return score_a > score_b;
  if (ta.size() != tb.size()) return ta.size() < tb.size();
  if (ta != tb) return ta < tb;
  return segs_a < segs_b;
}

}  // namespace detail

inline DecodeResult beam_search(const ColumnSeries& series, const BeamConfig& cfg,
                                const std::string& alphabet = kClasses) {
  if (series.width < 1) throw std::invalid_argument("beam_search: empty series");
  if (cfg.beam_width < 1) throw std::invalid_argument("beam_search: beam width < 1");
  if (static_cast<int>(alphabet.size()) != series.channels - 1)
    throw std::invalid_argument("beam_search: alphabet/channel mismatch");
  const int bg = series.background();

  struct Hyp {
    std::string transcript;        // closed character segments
    std::vector<Segment> closed;
    double sum = 0.0;              // PixelMean: plain sum over columns
    double closed_means = 0.0;     // SegmentMean: sum of closed segment means
    double open_sum = 0.0;
    int open_label = 0;
    int open_begin = 0;
    int open_len = 0;

    double rank_score(ScoreMode m) const {
      if (m == ScoreMode::PixelMean) return sum;
      return (closed_means + open_sum / open_len) /
             static_cast<double>(closed.size() + 1);
    }
  };

  auto closeable = [&](const Hyp& h) {
    return h.open_label == bg || h.open_len >= cfg.min_char_width;
  };
  auto projected = [&](const Hyp& h) {
    std::string t = h.transcript;
    if (h.open_label != bg) t += alphabet[static_cast<std::size_t>(h.open_label)];
    return t;
  };

  std::vector<Hyp> beam;
  for (int lab = 0; lab < series.channels; ++lab) {
    Hyp h;
    h.open_label = lab;
    h.open_begin = 0;
    h.open_len = 1;
    h.open_sum = static_cast<double>(series.at(0, lab));
    h.sum = h.open_sum;
    beam.push_back(std::move(h));
  }

  auto prune = [&](std::vector<Hyp>& hs) {
    if (static_cast<int>(hs.size()) <= cfg.beam_width) return;
    std::stable_sort(hs.begin(), hs.end(), [&](const Hyp& a, const Hyp& b) {
      return detail::better_result(a.rank_score(cfg.score_mode), projected(a),
                                   a.closed.size(), b.rank_score(cfg.score_mode),
                                   projected(b), b.closed.size());
    });
    hs.resize(static_cast<std::size_t>(cfg.beam_width));
  };
  prune(beam);

  for (int col = 1; col < series.width; ++col) {
    std::vector<Hyp> next;
    next.reserve(beam.size() * (series.channels + 1));
    for (const Hyp& h : beam) {
      {  // extend the open segment
        Hyp e = h;
        const double p = static_cast<double>(series.at(col, e.open_label));
        e.open_len += 1;
        e.open_sum += p;
        e.sum += p;
        next.push_back(std::move(e));
      }
      if (closeable(h)) {  // close it and open a new one, any label
        for (int lab = 0; lab < series.channels; ++lab) {
          Hyp e = h;
          e.closed.push_back({e.open_begin, col, e.open_label});
          if (e.open_label != bg)
            e.transcript += alphabet[static_cast<std::size_t>(e.open_label)];
          e.closed_means += e.open_sum / e.open_len;
          const double p = static_cast<double>(series.at(col, lab));
          e.open_label = lab;
          e.open_begin = col;
          e.open_len = 1;
          e.open_sum = p;
          e.sum += p;
          next.push_back(std::move(e));
        }
      }
    }
    beam = std::move(next);
    prune(beam);
  }

  const Hyp* best = nullptr;
  for (const Hyp& h : beam) {
    if (!closeable(h)) continue;
    if (!best ||
        detail::better_result(h.rank_score(cfg.score_mode), projected(h),
                              h.closed.size() + 1,
                              best->rank_score(cfg.score_mode), projected(*best),
                              best->closed.size() + 1))
      best = &h;
  }
  if (!best) throw std::runtime_error("beam_search: no closeable hypothesis (min_char_width too large?)");

  DecodeResult r;
  Hyp h = *best;
  h.closed.push_back({h.open_begin, series.width, h.open_label});
  if (h.open_label != bg) h.transcript += alphabet[static_cast<std::size_t>(h.open_label)];
  h.closed_means += h.open_sum / h.open_len;
  r.transcript = h.transcript;
  r.path.segments = h.closed;
  r.path.score_sum = h.sum;
  r.score = cfg.score_mode == ScoreMode::PixelMean
                ? h.sum / series.width
                : h.closed_means / static_cast<double>(h.closed.size());
  return r;
}

// ---------------------------------------------------------------------------
// Exhaustive enumeration over the same path grammar; test oracle for the beam.

inline double decode_space_size(int width, int channels) {
  // upper bound: labels * (labels + 1)^(W-1) tilings-with-labels
  double n = channels;
  for (int i = 1; i < width; ++i) n *= channels + 1;
  return n;
}

inline DecodeResult exhaustive_decode(const ColumnSeries& series,
                                      const BeamConfig& cfg,
                                      const std::string& alphabet = kClasses) {
  if (series.width < 1) throw std::invalid_argument("exhaustive_decode: empty series");
  if (static_cast<int>(alphabet.size()) != series.channels - 1)
    throw std::invalid_argument("exhaustive_decode: alphabet/channel mismatch");
  if (decode_space_size(series.width, series.channels) > 1e7)
    throw std::invalid_argument("exhaustive_decode: search space too large to enumerate");
  const int bg = series.background();

  DecodeResult best;
  bool have_best = false;
  std::vector<Segment> segs;
  std::string transcript;
  double closed_means = 0.0;

  // enumerate segments left to right; sums accumulate column-by-column in the
  // same order as the beam so scores compare bit-identically
  auto rec = [&](auto&& self, int col, double sum) -> void {
    if (col == series.width) {
      const double score =
          cfg.score_mode == ScoreMode::PixelMean
              ? sum / series.width
              : closed_means / static_cast<double>(segs.size());
      if (!have_best ||
          detail::better_result(score, transcript, segs.size(), best.score,
                                best.transcript, best.path.segments.size())) {
        best.transcript = transcript;
        best.path.segments = segs;
        best.path.score_sum = sum;
        best.score = score;
        have_best = true;
      }
      return;
    }
    for (int lab = 0; lab < series.channels; ++lab) {
      const int min_len = lab == bg ? 1 : cfg.min_char_width;
      double seg_sum = 0.0;
      double run = sum;  // column-by-column, bit-identical to the beam's sum
      for (int len = 1; col + len <= series.width; ++len) {
        const double p = static_cast<double>(series.at(col + len - 1, lab));
        seg_sum += p;
        run += p;
        if (len < min_len) continue;
        segs.push_back({col, col + len, lab});
        if (lab != bg) transcript += alphabet[static_cast<std::size_t>(lab)];
        closed_means += seg_sum / len;
        self(self, col + len, run);
        closed_means -= seg_sum / len;
        if (lab != bg) transcript.pop_back();
        segs.pop_back();
      }
    }
  };
  rec(rec, 0, 0.0);
  if (!have_best)
    throw std::runtime_error("exhaustive_decode: no valid path (min_char_width too large?)");
  return best;
}

}  // namespace tao
