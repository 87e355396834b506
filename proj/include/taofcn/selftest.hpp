#pragma once

// Shared oracle suites: dense-vs-patch equivalence, end-to-end finite
// difference gradient checks, and beam-vs-exhaustive decoding. Used by the
// `selftest` CLI subcommand and by the acceptance tests.

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "taofcn/backprop.hpp"
#include "taofcn/decode.hpp"
#include "taofcn/eval.hpp"
#include "taofcn/net.hpp"
#include "taofcn/train.hpp"

namespace tao {

// Small random branching spec; head always emits `channels` classes+bg.
inline NetworkSpec random_small_spec(std::mt19937_64& rng, BranchMode mode,
                                     int head_channels = 5) {
  std::uniform_int_distribution<int> cdist(2, 5);
  std::uniform_int_distribution<int> tdist(0, 2);
  NetworkSpec s;
  s.name = "random";
  s.mode = mode;
  switch (tdist(rng)) {
    case 0:
      s.layers = {LayerSpec::conv(3, cdist(rng)), LayerSpec::branch_pool(),
                  LayerSpec::conv(3, cdist(rng)), LayerSpec::head(head_channels)};
      break;
    case 1:
      s.layers = {LayerSpec::conv(3, cdist(rng)), LayerSpec::conv(3, cdist(rng)),
                  LayerSpec::branch_pool(), LayerSpec::conv(3, cdist(rng)),
                  LayerSpec::head(head_channels)};
      break;
    default:
      s.layers = {LayerSpec::conv(3, cdist(rng)), LayerSpec::branch_pool(),
                  LayerSpec::conv(3, cdist(rng)), LayerSpec::branch_pool(),
                  LayerSpec::conv(3, cdist(rng)), LayerSpec::head(head_channels)};
      break;
  }
  return s;
}

inline Tensor random_image(std::mt19937_64& rng, int h, int w, int c = 1) {
  Tensor t(c, h, w);
  std::uniform_real_distribution<float> dist(0.0f, 1.0f);
  for (auto& v : t.data) v = dist(rng);
  return t;
}

struct SuiteResult {
  bool pass = true;
  double worst = 0.0;
  std::string detail;
};

// Dense output vs per-pixel patch oracle over random (spec, params, image)
// triples in the given branch mode.
inline SuiteResult patch_equivalence_suite(BranchMode mode, int triples,
                                           std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  SuiteResult r;
  std::uniform_int_distribution<int> hdist(9, 20), wdist(12, 28);
  for (int i = 0; i < triples; ++i) {
    const NetworkSpec spec = random_small_spec(rng, mode);
    const Params params = init_params<float>(spec, rng());
    const Tensor image = random_image(rng, hdist(rng), wdist(rng));
    const PaddedImage padded = pad_for_dense(image, spec, 0.0f);
    const DenseOutput dense = forward_dense(spec, params, padded);
    const DenseOutput oracle = naive_patch_inference(spec, params, padded);
    const double diff = max_abs_diff(dense.probs, oracle.probs);
    r.worst = std::max(r.worst, diff);
    if (diff > 1e-5) {
      r.pass = false;
      r.detail = "triple " + std::to_string(i) + " diff " + std::to_string(diff);
    }
  }
  return r;
}

// End-to-end analytic vs central finite-difference gradients, run on the
// double instantiation of the same templated code (step 1e-3).
//
// The loss is piecewise smooth: max-pool argmax flips and relu sign changes
// inside the FD interval put a kink between the two evaluation points, where
// the central difference and the (one-sided) analytic gradient legitimately
// disagree by up to the slope jump. The second difference lp + lm - 2*l0
// measures exactly that jump (it is ~l''*step^2 on smooth coordinates), so
// each coordinate gets an error budget of tol plus twice the measured kink.
inline SuiteResult gradient_check_suite(int instances, std::uint64_t seed,
                                        double step = 1e-3, double tol = 1e-4) {
  std::mt19937_64 rng(seed);
  SuiteResult r;
  for (int inst = 0; inst < instances; ++inst) {
    const BranchMode mode = inst % 2 == 0 ? BranchMode::Decimate : BranchMode::ShiftedMax;
    NetworkSpec spec;
    spec.name = "gradcheck";
    spec.mode = mode;
    spec.layers = {LayerSpec::conv(3, 3), LayerSpec::branch_pool(),
                   LayerSpec::conv(3, 4), LayerSpec::head(4)};
    ParamsT<double> params = init_params<double>(spec, rng());
    const TensorT<double> image = [&] {
      TensorT<double> t(1, 8, 12);
      std::uniform_real_distribution<double> dist(0.0, 1.0);
      for (auto& v : t.data) v = dist(rng);
      return t;
    }();

    PixelLabelMap labels;
    labels.height = image.height;
    labels.width = image.width;
    std::uniform_int_distribution<int> ldist(0, 3);
    std::uniform_real_distribution<double> wdist(0.1, 1.0);
    labels.labels.resize(static_cast<std::size_t>(image.height) * image.width);
    labels.weights.resize(labels.labels.size());
    for (std::size_t i = 0; i < labels.labels.size(); ++i) {
      labels.labels[i] = ldist(rng);
      labels.weights[i] = static_cast<float>(wdist(rng));
    }

    auto loss_of = [&](const ParamsT<double>& p) {
      const PaddedImageT<double> pi = pad_for_dense(image, spec, 0.0);
      const DenseOutputT<double> out = forward_dense(spec, p, pi);
      return pixel_cross_entropy(out, labels).first;
    };

    ParamsT<double> grads = make_params<double>(spec);
    {
      const PaddedImageT<double> pi = pad_for_dense(image, spec, 0.0);
      DenseTrace<double> dt = forward_dense_train(spec, params, pi);
      auto [loss, dlogits] = pixel_cross_entropy(dt.out, labels);
      (void)loss;
      backward_dense(spec, params, dt, dlogits, grads);
    }

    const double l0 = loss_of(params);
    for (std::size_t ki = 0; ki < params.kernels.size(); ++ki) {
      auto check = [&](std::vector<double>& pv, const std::vector<double>& gv) {
        for (std::size_t i = 0; i < pv.size(); ++i) {
          const double orig = pv[i];
          pv[i] = orig + step;
          const double lp = loss_of(params);
          pv[i] = orig - step;
          const double lm = loss_of(params);
          pv[i] = orig;
          auto rel_at = [&](double h) {
            pv[i] = orig + h;
            const double hp = loss_of(params);
            pv[i] = orig - h;
            const double hm = loss_of(params);
            pv[i] = orig;
            const double fd = (hp - hm) / (2 * h);
            const double kink = std::abs(hp + hm - 2 * l0) / (2 * h);
            const double denom = std::max({std::abs(fd), std::abs(gv[i]), 1e-2});
            return std::max(0.0, std::abs(fd - gv[i]) - 2 * kink) / denom;
          };
          const double fd = (lp - lm) / (2 * step);
          const double kink = std::abs(lp + lm - 2 * l0) / (2 * step);
          const double denom = std::max({std::abs(fd), std::abs(gv[i]), 1e-2});
          double rel = std::max(0.0, std::abs(fd - gv[i]) - 2 * kink) / denom;
          // a kink whose two sides nearly cancel in the second difference can
          // leak past the budget; shrinking the interval moves it clear, while
          // a genuinely wrong gradient stays wrong at any step
          if (rel > tol) rel = std::min(rel, rel_at(step / 8));
          if (rel > tol) rel = std::min(rel, rel_at(step / 64));
          r.worst = std::max(r.worst, rel);
          if (rel > tol) {
            r.pass = false;
            r.detail = "instance " + std::to_string(inst) + " kernel " +
                       std::to_string(ki) + " rel err " + std::to_string(rel);
          }
        }
      };
      check(params.kernels[ki].weights, grads.kernels[ki].weights);
      check(params.kernels[ki].bias, grads.kernels[ki].bias);
    }
  }
  return r;
}

inline ColumnSeries random_series(std::mt19937_64& rng, int width, int channels) {
  ColumnSeries s;
  s.width = width;
  s.channels = channels;
  s.probs.resize(static_cast<std::size_t>(width) * channels);
  std::uniform_real_distribution<float> dist(0.01f, 1.0f);
  for (int col = 0; col < width; ++col) {
    float sum = 0.0f;
    for (int c = 0; c < channels; ++c) {
      s.at(col, c) = dist(rng);
      sum += s.at(col, c);
    }
    for (int c = 0; c < channels; ++c) s.at(col, c) /= sum;
  }
  return s;
}

// Beam with B >= hypothesis count must reproduce the exhaustive optimum.
inline SuiteResult beam_oracle_suite(int cases, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  SuiteResult r;
  std::uniform_int_distribution<int> wdist(1, 8), cdist(2, 4), mdist(1, 2);
  const std::string alphabet = "abc";
  for (int i = 0; i < cases; ++i) {
    const int width = wdist(rng);
    const int channels = cdist(rng);
    const ColumnSeries s = random_series(rng, width, channels);
    BeamConfig cfg;
    cfg.min_char_width = mdist(rng);
    cfg.beam_width = static_cast<int>(decode_space_size(width, channels)) + 1;
    const std::string alpha = alphabet.substr(0, static_cast<std::size_t>(channels - 1));
    const DecodeResult beam = beam_search(s, cfg, alpha);
    const DecodeResult exact = exhaustive_decode(s, cfg, alpha);
    const double diff = std::abs(beam.score - exact.score);
    r.worst = std::max(r.worst, diff);
    if (beam.transcript != exact.transcript || diff > 1e-9) {
      r.pass = false;
      r.detail = "case " + std::to_string(i) + ": beam '" + beam.transcript +
                 "' vs exact '" + exact.transcript + "', score diff " +
                 std::to_string(diff);
    }
  }
  return r;
}

}  // namespace tao
