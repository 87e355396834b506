#pragma once

// Per-pixel supervision from segmentation boxes, the cross-entropy training
// loop with backprop through the branch tree, and isolated-character
// evaluation. Only the central core of each character box supervises the
// character class; everything else is background, down-weighted to balance
// classes.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "taofcn/backprop.hpp"
#include "taofcn/dataset.hpp"
#include "taofcn/net.hpp"
#include "taofcn/tensor.hpp"

namespace tao {

struct PixelLabelMap {
  int height = 0, width = 0;
  std::vector<int> labels;     // H*W class ids, background = kNumClasses
  std::vector<float> weights;  // H*W in [0, 1], 0 = ignore

  int label(int y, int x) const { return labels[static_cast<std::size_t>(y) * width + x]; }
  float weight(int y, int x) const { return weights[static_cast<std::size_t>(y) * width + x]; }
};

struct TrainConfig {
  double learning_rate = 0.05;
  double momentum = 0.9;
  int epochs = 4;
  int batch_size = 8;
  std::uint64_t seed = 1;
  double core_fraction = 0.6;
  double background_weight = 0.25;
  double validation_fraction = 0.1;  // last fraction of training strings by index
};

struct EpochStats {
  int epoch = 0;
  double loss = 0.0;
  double val_accuracy = 0.0;  // isolated center-pixel accuracy on the split
  double seconds = 0.0;
};

struct TrainLog {
  std::vector<EpochStats> epochs;
  bool diverged = false;

  void write_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write train log: " + path);
    out << "epoch,loss,val_accuracy,seconds\n";
    for (const auto& e : epochs)
      out << e.epoch << "," << e.loss << "," << e.val_accuracy << "," << e.seconds << "\n";
  }
};

inline PixelLabelMap make_label_map(const StringSample& sample,
                                    double core_fraction,
                                    double background_weight = 0.25) {
  if (!(core_fraction > 0.0 && core_fraction <= 1.0))
    throw std::invalid_argument("make_label_map: core_fraction out of (0, 1]");
  PixelLabelMap m;
  m.height = sample.image.height;
  m.width = sample.image.width;
  m.labels.assign(static_cast<std::size_t>(m.height) * m.width, kNumClasses);
  m.weights.assign(m.labels.size(), static_cast<float>(background_weight));
  for (std::size_t i = 0; i < sample.boxes.size(); ++i) {
    const Box& b = sample.boxes[i];
    const int cls = class_id_of(sample.transcript[i]);
    const int w = b.x1 - b.x0 + 1, h = b.y1 - b.y0 + 1;
    const int cw = std::max(1, static_cast<int>(std::lround(w * core_fraction)));
    const int ch = std::max(1, static_cast<int>(std::lround(h * core_fraction)));
    const int x0 = b.x0 + (w - cw) / 2, y0 = b.y0 + (h - ch) / 2;
    for (int y = y0; y < y0 + ch; ++y)
      for (int x = x0; x < x0 + cw; ++x) {
        m.labels[static_cast<std::size_t>(y) * m.width + x] = cls;
        m.weights[static_cast<std::size_t>(y) * m.width + x] = 1.0f;
      }
  }
  return m;
}

// Weighted mean cross-entropy over the dense grid plus the fused
// softmax-cross-entropy gradient with respect to the head logits.
template <typename T>
std::pair<double, TensorT<T>> pixel_cross_entropy(const DenseOutputT<T>& dense,
                                                  const PixelLabelMap& labels) {
  const TensorT<T>& p = dense.probs;
  const int s = dense.stride;
  if ((labels.height + s - 1) / s != p.height || (labels.width + s - 1) / s != p.width)
    throw std::invalid_argument("pixel_cross_entropy: label grid mismatch");
  double wsum = 0.0;
  for (int gy = 0; gy < p.height; ++gy)
    for (int gx = 0; gx < p.width; ++gx)
      wsum += labels.weight(gy * s, gx * s);
  if (wsum <= 0.0)
    throw std::invalid_argument("pixel_cross_entropy: all positions masked out");
  double loss = 0.0;
  TensorT<T> grad(p.channels, p.height, p.width);
  for (int gy = 0; gy < p.height; ++gy) {
    for (int gx = 0; gx < p.width; ++gx) {
      const double w = labels.weight(gy * s, gx * s);
      if (w == 0.0) continue;
      const int lab = labels.label(gy * s, gx * s);
      const double scale = w / wsum;
      const double pl = std::max(static_cast<double>(p.at(lab, gy, gx)), 1e-30);
      loss -= scale * std::log(pl);
      for (int c = 0; c < p.channels; ++c) {
        const double onehot = c == lab ? 1.0 : 0.0;
        grad.at(c, gy, gx) =
            static_cast<T>(scale * (static_cast<double>(p.at(c, gy, gx)) - onehot));
      }
    }
  }
  return {loss, std::move(grad)};
}

inline double evaluate_isolated(const NetworkSpec& spec, const Params& params,
                                const std::vector<StringSample>& samples) {
  std::int64_t correct = 0, total = 0;
  for (const auto& s : samples) {
    if (s.boxes.empty()) continue;
    const DenseOutput dense = run_dense(spec, params, s.image);
    for (std::size_t i = 0; i < s.boxes.size(); ++i) {
      const int pred = center_pixel_classify(dense, s.boxes[i], s.image.height,
                                             s.image.width);
      correct += pred == class_id_of(s.transcript[i]) ? 1 : 0;
      ++total;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
}

struct TrainResult {
  Params params;
  TrainLog log;
};

inline TrainResult train(const NetworkSpec& spec,
                         const std::vector<StringSample>& dataset,
                         const TrainConfig& cfg) {
  if (dataset.empty()) throw std::invalid_argument("train: empty dataset");
  if (!(cfg.learning_rate > 0.0) && cfg.learning_rate != 0.0)
    throw std::invalid_argument("train: bad learning rate");
  spec.validate();

  const std::size_t n_val = std::min(
      dataset.size() - 1,
      static_cast<std::size_t>(dataset.size() * cfg.validation_fraction));
  const std::size_t n_train = dataset.size() - n_val;
  std::vector<StringSample> val(dataset.begin() + static_cast<std::ptrdiff_t>(n_train),
                                dataset.end());

  TrainResult res;
  res.params = init_params<float>(spec, cfg.seed);
  Params grads = make_params<float>(spec);
  Params velocity = make_params<float>(spec);

  std::vector<PixelLabelMap> label_maps(n_train);
  for (std::size_t i = 0; i < n_train; ++i)
    label_maps[i] = make_label_map(dataset[i], cfg.core_fraction, cfg.background_weight);

  std::mt19937_64 shuffle_rng(splitmix64(cfg.seed ^ 0x5eedull));
  std::vector<std::size_t> order(n_train);
  std::iota(order.begin(), order.end(), std::size_t{0});

  Params last_good = res.params;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_loss = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < n_train; start += cfg.batch_size) {
      const std::size_t stop = std::min(n_train, start + cfg.batch_size);
      grads.fill(0.0f);
      double batch_loss = 0.0;
      for (std::size_t bi = start; bi < stop; ++bi) {
        const StringSample& s = dataset[order[bi]];
        const PaddedImage pi = pad_for_dense(s.image, spec, 0.0f);
        DenseTrace<float> dt = forward_dense_train(spec, res.params, pi);
        auto [loss, dlogits] = pixel_cross_entropy(dt.out, label_maps[order[bi]]);
        batch_loss += loss;
        backward_dense(spec, res.params, dt, dlogits, grads);
      }
      const float inv = 1.0f / static_cast<float>(stop - start);
      epoch_loss += batch_loss;
      seen += stop - start;
      if (!std::isfinite(batch_loss)) {
        res.log.diverged = true;
        res.params = last_good;  // abort with the last good checkpoint
        return res;
      }
      for (std::size_t ki = 0; ki < grads.kernels.size(); ++ki) {
        auto& g = grads.kernels[ki];
        for (auto& v : g.weights) v *= inv;
        for (auto& v : g.bias) v *= inv;
        sgd_update(res.params.kernels[ki].weights, g.weights,
                   static_cast<float>(cfg.learning_rate),
                   static_cast<float>(cfg.momentum), velocity.kernels[ki].weights);
        sgd_update(res.params.kernels[ki].bias, g.bias,
                   static_cast<float>(cfg.learning_rate),
                   static_cast<float>(cfg.momentum), velocity.kernels[ki].bias);
      }
    }
    last_good = res.params;
    EpochStats st;
    st.epoch = epoch;
    st.loss = epoch_loss / static_cast<double>(seen);
    st.val_accuracy = val.empty() ? 0.0 : evaluate_isolated(spec, res.params, val);
    st.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    res.log.epochs.push_back(st);
  }
  return res;
}

}  // namespace tao
