#pragma once

// String-level evaluation, the dense-vs-patch inference benchmark, and the
// end-to-end experiment runner. Benchmark reports are only valid when the
// dense and per-patch outputs agree; correctness gates performance.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "taofcn/checkpoint.hpp"
#include "taofcn/dataset.hpp"
#include "taofcn/decode.hpp"
#include "taofcn/metrics.hpp"
#include "taofcn/net.hpp"
#include "taofcn/train.hpp"

namespace tao {

struct StringEvalResult {
  AggregateScore aggregate;
  std::vector<DecodeResult> decodes;  // one per sample, in order
};

inline StringEvalResult evaluate_strings(const NetworkSpec& spec,
                                         const Params& params,
                                         const std::vector<StringSample>& samples,
                                         const BeamConfig& cfg = {}) {
  StringEvalResult r;
  for (const auto& s : samples) {
    const DenseOutput dense = run_dense(spec, params, s.image);
    const ColumnSeries series = integrate_columns(dense);
    DecodeResult d = beam_search(series, cfg);
    r.aggregate.add(cr_ar(s.transcript, d.transcript).counts);
    r.decodes.push_back(std::move(d));
  }
  return r;
}

// ---------------------------------------------------------------------------
// Dense vs naive per-patch benchmark

struct BenchReport {
  std::string spec_name;
  int image_h = 0, image_w = 0;
  double dense_seconds = 0.0;   // median over repetitions
  double patch_seconds = 0.0;
  double speedup = 0.0;
  double max_abs_diff = 0.0;
  bool valid = false;  // outputs agreed within 1e-5
};

// Loops forward_patch over every output grid position of the padded image.
inline DenseOutput naive_patch_inference(const NetworkSpec& spec,
                                         const Params& params,
                                         const PaddedImage& image) {
  const PatchNetSpec pnet = extract_patch_cnn(spec);
  const int r = pnet.patch_side;
  const FieldInfo f = receptive_field(spec);
  DenseOutput out;
  out.stride = image.stride;
  out.probs = Tensor(spec.num_channels(), image.grid_h, image.grid_w);
  Tensor patch(image.tensor.channels, r, r);
  for (int gy = 0; gy < image.grid_h; ++gy) {
    for (int gx = 0; gx < image.grid_w; ++gx) {
      const int y0 = gy * f.stride, x0 = gx * f.stride;
      for (int c = 0; c < image.tensor.channels; ++c)
        for (int y = 0; y < r; ++y)
          for (int x = 0; x < r; ++x)
            patch.at(c, y, x) = image.tensor.at(c, y0 + y, x0 + x);
      const std::vector<float> v = forward_patch(pnet, params, patch);
      for (int c = 0; c < spec.num_channels(); ++c)
        out.probs.at(c, gy, gx) = v[static_cast<std::size_t>(c)];
    }
  }
  return out;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b))
    throw std::invalid_argument("max_abs_diff: shape mismatch " + a.shape_str() +
                                " vs " + b.shape_str());
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(static_cast<double>(a.data[i]) - b.data[i]));
  return m;
}

inline BenchReport bench_dense_vs_patch(const NetworkSpec& spec,
                                        const Params& params, int image_h,
                                        int image_w, int reps,
                                        std::uint64_t seed = 7) {
  for (const auto& l : spec.layers)
    if (l.kind == LayerKind::StridedPool)
      throw std::invalid_argument("bench: spec must not use strided pools");
  BenchReport rep;
  rep.spec_name = spec.name;
  rep.image_h = image_h;
  rep.image_w = image_w;

  Tensor image(1, image_h, image_w);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> dist(0.0f, 1.0f);
  for (auto& v : image.data) v = dist(rng);
  const PaddedImage padded = pad_for_dense(image, spec, 0.0f);

  const DenseOutput dense = forward_dense(spec, params, padded);
  const DenseOutput patched = naive_patch_inference(spec, params, padded);
  rep.max_abs_diff = max_abs_diff(dense.probs, patched.probs);
  rep.valid = rep.max_abs_diff <= 1e-5;
  if (!rep.valid) return rep;  // timing a wrong answer is meaningless

  auto median_time = [&](auto&& fn) {
    std::vector<double> times;
    for (int i = 0; i < reps; ++i) {
      const auto t0 = std::chrono::steady_clock::now();
      fn();
      times.push_back(
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    }
    std::sort(times.begin(), times.end());
    return times[times.size() / 2];
  };
  rep.dense_seconds = median_time([&] { forward_dense(spec, params, padded); });
  rep.patch_seconds = median_time([&] { naive_patch_inference(spec, params, padded); });
  rep.speedup = rep.patch_seconds / rep.dense_seconds;
  return rep;
}

// ---------------------------------------------------------------------------
// Experiment runner: trains each configured model on the generated corpus,
// reports isolated accuracy plus string CR/AR, one CSV row per (model, metric).

struct ExperimentConfig {
  std::string data_dir;
  std::string out_dir;
  TrainConfig train;
  BeamConfig beam;
  struct Model {
    std::string name;       // CSV label
    std::string spec_name;  // registry name
    BranchMode mode = BranchMode::Decimate;
  };
  std::vector<Model> models;
};

inline ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open experiment config: " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error("malformed experiment config: " + std::string(e.what()));
  }
  ExperimentConfig c;
  c.data_dir = j.at("data_dir").get<std::string>();
  c.out_dir = j.at("out_dir").get<std::string>();
  c.train.epochs = j.value("epochs", c.train.epochs);
  c.train.learning_rate = j.value("learning_rate", c.train.learning_rate);
  c.train.momentum = j.value("momentum", c.train.momentum);
  c.train.batch_size = j.value("batch_size", c.train.batch_size);
  c.train.seed = j.value("seed", c.train.seed);
  c.train.core_fraction = j.value("core_fraction", c.train.core_fraction);
  c.train.background_weight = j.value("background_weight", c.train.background_weight);
  c.beam.beam_width = j.value("beam_width", c.beam.beam_width);
  c.beam.min_char_width = j.value("min_char_width", c.beam.min_char_width);
  for (const auto& jm : j.at("models")) {
    ExperimentConfig::Model m;
    m.name = jm.at("name").get<std::string>();
    m.spec_name = jm.at("spec").get<std::string>();
    m.mode = branch_mode_from_string(jm.value("branch_mode", "decimate"));
    c.models.push_back(std::move(m));
  }
  return c;
}

struct ExperimentRow {
  std::string model;
  std::string metric;
  double value;
};

inline std::vector<ExperimentRow> run_experiment(const ExperimentConfig& cfg) {
  namespace fs = std::filesystem;
  std::vector<StringSample> trainset, testset;
  try {
    trainset = load_dataset(cfg.data_dir, "train");
    testset = load_dataset(cfg.data_dir, "test");
  } catch (const std::exception& e) {
    throw std::runtime_error(std::string("experiment data loading failed: ") + e.what());
  }
  fs::create_directories(cfg.out_dir);
  std::vector<ExperimentRow> rows;
  for (const auto& m : cfg.models) {
    const NetworkSpec spec = make_spec(m.spec_name, m.mode);
    TrainResult tr;
    try {
      tr = train(spec, trainset, cfg.train);
    } catch (const std::exception& e) {
      throw std::runtime_error("experiment training failed for model " + m.name +
                               ": " + e.what());
    }
    save_checkpoint((fs::path(cfg.out_dir) / (m.name + ".ckpt")).string(), spec,
                    tr.params, cfg.train.seed);
    tr.log.write_csv((fs::path(cfg.out_dir) / (m.name + "_trainlog.csv")).string());
    const double iso = evaluate_isolated(spec, tr.params, testset);
    const StringEvalResult se = evaluate_strings(spec, tr.params, testset, cfg.beam);
    rows.push_back({m.name, "isolated_accuracy", iso});
    rows.push_back({m.name, "string_cr", se.aggregate.cr()});
    rows.push_back({m.name, "string_ar", se.aggregate.ar()});
    rows.push_back({m.name, "diverged", tr.log.diverged ? 1.0 : 0.0});
  }
  std::ofstream csv((fs::path(cfg.out_dir) / "metrics.csv").string());
  csv << "model,metric,value\n";
  for (const auto& r : rows)
    csv << r.model << "," << r.metric << "," << r.value << "\n";
  return rows;
}

}  // namespace tao
