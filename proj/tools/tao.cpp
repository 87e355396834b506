// Command-line entry points for the dense string recognizer: corpus
// generation, training, inference, evaluation, the dense-vs-patch benchmark,
// the experiment runner, and the oracle selftest.
//
// Exit codes: 0 success, 1 usage, 2 data/runtime error, 3 selftest failure.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "taofcn/checkpoint.hpp"
#include "taofcn/dataset.hpp"
#include "taofcn/decode.hpp"
#include "taofcn/eval.hpp"
#include "taofcn/metrics.hpp"
#include "taofcn/net.hpp"
#include "taofcn/selftest.hpp"
#include "taofcn/train.hpp"

namespace {

std::vector<std::pair<int, int>> parse_sizes(const std::string& arg) {
  std::vector<std::pair<int, int>> sizes;
  std::stringstream ss(arg);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    const auto x = tok.find('x');
    if (x == std::string::npos)
      throw CLI::ValidationError("--sizes", "expected HxW list, got " + tok);
    sizes.emplace_back(std::stoi(tok.substr(0, x)), std::stoi(tok.substr(x + 1)));
  }
  if (sizes.empty()) throw CLI::ValidationError("--sizes", "empty size list");
  return sizes;
}

nlohmann::json decode_to_json(const std::string& sample_id,
                              const tao::DecodeResult& d) {
  nlohmann::json segs = nlohmann::json::array();
  for (const auto& s : d.path.segments) segs.push_back({s.begin, s.end, s.label});
  return {{"sample_id", sample_id},
          {"transcript", d.transcript},
          {"score", d.score},
          {"segments", segs}};
}

int run_selftest() {
  struct Entry {
    const char* name;
    tao::SuiteResult result;
  };
  std::vector<Entry> suites;
  suites.push_back({"patch-equivalence (decimate)",
                    tao::patch_equivalence_suite(tao::BranchMode::Decimate, 5, 11)});
  suites.push_back({"patch-equivalence (shiftedmax)",
                    tao::patch_equivalence_suite(tao::BranchMode::ShiftedMax, 5, 12)});
  suites.push_back({"gradient-check", tao::gradient_check_suite(3, 13)});
  suites.push_back({"beam-vs-exhaustive", tao::beam_oracle_suite(25, 14)});
  bool ok = true;
  for (const auto& e : suites) {
    std::cout << (e.result.pass ? "PASS" : "FAIL") << " " << e.name
              << " (worst " << e.result.worst << ")";
    if (!e.result.pass) std::cout << " - " << e.result.detail;
    std::cout << "\n";
    ok = ok && e.result.pass;
  }
  return ok ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"TAO-FCN handwritten digit-string recognizer"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic corpus");
  std::string gen_out;
  int gen_train = 2000, gen_test = 400;
  std::uint64_t gen_seed = 1;
  double gen_noise = 0.01, gen_touch = 0.1;
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--train", gen_train, "training string count")->required();
  gen->add_option("--test", gen_test, "test string count")->required();
  gen->add_option("--seed", gen_seed, "master seed")->required();
  gen->add_option("--noise", gen_noise, "salt-and-pepper flip probability");
  gen->add_option("--touch-frac", gen_touch, "fraction of touching adjacent pairs");

  // train
  auto* tr = app.add_subcommand("train", "train a model");
  std::string tr_data, tr_spec = "ref", tr_out, tr_mode = "decimate";
  int tr_epochs = 4, tr_batch = 8;
  double tr_lr = 0.05, tr_momentum = 0.9;
  std::uint64_t tr_seed = 1;
  tr->add_option("--data", tr_data, "corpus directory")->required();
  tr->add_option("--spec", tr_spec, "network spec name")->required();
  tr->add_option("--out", tr_out, "checkpoint output path")->required();
  tr->add_option("--epochs", tr_epochs, "epochs")->required();
  tr->add_option("--lr", tr_lr, "learning rate")->required();
  tr->add_option("--seed", tr_seed, "seed")->required();
  tr->add_option("--branch-mode", tr_mode, "decimate|shiftedmax");
  tr->add_option("--momentum", tr_momentum, "SGD momentum");
  tr->add_option("--batch-size", tr_batch, "minibatch size");

  // infer
  auto* inf = app.add_subcommand("infer", "decode one image");
  std::string inf_ckpt, inf_image, inf_dump;
  inf->add_option("--ckpt", inf_ckpt, "checkpoint path")->required();
  inf->add_option("--image", inf_image, "PGM image path")->required();
  inf->add_option("--dump-dense", inf_dump, "write the dense probability map as JSON");

  // eval
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a corpus split");
  std::string ev_ckpt, ev_data, ev_split = "test";
  ev->add_option("--ckpt", ev_ckpt, "checkpoint path")->required();
  ev->add_option("--data", ev_data, "corpus directory")->required();
  ev->add_option("--split", ev_split, "train|test");

  // bench
  auto* be = app.add_subcommand("bench", "dense vs per-patch inference benchmark");
  std::string be_spec = "ref", be_sizes = "32x64,32x160", be_mode = "decimate";
  int be_reps = 3;
  be->add_option("--spec", be_spec, "network spec name")->required();
  be->add_option("--sizes", be_sizes, "comma list of HxW image sizes")->required();
  be->add_option("--reps", be_reps, "repetitions (median reported)")->required();
  be->add_option("--branch-mode", be_mode, "decimate|shiftedmax");

  // experiment
  auto* ex = app.add_subcommand("experiment", "train and evaluate configured models");
  std::string ex_config;
  ex->add_option("--config", ex_config, "experiment config JSON")->required();

  app.add_subcommand("selftest", "run the oracle suites");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      tao::GenParams p;
      p.master_seed = gen_seed;
      p.noise_p = gen_noise;
      p.touch_frac = gen_touch;
      tao::generate_dataset(gen_out, gen_train, gen_test, p);
      std::cout << "wrote " << gen_train << " train / " << gen_test
                << " test samples to " << gen_out << "\n";
    } else if (tr->parsed()) {
      const tao::NetworkSpec spec =
          tao::make_spec(tr_spec, tao::branch_mode_from_string(tr_mode));
      const auto dataset = tao::load_dataset(tr_data, "train");
      tao::TrainConfig cfg;
      cfg.epochs = tr_epochs;
      cfg.learning_rate = tr_lr;
      cfg.momentum = tr_momentum;
      cfg.batch_size = tr_batch;
      cfg.seed = tr_seed;
      const tao::TrainResult res = tao::train(spec, dataset, cfg);
      tao::save_checkpoint(tr_out, spec, res.params, tr_seed);
      res.log.write_csv(tr_out + ".trainlog.csv");
      for (const auto& e : res.log.epochs)
        std::cout << "epoch " << e.epoch << " loss " << e.loss << " val_acc "
                  << e.val_accuracy << " (" << e.seconds << "s)\n";
      if (res.log.diverged) {
        std::cerr << "training diverged; kept last good parameters\n";
        return 2;
      }
    } else if (inf->parsed()) {
      const tao::Checkpoint ck = tao::load_checkpoint(inf_ckpt);
      const tao::Tensor image = tao::load_pgm(inf_image);
      const tao::DenseOutput dense = tao::run_dense(ck.spec, ck.params, image);
      if (!inf_dump.empty()) {
        nlohmann::json jd = {{"channels", dense.probs.channels},
                             {"height", dense.probs.height},
                             {"width", dense.probs.width},
                             {"stride", dense.stride},
                             {"probs", dense.probs.data}};
        std::ofstream out(inf_dump);
        if (!out) throw std::runtime_error("cannot write " + inf_dump);
        out << jd.dump() << "\n";
      }
      const tao::ColumnSeries series = tao::integrate_columns(dense);
      const tao::DecodeResult d = tao::beam_search(series, tao::BeamConfig{});
      std::cout << decode_to_json(inf_image, d).dump() << "\n";
    } else if (ev->parsed()) {
      const tao::Checkpoint ck = tao::load_checkpoint(ev_ckpt);
      const auto samples = tao::load_dataset(ev_data, ev_split);
      const double iso = tao::evaluate_isolated(ck.spec, ck.params, samples);
      const tao::StringEvalResult se =
          tao::evaluate_strings(ck.spec, ck.params, samples);
      std::cout << "metric,value\n";
      std::cout << "isolated_accuracy," << iso << "\n";
      std::cout << "string_cr," << se.aggregate.cr() << "\n";
      std::cout << "string_ar," << se.aggregate.ar() << "\n";
    } else if (be->parsed()) {
      const tao::NetworkSpec spec =
          tao::make_spec(be_spec, tao::branch_mode_from_string(be_mode));
      const tao::Params params = tao::init_params<float>(spec, 42);
      std::cout << "spec,height,width,dense_seconds,patch_seconds,speedup,max_abs_diff,valid\n";
      bool all_valid = true;
      for (const auto& [h, w] : parse_sizes(be_sizes)) {
        const tao::BenchReport r =
            tao::bench_dense_vs_patch(spec, params, h, w, be_reps);
        std::cout << r.spec_name << "," << r.image_h << "," << r.image_w << ","
                  << r.dense_seconds << "," << r.patch_seconds << ","
                  << r.speedup << "," << r.max_abs_diff << ","
                  << (r.valid ? 1 : 0) << "\n";
        if (!r.valid) {
          std::cerr << "BENCH INVALID: dense and patch outputs disagree ("
                    << r.max_abs_diff << " > 1e-5) - correctness bug dominates timing\n";
          all_valid = false;
        }
      }
      if (!all_valid) return 2;
    } else if (ex->parsed()) {
      const tao::ExperimentConfig cfg = tao::load_experiment_config(ex_config);
      const auto rows = tao::run_experiment(cfg);
      std::cout << "model,metric,value\n";
      for (const auto& r : rows)
        std::cout << r.model << "," << r.metric << "," << r.value << "\n";
    } else {
      return run_selftest();
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
