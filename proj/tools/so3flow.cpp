// Copyright 2026 The so3flow Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// so3flow command line: gen-data, train, eval, ablate, selfcheck.
//
// Exit codes: 0 ok, 1 invariant or selfcheck failure, 2 bad arguments or
// config, 3 I/O failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "so3flow/bench.hpp"
#include "so3flow/checks.hpp"
#include "so3flow/neural/checkpoint.hpp"
#include "so3flow/synthetic.hpp"
#include "so3flow/training.hpp"

namespace fs = std::filesystem;
using namespace so3flow;

namespace {

enum Exit : int { kOk = 0, kFailed = 1, kBadArgs = 2, kIo = 3 };

struct Globals {
  std::optional<std::uint64_t> seed;
  std::string config_file;
  std::string out_dir = ".";
};

bench::RunConfig load_config(const Globals& g) {
  bench::RunConfig cfg;
  if (!g.config_file.empty()) {
    std::ifstream in(g.config_file);
    if (!in) throw Error(ErrorKind::IoError, "cannot read config " + g.config_file);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::BadConfig, std::string("config is not valid JSON: ") + e.what());
    }
    cfg = bench::run_config_from_json(j);
  }
  if (g.seed) {
    cfg.gen.seed = *g.seed;
    cfg.train.seed = *g.seed;
    cfg.model.rng_seed = *g.seed;
  }
  return cfg;
}

std::uint64_t eval_seed(const Globals& g) { return g.seed.value_or(7); }

void write_json(const fs::path& p, const nlohmann::json& j) {
  fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out || !(out << j.dump(2) << '\n')) throw Error(ErrorKind::IoError, "cannot write " + p.string());
}

void print_summary(const bench::EvalSummary& s) {
  std::printf("instances %zu  median_deg %.3f  mean_deg %.3f  mean_shift %.4f  5deg2cm %.4f  5deg5cm %.4f  adds %.4f  ms %.3f\n",
              s.count, s.median_deg, s.mean_deg, s.mean_shift, s.rate_5deg_2cm, s.rate_5deg_5cm, s.mean_adds,
              s.mean_wall_ms);
}

neural::Model train_and_save(const synthetic::Dataset& data, const bench::RunConfig& cfg,
                             const neural::ModelConfig& model_cfg, const fs::path& dir, bool verbose) {
  const auto train = data.split(synthetic::Split::Train);
  auto result = training::train(train, cfg.train, model_cfg, [&](const training::LossRecord& r) {
    if (verbose) {
      std::printf("epoch %zu  rot %.5f  center %.6f  size %.6f  total %.5f\n", r.epoch, r.rot, r.center, r.size,
                  r.total);
      std::fflush(stdout);
    }
  });
  fs::create_directories(dir);
  neural::save_checkpoint(result.model, dir / "checkpoint.json");
  training::write_loss_curve(result.curve, dir / "loss_curve.csv");
  write_json(dir / "train_config.json", training::train_config_to_json(cfg.train));
  return std::move(result.model);
}

int cmd_gen_data(const Globals& g) {
  const auto cfg = load_config(g);
  synthetic::generate_dataset(cfg.gen, g.out_dir);
  std::printf("wrote %zu train + %zu test instances to %s\n", cfg.gen.n_train, cfg.gen.n_test, g.out_dir.c_str());
  return kOk;
}

int cmd_train(const Globals& g, const std::string& data_dir) {
  const auto cfg = load_config(g);
  const auto data = synthetic::read_dataset(data_dir);
  if (cfg.model.n_categories < data.config.categories.size()) {
    throw Error(ErrorKind::BadConfig, "model.n_categories is smaller than the dataset's category count");
  }
  train_and_save(data, cfg, cfg.model, g.out_dir, true);
  std::printf("checkpoint written to %s\n", (fs::path(g.out_dir) / "checkpoint.json").c_str());
  return kOk;
}

int cmd_eval(const Globals& g, const std::string& data_dir, const std::string& checkpoint) {
  const auto cfg = load_config(g);
  const auto data = synthetic::read_dataset(data_dir);
  const auto model = neural::load_checkpoint(checkpoint);
  const auto report = bench::run_eval(model, data, cfg.integrator, eval_seed(g));
  bench::write_report(report, fs::path(g.out_dir) / "eval");
  print_summary(report.summary);
  return kOk;
}

int cmd_ablate(const Globals& g, const std::string& data_dir, const std::string& kind_name) {
  const auto cfg = load_config(g);
  const auto data = synthetic::read_dataset(data_dir);
  const fs::path out = g.out_dir;

  std::map<std::string, neural::Model> cache;
  bench::ModelProvider provide = [&](const std::string& variant, const neural::ModelConfig& mc) -> const neural::Model& {
    if (auto it = cache.find(variant); it != cache.end()) return it->second;
    const fs::path dir = out / "checkpoints" / variant;
    if (fs::exists(dir / "checkpoint.json")) {
      auto m = neural::load_checkpoint(dir / "checkpoint.json");
      if (neural::config_to_json(m.config) != neural::config_to_json(mc)) {
        throw Error(ErrorKind::BadCheckpoint, "cached checkpoint " + dir.string() + " has a different model config");
      }
      std::printf("using cached %s\n", (dir / "checkpoint.json").c_str());
      return cache.emplace(variant, std::move(m)).first->second;
    }
    std::printf("training variant %s\n", variant.c_str());
    std::fflush(stdout);
    return cache.emplace(variant, train_and_save(data, cfg, mc, dir, false)).first->second;
  };

  std::vector<bench::AblationKind> kinds;
  if (kind_name == "all") {
    kinds = {bench::AblationKind::Steps, bench::AblationKind::Scheme, bench::AblationKind::Fusion,
             bench::AblationKind::Representation};
  } else {
    kinds = {bench::ablation_from_string(kind_name)};
  }
  std::vector<std::pair<bench::AblationKind, std::vector<bench::AblationRow>>> tables;
  for (auto k : kinds) {
    tables.emplace_back(k, bench::run_ablation(k, cfg, data, provide, eval_seed(g)));
    for (const auto& r : tables.back().second) {
      std::printf("%-14s %-13s steps %2zu %-5s  median_deg %8.3f  5deg5cm %.4f\n",
                  std::string(to_string(k)).c_str(), r.variant.c_str(), r.n_steps,
                  std::string(to_string(r.scheme)).c_str(), r.summary.median_deg, r.summary.rate_5deg_5cm);
    }
  }
  const fs::path table = out / "ablation.csv";
  fs::create_directories(out);
  std::ofstream f(table, std::ios::binary);
  if (!f || !(f << bench::ablation_to_csv(tables))) throw Error(ErrorKind::IoError, "cannot write " + table.string());
  return kOk;
}

int cmd_selfcheck(const Globals& g, double small_angle) {
  checks::SelfcheckOptions opt;
  opt.seed = eval_seed(g);
  opt.small_angle = small_angle;
  bool ok = true;
  for (const auto& r : checks::run_selfcheck(opt)) {
    std::printf("%s  %-30s worst %.3e  bound %.1e  cases %zu  %.2fs\n", r.passed ? "PASS" : "FAIL", r.name.c_str(),
                r.worst, r.bound, r.cases, r.seconds);
    ok = ok && r.passed;
  }
  return ok ? kOk : kFailed;
}

int exit_code_for(ErrorKind k) {
  switch (k) {
    case ErrorKind::BadConfig:
    case ErrorKind::UnknownKind: return kBadArgs;
    case ErrorKind::IoError:
    case ErrorKind::BadCheckpoint: return kIo;
    default: return kFailed;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"so3flow: SO(3) flow matching for toy category-level pose estimation"};
  app.require_subcommand(1);
  Globals g;
  std::uint64_t seed = 0;
  auto* seed_opt = app.add_option("--seed", seed, "Seed for data, training, init and evaluation");
  app.add_option("--config", g.config_file, "JSON config (sections gen, train, model, integrator)");
  app.add_option("--out", g.out_dir, "Output directory");

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset into --out");

  std::string data_dir;
  auto* train = app.add_subcommand("train", "Train a model on a dataset");
  train->add_option("--data", data_dir, "Dataset directory")->required();

  std::string checkpoint;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on the test split");
  eval->add_option("--data", data_dir, "Dataset directory")->required();
  eval->add_option("--checkpoint", checkpoint, "Checkpoint manifest")->required();

  std::string kind = "all";
  auto* ablate = app.add_subcommand("ablate", "Run ablation sweeps, training variants as needed");
  ablate->add_option("--data", data_dir, "Dataset directory")->required();
  ablate->add_option("--kind", kind, "steps, scheme, fusion, representation or all")
      ->check(CLI::IsMember({"steps", "scheme", "fusion", "representation", "all"}));

  double small_angle = so3_tol::kSmallAngle;
  auto* selfcheck = app.add_subcommand("selfcheck", "Run the numerical invariant suites");
  selfcheck->add_option("--small-angle", small_angle, "exp/log series threshold (fault injection)")
      ->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kBadArgs;
  }
  if (*seed_opt) g.seed = seed;

  try {
    if (*gen) return cmd_gen_data(g);
    if (*train) return cmd_train(g, data_dir);
    if (*eval) return cmd_eval(g, data_dir, checkpoint);
    if (*ablate) return cmd_ablate(g, data_dir, kind);
    if (*selfcheck) return cmd_selfcheck(g, small_angle);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_code_for(e.kind());
  } catch (const fs::filesystem_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kIo;
  } catch (const nlohmann::json::exception& e) {
    std::fprintf(stderr, "error: malformed file: %s\n", e.what());
    return kIo;
  }
  return kBadArgs;
}
