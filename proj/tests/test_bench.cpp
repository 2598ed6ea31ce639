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

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <map>

#include "so3flow/bench.hpp"

using namespace so3flow;
using namespace so3flow::bench;
namespace fs = std::filesystem;

namespace {

synthetic::Dataset tiny_dataset() {
  synthetic::GenConfig g;
  g.n_train = 8;
  g.n_test = 6;
  g.n_points = 128;
  return synthetic::synthesize_dataset(g);
}

EvalReport sample_report() {
  EvalReport r;
  r.records = {make_record(3, 0, 4.0, 0.01, 0.02, 1.5), make_record(1, 1, 4.9, 0.03, 0.1 + 0.2, 2.25),
               make_record(7, 2, 90.0, 0.001, 0.5, 0.125)};
  r.summary = summarize(r.records);
  return r;
}

}  // namespace

TEST(Metrics, Degrees) {
  Rng rng(1);
  const Rotation r = sample_uniform(rng);
  const Rotation q = sample_uniform(rng);
  EXPECT_NEAR(metric_deg(r, r), 0.0, 1e-9);
  EXPECT_NEAR(metric_deg(Rotation(), exp_map(Vec3(kPi / 2, 0, 0))), 90.0, 1e-10);
  EXPECT_NEAR(metric_deg(r, q), metric_deg(q, r), 1e-10);
  EXPECT_LE(metric_deg(Rotation(), exp_map(Vec3(kPi, 0, 0))), 180.0);
}

TEST(Metrics, Shift) {
  EXPECT_EQ(metric_shift(Vec3(1, 2, 3), Vec3(1, 2, 3)), 0.0);
  EXPECT_NEAR(metric_shift(Vec3(0.03, 0, 0.04), Vec3::Zero()), 0.05, 1e-15);
  EXPECT_GE(metric_shift(Vec3(-1, 0, 0), Vec3(2, 0, 0)), 0.0);
}

TEST(Metrics, AddsZeroAtGroundTruthForEveryKind) {
  Rng rng(2);
  for (auto k : synthetic::kAllShapeKinds) {
    const PointCloud c = synthetic::reference_cloud(k, 1.0, 256);
    const Pose p{sample_uniform(rng), Vec3(0.1, 0.2, -0.1)};
    EXPECT_EQ(metric_adds(p, p, c), 0.0) << synthetic::to_string(k);
  }
}

TEST(Metrics, AddsBoundedByTranslation) {
  Rng rng(3);
  const PointCloud c = synthetic::reference_cloud(synthetic::ShapeKind::LBracket, 1.0, 256);
  for (double d : {0.001, 0.01, 0.1, 0.5}) {
    const Pose gt{sample_uniform(rng), Vec3::Zero()};
    const Pose pred{gt.rotation, Vec3(d, 0, 0)};
    EXPECT_LE(metric_adds(pred, gt, c), d + 1e-12);
  }
  EXPECT_THROW(metric_adds(Pose{}, Pose{}, PointCloud(0, 3)), Error);
}

TEST(Metrics, AddsForgivesSymmetryButNotAsymmetry) {
  const PointCloud cyl = synthetic::reference_cloud(synthetic::ShapeKind::SymmetricCylinder, 1.0, 512);
  const double spacing = mean_nn_spacing(cyl);
  const Pose gt{};
  const Pose spun{exp_map(Vec3(0, 0, 2.0)), Vec3::Zero()};
  EXPECT_GT(metric_deg(spun.rotation, gt.rotation), 100.0);
  EXPECT_LT(metric_adds(spun, gt, cyl), 2.0 * spacing);

  const PointCloud box = synthetic::reference_cloud(synthetic::ShapeKind::AsymmetricBox, 1.0, 512);
  EXPECT_GT(metric_adds(spun, gt, box), 2.0 * mean_nn_spacing(box));
}

TEST(Records, SuccessThresholdsNest) {
  EXPECT_TRUE(make_record(0, 0, 4.99, 0.019, 0, 0).success_5deg_2cm);
  EXPECT_FALSE(make_record(0, 0, 5.0, 0.0, 0, 0).success_5deg_5cm);
  const auto mid = make_record(0, 0, 1.0, 0.03, 0, 0);
  EXPECT_FALSE(mid.success_5deg_2cm);
  EXPECT_TRUE(mid.success_5deg_5cm);
  EXPECT_FALSE(make_record(0, 0, 1.0, 0.05, 0, 0).success_5deg_5cm);
}

TEST(Records, SummaryValues) {
  const auto r = sample_report();
  EXPECT_EQ(r.summary.count, 3u);
  EXPECT_DOUBLE_EQ(r.summary.median_deg, 4.9);
  EXPECT_DOUBLE_EQ(r.summary.mean_deg, (4.0 + 4.9 + 90.0) / 3.0);
  EXPECT_DOUBLE_EQ(r.summary.rate_5deg_2cm, 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(r.summary.rate_5deg_5cm, 2.0 / 3.0);
  EXPECT_EQ(median({}), 0.0);
  EXPECT_EQ(median({4.0, 1.0, 3.0, 2.0}), 2.5);
}

TEST(Records, ValidationCatchesBrokenInvariants) {
  auto expect_violation = [](EvalReport r) {
    try {
      validate(r);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::InvariantViolation);
    }
  };
  EXPECT_NO_THROW(validate(sample_report()));
  auto r = sample_report();
  r.records[0].success_5deg_5cm = false;
  expect_violation(r);
  r = sample_report();
  r.records[1].deg_error = 181.0;
  expect_violation(r);
  r = sample_report();
  r.summary.rate_5deg_2cm = 0.9;
  expect_violation(r);
  r = sample_report();
  r.summary.count = 4;
  expect_violation(r);
}

TEST(Reports, WriteReadRoundTripIsExact) {
  const fs::path stem = fs::temp_directory_path() / "so3flow_report_rt" / "eval";
  const auto r = sample_report();
  write_report(r, stem);
  EXPECT_EQ(read_report(stem), r);
  fs::remove_all(stem.parent_path());
}

TEST(Reports, WriteRefusesInvalidReport) {
  auto r = sample_report();
  r.records[0].success_5deg_5cm = false;
  EXPECT_THROW(write_report(r, fs::temp_directory_path() / "so3flow_never"), Error);
}

TEST(Reports, MalformedCsvIsIoError) {
  EXPECT_THROW(records_from_csv("nope\n"), Error);
  const std::string header(kRecordHeader);
  EXPECT_THROW(records_from_csv(header + "\n1,2,3\n"), Error);
  EXPECT_THROW(records_from_csv(header + "\n1,0,x,0,0,0,0,0\n"), Error);
  EXPECT_THROW(records_from_csv(header + "\n1,0,1,0,2,0,0,0\n"), Error);
}

TEST(RunEval, RowsDeterminismAndOrder) {
  const auto data = tiny_dataset();
  neural::Model m;
  Rng init(4);
  std::normal_distribution<float> g(0.f, 0.05f);
  for (auto& v : m.params.at("velocity.fc3.weight").data) v = g(init);
  IntegratorConfig cfg;
  cfg.init_mode = InitMode::UniformRandom;
  const auto a = run_eval(m, data, cfg, 7);
  const auto b = run_eval(m, data, cfg, 7);
  ASSERT_EQ(a.records.size(), 6u);
  EXPECT_TRUE(same_metrics(a, b));
  EXPECT_TRUE(std::is_sorted(a.records.begin(), a.records.end(),
                             [](const auto& x, const auto& y) { return x.instance_id < y.instance_id; }));
  EXPECT_LE(a.summary.rate_5deg_2cm, a.summary.rate_5deg_5cm);
  for (const auto& r : a.records) EXPECT_GT(r.wall_ms, 0.0);
  const auto c = run_eval(m, data, cfg, 8);
  EXPECT_FALSE(same_metrics(a, c));
}

TEST(RunEval, UntrainedModelMeasuresIdentityGuess) {
  const auto data = tiny_dataset();
  const neural::Model m;
  const auto r = run_eval(m, data, IntegratorConfig{}, 7);
  const auto test = data.split(synthetic::Split::Test);
  for (std::size_t i = 0; i < test.size(); ++i) {
    EXPECT_NEAR(r.records[i].deg_error, metric_deg(Rotation(), test[i]->gt_rotation), 1e-9);
  }
}

TEST(RunEval, RandomStartsDoNotReplayGroundTruthDraws) {
  // evaluation seed equal to the generator seed must still give random starts
  synthetic::GenConfig g;
  g.n_train = 1;
  g.n_test = 40;
  g.n_points = 64;
  const auto data = synthetic::synthesize_dataset(g);
  IntegratorConfig cfg;
  cfg.init_mode = InitMode::UniformRandom;
  const auto r = run_eval(neural::Model(), data, cfg, g.seed);
  EXPECT_GT(r.summary.median_deg, 60.0);
  for (const auto& rec : r.records) EXPECT_GT(rec.deg_error, 1.0);
}

TEST(RunConfigTest, DefaultsAndRoundTrip) {
  const RunConfig c = run_config_from_json(nlohmann::json::object());
  EXPECT_EQ(c.gen.n_train, 2000u);
  EXPECT_EQ(c.train.epochs, 60u);
  EXPECT_EQ(c.integrator.n_steps, 5u);
  RunConfig d;
  d.gen.n_test = 3;
  d.train.batch_size = 5;
  d.model.fusion = neural::FusionMode::Pointwise;
  d.integrator.scheme = Scheme::Euler;
  d.integrator.n_hypotheses = 8;
  d.integrator.init_mode = InitMode::UniformRandom;
  EXPECT_EQ(run_config_to_json(run_config_from_json(run_config_to_json(d))), run_config_to_json(d));
}

TEST(RunConfigTest, RejectsBadInput) {
  auto expect_bad = [](const char* text) {
    try {
      run_config_from_json(nlohmann::json::parse(text));
      FAIL() << text;
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::BadConfig) << text;
    }
  };
  expect_bad(R"({"trian": {}})");
  expect_bad(R"({"train": {"epoch": 3}})");
  expect_bad(R"({"train": {"learning_rate": -1}})");
  expect_bad(R"({"train": {"epochs": "many"}})");
  expect_bad(R"({"gen": {"categories": ["torus"]}})");
  expect_bad(R"({"gen": {"n_train": 0}})");
  expect_bad(R"({"integrator": {"init_mode": "given"}})");
  expect_bad(R"({"integrator": {"scheme": "rk4"}})");
  expect_bad(R"({"model": {"fusion": "attention"}})");
  expect_bad(R"({"model": {"n_categories": 2}})");
  expect_bad(R"([1, 2])");
}

TEST(Ablation, SweepsOnTinyData) {
  const auto data = tiny_dataset();
  RunConfig base;
  base.train.epochs = 1;
  std::map<std::string, neural::Model> cache;
  std::vector<std::string> trained;
  const ModelProvider provide = [&](const std::string& v, const neural::ModelConfig& mc) -> const neural::Model& {
    if (auto it = cache.find(v); it != cache.end()) return it->second;
    trained.push_back(v);
    return cache.emplace(v, training::train(data.split(synthetic::Split::Train), base.train, mc).model).first->second;
  };

  std::vector<std::pair<AblationKind, std::vector<AblationRow>>> tables;
  for (auto k : {AblationKind::Steps, AblationKind::Scheme, AblationKind::Fusion, AblationKind::Representation}) {
    tables.emplace_back(k, run_ablation(k, base, data, provide, 7));
    EXPECT_EQ(ablation_from_string(to_string(k)), k);
  }
  EXPECT_EQ(tables[0].second.size(), 5u);
  EXPECT_EQ(tables[1].second.size(), 10u);
  ASSERT_EQ(tables[2].second.size(), 3u);
  EXPECT_EQ(tables[2].second[0].variant, "geometry");
  EXPECT_EQ(tables[3].second[0].variant, "regression");
  EXPECT_EQ(trained, (std::vector<std::string>{"film", "geometry", "pointwise", "regression"}));
  for (const auto& [k, rows] : tables) {
    for (const auto& r : rows) {
      EXPECT_EQ(r.summary.count, 6u);
      EXPECT_TRUE(std::isfinite(r.summary.mean_deg));
    }
  }
  EXPECT_EQ(ablation_from_csv(ablation_to_csv(tables)), tables);
  EXPECT_THROW(ablation_from_string("everything"), Error);
}
