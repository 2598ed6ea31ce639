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

#include <algorithm>
#include <numeric>

#include "so3flow/neural/model.hpp"

using namespace so3flow;
using namespace so3flow::neural;

namespace {

PointCloud random_cloud(std::uint64_t seed, Eigen::Index n = 512) {
  Rng rng(seed);
  std::normal_distribution<double> g(0.0, 0.2);
  PointCloud p(n, 3);
  for (auto& x : p.reshaped()) x = g(rng);
  return p;
}

Mat<float> encode(const Model& m, const PointCloud& p) {
  Tape<float> tape;
  return tape.value(encode_points(tape, m, p));
}

Mat<float> latent(const Model& m, const PointCloud& p, std::size_t category) {
  Tape<float> tape;
  return tape.value(fuse(tape, m, semantic_embed(tape, m, category), encode_points(tape, m, p)));
}

template <typename Fn>
void expect_kind(ErrorKind kind, Fn&& fn) {
  try {
    fn();
    FAIL() << "expected " << to_string(kind);
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), kind) << e.what();
  }
}

}  // namespace

TEST(ModelInit, DefaultSizeWithinBudget) {
  const Model m;
  EXPECT_EQ(m.params.total_count(), 173577u);
  EXPECT_LE(m.params.total_count(), kParameterBudget);
}

TEST(ModelInit, DeterministicPerSeed) {
  ModelConfig c;
  c.rng_seed = 9;
  EXPECT_EQ(Model(c).params, Model(c).params);
  ModelConfig d = c;
  d.rng_seed = 10;
  EXPECT_FALSE(Model(c).params == Model(d).params);
}

TEST(ModelInit, BudgetEnforced) {
  ModelConfig c;
  c.hidden = 2048;
  expect_kind(ErrorKind::InvariantViolation, [&] { Model m(c); });
}

TEST(ModelInit, LayoutMismatchRejected) {
  ModelConfig c;
  ModelConfig other = c;
  other.fusion = FusionMode::GeometryOnly;
  expect_kind(ErrorKind::DimMismatch, [&] { Model m(c, init_parameters<float>(other)); });
}

TEST(Encoder, PermutationInvariantExactly) {
  const Model m;
  const PointCloud p = random_cloud(1);
  std::vector<Eigen::Index> perm(512);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), Rng(2));
  PointCloud q(512, 3);
  for (Eigen::Index i = 0; i < 512; ++i) q.row(i) = p.row(perm[static_cast<std::size_t>(i)]);
  EXPECT_EQ(encode(m, p), encode(m, q));
}

TEST(Encoder, ZeroCloudIsBiasPath) {
  const Model m;
  const Mat<float> g = encode(m, PointCloud::Zero(512, 3));
  const auto b1 = m.params.at("encoder.fc1.bias").matrix();
  const auto w2 = m.params.at("encoder.fc2.weight").matrix();
  const auto b2 = m.params.at("encoder.fc2.bias").matrix();
  const Mat<float> h1 = b1.cwiseMax(0.f);
  const Mat<float> expected = (h1 * w2.transpose() + b2).cwiseMax(0.f);
  EXPECT_LT((g - expected).cwiseAbs().maxCoeff(), 1e-6f);
}

TEST(Encoder, RotationSensitive) {
  const Model m;
  const PointCloud p = random_cloud(3);
  const Mat3 r = exp_map(Vec3(0.3, -0.5, 0.9)).matrix();
  const PointCloud q = p * r.transpose();
  EXPECT_GT((encode(m, p) - encode(m, q)).cwiseAbs().maxCoeff(), 1e-3f);
}

TEST(Encoder, WrongPointCount) {
  const Model m;
  expect_kind(ErrorKind::WrongPointCount, [&] { encode(m, random_cloud(4, 511)); });
}

TEST(Semantic, RowsAreStableAndDistinct) {
  const Model m;
  Tape<float> tape;
  const Mat<float> a = tape.value(semantic_embed(tape, m, 2));
  const Mat<float> b = tape.value(semantic_embed(tape, m, 2));
  const Mat<float> c = tape.value(semantic_embed(tape, m, 3));
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
  EXPECT_EQ(a.cols(), 32);
  expect_kind(ErrorKind::UnknownCategory, [&] { semantic_embed(tape, m, 8); });
}

TEST(Film, IdentityModulationReducesToProjection) {
  Model m;
  for (auto& v : m.params.at("film.scale.weight").data) v = 0.f;
  for (auto& v : m.params.at("film.scale.bias").data) v = 1.f;
  for (auto& v : m.params.at("film.shift.weight").data) v = 0.f;
  for (auto& v : m.params.at("film.shift.bias").data) v = 0.f;
  Tape<float> tape;
  Var g = encode_points(tape, m, random_cloud(5));
  Var z = film_fuse(tape, m, semantic_embed(tape, m, 1), g);
  Var direct = dense_relu(tape, m.params, "fusion.proj", g);
  EXPECT_EQ(tape.value(z), tape.value(direct));
}

TEST(Film, ZeroGeometryLeavesShiftOnly) {
  const Model m;
  Tape<float> tape;
  Var s = semantic_embed(tape, m, 4);
  Var g = tape.input(Mat<float>::Zero(1, 128));
  Var z = film_fuse(tape, m, s, g);
  Var expected = dense_relu(tape, m.params, "fusion.proj", dense(tape, m.params, "film.shift", s));
  EXPECT_EQ(tape.value(z), tape.value(expected));
}

TEST(Film, AffineInGeometry) {
  const Model m;
  Tape<float> tape;
  Var s = semantic_embed(tape, m, 0);
  const Mat<float> g1 = Mat<float>::Random(1, 128);
  const Mat<float> g2 = Mat<float>::Random(1, 128);
  const Mat<float> sum = tape.value(film_modulate(tape, m, s, tape.input(g1 + g2)));
  const Mat<float> a = tape.value(film_modulate(tape, m, s, tape.input(g1)));
  const Mat<float> b = tape.value(film_modulate(tape, m, s, tape.input(g2)));
  const Mat<float> shift = tape.value(dense(tape, m.params, "film.shift", s));
  EXPECT_LT((sum - (a + b - shift)).cwiseAbs().maxCoeff(), 1e-4f);
}

TEST(Film, DimMismatch) {
  const Model m;
  Tape<float> tape;
  Var s = semantic_embed(tape, m, 0);
  expect_kind(ErrorKind::DimMismatch, [&] { film_fuse(tape, m, s, tape.input(Mat<float>::Zero(1, 64))); });
  expect_kind(ErrorKind::DimMismatch, [&] { film_fuse(tape, m, tape.input(Mat<float>::Zero(1, 5)), tape.input(Mat<float>::Zero(1, 128))); });
  ModelConfig c;
  c.fusion = FusionMode::Pointwise;
  const Model pw(c);
  expect_kind(ErrorKind::DimMismatch, [&] { film_fuse(tape, pw, s, tape.input(Mat<float>::Zero(1, 128))); });
}

TEST(Fusion, AllModesProduceLatent) {
  for (FusionMode mode : {FusionMode::FiLM, FusionMode::Pointwise, FusionMode::GeometryOnly}) {
    ModelConfig c;
    c.fusion = mode;
    const Model m(c);
    const Mat<float> z = latent(m, random_cloud(6), 2);
    EXPECT_EQ(z.cols(), 128);
    EXPECT_TRUE(z.allFinite());
    EXPECT_EQ(fusion_from_string(to_string(mode)), mode);
  }
}

TEST(Fusion, GeometryOnlyIgnoresCategory) {
  ModelConfig c;
  c.fusion = FusionMode::GeometryOnly;
  const Model m(c);
  const PointCloud p = random_cloud(7);
  EXPECT_EQ(latent(m, p, 0), latent(m, p, 5));
  const Model film;
  EXPECT_NE(latent(film, p, 0), latent(film, p, 5));
}

TEST(VelocityHead, ZeroInitOutputsZero) {
  const Model m;
  Rng rng(8);
  for (int i = 0; i < 10; ++i) {
    Tape<float> tape;
    Var z = tape.input(Mat<float>::Random(1, 128));
    Var v = velocity_head(tape, m, sample_uniform(rng), 0.1 * i, z);
    EXPECT_EQ(tape.value(v), Mat<float>::Zero(1, 3));
  }
}

TEST(VelocityHead, DeterministicAndChecked) {
  Model m;
  for (auto& v : m.params.at("velocity.fc3.weight").data) v = 0.01f;
  const Rotation r = exp_map(Vec3(0.1, 0.2, 0.3));
  const Mat<float> zv = Mat<float>::Random(1, 128);
  Tape<float> a;
  Tape<float> b;
  const Mat<float> va = a.value(velocity_head(a, m, r, 0.4, a.input(zv)));
  const Mat<float> vb = b.value(velocity_head(b, m, r, 0.4, b.input(zv)));
  EXPECT_EQ(va, vb);
  EXPECT_NE(va, Mat<float>::Zero(1, 3));
  expect_kind(ErrorKind::DimMismatch, [&] { velocity_head(a, m, r, 0.4, a.input(Mat<float>::Zero(1, 7))); });
  expect_kind(ErrorKind::TimeOutOfRange, [&] { velocity_head(a, m, r, 1.5, a.input(zv)); });
}

TEST(TimeEmbedding, Values) {
  const Mat<double> e = time_embedding<double>(0.25, 8);
  ASSERT_EQ(e.cols(), 16);
  EXPECT_NEAR(e(0, 0), std::sin(kPi * 0.25), 1e-15);
  EXPECT_NEAR(e(0, 1), std::cos(kPi * 0.25), 1e-15);
  EXPECT_NEAR(e(0, 2), 1.0, 1e-15);
  EXPECT_NEAR(e(0, 3), 0.0, 1e-15);
}

TEST(BoxHead, UntrainedCenterIsCentroidAndSizePositive) {
  const Model m;
  Rng rng(9);
  std::normal_distribution<double> g(0.0, 3.0);
  for (int i = 0; i < 20; ++i) {
    Tape<float> tape;
    const Vec3 c(g(rng), g(rng), g(rng));
    Var z = tape.input(Mat<float>::Random(1, 128) * 10.f);
    const BoxVars box = center_size_head(tape, m, z, c);
    const Mat<float> center = tape.value(box.center);
    EXPECT_EQ(center(0, 0), static_cast<float>(c.x()));
    EXPECT_EQ(center(0, 1), static_cast<float>(c.y()));
    EXPECT_EQ(center(0, 2), static_cast<float>(c.z()));
    EXPECT_TRUE((tape.value(box.size).array() > 0.f).all());
  }
}

TEST(BoxHead, DimMismatch) {
  const Model m;
  Tape<float> tape;
  expect_kind(ErrorKind::DimMismatch, [&] { center_size_head(tape, m, tape.input(Mat<float>::Zero(1, 3)), Vec3::Zero()); });
}

TEST(RegressionHead, OnlyOnRegressionModels) {
  ModelConfig c;
  c.rotation_head = RotationHeadKind::Regression;
  const Model reg(c);
  const Model flow;
  Tape<float> tape;
  Var z = tape.input(Mat<float>::Random(1, 128));
  EXPECT_EQ(tape.value(regression_head(tape, reg, z)).cols(), 9);
  expect_kind(ErrorKind::DimMismatch, [&] { regression_head(tape, flow, z); });
  expect_kind(ErrorKind::DimMismatch, [&] { velocity_head(tape, reg, Rotation(), 0.0, z); });
}

TEST(Model, ForwardBitDeterministic) {
  const Model m;
  const PointCloud p = random_cloud(10);
  EXPECT_EQ(latent(m, p, 3), latent(m, p, 3));
}

TEST(Model, CastRoundTrip) {
  const Model m;
  const auto d = m.cast<double>();
  EXPECT_EQ(d.cast<float>().params, m.params);
}
