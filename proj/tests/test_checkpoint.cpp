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

#include "so3flow/neural/checkpoint.hpp"

using namespace so3flow;
using namespace so3flow::neural;
namespace fs = std::filesystem;

namespace {

class CheckpointTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("so3flow_ckpt_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
                                        "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path dir_;
};

Model perturbed_model(std::uint64_t seed, FusionMode fusion = FusionMode::FiLM) {
  ModelConfig c;
  c.rng_seed = seed;
  c.fusion = fusion;
  Model m(c);
  // zero-initialized tensors get values so the round trip is not trivially exact
  Rng rng(seed + 1);
  std::normal_distribution<float> g(0.f, 1.f);
  for (auto& v : m.params.at("velocity.fc3.weight").data) v = g(rng);
  m.params.at("center.fc2.bias").data[0] = 1e-30f;
  m.params.at("center.fc2.bias").data[1] = -0.f;
  return m;
}

Mat<float> probe(const Model& m) {
  Tape<float> tape;
  PointCloud p(512, 3);
  for (Eigen::Index i = 0; i < 512; ++i) p.row(i) << std::sin(i * 0.1), std::cos(i * 0.37), 0.001 * i - 0.25;
  Var z = object_latent(tape, m, prepare_encoder_input(p), 1);
  Var v = velocity_head(tape, m, exp_map(Vec3(0.2, 0.4, -0.1)), 0.3, z);
  const BoxVars box = center_size_head(tape, m, z, Vec3(0.1, 0.2, 0.3));
  return tape.value(tape.concat_cols({v, box.center, box.size}));
}

}  // namespace

TEST_F(CheckpointTest, RoundTripIsBitExact) {
  const Model m = perturbed_model(3);
  save_checkpoint(m, dir_ / "model.json");
  EXPECT_TRUE(fs::exists(dir_ / "model.bin"));
  const Model back = load_checkpoint(dir_ / "model.json");
  EXPECT_EQ(back.config, m.config);
  EXPECT_EQ(back.params.rng_seed(), m.params.rng_seed());
  ASSERT_TRUE(back.params.same_layout(m.params));
  for (std::size_t t = 0; t < m.params.tensor_count(); ++t) {
    const auto& a = m.params.at(t).data;
    const auto& b = back.params.at(t).data;
    ASSERT_EQ(std::memcmp(a.data(), b.data(), a.size() * sizeof(float)), 0) << m.params.entries()[t].name;
  }
  EXPECT_EQ(probe(back), probe(m));
}

TEST_F(CheckpointTest, BlobSizeMatchesParameterCount) {
  const Model m = perturbed_model(4, FusionMode::Pointwise);
  save_checkpoint(m, dir_ / "model.json");
  EXPECT_EQ(fs::file_size(dir_ / "model.bin"), 4 * m.params.total_count());
  EXPECT_EQ(load_checkpoint(dir_ / "model.json").config.fusion, FusionMode::Pointwise);
}

TEST_F(CheckpointTest, ConfigJsonRoundTrip) {
  ModelConfig c;
  c.d_s = 16;
  c.n_categories = 3;
  c.rotation_head = RotationHeadKind::Regression;
  c.rng_seed = 123456789012345ull;
  EXPECT_EQ(config_from_json(config_to_json(c)), c);
}

TEST_F(CheckpointTest, TruncatedBlobRejected) {
  save_checkpoint(perturbed_model(5), dir_ / "model.json");
  fs::resize_file(dir_ / "model.bin", fs::file_size(dir_ / "model.bin") - 4);
  try {
    load_checkpoint(dir_ / "model.json");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::BadCheckpoint);
  }
}

TEST_F(CheckpointTest, TrailingBytesRejected) {
  save_checkpoint(perturbed_model(6), dir_ / "model.json");
  std::ofstream(dir_ / "model.bin", std::ios::binary | std::ios::app) << "xxxx";
  EXPECT_THROW(load_checkpoint(dir_ / "model.json"), Error);
}

TEST_F(CheckpointTest, GarbageManifestRejected) {
  std::ofstream(dir_ / "model.json") << "{not json";
  try {
    load_checkpoint(dir_ / "model.json");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::BadCheckpoint);
  }
  std::ofstream(dir_ / "other.json") << R"({"format": "something-else"})";
  EXPECT_THROW(load_checkpoint(dir_ / "other.json"), Error);
}

TEST_F(CheckpointTest, MissingFilesAreIoErrors) {
  try {
    load_checkpoint(dir_ / "absent.json");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::IoError);
  }
  save_checkpoint(perturbed_model(7), dir_ / "model.json");
  fs::remove(dir_ / "model.bin");
  try {
    load_checkpoint(dir_ / "model.json");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::IoError);
  }
}
