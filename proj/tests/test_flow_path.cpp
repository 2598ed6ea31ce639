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

#include "so3flow/flow_path.hpp"

using namespace so3flow;

namespace {

struct Pair {
  Rotation r0;
  Rotation r1;
};

Pair random_pair(Rng& rng) { return {sample_uniform(rng), sample_uniform(rng)}; }

double dist(const Rotation& a, const Rotation& b) { return geodesic_distance(a, b); }

}  // namespace

TEST(RelativeTangent, Examples) {
  Rng rng(1);
  const Rotation r = sample_uniform(rng);
  EXPECT_LT(relative_tangent(r, r).norm(), 1e-12);
  EXPECT_LT((relative_tangent(Rotation::identity(), exp_map(Vec3(kPi / 2, 0, 0))) - Vec3(kPi / 2, 0, 0)).norm(),
            1e-12);
}

TEST(RelativeTangent, Roundtrip) {
  Rng rng(2);
  for (int i = 0; i < 1000; ++i) {
    const auto [r0, r1] = random_pair(rng);
    const Tangent w = relative_tangent(r0, r1);
    EXPECT_LE(w.norm(), kPi + 1e-12);
    EXPECT_LT(((r0 * exp_map(w)).matrix() - r1.matrix()).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(PathPoint, Endpoints) {
  Rng rng(3);
  for (int i = 0; i < 100; ++i) {
    const auto [r0, r1] = random_pair(rng);
    EXPECT_LT(dist(path_point(r0, r1, 0.0), r0), 1e-9);
    EXPECT_LT(dist(path_point(r0, r1, 0.5), r1), 1e-9);
    EXPECT_LT(dist(path_point(r0, r1, 1.0), r0), 1e-9);
  }
}

TEST(PathPoint, ThreeQuartersExample) {
  const Rotation r = path_point(Rotation::identity(), exp_map(Vec3(0.8, 0, 0)), 0.75);
  EXPECT_LT((r.matrix() - exp_map(Vec3(0.4, 0, 0)).matrix()).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(PathPoint, TimeOutOfRange) {
  const Rotation r;
  for (double t : {-1e-12, 1.0 + 1e-12, std::nan("")}) {
    try {
      path_point(r, r, t);
      FAIL() << t;
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::TimeOutOfRange);
    }
  }
}

TEST(PathPoint, VelocityConsistency) {
  Rng rng(4);
  std::uniform_real_distribution<double> unit(0.0, 1.0 - 1e-5);
  constexpr double h = 1e-5;
  int checked = 0;
  while (checked < 500) {
    const auto [r0, r1] = random_pair(rng);
    const double t = unit(rng);
    if (std::abs(t - 0.5) < 1e-4 || (t < 0.5 && t + h > 0.5)) continue;
    const Tangent w = relative_tangent(r0, r1);
    const Vec3 fd = log_map(path_point(r0, r1, t).inverse() * path_point(r0, r1, t + h)) / h;
    const Vec3 v = target_velocity(t, w);
    EXPECT_LT((fd - v).cwiseAbs().maxCoeff(), 1e-3) << "t " << t;
    ++checked;
  }
}

TEST(PathPoint, ContinuityAtReflection) {
  Rng rng(5);
  constexpr double eps = 1e-6;
  for (int i = 0; i < 500; ++i) {
    const auto [r0, r1] = random_pair(rng);
    const double w = relative_tangent(r0, r1).norm();
    EXPECT_LT(dist(path_point(r0, r1, 0.5 - eps), path_point(r0, r1, 0.5 + eps)), 4 * w * eps + 1e-9);
  }
}

TEST(PathPoint, Geodesy) {
  Rng rng(6);
  std::uniform_real_distribution<double> half(0.0, 0.5);
  for (int i = 0; i < 500; ++i) {
    const auto [r0, r1] = random_pair(rng);
    const double t = half(rng);
    const double w = relative_tangent(r0, r1).norm();
    if (2 * t * w > kPi - 1e-3) continue;
    EXPECT_NEAR(dist(r0, path_point(r0, r1, t)), 2 * t * w, 1e-9);
  }
}

TEST(PathPoint, TimeSymmetry) {
  Rng rng(7);
  std::uniform_real_distribution<double> half(0.0, 0.5);
  for (int i = 0; i < 500; ++i) {
    const auto [r0, r1] = random_pair(rng);
    const double s = half(rng);
    const Mat3 a = path_point(r0, r1, 0.5 - s).matrix();
    const Mat3 b = path_point(r0, r1, 0.5 + s).matrix();
    EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(TargetVelocity, Branches) {
  const Tangent w(0.1, -0.2, 0.3);
  EXPECT_EQ(target_velocity(0.3, w), 2.0 * w);
  EXPECT_EQ(target_velocity(0.7, w), -2.0 * w);
  EXPECT_EQ(target_velocity(0.5, w), 2.0 * w);
  EXPECT_THROW(target_velocity(1.5, w), Error);
  EXPECT_THROW(target_velocity(-0.1, w), Error);
}

TEST(SampleFlow, InvariantsHold) {
  Rng rng(8);
  for (int i = 0; i < 1000; ++i) {
    const Rotation r1 = sample_uniform(rng);
    const FlowSample s = sample_flow(rng, r1);
    ASSERT_GE(s.t, 0.0);
    ASSERT_LE(s.t, 1.0);
    EXPECT_EQ(s.target_v, s.t <= 0.5 ? Tangent(2.0 * s.omega) : Tangent(-2.0 * s.omega));
    EXPECT_LT(((s.r0 * exp_map(s.omega)).matrix() - s.r1.matrix()).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_EQ(s.r1.matrix(), r1.matrix());
    EXPECT_LT(dist(s.r_t, path_point(s.r0, s.r1, s.t)), 1e-12);
  }
}

TEST(SampleFlow, MeanTime) {
  Rng rng(9);
  const Rotation r1;
  double sum = 0.0;
  constexpr int n = 100000;
  for (int i = 0; i < n; ++i) sum += sample_flow(rng, r1).t;
  EXPECT_NEAR(sum / n, 0.5, 0.01);
}

TEST(SampleFlow, DegeneratePair) {
  Rng rng(10);
  const Rotation r = sample_uniform(rng);
  for (double t : {0.0, 0.2, 0.5, 0.8, 1.0}) {
    const FlowSample s = make_flow_sample(r, r, t);
    EXPECT_LT(s.omega.norm(), 1e-12);
    EXPECT_LT(s.target_v.norm(), 1e-12);
    EXPECT_LT(dist(s.r_t, r), 1e-9);
  }
}

TEST(SampleFlow, DeterministicPerSeed) {
  Rng a(11);
  Rng b(11);
  const Rotation r1;
  for (int i = 0; i < 50; ++i) {
    const auto x = sample_flow(a, r1);
    const auto y = sample_flow(b, r1);
    EXPECT_EQ(x.t, y.t);
    EXPECT_EQ(x.r_t.matrix(), y.r_t.matrix());
  }
}
