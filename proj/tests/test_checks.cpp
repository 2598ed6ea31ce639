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

#include "so3flow/checks.hpp"

using namespace so3flow;
using namespace so3flow::checks;

TEST(Selfcheck, AllSuitesPassOnCleanBuild) {
  const auto results = run_selfcheck();
  ASSERT_EQ(results.size(), 7u);
  double total = 0.0;
  for (const auto& r : results) {
    EXPECT_TRUE(r.passed) << r.name << " worst " << r.worst << " bound " << r.bound;
    EXPECT_GT(r.cases, 0u);
    total += r.seconds;
  }
  EXPECT_LT(total, 60.0);
}

TEST(Selfcheck, OtherSeedsAlsoPass) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    EXPECT_TRUE(check_roundtrip(seed).passed);
    EXPECT_TRUE(check_path_velocity(seed).passed);
    EXPECT_TRUE(check_path_continuity(seed).passed);
    EXPECT_TRUE(check_integrator(seed).passed);
    EXPECT_TRUE(check_haar(seed).passed);
  }
}

TEST(Selfcheck, WideSeriesBranchFailsRoundtrip) {
  const auto r = check_roundtrip(7, 10000, 1e-2);
  EXPECT_FALSE(r.passed);
  EXPECT_GT(r.worst, 1e-9);

  SelfcheckOptions opt;
  opt.small_angle = 1e-2;
  bool any_failed = false;
  for (const auto& s : run_selfcheck(opt)) any_failed = any_failed || !s.passed;
  EXPECT_TRUE(any_failed);
}

TEST(GradientError, RelativeWithFloor) {
  EXPECT_EQ(gradient_error({1.0, 2.0}, {1.0, 2.0}), 0.0);
  EXPECT_NEAR(gradient_error({1.01}, {1.0}), 0.01 / 1.01, 1e-12);
  // tiny entries are judged against a floor tied to the largest derivative
  EXPECT_LT(gradient_error({1.0, 1e-9}, {1.0, 0.0}), 1e-5);
  EXPECT_GT(gradient_error({1.0, 0.5}, {1.0, 0.0}), 0.9);
}
