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

// Reflected geodesic path on SO(3). The path leaves r0 along the geodesic with
// body-frame velocity +2w, reaches r1 at the reflection time 0.5, and retraces
// with -2w back to r0 at t = 1:
//
//   R(t) = r0 exp(2t w)          t <= 0.5
//   R(t) = r1 exp(-(2t - 1) w)   t >  0.5,      w = log(r0^-1 r1).

#pragma once

#include <random>

#include "so3flow/so3.hpp"

namespace so3flow {

inline constexpr double kReflectionTime = 0.5;

/// One supervised training tuple drawn on the reflected path.
struct FlowSample {
  Rotation r_t;
  double t = 0.0;
  Tangent target_v = Tangent::Zero();
  Tangent omega = Tangent::Zero();
  Rotation r0;
  Rotation r1;
};

namespace detail {
inline void check_time(double t) {
  if (!(t >= 0.0 && t <= 1.0)) throw Error(ErrorKind::TimeOutOfRange, "flow time must lie in [0, 1]");
}
}  // namespace detail

inline Tangent relative_tangent(const Rotation& r0, const Rotation& r1) {
  return log_map(r0.inverse() * r1);
}

inline Rotation path_point(const Rotation& r0, const Rotation& r1, double t) {
  detail::check_time(t);
  const Tangent omega = relative_tangent(r0, r1);
  if (t <= kReflectionTime) return r0 * exp_map(2.0 * t * omega);
  return r1 * exp_map(-(2.0 * t - 1.0) * omega);
}

/// Piecewise-constant body-frame velocity; t = 0.5 belongs to the +2w branch.
inline Tangent target_velocity(double t, const Tangent& omega) {
  detail::check_time(t);
  return t <= kReflectionTime ? Tangent(2.0 * omega) : Tangent(-2.0 * omega);
}

inline FlowSample make_flow_sample(const Rotation& r0, const Rotation& r1, double t) {
  FlowSample s;
  s.r0 = r0;
  s.r1 = r1;
  s.t = t;
  s.omega = relative_tangent(r0, r1);
  s.r_t = path_point(r0, r1, t);
  s.target_v = target_velocity(t, s.omega);
  return s;
}

/// Draws r0 from the Haar measure and t ~ U[0, 1].
inline FlowSample sample_flow(Rng& rng, const Rotation& r1) {
  const Rotation r0 = sample_uniform(rng);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  return make_flow_sample(r0, r1, unit(rng));
}

}  // namespace so3flow
