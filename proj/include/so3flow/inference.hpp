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

// Rotation recovery by integrating dR/dt = R hat(f(R, t)) on SO(3).
//
// Heun on the group:
//   w_k   = f(R_k, t_k)
//   w_k+1 = f(R_k exp(dt w_k), t_k + dt)
//   R_k+1 = R_k exp(dt/2 (w_k + w_k+1))
//
// The default interval is [0, 0.5]: the reflected path reaches its target at
// t = 0.5, so five steps give dt = 0.1.

#pragma once

#include <algorithm>
#include <chrono>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "so3flow/neural/model.hpp"
#include "so3flow/neural/point_sampling.hpp"
#include "so3flow/so3.hpp"

namespace so3flow {

enum class Scheme { RK2, Euler };
enum class InitMode { Identity, UniformRandom, Given };

constexpr std::string_view to_string(Scheme s) { return s == Scheme::RK2 ? "rk2" : "euler"; }

constexpr std::string_view to_string(InitMode m) {
  switch (m) {
    case InitMode::Identity: return "identity";
    case InitMode::UniformRandom: return "uniform";
    case InitMode::Given: return "given";
  }
  return "identity";
}

inline Scheme scheme_from_string(std::string_view s) {
  if (s == "rk2") return Scheme::RK2;
  if (s == "euler") return Scheme::Euler;
  throw Error(ErrorKind::BadConfig, "unknown scheme " + std::string(s));
}

inline InitMode init_mode_from_string(std::string_view s) {
  if (s == "identity") return InitMode::Identity;
  if (s == "uniform") return InitMode::UniformRandom;
  if (s == "given") return InitMode::Given;
  throw Error(ErrorKind::BadConfig, "unknown init mode " + std::string(s));
}

struct IntegratorConfig {
  std::size_t n_steps = 5;
  double t_start = 0.0;
  double t_end = 0.5;
  Scheme scheme = Scheme::RK2;
  std::size_t n_hypotheses = 1;
  InitMode init_mode = InitMode::Identity;
  Rotation given;  // start rotation for InitMode::Given

  void validate() const {
    if (n_steps < 1) throw Error(ErrorKind::BadConfig, "n_steps must be >= 1");
    if (!(t_start >= 0.0 && t_start < t_end && t_end <= 1.0)) {
      throw Error(ErrorKind::BadConfig, "need 0 <= t_start < t_end <= 1");
    }
    if (n_hypotheses < 1) throw Error(ErrorKind::BadConfig, "n_hypotheses must be >= 1");
  }
};

namespace detail {
template <typename Field>
Tangent eval_field(Field& field, const Rotation& r, double t) {
  const Tangent w = field(r, t);
  if (!w.allFinite()) throw Error(ErrorKind::FieldEvalFailure, "velocity field returned a non-finite value");
  return w;
}
}  // namespace detail

/// `field(R, t)` returns the body-frame angular velocity.
template <typename Field>
Rotation rk2_step(const Rotation& r, double t, double dt, Field&& field) {
  const Tangent w0 = detail::eval_field(field, r, t);
  const Rotation provisional = r * exp_map(dt * w0);
  const Tangent w1 = detail::eval_field(field, provisional, t + dt);
  return reproject_if_drifted((r * exp_map(0.5 * dt * (w0 + w1))).matrix());
}

template <typename Field>
Rotation euler_step(const Rotation& r, double t, double dt, Field&& field) {
  const Tangent w0 = detail::eval_field(field, r, t);
  return reproject_if_drifted((r * exp_map(dt * w0)).matrix());
}

template <typename Field>
Rotation integrate(const Rotation& r0, Field&& field, const IntegratorConfig& cfg) {
  cfg.validate();
  const double span = cfg.t_end - cfg.t_start;
  const double dt = span / static_cast<double>(cfg.n_steps);
  Rotation r = r0;
  for (std::size_t k = 0; k < cfg.n_steps; ++k) {
    const double t = cfg.t_start + span * static_cast<double>(k) / static_cast<double>(cfg.n_steps);
    // keep the second RK2 evaluation inside [t_start, t_end] despite rounding
    auto clamped = [&](const Rotation& x, double tt) { return field(x, std::min(tt, cfg.t_end)); };
    r = cfg.scheme == Scheme::RK2 ? rk2_step(r, t, dt, clamped) : euler_step(r, t, dt, clamped);
  }
  return r;
}

/// Entrywise mean projected back onto SO(3).
inline Rotation chordal_mean(std::span<const Rotation> rs) {
  if (rs.empty()) throw Error(ErrorKind::DimMismatch, "chordal mean of nothing");
  Mat3 acc = Mat3::Zero();
  for (const auto& r : rs) acc += r.matrix();
  return project_to_rotation(acc / static_cast<double>(rs.size()));
}

/// Learned field for a fixed object latent.
class LatentVelocityField {
 public:
  LatentVelocityField(const neural::Model& model, neural::Mat<float> latent)
      : model_(&model), latent_(std::move(latent)) {}

  Tangent operator()(const Rotation& r, double t) const {
    neural::Tape<float> tape;
    const neural::Var z = tape.input(latent_);
    return neural::to_vec3(tape.value(neural::velocity_head(tape, *model_, r, t, z)));
  }

 private:
  const neural::Model* model_;
  neural::Mat<float> latent_;
};

inline std::vector<Rotation> initial_rotations(const IntegratorConfig& cfg, Rng& rng) {
  std::vector<Rotation> out;
  out.reserve(cfg.n_hypotheses);
  for (std::size_t h = 0; h < cfg.n_hypotheses; ++h) {
    switch (cfg.init_mode) {
      case InitMode::Identity: out.push_back(Rotation::identity()); break;
      case InitMode::UniformRandom: out.push_back(sample_uniform(rng)); break;
      case InitMode::Given: out.push_back(cfg.given); break;
    }
  }
  return out;
}

/// Integrates each hypothesis under the learned field for `latent`; more than
/// one hypothesis is reduced by chordal mean. Regression models ignore the
/// integrator and project their 9-entry output instead.
inline Rotation estimate_rotation(const neural::Mat<float>& latent, const neural::Model& model,
                                  const IntegratorConfig& cfg, Rng& rng) {
  cfg.validate();
  if (model.config.rotation_head == neural::RotationHeadKind::Regression) {
    neural::Tape<float> tape;
    const auto& out = tape.value(neural::regression_head(tape, model, tape.input(latent)));
    Mat3 m;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) m(i, j) = static_cast<double>(out(0, 3 * i + j));
    return project_to_rotation(m);
  }
  const LatentVelocityField field(model, latent);
  std::vector<Rotation> finals;
  for (const auto& r0 : initial_rotations(cfg, rng)) finals.push_back(integrate(r0, field, cfg));
  if (finals.size() == 1) return finals.front();
  return chordal_mean(finals);
}

struct PoseEstimate {
  Rotation rotation;
  Vec3 center = Vec3::Zero();
  Vec3 size = Vec3::Ones();
};

/// Runs the encoder and fusion once, then both heads on the shared latent.
inline PoseEstimate estimate_pose(const PointCloud& observed, std::size_t category, const neural::Model& model,
                                  const IntegratorConfig& cfg, Rng& rng) {
  const auto input = prepare_encoder_input(observed);
  neural::Tape<float> tape;
  const neural::Var z = neural::object_latent(tape, model, input, category);
  const auto box = neural::center_size_head(tape, model, z, input.centroid);
  PoseEstimate est;
  est.center = neural::to_vec3(tape.value(box.center));
  est.size = neural::to_vec3(tape.value(box.size));
  est.rotation = estimate_rotation(tape.value(z), model, cfg, rng);
  return est;
}

}  // namespace so3flow
