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

// Pose network: point encoder -> category embedding -> fusion -> heads.
//
//   g = maxpool(MLP_{3->64->128}(P512))          geometric feature
//   s = table[category]                           semantic vector
//   z = phi_z(psi(s) * g + psi'(s))               FiLM fusion
//   w_hat = MLP(vec(R_t), sinusoid(t), z)         body-frame velocity
//   center = centroid + MLP(z), size = softplus(MLP(z))
//
// Every forward function records onto a Tape so the trainer can differentiate
// the same code path it evaluates. Templated on the scalar so finite-difference
// oracles can rerun the identical graph in double.

#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>

#include "so3flow/neural/parameters.hpp"
#include "so3flow/neural/point_sampling.hpp"
#include "so3flow/neural/tape.hpp"
#include "so3flow/so3.hpp"

namespace so3flow::neural {

enum class FusionMode { FiLM, Pointwise, GeometryOnly };

/// Flow predicts a body-frame velocity; Regression predicts 9 matrix entries
/// directly (the continuous-representation baseline).
enum class RotationHeadKind { Flow, Regression };

constexpr std::string_view to_string(FusionMode m) {
  switch (m) {
    case FusionMode::FiLM: return "film";
    case FusionMode::Pointwise: return "pointwise";
    case FusionMode::GeometryOnly: return "geometry";
  }
  return "film";
}

constexpr std::string_view to_string(RotationHeadKind k) {
  return k == RotationHeadKind::Flow ? "flow" : "regression";
}

inline FusionMode fusion_from_string(std::string_view s) {
  if (s == "film") return FusionMode::FiLM;
  if (s == "pointwise") return FusionMode::Pointwise;
  if (s == "geometry") return FusionMode::GeometryOnly;
  throw Error(ErrorKind::BadConfig, "unknown fusion mode " + std::string(s));
}

inline RotationHeadKind rotation_head_from_string(std::string_view s) {
  if (s == "flow") return RotationHeadKind::Flow;
  if (s == "regression") return RotationHeadKind::Regression;
  throw Error(ErrorKind::BadConfig, "unknown rotation head " + std::string(s));
}

struct ModelConfig {
  std::size_t d_s = 32;
  std::size_t d_g = 128;
  std::size_t d_z = 128;
  std::size_t encoder_hidden = 64;
  std::size_t hidden = 256;
  std::size_t box_hidden = 128;
  std::size_t n_categories = 8;
  std::size_t time_frequencies = 8;
  FusionMode fusion = FusionMode::FiLM;
  RotationHeadKind rotation_head = RotationHeadKind::Flow;
  std::uint64_t rng_seed = 0;

  std::size_t time_features() const { return 2 * time_frequencies; }
  std::size_t velocity_inputs() const { return 9 + time_features() + d_z; }
  std::size_t fusion_inputs() const { return fusion == FusionMode::Pointwise ? d_s + d_g : d_g; }

  bool operator==(const ModelConfig&) const = default;
};

namespace detail {

template <typename T>
void init_dense(BasicParameterStore<T>& store, const std::string& prefix, std::size_t in,
                std::size_t out, Rng& rng, bool zero_weights = false, T bias = T(0)) {
  auto& w = store.add(prefix + ".weight", {out, in});
  auto& b = store.add(prefix + ".bias", {out});
  if (!zero_weights) {
    std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(in)));
    for (auto& v : w.data) v = static_cast<T>(normal(rng));
  }
  for (auto& v : b.data) v = bias;
}

}  // namespace detail

/// Builds every tensor the configuration needs. Weights ~ N(0, 1/fan_in);
/// final layers of the velocity and center-residual heads start at zero so an
/// untrained model predicts zero velocity and the observed centroid.
template <typename T = float>
BasicParameterStore<T> init_parameters(const ModelConfig& cfg) {
  BasicParameterStore<T> store(cfg.rng_seed);
  Rng rng(cfg.rng_seed);

  detail::init_dense(store, "encoder.fc1", 3, cfg.encoder_hidden, rng);
  detail::init_dense(store, "encoder.fc2", cfg.encoder_hidden, cfg.d_g, rng);

  auto& table = store.add("semantic.table", {cfg.n_categories, cfg.d_s});
  std::normal_distribution<double> unit(0.0, 1.0);
  for (auto& v : table.data) v = static_cast<T>(unit(rng));

  if (cfg.fusion == FusionMode::FiLM) {
    // scale bias 1: untrained modulation starts near identity
    detail::init_dense(store, "film.scale", cfg.d_s, cfg.d_g, rng, false, T(1));
    detail::init_dense(store, "film.shift", cfg.d_s, cfg.d_g, rng);
  }
  detail::init_dense(store, "fusion.proj", cfg.fusion_inputs(), cfg.d_z, rng);

  if (cfg.rotation_head == RotationHeadKind::Flow) {
    detail::init_dense(store, "velocity.fc1", cfg.velocity_inputs(), cfg.hidden, rng);
    detail::init_dense(store, "velocity.fc2", cfg.hidden, cfg.hidden, rng);
    detail::init_dense(store, "velocity.fc3", cfg.hidden, 3, rng, true);
  } else {
    detail::init_dense(store, "regression.fc1", cfg.d_z, cfg.hidden, rng);
    detail::init_dense(store, "regression.fc2", cfg.hidden, cfg.hidden, rng);
    detail::init_dense(store, "regression.fc3", cfg.hidden, 9, rng);
  }

  detail::init_dense(store, "center.fc1", cfg.d_z, cfg.box_hidden, rng);
  detail::init_dense(store, "center.fc2", cfg.box_hidden, 3, rng, true);
  detail::init_dense(store, "size.fc1", cfg.d_z, cfg.box_hidden, rng);
  detail::init_dense(store, "size.fc2", cfg.box_hidden, 3, rng);
  return store;
}

/// Configuration plus weights. The store is written only by the trainer.
template <typename T = float>
struct BasicModel {
  ModelConfig config;
  BasicParameterStore<T> params;

  BasicModel() : BasicModel(ModelConfig{}) {}
  explicit BasicModel(const ModelConfig& cfg) : config(cfg), params(init_parameters<T>(cfg)) {}
  BasicModel(const ModelConfig& cfg, BasicParameterStore<T> p) : config(cfg), params(std::move(p)) {
    if (!params.same_layout(init_parameters<T>(cfg))) {
      throw Error(ErrorKind::DimMismatch, "parameter layout does not match model config");
    }
  }

  template <typename U>
  BasicModel<U> cast() const {
    return BasicModel<U>(config, params.template cast<U>());
  }
};

using Model = BasicModel<float>;

template <typename T>
Var dense(Tape<T>& tape, const BasicParameterStore<T>& p, const std::string& prefix, Var x) {
  return tape.linear(x, tape.param(p, prefix + ".weight"), tape.param(p, prefix + ".bias"));
}

template <typename T>
Var dense_relu(Tape<T>& tape, const BasicParameterStore<T>& p, const std::string& prefix, Var x) {
  return tape.relu(dense(tape, p, prefix, x));
}

/// Shared per-point MLP (3 -> 64 -> 128, ReLU) and coordinate-wise max pool.
/// Expects exactly 512 centered points.
template <typename T>
Var encode_points(Tape<T>& tape, const BasicModel<T>& m, const PointCloud& p512) {
  if (static_cast<std::size_t>(p512.rows()) != kEncoderPoints) {
    throw Error(ErrorKind::WrongPointCount, "encoder expects exactly 512 points");
  }
  Var x = tape.input(p512.cast<T>());
  Var h = dense_relu(tape, m.params, "encoder.fc1", x);
  h = dense_relu(tape, m.params, "encoder.fc2", h);
  return tape.max_rows(h);
}

template <typename T>
Var semantic_embed(Tape<T>& tape, const BasicModel<T>& m, std::size_t category) {
  if (category >= m.config.n_categories) throw Error(ErrorKind::UnknownCategory, "category id out of range");
  return tape.gather_row(tape.param(m.params, "semantic.table"), category);
}

/// Pre-projection FiLM term psi(s) * g + psi'(s).
template <typename T>
Var film_modulate(Tape<T>& tape, const BasicModel<T>& m, Var s, Var g) {
  if (static_cast<std::size_t>(tape.value(s).cols()) != m.config.d_s ||
      static_cast<std::size_t>(tape.value(g).cols()) != m.config.d_g) {
    throw Error(ErrorKind::DimMismatch, "film: semantic/geometric widths differ from config");
  }
  Var scale = dense(tape, m.params, "film.scale", s);
  Var shift = dense(tape, m.params, "film.shift", s);
  return tape.add(tape.mul(scale, g), shift);
}

/// z = phi_z(fusion(s, g)); phi_z is affine followed by ReLU. The fusion term
/// depends on the configured mode.
template <typename T>
Var fuse(Tape<T>& tape, const BasicModel<T>& m, Var s, Var g) {
  if (static_cast<std::size_t>(tape.value(g).cols()) != m.config.d_g) {
    throw Error(ErrorKind::DimMismatch, "fuse: geometric width differs from config");
  }
  Var pre = g;
  switch (m.config.fusion) {
    case FusionMode::FiLM: pre = film_modulate(tape, m, s, g); break;
    case FusionMode::Pointwise: pre = tape.concat_cols({s, g}); break;
    case FusionMode::GeometryOnly: break;
  }
  return dense_relu(tape, m.params, "fusion.proj", pre);
}

template <typename T>
Var film_fuse(Tape<T>& tape, const BasicModel<T>& m, Var s, Var g) {
  if (m.config.fusion != FusionMode::FiLM) throw Error(ErrorKind::DimMismatch, "model is not configured for FiLM");
  return fuse(tape, m, s, g);
}

/// [sin(pi 2^k t), cos(pi 2^k t)] for k < n_freq.
template <typename T>
Mat<T> time_embedding(double t, std::size_t n_freq) {
  Mat<T> e(1, static_cast<Eigen::Index>(2 * n_freq));
  double f = kPi;
  for (std::size_t k = 0; k < n_freq; ++k, f *= 2.0) {
    e(0, static_cast<Eigen::Index>(2 * k)) = static_cast<T>(std::sin(f * t));
    e(0, static_cast<Eigen::Index>(2 * k + 1)) = static_cast<T>(std::cos(f * t));
  }
  return e;
}

template <typename T>
Mat<T> rotation_features(const Rotation& r) {
  Mat<T> e(1, 9);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) e(0, 3 * i + j) = static_cast<T>(r(i, j));
  return e;
}

/// Body-frame velocity prediction from (R_t, t, z). 153 -> 256 -> 256 -> 3.
template <typename T>
Var velocity_head(Tape<T>& tape, const BasicModel<T>& m, const Rotation& r_t, double t, Var z) {
  if (m.config.rotation_head != RotationHeadKind::Flow) throw Error(ErrorKind::DimMismatch, "model has no velocity head");
  if (static_cast<std::size_t>(tape.value(z).cols()) != m.config.d_z) {
    throw Error(ErrorKind::DimMismatch, "velocity head: latent width differs from config");
  }
  if (!(t >= 0.0 && t <= 1.0)) throw Error(ErrorKind::TimeOutOfRange, "flow time must lie in [0, 1]");
  Var x = tape.concat_cols({tape.input(rotation_features<T>(r_t)),
                            tape.input(time_embedding<T>(t, m.config.time_frequencies)), z});
  Var h = dense_relu(tape, m.params, "velocity.fc1", x);
  h = dense_relu(tape, m.params, "velocity.fc2", h);
  return dense(tape, m.params, "velocity.fc3", h);
}

/// Nine row-major matrix entries, not yet projected onto SO(3).
template <typename T>
Var regression_head(Tape<T>& tape, const BasicModel<T>& m, Var z) {
  if (m.config.rotation_head != RotationHeadKind::Regression) {
    throw Error(ErrorKind::DimMismatch, "model has no regression head");
  }
  Var h = dense_relu(tape, m.params, "regression.fc1", z);
  h = dense_relu(tape, m.params, "regression.fc2", h);
  return dense(tape, m.params, "regression.fc3", h);
}

struct BoxVars {
  Var center;
  Var size;
};

/// center = centroid + residual(z); size = softplus(MLP(z)) > 0.
template <typename T>
BoxVars center_size_head(Tape<T>& tape, const BasicModel<T>& m, Var z, const Vec3& centroid) {
  if (static_cast<std::size_t>(tape.value(z).cols()) != m.config.d_z) {
    throw Error(ErrorKind::DimMismatch, "box head: latent width differs from config");
  }
  Mat<T> c(1, 3);
  c << static_cast<T>(centroid.x()), static_cast<T>(centroid.y()), static_cast<T>(centroid.z());
  Var residual = dense(tape, m.params, "center.fc2", dense_relu(tape, m.params, "center.fc1", z));
  Var size = tape.softplus(dense(tape, m.params, "size.fc2", dense_relu(tape, m.params, "size.fc1", z)));
  return {tape.add(tape.input(std::move(c)), residual), size};
}

/// Encoder + semantic + fusion for one prepared observation.
template <typename T>
Var object_latent(Tape<T>& tape, const BasicModel<T>& m, const EncoderInput& in, std::size_t category) {
  Var g = encode_points(tape, m, in.points);
  Var s = semantic_embed(tape, m, category);
  return fuse(tape, m, s, g);
}

// Value-returning conveniences over a throwaway tape.

template <typename T>
Eigen::Matrix<T, 1, Eigen::Dynamic> to_row(const Mat<T>& v) {
  return v.row(0);
}

inline Vec3 to_vec3(const Mat<float>& v) {
  return Vec3(static_cast<double>(v(0, 0)), static_cast<double>(v(0, 1)), static_cast<double>(v(0, 2)));
}
inline Vec3 to_vec3(const Mat<double>& v) { return Vec3(v(0, 0), v(0, 1), v(0, 2)); }

}  // namespace so3flow::neural
