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

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "json.hpp"
#include "so3flow/decimal.hpp"
#include "so3flow/flow_path.hpp"
#include "so3flow/neural/checkpoint.hpp"
#include "so3flow/neural/model.hpp"
#include "so3flow/synthetic.hpp"

namespace so3flow::training {

struct TrainConfig {
  std::size_t epochs = 60;
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double lambda_rot = 1.0;
  double lambda_center = 1.0;
  double lambda_size = 1.0;
  std::uint64_t seed = 7;

  void validate() const {
    if (!(learning_rate > 0.0)) throw Error(ErrorKind::BadConfig, "learning_rate must be > 0");
    if (batch_size < 1) throw Error(ErrorKind::BadConfig, "batch_size must be >= 1");
    if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) {
      throw Error(ErrorKind::BadConfig, "adam betas must lie in [0, 1)");
    }
    if (!(adam_eps > 0.0)) throw Error(ErrorKind::BadConfig, "adam_eps must be > 0");
    if (lambda_rot < 0.0 || lambda_center < 0.0 || lambda_size < 0.0) {
      throw Error(ErrorKind::BadConfig, "loss weights must be >= 0");
    }
  }
};

/// ||predicted - target_v||^2 in the Lie algebra.
inline double rotation_flow_loss(const Tangent& predicted, const FlowSample& sample) {
  return (predicted - sample.target_v).squaredNorm();
}

/// Batch mean of the per-sample flow loss.
inline double rotation_flow_loss(std::span<const Tangent> predicted, std::span<const FlowSample> samples) {
  if (predicted.size() != samples.size() || samples.empty()) {
    throw Error(ErrorKind::ShapeMismatch, "prediction/sample count mismatch");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) acc += rotation_flow_loss(predicted[i], samples[i]);
  return acc / static_cast<double>(samples.size());
}

inline double aux_losses(const Vec3& pred_center, const Vec3& pred_size, const Vec3& gt_center, const Vec3& gt_size) {
  return (pred_center - gt_center).squaredNorm() + (pred_size - gt_size).squaredNorm();
}

/// First/second moments mirroring the parameter layout.
struct OptimizerState {
  std::vector<std::vector<float>> m;
  std::vector<std::vector<float>> v;
  std::uint64_t step = 0;

  static OptimizerState for_params(const neural::ParameterStore& p) {
    OptimizerState s;
    for (const auto& e : p.entries()) {
      s.m.emplace_back(e.tensor.size(), 0.0f);
      s.v.emplace_back(e.tensor.size(), 0.0f);
    }
    return s;
  }
};

/// Adam with bias-corrected moments.
inline void adam_step(neural::ParameterStore& params, const neural::ParameterStore& grads, OptimizerState& state,
                      const TrainConfig& cfg) {
  if (!params.same_layout(grads)) throw Error(ErrorKind::ShapeMismatch, "gradient layout differs from parameters");
  if (state.m.size() != params.tensor_count() || state.v.size() != params.tensor_count()) {
    throw Error(ErrorKind::ShapeMismatch, "optimizer state layout differs from parameters");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t k = 0; k < params.tensor_count(); ++k) {
    auto& w = params.at(k).data;
    const auto& g = grads.at(k).data;
    auto& m = state.m[k];
    auto& v = state.v[k];
    if (m.size() != w.size() || v.size() != w.size()) throw Error(ErrorKind::ShapeMismatch, "moment size mismatch");
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g[i];
      const double mi = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
      const double vi = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
      m[i] = static_cast<float>(mi);
      v[i] = static_cast<float>(vi);
      const double update = cfg.learning_rate * (mi / c1) / (std::sqrt(vi / c2) + cfg.adam_eps);
      w[i] = static_cast<float>(w[i] - update);
    }
  }
}

struct LossRecord {
  std::size_t epoch = 0;
  double rot = 0.0;
  double center = 0.0;
  double size = 0.0;
  double total = 0.0;

  bool operator==(const LossRecord&) const = default;
};

/// Observation with its encoder input precomputed once (FPS does not depend on
/// the weights).
struct PreparedInstance {
  const synthetic::SceneInstance* instance = nullptr;
  EncoderInput input;
};

inline std::vector<PreparedInstance> prepare(std::span<const synthetic::SceneInstance* const> instances) {
  std::vector<PreparedInstance> out;
  out.reserve(instances.size());
  for (const auto* inst : instances) out.push_back({inst, prepare_encoder_input(inst->observed)});
  return out;
}

struct LossVars {
  neural::Var rot;
  neural::Var center;
  neural::Var size;
  neural::Var total;
};

/// Full per-sample loss for one instance. Flow models consume `flow`;
/// regression models regress the ground-truth matrix entries.
template <typename T>
LossVars record_sample_loss(neural::Tape<T>& tape, const neural::BasicModel<T>& model, const PreparedInstance& p,
                            const FlowSample& flow, const TrainConfig& cfg) {
  using neural::Mat;
  const auto& inst = *p.instance;
  const neural::Var z = neural::object_latent(tape, model, p.input, inst.category);
  neural::Var rot;
  if (model.config.rotation_head == neural::RotationHeadKind::Flow) {
    const neural::Var v = neural::velocity_head(tape, model, flow.r_t, flow.t, z);
    Mat<T> target(1, 3);
    target << static_cast<T>(flow.target_v.x()), static_cast<T>(flow.target_v.y()), static_cast<T>(flow.target_v.z());
    rot = tape.squared_error(v, target);
  } else {
    rot = tape.squared_error(neural::regression_head(tape, model, z), neural::rotation_features<T>(inst.gt_rotation));
  }
  const auto box = neural::center_size_head(tape, model, z, p.input.centroid);
  Mat<T> c(1, 3);
  c << static_cast<T>(inst.gt_center.x()), static_cast<T>(inst.gt_center.y()), static_cast<T>(inst.gt_center.z());
  Mat<T> s(1, 3);
  s << static_cast<T>(inst.gt_size.x()), static_cast<T>(inst.gt_size.y()), static_cast<T>(inst.gt_size.z());
  const neural::Var center = tape.squared_error(box.center, c);
  const neural::Var size = tape.squared_error(box.size, s);
  const neural::Var total =
      tape.weighted_sum({{rot, cfg.lambda_rot}, {center, cfg.lambda_center}, {size, cfg.lambda_size}});
  return {rot, center, size, total};
}

struct TrainResult {
  neural::Model model;
  std::vector<LossRecord> curve;
};

/// Called after each epoch with the record just appended.
using EpochCallback = std::function<void(const LossRecord&)>;

/// Minibatch Adam over the train split. Each epoch reshuffles (seeded) and
/// draws a fresh flow sample (r0 ~ Haar, t ~ U[0,1]) per instance; batch
/// gradients are summed in a fixed order, so runs are bit-reproducible.
inline TrainResult train(std::span<const synthetic::SceneInstance* const> instances, const TrainConfig& cfg,
                         const neural::ModelConfig& model_cfg, const EpochCallback& on_epoch = {}) {
  cfg.validate();
  if (instances.empty()) throw Error(ErrorKind::EmptyDataset, "no training instances");
  TrainResult result{neural::Model(model_cfg), {}};
  auto& model = result.model;
  auto state = OptimizerState::for_params(model.params);
  const auto prepared = prepare(instances);
  Rng rng(cfg.seed);

  auto grads = model.params.zeros_like();
  neural::Tape<float> tape;
  std::vector<std::size_t> order(prepared.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    LossRecord sum;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      for (auto& e : grads.entries()) std::fill(e.tensor.data.begin(), e.tensor.data.end(), 0.0f);
      for (std::size_t b = start; b < end; ++b) {
        const auto& p = prepared[order[b]];
        const FlowSample flow = sample_flow(rng, p.instance->gt_rotation);
        tape.reset();
        const LossVars loss = record_sample_loss(tape, model, p, flow, cfg);
        sum.rot += tape.scalar(loss.rot);
        sum.center += tape.scalar(loss.center);
        sum.size += tape.scalar(loss.size);
        sum.total += tape.scalar(loss.total);
        tape.backward_into(loss.total, grads);
      }
      const float inv = 1.0f / static_cast<float>(end - start);
      for (auto& e : grads.entries())
        for (auto& v : e.tensor.data) v *= inv;
      adam_step(model.params, grads, state, cfg);
    }
    const double n = static_cast<double>(order.size());
    result.curve.push_back({epoch, sum.rot / n, sum.center / n, sum.size / n, sum.total / n});
    if (on_epoch) on_epoch(result.curve.back());
  }
  return result;
}

inline void write_loss_curve(std::span<const LossRecord> curve, const std::filesystem::path& file) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + file.string());
  out << "epoch,rot_loss,center_loss,size_loss,total\n";
  for (const auto& r : curve) {
    out << r.epoch << ',' << format_double(r.rot) << ',' << format_double(r.center) << ','
        << format_double(r.size) << ',' << format_double(r.total) << '\n';
  }
  if (!out) throw Error(ErrorKind::IoError, "short write " + file.string());
}

inline nlohmann::json train_config_to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate},
          {"adam_betas", {c.beta1, c.beta2}},
          {"adam_eps", c.adam_eps},
          {"loss_weights", {c.lambda_rot, c.lambda_center, c.lambda_size}},
          {"seed", c.seed}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c = {}) {
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  if (j.contains("adam_betas")) {
    const auto& b = j.at("adam_betas");
    if (!b.is_array() || b.size() != 2) throw Error(ErrorKind::BadConfig, "adam_betas needs two values");
    c.beta1 = b[0].get<double>();
    c.beta2 = b[1].get<double>();
  }
  c.adam_eps = j.value("adam_eps", c.adam_eps);
  if (j.contains("loss_weights")) {
    const auto& w = j.at("loss_weights");
    if (!w.is_array() || w.size() != 3) throw Error(ErrorKind::BadConfig, "loss_weights needs three values");
    c.lambda_rot = w[0].get<double>();
    c.lambda_center = w[1].get<double>();
    c.lambda_size = w[2].get<double>();
  }
  c.seed = j.value("seed", c.seed);
  return c;
}

}  // namespace so3flow::training
