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

// Numerical invariant suites shared by `so3flow selfcheck` and the acceptance
// binary. Each suite reports its worst observed error against a fixed bound.

#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "so3flow/flow_path.hpp"
#include "so3flow/inference.hpp"
#include "so3flow/neural/model.hpp"
#include "so3flow/so3.hpp"
#include "so3flow/synthetic.hpp"
#include "so3flow/training.hpp"

namespace so3flow::checks {

struct SuiteResult {
  std::string name;
  bool passed = false;
  double worst = 0.0;
  double bound = 0.0;
  double seconds = 0.0;
  std::size_t cases = 0;
};

namespace detail {

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

inline Vec3 random_direction(Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Vec3 d;
  do {
    d = Vec3(n(rng), n(rng), n(rng));
  } while (d.norm() < 1e-6);
  return d.normalized();
}

inline SuiteResult finish(std::string name, double worst, double bound, std::size_t cases, const Stopwatch& w) {
  return {std::move(name), std::isfinite(worst) && worst < bound, worst, bound, w.seconds(), cases};
}

}  // namespace detail

/// log(exp(w)) = w for |w| in (0, pi - 0.01). Half the norms are uniform, half
/// log-uniform down to 1e-10 so the series branches are exercised.
inline SuiteResult check_roundtrip(std::uint64_t seed, std::size_t n = 10000,
                                   double small_angle = so3_tol::kSmallAngle) {
  detail::Stopwatch watch;
  Rng rng(seed);
  std::uniform_real_distribution<double> uniform_norm(0.0, kPi - 0.01);
  std::uniform_real_distribution<double> log_norm(std::log(1e-10), std::log(1.0));
  double worst = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double norm = i % 2 == 0 ? uniform_norm(rng) : std::exp(log_norm(rng));
    if (norm <= 0.0) norm = 1e-10;
    const Tangent w = norm * detail::random_direction(rng);
    const Tangent back = log_map(exp_map(w, small_angle), small_angle);
    worst = std::max(worst, (back - w).norm());
  }
  return detail::finish("so3 exp/log roundtrip", worst, 1e-9, n, watch);
}

/// Central body-frame difference of the reflected path against the target
/// velocity, |t - 0.5| > 1e-3, h = 1e-5. Worst componentwise error.
inline SuiteResult check_path_velocity(std::uint64_t seed, std::size_t n = 1000) {
  detail::Stopwatch watch;
  Rng rng(seed);
  constexpr double h = 1e-5;
  std::uniform_real_distribution<double> time(h, 1.0 - h);
  double worst = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Rotation r0 = sample_uniform(rng);
    const Rotation r1 = sample_uniform(rng);
    double t = time(rng);
    while (std::abs(t - kReflectionTime) <= 1e-3) t = time(rng);
    const Rotation before = path_point(r0, r1, t - h);
    const Rotation after = path_point(r0, r1, t + h);
    const Tangent fd = log_map(before.inverse() * after) / (2.0 * h);
    worst = std::max(worst, (fd - target_velocity(t, relative_tangent(r0, r1))).cwiseAbs().maxCoeff());
  }
  return detail::finish("path velocity consistency", worst, 1e-3, n, watch);
}

/// Both branches meet at t = 0.5, and there the path sits on r1.
inline SuiteResult check_path_continuity(std::uint64_t seed, std::size_t n = 1000) {
  detail::Stopwatch watch;
  Rng rng(seed);
  double worst = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Rotation r0 = sample_uniform(rng);
    const Rotation r1 = sample_uniform(rng);
    const Rotation at = path_point(r0, r1, kReflectionTime);
    const Rotation from_right = path_point(r0, r1, std::nextafter(kReflectionTime, 1.0));
    const Rotation from_left = path_point(r0, r1, std::nextafter(kReflectionTime, 0.0));
    worst = std::max({worst, geodesic_distance(at, from_right), geodesic_distance(at, from_left),
                      geodesic_distance(at, r1)});
  }
  return detail::finish("path continuity at reflection", worst, 1e-6, n, watch);
}

/// RK2 under the constant ground-truth field 2w over [0, 0.5] lands on r1, for
/// five steps and for one.
inline SuiteResult check_integrator(std::uint64_t seed, std::size_t n = 1000) {
  detail::Stopwatch watch;
  Rng rng(seed);
  double worst = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Rotation r0 = sample_uniform(rng);
    const Rotation r1 = sample_uniform(rng);
    const Tangent omega = relative_tangent(r0, r1);
    auto field = [&](const Rotation&, double) -> Tangent { return 2.0 * omega; };
    for (std::size_t steps : {std::size_t{5}, std::size_t{1}}) {
      IntegratorConfig cfg;
      cfg.n_steps = steps;
      worst = std::max(worst, geodesic_distance(integrate(r0, field, cfg), r1));
    }
  }
  return detail::finish("rk2 constant-field exactness", worst, 1e-9, n, watch);
}

/// |a - f| / max(|a|, |f|, floor), floor = 1e-3 of the largest sampled |f|.
/// The floor keeps coordinates with a vanishing derivative from dominating.
inline double gradient_error(const std::vector<double>& analytic, const std::vector<double>& numeric) {
  double scale = 0.0;
  for (double f : numeric) scale = std::max(scale, std::abs(f));
  const double floor = std::max(1e-3 * scale, 1e-12);
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric[i]), floor});
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / denom);
  }
  return worst;
}

namespace detail {

struct Coordinate {
  std::size_t tensor = 0;
  std::size_t index = 0;
};

template <typename T>
std::vector<Coordinate> pick_coordinates(const neural::BasicParameterStore<T>& store, std::size_t n, Rng& rng) {
  std::vector<Coordinate> out;
  std::uniform_int_distribution<std::size_t> total(0, store.total_count() - 1);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t flat = total(rng);
    std::size_t k = 0;
    while (flat >= store.at(k).size()) flat -= store.at(k++).size();
    out.push_back({k, flat});
  }
  return out;
}

/// Central differences in double of `loss(params)` at the chosen coordinates.
template <typename LossFn>
std::vector<double> central_differences(neural::BasicParameterStore<double> params,
                                        const std::vector<Coordinate>& coords, double h, LossFn&& loss) {
  std::vector<double> out;
  for (const auto& c : coords) {
    double& v = params.at(c.tensor).data[c.index];
    const double orig = v;
    v = orig + h;
    const double up = loss(params);
    v = orig - h;
    const double down = loss(params);
    v = orig;
    out.push_back((up - down) / (2.0 * h));
  }
  return out;
}

template <typename T>
void jitter(neural::BasicParameterStore<T>& store, double sigma, Rng& rng) {
  std::normal_distribution<double> n(0.0, sigma);
  for (auto& e : store.entries())
    for (auto& v : e.tensor.data) v = static_cast<T>(static_cast<double>(v) + n(rng));
}

}  // namespace detail

/// Isolated affine layer and FiLM block. The float backward pass is compared
/// with double central differences (h = 1e-3) on 100 coordinates each.
inline SuiteResult check_layer_gradients(std::uint64_t seed, std::size_t n_coords = 100) {
  detail::Stopwatch watch;
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  double worst = 0.0;

  // affine: loss = |x W^T + b - y|^2
  {
    neural::BasicParameterStore<float> store(seed);
    auto& w = store.add("w", {24, 16});
    auto& b = store.add("b", {24});
    for (auto& v : w.data) v = static_cast<float>(normal(rng) * 0.25);
    for (auto& v : b.data) v = static_cast<float>(normal(rng) * 0.25);
    neural::Mat<double> x(4, 16);
    neural::Mat<double> y(4, 24);
    for (auto& v : x.reshaped()) v = normal(rng);
    for (auto& v : y.reshaped()) v = normal(rng);

    auto loss = [&](const auto& params) {
      using S = typename std::decay_t<decltype(params.at(0).data)>::value_type;
      neural::Tape<S> tape;
      const auto out = tape.linear(tape.input(x.cast<S>()), tape.param(params, "w"), tape.param(params, "b"));
      const auto l = tape.squared_error(out, y.cast<S>());
      return std::pair{tape.scalar(l), tape.backward(l)};
    };
    const auto grads = loss(store).second;
    const auto coords = detail::pick_coordinates(store, n_coords, rng);
    const auto numeric = detail::central_differences(store.cast<double>(), coords, 1e-3,
                                                     [&](const auto& p) { return loss(p).first; });
    std::vector<double> analytic;
    for (const auto& c : coords) analytic.push_back(grads.at(c.tensor).data[c.index]);
    worst = std::max(worst, gradient_error(analytic, numeric));
  }

  // FiLM: loss = |phi_z(psi(s) * g + psi'(s)) - y|^2 over the FiLM and projection weights
  {
    neural::ModelConfig cfg;
    neural::Model model(cfg);
    detail::jitter(model.params, 0.05, rng);
    neural::Mat<double> s(1, static_cast<Eigen::Index>(cfg.d_s));
    neural::Mat<double> g(1, static_cast<Eigen::Index>(cfg.d_g));
    neural::Mat<double> y(1, static_cast<Eigen::Index>(cfg.d_z));
    for (auto& v : s.reshaped()) v = normal(rng);
    for (auto& v : g.reshaped()) v = normal(rng);
    for (auto& v : y.reshaped()) v = normal(rng);
    auto loss_of = [&](const auto& m) {
      using S = typename std::decay_t<decltype(m.params.at(0).data)>::value_type;
      neural::Tape<S> tape;
      const auto z = neural::film_fuse(tape, m, tape.input(s.cast<S>()), tape.input(g.cast<S>()));
      const auto l = tape.squared_error(z, y.cast<S>());
      return std::pair{tape.scalar(l), tape.backward(l)};
    };
    const auto grads = loss_of(model).second;
    std::vector<detail::Coordinate> coords;
    std::vector<std::size_t> film_tensors;
    for (std::size_t k = 0; k < model.params.tensor_count(); ++k) {
      const auto& name = model.params.entries()[k].name;
      if (name.starts_with("film.") || name.starts_with("fusion.")) film_tensors.push_back(k);
    }
    std::uniform_int_distribution<std::size_t> pick_tensor(0, film_tensors.size() - 1);
    for (std::size_t i = 0; i < n_coords; ++i) {
      const std::size_t k = film_tensors[pick_tensor(rng)];
      std::uniform_int_distribution<std::size_t> pick_index(0, model.params.at(k).size() - 1);
      coords.push_back({k, pick_index(rng)});
    }
    const auto numeric = detail::central_differences(
        model.params.cast<double>(), coords, 1e-3,
        [&](const neural::BasicParameterStore<double>& p) { return loss_of(neural::BasicModel<double>(cfg, p)).first; });
    std::vector<double> analytic;
    for (const auto& c : coords) analytic.push_back(grads.at(c.tensor).data[c.index]);
    worst = std::max(worst, gradient_error(analytic, numeric));
  }
  return detail::finish("layer gradients", worst, 1e-3, 2 * n_coords, watch);
}

/// Full training loss on one flow sample: float backward against double
/// central differences (h = 1e-6) on 100 random coordinates of the whole model.
/// Weights are jittered first so zero-initialized heads carry gradient.
inline SuiteResult check_pipeline_gradients(std::uint64_t seed, std::size_t n_coords = 100) {
  detail::Stopwatch watch;
  Rng rng(seed);
  synthetic::GenConfig gen;
  gen.n_train = 1;
  gen.n_test = 1;
  gen.seed = seed;
  const auto data = synthetic::synthesize_dataset(gen);
  const auto train = data.split(synthetic::Split::Train);
  const auto prepared = training::prepare(train);
  const FlowSample flow = sample_flow(rng, train.front()->gt_rotation);
  const training::TrainConfig tcfg;

  neural::ModelConfig cfg;
  neural::Model model(cfg);
  detail::jitter(model.params, 0.1, rng);

  neural::Tape<float> tape;
  const auto loss = training::record_sample_loss(tape, model, prepared.front(), flow, tcfg);
  const auto grads = tape.backward(loss.total);

  const auto coords = detail::pick_coordinates(model.params, n_coords, rng);
  const auto numeric = detail::central_differences(
      model.params.cast<double>(), coords, 1e-6, [&](const neural::BasicParameterStore<double>& p) {
        neural::Tape<double> t;
        const neural::BasicModel<double> m(cfg, p);
        return t.scalar(training::record_sample_loss(t, m, prepared.front(), flow, tcfg).total);
      });
  std::vector<double> analytic;
  for (const auto& c : coords) analytic.push_back(grads.at(c.tensor).data[c.index]);
  return detail::finish("pipeline gradients", gradient_error(analytic, numeric), 1e-2, n_coords, watch);
}

/// Mean trace of Haar samples; the uniform measure has E[tr R] = 0.
inline SuiteResult check_haar(std::uint64_t seed, std::size_t n = 100000) {
  detail::Stopwatch watch;
  Rng rng(seed);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) sum += sample_uniform(rng).matrix().trace();
  return detail::finish("haar mean trace", std::abs(sum / static_cast<double>(n)), 0.02, n, watch);
}

struct SelfcheckOptions {
  std::uint64_t seed = 7;
  // series-branch threshold for exp/log; raising it injects a known defect
  double small_angle = so3_tol::kSmallAngle;
};

inline std::vector<SuiteResult> run_selfcheck(const SelfcheckOptions& opt = {}) {
  return {check_roundtrip(opt.seed, 10000, opt.small_angle), check_path_velocity(opt.seed),
          check_path_continuity(opt.seed), check_integrator(opt.seed), check_layer_gradients(opt.seed), check_pipeline_gradients(opt.seed),
          check_haar(opt.seed)};
}

}  // namespace so3flow::checks
