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

// Toy scenes with known pose. Shapes are small CSG solids (boxes, cylinders,
// cones, unions and cut-outs) sampled uniformly on their surface; observations
// are posed, jittered, and half-space occluded copies.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "so3flow/decimal.hpp"
#include "so3flow/neural/point_sampling.hpp"
#include "so3flow/so3.hpp"

namespace so3flow::synthetic {

enum class ShapeKind { AsymmetricBox, LBracket, CylinderWithNotch, Cone, SymmetricCylinder, SymmetricBox };

inline constexpr std::array<ShapeKind, 6> kAllShapeKinds = {
    ShapeKind::AsymmetricBox, ShapeKind::LBracket,          ShapeKind::CylinderWithNotch,
    ShapeKind::Cone,          ShapeKind::SymmetricCylinder, ShapeKind::SymmetricBox};

constexpr std::string_view to_string(ShapeKind k) {
  switch (k) {
    case ShapeKind::AsymmetricBox: return "asymmetric_box";
    case ShapeKind::LBracket: return "l_bracket";
    case ShapeKind::CylinderWithNotch: return "cylinder_with_notch";
    case ShapeKind::Cone: return "cone";
    case ShapeKind::SymmetricCylinder: return "symmetric_cylinder";
    case ShapeKind::SymmetricBox: return "symmetric_box";
  }
  return "";
}

inline ShapeKind shape_kind_from_string(std::string_view s) {
  for (ShapeKind k : kAllShapeKinds) {
    if (to_string(k) == s) return k;
  }
  throw Error(ErrorKind::UnknownKind, "unknown shape kind '" + std::string(s) + "'");
}

constexpr bool is_symmetric(ShapeKind k) {
  return k == ShapeKind::SymmetricCylinder || k == ShapeKind::SymmetricBox;
}

inline constexpr std::size_t kMinShapePoints = 64;

namespace detail {

/// Axis-aligned box, z-aligned cylinder, or z-aligned cone (base at the bottom).
struct Primitive {
  enum class Type { Box, Cylinder, Cone };
  Type type = Type::Box;
  Vec3 center = Vec3::Zero();
  Vec3 half = Vec3::Zero();  // box half extents
  double radius = 0.0;
  double height = 0.0;

  static Primitive box(const Vec3& c, const Vec3& h) { return {Type::Box, c, h, 0.0, 0.0}; }
  static Primitive cylinder(const Vec3& c, double r, double h) { return {Type::Cylinder, c, Vec3::Zero(), r, h}; }
  static Primitive cone(const Vec3& c, double r, double h) { return {Type::Cone, c, Vec3::Zero(), r, h}; }

  Vec3 aabb_half() const {
    if (type == Type::Box) return half;
    return Vec3(radius, radius, 0.5 * height);
  }

  double area() const {
    switch (type) {
      case Type::Box: return 8.0 * (half.x() * half.y() + half.y() * half.z() + half.x() * half.z());
      case Type::Cylinder: return 2.0 * kPi * radius * height + 2.0 * kPi * radius * radius;
      case Type::Cone: return kPi * radius * std::hypot(radius, height) + kPi * radius * radius;
    }
    return 0.0;
  }

  /// Inside test with margin `eps`: eps > 0 shrinks (strict interior), eps < 0 grows.
  bool contains(const Vec3& p, double eps) const {
    const Vec3 d = p - center;
    switch (type) {
      case Type::Box:
        return std::abs(d.x()) < half.x() - eps && std::abs(d.y()) < half.y() - eps &&
               std::abs(d.z()) < half.z() - eps;
      case Type::Cylinder:
        return std::hypot(d.x(), d.y()) < radius - eps && std::abs(d.z()) < 0.5 * height - eps;
      case Type::Cone: {
        if (std::abs(d.z()) >= 0.5 * height - eps) return false;
        const double r_at = radius * (0.5 * height - d.z()) / height;
        return std::hypot(d.x(), d.y()) < r_at - eps;
      }
    }
    return false;
  }

  Vec3 sample_surface(Rng& rng) const {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    switch (type) {
      case Type::Box: {
        const double axy = half.x() * half.y();
        const double ayz = half.y() * half.z();
        const double axz = half.x() * half.z();
        const double pick = u(rng) * (axy + ayz + axz);
        const double sign = u(rng) < 0.5 ? -1.0 : 1.0;
        const double a = 2.0 * u(rng) - 1.0;
        const double b = 2.0 * u(rng) - 1.0;
        Vec3 p;
        if (pick < axy) {
          p = Vec3(a * half.x(), b * half.y(), sign * half.z());
        } else if (pick < axy + ayz) {
          p = Vec3(sign * half.x(), a * half.y(), b * half.z());
        } else {
          p = Vec3(a * half.x(), sign * half.y(), b * half.z());
        }
        return center + p;
      }
      case Type::Cylinder: {
        const double side = 2.0 * kPi * radius * height;
        const double cap = kPi * radius * radius;
        const double pick = u(rng) * (side + 2.0 * cap);
        const double phi = 2.0 * kPi * u(rng);
        if (pick < side) {
          return center + Vec3(radius * std::cos(phi), radius * std::sin(phi), (u(rng) - 0.5) * height);
        }
        const double r = radius * std::sqrt(u(rng));
        const double z = pick < side + cap ? -0.5 * height : 0.5 * height;
        return center + Vec3(r * std::cos(phi), r * std::sin(phi), z);
      }
      case Type::Cone: {
        const double side = kPi * radius * std::hypot(radius, height);
        const double base = kPi * radius * radius;
        const double pick = u(rng) * (side + base);
        const double phi = 2.0 * kPi * u(rng);
        if (pick < side) {
          const double s = std::sqrt(u(rng));  // fraction of the way from apex to base
          const double r = radius * s;
          return center + Vec3(r * std::cos(phi), r * std::sin(phi), 0.5 * height - s * height);
        }
        const double r = radius * std::sqrt(u(rng));
        return center + Vec3(r * std::cos(phi), r * std::sin(phi), -0.5 * height);
      }
    }
    return center;
  }
};

/// Union of `parts` minus union of `cuts`. Cuts never remove an extreme
/// point, so the bounding box of `parts` is the bounding box of the solid.
struct Solid {
  std::vector<Primitive> parts;
  std::vector<Primitive> cuts;

  Vec3 aabb_min() const {
    Vec3 lo = Vec3::Constant(1e300);
    for (const auto& p : parts) lo = lo.cwiseMin(p.center - p.aabb_half());
    return lo;
  }
  Vec3 aabb_max() const {
    Vec3 hi = Vec3::Constant(-1e300);
    for (const auto& p : parts) hi = hi.cwiseMax(p.center + p.aabb_half());
    return hi;
  }

  void translate(const Vec3& d) {
    for (auto& p : parts) p.center += d;
    for (auto& c : cuts) c.center += d;
  }

  // Surface of the CSG result: part faces outside other parts and outside the
  // cuts, plus cut faces that lie inside the union. Faces shared by two parts
  // are credited to the lower-indexed part only.
  bool accept_part_point(std::size_t i, const Vec3& x) const {
    constexpr double kEps = 1e-12;
    for (std::size_t j = 0; j < parts.size(); ++j) {
      if (j == i) continue;
      if (parts[j].contains(x, j < i ? -kEps : kEps)) return false;
    }
    for (const auto& c : cuts) {
      if (c.contains(x, kEps)) return false;
    }
    return true;
  }

  bool accept_cut_point(std::size_t i, const Vec3& x) const {
    constexpr double kEps = 1e-12;
    bool inside_union = false;
    for (const auto& p : parts) inside_union = inside_union || p.contains(x, kEps);
    if (!inside_union) return false;
    for (std::size_t j = 0; j < cuts.size(); ++j) {
      if (j != i && cuts[j].contains(x, kEps)) return false;
    }
    return true;
  }

  PointCloud sample(std::size_t n, Rng& rng) const {
    std::vector<double> weights;
    for (const auto& p : parts) weights.push_back(p.area());
    for (const auto& c : cuts) weights.push_back(c.area());
    std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
    PointCloud out(static_cast<Eigen::Index>(n), 3);
    std::size_t filled = 0;
    while (filled < n) {
      const std::size_t k = pick(rng);
      Vec3 x;
      bool ok;
      if (k < parts.size()) {
        x = parts[k].sample_surface(rng);
        ok = accept_part_point(k, x);
      } else {
        x = cuts[k - parts.size()].sample_surface(rng);
        ok = accept_cut_point(k - parts.size(), x);
      }
      if (ok) out.row(static_cast<Eigen::Index>(filled++)) = x.transpose();
    }
    return out;
  }
};

/// Unit-scale solids with their bounding box centered on the origin.
inline Solid make_solid(ShapeKind kind) {
  using P = Primitive;
  Solid s;
  switch (kind) {
    case ShapeKind::AsymmetricBox:
      // 1.0 x 0.6 x 0.4 slab with the (+,+,+) octant removed
      s.parts = {P::box(Vec3::Zero(), Vec3(0.5, 0.3, 0.2))};
      s.cuts = {P::box(Vec3(0.3, 0.2, 0.15), Vec3(0.3, 0.2, 0.15))};
      break;
    case ShapeKind::LBracket:
      // unequal legs: 1.0 along x, 0.8 along y
      s.parts = {P::box(Vec3(0.0, -0.25, 0.0), Vec3(0.5, 0.15, 0.15)),
                 P::box(Vec3(-0.35, 0.0, 0.0), Vec3(0.15, 0.4, 0.15))};
      break;
    case ShapeKind::CylinderWithNotch:
      // quarter wedge removed from the upper half
      s.parts = {P::cylinder(Vec3::Zero(), 0.3, 1.0)};
      s.cuts = {P::box(Vec3(0.2, 0.2, 0.3), Vec3(0.2, 0.2, 0.3))};
      break;
    case ShapeKind::Cone:
      // quarter wedge removed from the base
      s.parts = {P::cone(Vec3::Zero(), 0.4, 1.0)};
      s.cuts = {P::box(Vec3(0.25, 0.25, -0.3), Vec3(0.25, 0.25, 0.3))};
      break;
    case ShapeKind::SymmetricCylinder:
      s.parts = {P::cylinder(Vec3::Zero(), 0.3, 1.0)};
      break;
    case ShapeKind::SymmetricBox:
      s.parts = {P::box(Vec3::Zero(), Vec3(0.5, 0.5, 0.5))};
      break;
  }
  s.translate(-0.5 * (s.aabb_min() + s.aabb_max()));
  return s;
}

}  // namespace detail

/// Per-axis extents of the unit-scale shape in its canonical frame.
inline Vec3 unit_size(ShapeKind kind) {
  const auto s = detail::make_solid(kind);
  return s.aabb_max() - s.aabb_min();
}

struct CanonicalShape {
  ShapeKind kind = ShapeKind::AsymmetricBox;
  PointCloud points;
  Vec3 size = Vec3::Ones();
};

inline CanonicalShape make_canonical_shape(ShapeKind kind, std::size_t n_points, Rng& rng) {
  if (n_points < kMinShapePoints) throw Error(ErrorKind::WrongPointCount, "shapes need at least 64 points");
  const auto solid = detail::make_solid(kind);
  return {kind, solid.sample(n_points, rng), solid.aabb_max() - solid.aabb_min()};
}

enum class Split { Train, Test };

constexpr std::string_view to_string(Split s) { return s == Split::Train ? "train" : "test"; }

inline Split split_from_string(std::string_view s) {
  if (s == "train") return Split::Train;
  if (s == "test") return Split::Test;
  throw Error(ErrorKind::IoError, "unknown split '" + std::string(s) + "'");
}

struct GenConfig {
  std::size_t n_train = 2000;
  std::size_t n_test = 400;
  std::vector<ShapeKind> categories = {ShapeKind::AsymmetricBox, ShapeKind::LBracket,
                                       ShapeKind::CylinderWithNotch, ShapeKind::Cone};
  double noise_sigma = 0.002;
  double occlusion_fraction = 0.3;
  std::uint64_t seed = 7;
  std::size_t n_points = 1024;
  double scale_min = 0.5;
  double scale_max = 1.5;
  double center_extent = 0.3;

  void validate() const {
    if (n_train < 1 || n_test < 1) throw Error(ErrorKind::BadConfig, "split counts must be >= 1");
    if (categories.empty()) throw Error(ErrorKind::BadConfig, "no categories");
    if (!(noise_sigma >= 0.0)) throw Error(ErrorKind::BadConfig, "noise sigma must be >= 0");
    if (!(occlusion_fraction >= 0.0 && occlusion_fraction <= 0.5)) {
      throw Error(ErrorKind::BadConfig, "occlusion fraction must lie in [0, 0.5]");
    }
    if (n_points < kMinShapePoints) throw Error(ErrorKind::BadConfig, "n_points must be >= 64");
    if (!(scale_min > 0.0 && scale_max >= scale_min)) throw Error(ErrorKind::BadConfig, "bad scale range");
  }
};

struct SceneInstance {
  std::int64_t instance_id = 0;
  Split split = Split::Train;
  std::size_t category = 0;  // index into the dataset's category list
  ShapeKind kind = ShapeKind::AsymmetricBox;
  PointCloud observed;
  Rotation gt_rotation;
  Vec3 gt_center = Vec3::Zero();
  Vec3 gt_size = Vec3::Ones();
  double scale = 1.0;
};

inline std::size_t occluded_keep_count(std::size_t n, double fraction) {
  return n - static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n)));
}

/// Poses the canonical cloud, adds gaussian jitter truncated to a 3 sigma ball, then
/// drops the `occlusion_fraction` of points farthest along a random direction
/// (the far side of a plane through the centroid).
inline SceneInstance render_instance(const CanonicalShape& shape, const Rotation& r_gt, const Vec3& center,
                                     const GenConfig& cfg, Rng& rng) {
  SceneInstance inst;
  inst.kind = shape.kind;
  inst.gt_rotation = r_gt;
  inst.gt_center = center;
  inst.gt_size = shape.size;

  PointCloud posed = (shape.points * r_gt.matrix().transpose()).rowwise() + center.transpose();
  if (cfg.noise_sigma > 0.0) {
    std::normal_distribution<double> normal(0.0, 1.0);
    for (Eigen::Index i = 0; i < posed.rows(); ++i) {
      Vec3 e;
      do {
        e = Vec3(normal(rng), normal(rng), normal(rng));
      } while (e.norm() > 3.0);
      posed.row(i) += cfg.noise_sigma * e.transpose();
    }
  }

  const std::size_t n = static_cast<std::size_t>(posed.rows());
  const std::size_t keep = occluded_keep_count(n, cfg.occlusion_fraction);
  if (keep == n) {
    inst.observed = std::move(posed);
    return inst;
  }
  std::normal_distribution<double> normal(0.0, 1.0);
  Vec3 dir;
  do {
    dir = Vec3(normal(rng), normal(rng), normal(rng));
  } while (dir.norm() < 1e-12);
  dir.normalize();
  const Vec3 c = centroid(posed);
  std::vector<double> proj(n);
  for (std::size_t i = 0; i < n; ++i) proj[i] = (posed.row(static_cast<Eigen::Index>(i)).transpose() - c).dot(dir);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return proj[a] < proj[b]; });
  std::vector<std::size_t> kept(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep));
  std::sort(kept.begin(), kept.end());
  inst.observed.resize(static_cast<Eigen::Index>(keep), 3);
  for (std::size_t i = 0; i < keep; ++i) {
    inst.observed.row(static_cast<Eigen::Index>(i)) = posed.row(static_cast<Eigen::Index>(kept[i]));
  }
  return inst;
}

/// Per-instance stream seed derived from (seed xor id), mixed with splitmix64.
/// Per-instance seed. Consumers other than the generator pass their own
/// `stream` tag so they never replay the draws that produced the ground truth.
inline std::uint64_t instance_seed(std::uint64_t seed, std::int64_t instance_id, std::uint64_t stream = 0) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  const std::uint64_t z = mix(seed ^ static_cast<std::uint64_t>(instance_id));
  return stream == 0 ? z : mix(z ^ mix(stream));
}

struct Dataset {
  GenConfig config;
  std::vector<SceneInstance> instances;

  std::vector<const SceneInstance*> split(Split s) const {
    std::vector<const SceneInstance*> out;
    for (const auto& i : instances) {
      if (i.split == s) out.push_back(&i);
    }
    return out;
  }
};

inline SceneInstance synthesize_instance(const GenConfig& cfg, std::int64_t id) {
  Rng rng(instance_seed(cfg.seed, id));
  const std::size_t category = static_cast<std::size_t>(id) % cfg.categories.size();
  const Rotation r_gt = sample_uniform(rng);
  std::uniform_real_distribution<double> box(-cfg.center_extent, cfg.center_extent);
  const Vec3 center(box(rng), box(rng), box(rng));
  std::uniform_real_distribution<double> scale_dist(cfg.scale_min, cfg.scale_max);
  const double scale = cfg.scale_max > cfg.scale_min ? scale_dist(rng) : cfg.scale_min;
  CanonicalShape shape = make_canonical_shape(cfg.categories[category], cfg.n_points, rng);
  shape.points *= scale;
  shape.size *= scale;
  SceneInstance inst = render_instance(shape, r_gt, center, cfg, rng);
  inst.instance_id = id;
  inst.category = category;
  inst.scale = scale;
  inst.split = static_cast<std::size_t>(id) < cfg.n_train ? Split::Train : Split::Test;
  return inst;
}

/// Train ids are [0, n_train), test ids [n_train, n_train + n_test).
inline Dataset synthesize_dataset(const GenConfig& cfg) {
  cfg.validate();
  Dataset d{cfg, {}};
  const std::size_t total = cfg.n_train + cfg.n_test;
  d.instances.reserve(total);
  for (std::size_t id = 0; id < total; ++id) d.instances.push_back(synthesize_instance(cfg, static_cast<std::int64_t>(id)));
  return d;
}

/// Deterministic reference cloud for ADD-S: the canonical shape under a fixed
/// stream, scaled to the instance.
inline PointCloud reference_cloud(ShapeKind kind, double scale, std::size_t n_points = 1024) {
  Rng rng(0x5eedc10dULL);
  return make_canonical_shape(kind, n_points, rng).points * scale;
}

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::json gen_config_to_json(const GenConfig& c) {
  nlohmann::json cats = nlohmann::json::array();
  for (auto k : c.categories) cats.push_back(std::string(to_string(k)));
  return {{"n_train", c.n_train},
          {"n_test", c.n_test},
          {"categories", cats},
          {"noise_sigma", c.noise_sigma},
          {"occlusion_fraction", c.occlusion_fraction},
          {"seed", c.seed},
          {"n_points", c.n_points},
          {"scale_min", c.scale_min},
          {"scale_max", c.scale_max},
          {"center_extent", c.center_extent}};
}

inline GenConfig gen_config_from_json(const nlohmann::json& j, GenConfig c = {}) {
  c.n_train = j.value("n_train", c.n_train);
  c.n_test = j.value("n_test", c.n_test);
  if (j.contains("categories")) {
    c.categories.clear();
    for (const auto& s : j.at("categories")) c.categories.push_back(shape_kind_from_string(s.get<std::string>()));
  }
  c.noise_sigma = j.value("noise_sigma", c.noise_sigma);
  c.occlusion_fraction = j.value("occlusion_fraction", c.occlusion_fraction);
  c.seed = j.value("seed", c.seed);
  c.n_points = j.value("n_points", c.n_points);
  c.scale_min = j.value("scale_min", c.scale_min);
  c.scale_max = j.value("scale_max", c.scale_max);
  c.center_extent = j.value("center_extent", c.center_extent);
  return c;
}

inline std::string point_file_name(std::int64_t id) {
  std::string digits = std::to_string(id);
  if (digits.size() < 6) digits.insert(0, 6 - digits.size(), '0');
  return "points/" + digits + ".csv";
}

inline void write_points(const PointCloud& p, const std::filesystem::path& file) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + file.string());
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    out << format_double(p(i, 0)) << ',' << format_double(p(i, 1)) << ',' << format_double(p(i, 2)) << '\n';
  }
  if (!out) throw Error(ErrorKind::IoError, "short write " + file.string());
}

inline PointCloud read_points(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw Error(ErrorKind::IoError, "cannot read " + file.string());
  std::vector<double> vals;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    std::string_view v(line);
    for (int k = 0; k < 3; ++k) {
      const auto comma = v.find(',');
      if ((k < 2) == (comma == std::string_view::npos)) throw Error(ErrorKind::IoError, "bad point line in " + file.string());
      vals.push_back(parse_double(v.substr(0, comma)));
      if (k < 2) v.remove_prefix(comma + 1);
    }
  }
  PointCloud p(static_cast<Eigen::Index>(vals.size() / 3), 3);
  std::copy(vals.begin(), vals.end(), p.data());
  return p;
}

inline nlohmann::json vec_json(const Vec3& v) { return {v.x(), v.y(), v.z()}; }

inline Vec3 vec_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 3) throw Error(ErrorKind::IoError, "expected 3-vector");
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

/// Writes `dir/manifest.json` and one `dir/points/<id>.csv` per instance.
inline void write_dataset(const Dataset& d, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir / "points", ec);
  if (ec) throw Error(ErrorKind::IoError, "cannot create " + dir.string());
  nlohmann::json records = nlohmann::json::array();
  for (const auto& inst : d.instances) {
    nlohmann::json rot = nlohmann::json::array();
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) rot.push_back(inst.gt_rotation(i, j));
    const auto file = point_file_name(inst.instance_id);
    records.push_back({{"instance_id", inst.instance_id},
                       {"split", std::string(to_string(inst.split))},
                       {"category", inst.category},
                       {"gt_rotation", rot},
                       {"gt_center", vec_json(inst.gt_center)},
                       {"gt_size", vec_json(inst.gt_size)},
                       {"scale", inst.scale},
                       {"points", file}});
    write_points(inst.observed, dir / file);
  }
  nlohmann::json cats = nlohmann::json::array();
  for (auto k : d.config.categories) cats.push_back(std::string(to_string(k)));
  nlohmann::json manifest = {{"format", "so3flow-dataset"},
                             {"version", 1},
                             {"config", gen_config_to_json(d.config)},
                             {"categories", cats},
                             {"instances", records}};
  std::ofstream out(dir / "manifest.json", std::ios::binary);
  if (!out) throw Error(ErrorKind::IoError, "cannot write manifest in " + dir.string());
  out << manifest.dump(1) << '\n';
  if (!out) throw Error(ErrorKind::IoError, "short write of manifest");
}

inline Dataset read_dataset(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw Error(ErrorKind::IoError, "no manifest.json in " + dir.string());
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(in);
    Dataset d;
    d.config = gen_config_from_json(m.at("config"));
    for (const auto& r : m.at("instances")) {
      SceneInstance inst;
      inst.instance_id = r.at("instance_id").get<std::int64_t>();
      inst.split = split_from_string(r.at("split").get<std::string>());
      inst.category = r.at("category").get<std::size_t>();
      if (inst.category >= d.config.categories.size()) throw Error(ErrorKind::IoError, "category index out of range");
      inst.kind = d.config.categories[inst.category];
      const auto& rot = r.at("gt_rotation");
      if (rot.size() != 9) throw Error(ErrorKind::IoError, "gt_rotation needs 9 entries");
      Mat3 mr;
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) mr(i, j) = rot[static_cast<std::size_t>(3 * i + j)].get<double>();
      inst.gt_rotation = Rotation::from_matrix(mr);
      inst.gt_center = vec_from_json(r.at("gt_center"));
      inst.gt_size = vec_from_json(r.at("gt_size"));
      inst.scale = r.value("scale", 1.0);
      inst.observed = read_points(dir / r.at("points").get<std::string>());
      d.instances.push_back(std::move(inst));
    }
    return d;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::IoError, std::string("dataset manifest: ") + e.what());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::IoError) throw;
    throw Error(ErrorKind::IoError, e.what());
  }
}

inline void generate_dataset(const GenConfig& cfg, const std::filesystem::path& dir) {
  write_dataset(synthesize_dataset(cfg), dir);
}

}  // namespace so3flow::synthetic
