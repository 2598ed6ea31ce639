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

#include <Eigen/Dense>

#include <cstddef>
#include <limits>
#include <vector>

#include "so3flow/error.hpp"
#include "so3flow/so3.hpp"

namespace so3flow {

/// N x 3 points in meters, one point per row.
using PointCloud = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;

inline constexpr std::size_t kEncoderPoints = 512;

/// Greedy farthest point sampling. Starts at `seed_index`; each next pick
/// maximizes the distance to the selected set, lowest index on ties.
inline std::vector<std::size_t> farthest_point_indices(const PointCloud& p, std::size_t k,
                                                       std::size_t seed_index) {
  const auto n = static_cast<std::size_t>(p.rows());
  if (k > n) throw Error(ErrorKind::BadK, "k exceeds point count");
  if (seed_index >= n) throw Error(ErrorKind::BadK, "seed index out of range");
  std::vector<std::size_t> picked;
  picked.reserve(k);
  if (k == 0) return picked;

  std::vector<double> min_d2(n, std::numeric_limits<double>::infinity());
  std::size_t current = seed_index;
  for (std::size_t s = 0; s < k; ++s) {
    picked.push_back(current);
    const Eigen::RowVector3d c = p.row(static_cast<Eigen::Index>(current));
    std::size_t next = 0;
    double best = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d2 = (p.row(static_cast<Eigen::Index>(i)) - c).squaredNorm();
      if (d2 < min_d2[i]) min_d2[i] = d2;
      if (min_d2[i] > best) {
        best = min_d2[i];
        next = i;
      }
    }
    current = next;
  }
  return picked;
}

inline PointCloud farthest_point_sample(const PointCloud& p, std::size_t k, std::size_t seed_index) {
  const auto idx = farthest_point_indices(p, k, seed_index);
  PointCloud out(static_cast<Eigen::Index>(k), 3);
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = p.row(static_cast<Eigen::Index>(idx[i]));
  return out;
}

/// Repeats rows cyclically until the cloud holds at least `k` points.
inline PointCloud pad_cyclic(const PointCloud& p, std::size_t k) {
  const auto n = static_cast<std::size_t>(p.rows());
  if (n == 0) throw Error(ErrorKind::WrongPointCount, "empty point cloud");
  if (n >= k) return p;
  PointCloud out(static_cast<Eigen::Index>(k), 3);
  for (std::size_t i = 0; i < k; ++i) out.row(static_cast<Eigen::Index>(i)) = p.row(static_cast<Eigen::Index>(i % n));
  return out;
}

inline Vec3 centroid(const PointCloud& p) {
  if (p.rows() == 0) throw Error(ErrorKind::WrongPointCount, "empty point cloud");
  return p.colwise().mean().transpose();
}

/// Encoder-ready view of an observation: 512 FPS points with the observed
/// centroid subtracted, plus that centroid.
struct EncoderInput {
  PointCloud points;
  Vec3 centroid = Vec3::Zero();
};

inline EncoderInput prepare_encoder_input(const PointCloud& observed) {
  EncoderInput in;
  in.centroid = centroid(observed);
  in.points = farthest_point_sample(pad_cyclic(observed, kEncoderPoints), kEncoderPoints, 0);
  in.points.rowwise() -= in.centroid.transpose();
  return in;
}

}  // namespace so3flow
