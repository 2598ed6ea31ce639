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

// Exact SO(3) primitives in double precision. This layer doubles as the test
// oracle for everything above it, so it never shares the network's float32.

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cassert>
#include <cmath>
#include <numbers>
#include <random>

#include "so3flow/error.hpp"

namespace so3flow {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Element of so(3): axis times angle, or an angular velocity.
using Tangent = Vec3;

/// Random source used across the library. Every sampler takes it by reference
/// so the caller owns the stream.
using Rng = std::mt19937_64;

inline constexpr double kPi = std::numbers::pi;

namespace so3_tol {
inline constexpr double kRotation = 1e-9;    // ||R^T R - I||_F and |det R - 1|
inline constexpr double kSkew = 1e-9;        // ||S + S^T||_max for vee
inline constexpr double kSmallAngle = 1e-8;  // series branch in exp/log
inline constexpr double kNearPi = 1e-6;      // antipodal branch in log
inline constexpr double kSingular = 1e-12;   // sigma_min / sigma_max
}  // namespace so3_tol

inline bool is_rotation(const Mat3& m, double tol = so3_tol::kRotation) {
  if (!m.allFinite()) return false;
  const double ortho = (m.transpose() * m - Mat3::Identity()).norm();
  return ortho <= tol && std::abs(m.determinant() - 1.0) <= tol;
}

/// 3x3 special orthogonal matrix. Construction through `from_matrix` validates;
/// `unchecked` is for results of group operations, asserted in debug builds.
class Rotation {
 public:
  Rotation() : m_(Mat3::Identity()) {}

  static Rotation identity() { return Rotation(); }

  static Rotation from_matrix(const Mat3& m) {
    if (!is_rotation(m)) throw Error(ErrorKind::NotRotation, "matrix is not in SO(3)");
    return Rotation(m);
  }

  static Rotation unchecked(const Mat3& m) {
    assert(is_rotation(m, 1e-8));
    return Rotation(m);
  }

  const Mat3& matrix() const { return m_; }
  double operator()(int r, int c) const { return m_(r, c); }

  Rotation inverse() const { return Rotation(m_.transpose()); }

  Rotation operator*(const Rotation& rhs) const { return Rotation(m_ * rhs.m_); }
  Vec3 operator*(const Vec3& v) const { return m_ * v; }

 private:
  explicit Rotation(const Mat3& m) : m_(m) {}

  Mat3 m_;
};

inline Mat3 hat(const Vec3& v) {
  Mat3 s;
  s << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return s;
}

namespace detail {
inline Vec3 vee_unchecked(const Mat3& s) { return Vec3(s(2, 1), s(0, 2), s(1, 0)); }
}  // namespace detail

inline Vec3 vee(const Mat3& s) {
  if (!s.allFinite() || (s + s.transpose()).cwiseAbs().maxCoeff() > so3_tol::kSkew) {
    throw Error(ErrorKind::NotSkew, "matrix is not antisymmetric");
  }
  return detail::vee_unchecked(s);
}

/// Rodrigues: R = I + (sin t / t) W + ((1 - cos t) / t^2) W^2, W = hat(v), t = |v|.
/// `small_angle` selects the series branch; only tests should move it.
inline Rotation exp_map(const Vec3& v, double small_angle = so3_tol::kSmallAngle) {
  const double theta_sq = v.squaredNorm();
  const double theta = std::sqrt(theta_sq);
  double a;
  double b;
  if (theta < small_angle) {
    a = 1.0 - theta_sq / 6.0;
    b = 0.5 - theta_sq / 24.0;
  } else {
    a = std::sin(theta) / theta;
    const double half = std::sin(0.5 * theta) / theta;  // 1 - cos t = 2 sin^2(t/2)
    b = 2.0 * half * half;
  }
  const Mat3 w = hat(v);
  return Rotation::unchecked(Mat3::Identity() + a * w + b * (w * w));
}

/// Principal logarithm, |result| <= pi. At exactly pi the axis sign is chosen so
/// the first nonzero component is positive.
inline Tangent log_map(const Rotation& r, double small_angle = so3_tol::kSmallAngle) {
  const Mat3& m = r.matrix();
  if (!is_rotation(m)) throw Error(ErrorKind::NotRotation, "log_map input is not in SO(3)");

  const Vec3 sin_axis = 0.5 * detail::vee_unchecked(m - m.transpose());
  const double s = sin_axis.norm();
  const double c = std::clamp(0.5 * (m.trace() - 1.0), -1.0, 1.0);
  // atan2 is the same angle as acos(c) without the conditioning loss near 0 and pi.
  const double theta = std::atan2(s, c);

  if (theta < small_angle) return sin_axis;

  if (kPi - theta < so3_tol::kNearPi) {
    // (R + R^T)/2 - cos(t) I = (1 - cos t) a a^T; take its dominant column.
    const Mat3 sym = 0.5 * (m + m.transpose()) - c * Mat3::Identity();
    Eigen::Index i = 0;
    sym.diagonal().maxCoeff(&i);
    Vec3 axis = sym.col(i).normalized();
    const double orient = axis.dot(sin_axis);
    if (std::abs(orient) > 1e-12) {
      if (orient < 0.0) axis = -axis;
    } else {
      for (int k = 0; k < 3; ++k) {
        if (std::abs(axis[k]) > 1e-12) {
          if (axis[k] < 0.0) axis = -axis;
          break;
        }
      }
    }
    return theta * axis;
  }

  return (theta / s) * sin_axis;
}

inline double geodesic_distance(const Rotation& a, const Rotation& b) {
  return log_map(a.inverse() * b).norm();
}

/// Haar-uniform rotation: normalized quaternion of four standard normals.
inline Rotation sample_uniform(Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  double w;
  double x;
  double y;
  double z;
  double n;
  do {
    w = normal(rng);
    x = normal(rng);
    y = normal(rng);
    z = normal(rng);
    n = std::sqrt(w * w + x * x + y * y + z * z);
  } while (n < 1e-12);
  w /= n;
  x /= n;
  y /= n;
  z /= n;
  Mat3 m;
  m << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
       2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
       2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return Rotation::unchecked(m);
}

/// Nearest rotation in Frobenius norm (SVD polar factor with det correction).
inline Rotation project_to_rotation(const Mat3& m) {
  if (!m.allFinite()) throw Error(ErrorKind::Singular, "non-finite matrix");
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec3 sigma = svd.singularValues();
  if (sigma[0] <= 0.0 || sigma[2] <= so3_tol::kSingular * sigma[0]) {
    throw Error(ErrorKind::Singular, "matrix is rank-deficient");
  }
  const Mat3& u = svd.matrixU();
  const Mat3& v = svd.matrixV();
  Vec3 d(1.0, 1.0, (u * v.transpose()).determinant() < 0.0 ? -1.0 : 1.0);
  return Rotation::unchecked(u * d.asDiagonal() * v.transpose());
}

/// Re-orthonormalizes only when drift exceeds `tol`.
inline Rotation reproject_if_drifted(const Mat3& m, double tol = so3_tol::kRotation) {
  if (is_rotation(m, tol)) return Rotation::unchecked(m);
  return project_to_rotation(m);
}

}  // namespace so3flow
