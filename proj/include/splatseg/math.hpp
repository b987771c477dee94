#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <cstdint>

namespace splatseg {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using VecX = Eigen::VectorXd;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using MatX = Eigen::MatrixXd;

template <typename Scalar>
Scalar sigmoid(Scalar x) {
  return Scalar(1) / (Scalar(1) + std::exp(-x));
}

template <typename Scalar>
Scalar logit(Scalar p) {
  return std::log(p) - std::log(Scalar(1) - p);
}

// Rotation matrix from a unit quaternion (w, x, y, z).
template <typename Scalar>
Eigen::Matrix<Scalar, 3, 3> rotation_matrix_of(const Eigen::Matrix<Scalar, 4, 1>& q) {
  const Scalar w = q[0], x = q[1], y = q[2], z = q[3];
  Eigen::Matrix<Scalar, 3, 3> r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return r;
}

// dR/dw, dR/dx, dR/dy, dR/dz for a unit quaternion.
inline std::array<Mat3, 4> rotation_quaternion_derivatives(const Vec4& q) {
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  std::array<Mat3, 4> d;
  d[0] << 0, -z, y, z, 0, -x, -y, x, 0;
  d[1] << 0, y, z, y, -2 * x, -w, z, w, -2 * x;
  d[2] << -2 * y, x, w, x, 0, z, -w, z, -2 * y;
  d[3] << -2 * z, -w, x, w, -2 * z, y, x, y, 0;
  for (auto& m : d) m *= 2.0;
  return d;
}

// Renormalizes a quaternion; a no-op when already unit so repeated calls are
// bitwise idempotent.
inline Vec4 normalize_quaternion(const Vec4& q) {
  const double n = q.norm();
  if (std::abs(n - 1.0) <= 1e-12) return q;
  return q / n;
}

// splitmix64 step, used to derive independent sub-seeds.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace splatseg
