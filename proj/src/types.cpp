#include "splatseg/types.hpp"

#include <cmath>
#include <string>

#include "splatseg/errors.hpp"

namespace splatseg {

Mat3 covariance_of(const Gaussian& g) {
  const Mat3 r = rotation_matrix_of(g.rotation);
  const Mat3 m = r * g.scale().asDiagonal();
  return m * m.transpose();
}

void Camera::validate() const {
  if (!(fx > 0) || !(fy > 0)) throw DataError("camera: focal lengths must be positive");
  if (width <= 0 || height <= 0) throw DataError("camera: image size must be positive");
  if (!(cx >= 0 && cx < width) || !(cy >= 0 && cy < height))
    throw DataError("camera: principal point outside the image");
  if (!(near > 0)) throw DataError("camera: near plane must be positive");
  if (std::abs(rotation.norm() - 1.0) > 1e-6) throw DataError("camera: rotation quaternion not unit");
}

GaussianCloud GaussianCloud::create(int feature_dim, int count) {
  GaussianCloud c;
  c.positions = MatX::Zero(3, count);
  c.log_scales = MatX::Zero(3, count);
  c.rotations = MatX::Zero(4, count);
  c.rotations.row(0).setOnes();
  c.opacities = VecX::Zero(count);
  c.colors = MatX::Zero(3, count);
  c.features = MatX::Zero(feature_dim, count);
  c.grad_accum = VecX::Zero(count);
  c.grad_count = Eigen::VectorXi::Zero(count);
  return c;
}

Gaussian GaussianCloud::gaussian(int i) const {
  Gaussian g;
  g.position = positions.col(i);
  g.log_scale = log_scales.col(i);
  g.rotation = rotations.col(i);
  g.opacity_raw = opacities[i];
  g.color = colors.col(i);
  g.feature = features.col(i);
  return g;
}

void GaussianCloud::set_gaussian(int i, const Gaussian& g) {
  if (g.feature.size() != feature_dim())
    throw DataError("gaussian feature dimension does not match the cloud");
  positions.col(i) = g.position;
  log_scales.col(i) = g.log_scale;
  rotations.col(i) = g.rotation;
  opacities[i] = g.opacity_raw;
  colors.col(i) = g.color;
  features.col(i) = g.feature;
}

void GaussianCloud::append(const Gaussian& g) {
  const int n = size();
  positions.conservativeResize(3, n + 1);
  log_scales.conservativeResize(3, n + 1);
  rotations.conservativeResize(4, n + 1);
  opacities.conservativeResize(n + 1);
  colors.conservativeResize(3, n + 1);
  features.conservativeResize(Eigen::NoChange, n + 1);
  grad_accum.conservativeResize(n + 1);
  grad_count.conservativeResize(n + 1);
  grad_accum[n] = 0.0;
  grad_count[n] = 0;
  set_gaussian(n, g);
}

GaussianCloud GaussianCloud::subset(const std::vector<int>& indices) const {
  GaussianCloud out = create(feature_dim(), static_cast<int>(indices.size()));
  for (int k = 0; k < static_cast<int>(indices.size()); ++k) {
    const int i = indices[k];
    out.positions.col(k) = positions.col(i);
    out.log_scales.col(k) = log_scales.col(i);
    out.rotations.col(k) = rotations.col(i);
    out.opacities[k] = opacities[i];
    out.colors.col(k) = colors.col(i);
    out.features.col(k) = features.col(i);
  }
  out.background = background;
  return out;
}

void GaussianCloud::filter(const std::vector<bool>& keep) {
  std::vector<int> kept;
  kept.reserve(keep.size());
  for (int i = 0; i < static_cast<int>(keep.size()); ++i)
    if (keep[i]) kept.push_back(i);
  GaussianCloud out = subset(kept);
  out.grad_accum = VecX::Zero(out.size());
  out.grad_count = Eigen::VectorXi::Zero(out.size());
  for (int k = 0; k < static_cast<int>(kept.size()); ++k) {
    out.grad_accum[k] = grad_accum[kept[k]];
    out.grad_count[k] = grad_count[kept[k]];
  }
  *this = std::move(out);
}

void GaussianCloud::reset_grad_stats() {
  grad_accum.setZero(size());
  grad_count.setZero(size());
}

void GaussianCloud::check_finite() const {
  const int n = size();
  if (log_scales.cols() != n || rotations.cols() != n || opacities.size() != n ||
      colors.cols() != n || features.cols() != n)
    throw DataError("cloud: parameter arrays have inconsistent sizes");
  for (int i = 0; i < n; ++i) {
    if (!positions.col(i).allFinite() || !log_scales.col(i).allFinite() ||
        !rotations.col(i).allFinite() || !std::isfinite(opacities[i]) ||
        !colors.col(i).allFinite() || !features.col(i).allFinite())
      throw NumericalError("cloud: non-finite parameter in gaussian " + std::to_string(i));
    if (rotations.col(i).norm() < 1e-12)
      throw NumericalError("cloud: zero rotation quaternion in gaussian " + std::to_string(i));
  }
}

void GaussianCloud::validate() const {
  check_finite();
  const int n = size();
  if (grad_accum.size() != n || grad_count.size() != n)
    throw DataError("cloud: gradient statistics out of sync with gaussian count");
  for (int i = 0; i < n; ++i)
    if (std::abs(rotations.col(i).norm() - 1.0) > 1e-6)
      throw DataError("cloud: rotation quaternion of gaussian " + std::to_string(i) + " not unit");
}

}  // namespace splatseg
