#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "splatseg/math.hpp"

namespace splatseg {

// Per-view integer label map, labels(v, u); 0 = unlabeled. Segment IDs are
// view-local and need not correspond across views.
using SegmentMask = Eigen::ArrayXXi;

// Binary mask with the same (v, u) indexing.
using BoolMask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

inline int pixel_index(int u, int v, int width) { return v * width + u; }

// One scene primitive. Scales are stored in log domain and opacity before the
// sigmoid so unconstrained optimizer steps keep them valid; activations are
// applied on read.
struct Gaussian {
  Vec3 position = Vec3::Zero();
  Vec3 log_scale = Vec3::Zero();
  Vec4 rotation = Vec4(1, 0, 0, 0);  // unit quaternion (w, x, y, z)
  double opacity_raw = 0.0;
  Vec3 color = Vec3::Zero();
  VecX feature;

  Vec3 scale() const { return log_scale.array().exp(); }
  double opacity() const { return sigmoid(opacity_raw); }
};

// Sigma = R * diag(scale)^2 * R^T. Expects a unit quaternion.
Mat3 covariance_of(const Gaussian& g);

// Pinhole camera with a world-to-camera pose.
struct Camera {
  double fx = 0, fy = 0;
  double cx = 0, cy = 0;
  int width = 0, height = 0;
  Vec4 rotation = Vec4(1, 0, 0, 0);  // world->camera, (w, x, y, z)
  Vec3 translation = Vec3::Zero();
  double near = 0.1;

  Mat3 rotation_matrix() const { return rotation_matrix_of(rotation); }
  Vec3 to_camera(const Vec3& world) const { return rotation_matrix() * world + translation; }
  Vec3 center() const { return -(rotation_matrix().transpose() * translation); }
  void validate() const;  // throws DataError on invariant violations
};

// RGB image flattened row-major by pixel: data.row(pixel_index(u, v, width)).
struct ImageRGB {
  int width = 0, height = 0;
  Eigen::MatrixX3d data;

  static ImageRGB zero(int width, int height) {
    return {width, height, Eigen::MatrixX3d::Zero(width * height, 3)};
  }
  Eigen::RowVector3d pixel(int u, int v) const { return data.row(pixel_index(u, v, width)); }
};

// Rendered feature image, data.row(pixel) holds the blended D-vector; alpha is
// the accumulated opacity per pixel.
struct FeatureMap {
  int width = 0, height = 0;
  MatX data;   // (H*W) x D
  VecX alpha;  // H*W

  static FeatureMap zero(int width, int height, int dim) {
    return {width, height, MatX::Zero(width * height, dim), VecX::Zero(width * height)};
  }
  int feature_dim() const { return static_cast<int>(data.cols()); }
};

// Column-per-Gaussian storage for a whole scene, plus the densification
// statistics the trainer maintains.
struct GaussianCloud {
  MatX positions;   // 3 x N
  MatX log_scales;  // 3 x N
  MatX rotations;   // 4 x N, rows (w, x, y, z)
  VecX opacities;   // pre-sigmoid
  MatX colors;      // 3 x N
  MatX features;    // D x N

  VecX grad_accum;             // accumulated position-gradient norms
  Eigen::VectorXi grad_count;  // iterations accumulated since last reset
  Vec3 background = Vec3::Zero();

  static GaussianCloud create(int feature_dim, int count = 0);

  int size() const { return static_cast<int>(positions.cols()); }
  int feature_dim() const { return static_cast<int>(features.rows()); }

  Gaussian gaussian(int i) const;
  void set_gaussian(int i, const Gaussian& g);
  void append(const Gaussian& g);

  GaussianCloud subset(const std::vector<int>& indices) const;
  void filter(const std::vector<bool>& keep);
  void reset_grad_stats();

  // Throws DataError on shape/invariant violations, NumericalError (with the
  // offending index) on non-finite parameter values.
  void validate() const;

  // Shape and finiteness only; rendering normalizes quaternions itself, so it
  // does not require them to be unit.
  void check_finite() const;
};

}  // namespace splatseg
