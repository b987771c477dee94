#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "splatseg/types.hpp"

namespace splatseg {

struct RenderOptions {
  double lowpass = 0.3;               // px^2 added to the 2D covariance diagonal
  double alpha_cutoff = 1.0 / 255.0;  // contributions below this are skipped
  double transmittance_floor = 1e-4;  // blending stops once T drops below this
  double extent_sigma = 3.0;          // screen-space extent cut, in sigmas
};

// Per-Gaussian blending weights are clamped to this so the transmittance
// product stays strictly positive.
inline constexpr double kAlphaClamp = 0.99;

struct Splat2D {
  Vec2 mean2d = Vec2::Zero();  // px
  Mat2 cov2d = Mat2::Zero();   // px^2, includes the low-pass term
  double depth = 0;            // view-space z
  int gaussian_index = -1;
};

// One blended contribution: the Gaussian and its final opacity alpha'.
struct PixelContribution {
  std::int32_t gaussian_index;
  double alpha;
};

struct RenderOutput {
  ImageRGB color;
  FeatureMap features;

  // Ordered front-to-back blending log; entries for pixel p live in
  // log_entries[log_offsets[p] .. log_offsets[p+1]). Replaying it reproduces
  // color and features bit-exactly.
  std::vector<PixelContribution> log_entries;
  std::vector<std::int64_t> log_offsets;

  // Depth-sorted splats and the inverse index, kept for the backward pass.
  std::vector<Splat2D> splats;
  std::vector<std::int32_t> splat_of_gaussian;  // -1 when culled

  RenderOptions options;
  int source_gaussian_count = 0;
  Vec3 background = Vec3::Zero();

  std::pair<const PixelContribution*, const PixelContribution*> contributions(int pixel) const {
    return {log_entries.data() + log_offsets[pixel], log_entries.data() + log_offsets[pixel + 1]};
  }
};

// Gradients of some scalar with respect to every Gaussian parameter.
struct CloudGradients {
  MatX position;   // 3 x N
  MatX log_scale;  // 3 x N
  MatX rotation;   // 4 x N
  VecX opacity;    // N, w.r.t. the pre-sigmoid value
  MatX color;      // 3 x N
  MatX feature;    // D x N

  static CloudGradients zero(int feature_dim, int count);
};

// EWA projection of one Gaussian into a view. Returns nothing when the
// view-space depth is at or behind the near plane.
std::optional<Splat2D> project_gaussian(const Gaussian& g, const Camera& cam, double lowpass);

// Front-to-back alpha blending of colors and features over a global depth
// sort (ties broken by Gaussian index). Deterministic and single-threaded.
RenderOutput rasterize(const GaussianCloud& cloud, const Camera& cam, const RenderOptions& opts = {});

// Exact gradients of the blended outputs under the replayed contribution log.
// grad_color is (H*W) x 3, grad_features (H*W) x D, both matching `out`.
CloudGradients rasterize_backward(const RenderOutput& out, const GaussianCloud& cloud,
                                  const Camera& cam, const Eigen::MatrixX3d& grad_color,
                                  const MatX& grad_features);

}  // namespace splatseg
