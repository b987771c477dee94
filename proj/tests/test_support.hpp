#pragma once

#include <functional>
#include <random>
#include <vector>

#include "splatseg/rasterizer.hpp"
#include "splatseg/types.hpp"

namespace splatseg::testing {

// Central finite differences of a scalar-valued function.
inline double central_difference(const std::function<double(double)>& f, double x, double h) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

struct GradientMismatch {
  bool ok = true;
  double analytic = 0, numeric = 0;
  std::string label;
};

// Checks one analytic derivative against central differences with the
// criterion used throughout: relative error < rel_tol, or absolute error
// < abs_tol when the reference is smaller than 1e-3.
inline bool gradient_close(double analytic, double numeric, double rel_tol = 1e-4,
                           double abs_tol = 1e-7) {
  const double err = std::abs(analytic - numeric);
  if (std::abs(numeric) < 1e-3) return err < abs_tol || err / std::max(std::abs(numeric), 1e-30) < rel_tol;
  return err / std::abs(numeric) < rel_tol;
}

inline VecX random_unit_vector(int dim, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  VecX v(dim);
  for (int i = 0; i < dim; ++i) v[i] = normal(rng);
  return v / v.norm();
}

// A small random cloud with well-separated depths along +z, moderate scales
// and opacities away from the clamp, suitable for finite-difference checks.
inline GaussianCloud random_test_cloud(int count, int feature_dim, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  GaussianCloud cloud = GaussianCloud::create(feature_dim, count);
  for (int i = 0; i < count; ++i) {
    cloud.positions.col(i) =
        Vec3(1.2 * (uni(rng) - 0.5), 1.2 * (uni(rng) - 0.5), 4.0 + 0.35 * i + 0.1 * uni(rng));
    for (int a = 0; a < 3; ++a) cloud.log_scales(a, i) = std::log(0.25 + 0.35 * uni(rng));
    Vec4 q(normal(rng), normal(rng), normal(rng), normal(rng));
    cloud.rotations.col(i) = q / q.norm();
    cloud.opacities[i] = -1.2 + 2.4 * uni(rng);  // activation in ~[0.23, 0.77]
    cloud.colors.col(i) = Vec3(0.1 + 0.8 * uni(rng), 0.1 + 0.8 * uni(rng), 0.1 + 0.8 * uni(rng));
    for (int d = 0; d < feature_dim; ++d) cloud.features(d, i) = 0.1 + 0.8 * uni(rng);
  }
  cloud.background = Vec3(0.15, 0.2, 0.25);
  return cloud;
}

inline Camera simple_camera(int width = 16, int height = 16, double focal = 20.0) {
  Camera cam;
  cam.fx = cam.fy = focal;
  cam.cx = 0.5 * (width - 1);
  cam.cy = 0.5 * (height - 1);
  cam.width = width;
  cam.height = height;
  cam.near = 0.1;
  return cam;
}

// Cutoff-free options so the rendered outputs are smooth in the parameters.
inline RenderOptions smooth_render_options() {
  RenderOptions opts;
  opts.alpha_cutoff = 0.0;
  opts.transmittance_floor = 0.0;
  opts.extent_sigma = 1e6;
  return opts;
}

}  // namespace splatseg::testing
