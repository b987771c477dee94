#include "splatseg/rasterizer.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "splatseg/errors.hpp"

namespace splatseg {

namespace {

struct CameraFrame {
  Mat3 rotation;  // world->camera
  Vec3 translation;
};

std::optional<Splat2D> project_impl(const Vec3& position, const Vec3& log_scale,
                                    const Vec4& rotation, const CameraFrame& frame,
                                    const Camera& cam, double lowpass, int index) {
  const Vec3 t = frame.rotation * position + frame.translation;
  if (t.z() <= cam.near) return std::nullopt;

  Splat2D s;
  s.gaussian_index = index;
  s.depth = t.z();
  s.mean2d = Vec2(cam.fx * t.x() / t.z() + cam.cx, cam.fy * t.y() / t.z() + cam.cy);

  const Vec4 q = rotation / rotation.norm();
  const Mat3 r = rotation_matrix_of(q);
  const Vec3 scale = log_scale.array().exp();
  const Mat3 m = r * scale.asDiagonal();
  const Mat3 sigma = m * m.transpose();

  Eigen::Matrix<double, 2, 3> jac;
  const double z2 = t.z() * t.z();
  jac << cam.fx / t.z(), 0, -cam.fx * t.x() / z2,
      0, cam.fy / t.z(), -cam.fy * t.y() / z2;

  const Eigen::Matrix<double, 2, 3> jw = jac * frame.rotation;
  s.cov2d = jw * sigma * jw.transpose();
  s.cov2d(0, 0) += lowpass;
  s.cov2d(1, 1) += lowpass;
  return s;
}

double max_eigenvalue_2x2(const Mat2& c) {
  const double mid = 0.5 * (c(0, 0) + c(1, 1));
  const double disc = std::sqrt(0.25 * (c(0, 0) - c(1, 1)) * (c(0, 0) - c(1, 1)) + c(0, 1) * c(0, 1));
  return mid + disc;
}

Mat2 invert_2x2(const Mat2& c) {
  const double det = c(0, 0) * c(1, 1) - c(0, 1) * c(1, 0);
  Mat2 inv;
  inv << c(1, 1), -c(0, 1), -c(1, 0), c(0, 0);
  return inv / det;
}

std::vector<Splat2D> project_all(const GaussianCloud& cloud, const Camera& cam,
                                 const RenderOptions& opts) {
  const CameraFrame frame{cam.rotation_matrix(), cam.translation};
  std::vector<Splat2D> splats;
  splats.reserve(cloud.size());
  for (int i = 0; i < cloud.size(); ++i) {
    auto s = project_impl(cloud.positions.col(i), cloud.log_scales.col(i), cloud.rotations.col(i),
                          frame, cam, opts.lowpass, i);
    if (s) splats.push_back(*s);
  }
  std::stable_sort(splats.begin(), splats.end(), [](const Splat2D& a, const Splat2D& b) {
    if (a.depth != b.depth) return a.depth < b.depth;
    return a.gaussian_index < b.gaussian_index;
  });
  return splats;
}

}  // namespace

CloudGradients CloudGradients::zero(int feature_dim, int count) {
  CloudGradients g;
  g.position = MatX::Zero(3, count);
  g.log_scale = MatX::Zero(3, count);
  g.rotation = MatX::Zero(4, count);
  g.opacity = VecX::Zero(count);
  g.color = MatX::Zero(3, count);
  g.feature = MatX::Zero(feature_dim, count);
  return g;
}

std::optional<Splat2D> project_gaussian(const Gaussian& g, const Camera& cam, double lowpass) {
  cam.validate();
  const CameraFrame frame{cam.rotation_matrix(), cam.translation};
  return project_impl(g.position, g.log_scale, g.rotation, frame, cam, lowpass, -1);
}

RenderOutput rasterize(const GaussianCloud& cloud, const Camera& cam, const RenderOptions& opts) {
  cam.validate();
  cloud.check_finite();

  const int w = cam.width, h = cam.height;
  const int pixels = w * h;
  const int dim = cloud.feature_dim();

  RenderOutput out;
  out.options = opts;
  out.source_gaussian_count = cloud.size();
  out.background = cloud.background;
  out.color = ImageRGB::zero(w, h);
  out.features = FeatureMap::zero(w, h, dim);
  out.splats = project_all(cloud, cam, opts);
  out.splat_of_gaussian.assign(cloud.size(), -1);
  for (int s = 0; s < static_cast<int>(out.splats.size()); ++s)
    out.splat_of_gaussian[out.splats[s].gaussian_index] = s;

  VecX transmittance = VecX::Ones(pixels);
  std::vector<std::vector<PixelContribution>> logs(pixels);

  for (const Splat2D& s : out.splats) {
    const double radius = opts.extent_sigma * std::sqrt(max_eigenvalue_2x2(s.cov2d));
    const int u0 = std::max(0, static_cast<int>(std::ceil(s.mean2d.x() - radius)));
    const int u1 = std::min(w - 1, static_cast<int>(std::floor(s.mean2d.x() + radius)));
    const int v0 = std::max(0, static_cast<int>(std::ceil(s.mean2d.y() - radius)));
    const int v1 = std::min(h - 1, static_cast<int>(std::floor(s.mean2d.y() + radius)));
    if (u0 > u1 || v0 > v1) continue;

    const Mat2 conic = invert_2x2(s.cov2d);
    const double opacity = sigmoid(cloud.opacities[s.gaussian_index]);
    const Vec3 color = cloud.colors.col(s.gaussian_index);
    const auto feature = cloud.features.col(s.gaussian_index);

    for (int v = v0; v <= v1; ++v) {
      for (int u = u0; u <= u1; ++u) {
        const int p = pixel_index(u, v, w);
        const double t = transmittance[p];
        if (t < opts.transmittance_floor) continue;

        const double dx = u - s.mean2d.x();
        const double dy = v - s.mean2d.y();
        const double power =
            -0.5 * (conic(0, 0) * dx * dx + 2.0 * conic(0, 1) * dx * dy + conic(1, 1) * dy * dy);
        double alpha = opacity * std::exp(power);
        if (alpha > kAlphaClamp) alpha = kAlphaClamp;
        if (alpha < opts.alpha_cutoff) continue;

        const double weight = alpha * t;
        out.color.data.row(p) += weight * color.transpose();
        out.features.data.row(p) += weight * feature.transpose();
        logs[p].push_back({s.gaussian_index, alpha});
        transmittance[p] = t * (1.0 - alpha);
      }
    }
  }

  for (int p = 0; p < pixels; ++p) {
    out.color.data.row(p) += transmittance[p] * cloud.background.transpose();
    out.features.alpha[p] = 1.0 - transmittance[p];
  }

  out.log_offsets.resize(pixels + 1);
  out.log_offsets[0] = 0;
  std::int64_t total = 0;
  for (int p = 0; p < pixels; ++p) {
    total += static_cast<std::int64_t>(logs[p].size());
    out.log_offsets[p + 1] = total;
  }
  out.log_entries.reserve(total);
  for (int p = 0; p < pixels; ++p)
    out.log_entries.insert(out.log_entries.end(), logs[p].begin(), logs[p].end());
  return out;
}

CloudGradients rasterize_backward(const RenderOutput& out, const GaussianCloud& cloud,
                                  const Camera& cam, const Eigen::MatrixX3d& grad_color,
                                  const MatX& grad_features) {
  if (out.source_gaussian_count != cloud.size())
    throw DataError("rasterize_backward: contribution log was built from a different cloud size");
  const int w = out.color.width, h = out.color.height;
  const int pixels = w * h;
  const int dim = cloud.feature_dim();
  if (grad_color.rows() != pixels || grad_features.rows() != pixels || grad_features.cols() != dim)
    throw DataError("rasterize_backward: upstream gradient shape mismatch");

  CloudGradients grads = CloudGradients::zero(dim, cloud.size());

  // Splat-level accumulators, indexed like out.splats.
  const int n_splats = static_cast<int>(out.splats.size());
  MatX g_mean(2, n_splats);
  g_mean.setZero();
  std::vector<Mat2> g_cov(n_splats, Mat2::Zero());
  VecX g_opacity_act = VecX::Zero(n_splats);

  std::vector<Mat2> conics(n_splats);
  VecX opacity_act(n_splats);
  for (int s = 0; s < n_splats; ++s) {
    conics[s] = invert_2x2(out.splats[s].cov2d);
    opacity_act[s] = sigmoid(cloud.opacities[out.splats[s].gaussian_index]);
  }

  std::vector<double> trans;  // transmittance in front of each log entry
  for (int p = 0; p < pixels; ++p) {
    const auto [begin, end] = out.contributions(p);
    const int n = static_cast<int>(end - begin);
    if (n == 0) continue;
    const int u = p % w, v = p / w;

    trans.assign(n, 1.0);
    double t = 1.0;
    for (int i = 0; i < n; ++i) {
      trans[i] = t;
      t *= 1.0 - begin[i].alpha;
    }

    const Eigen::RowVector3d gc = grad_color.row(p);
    const auto gf = grad_features.row(p);
    Vec3 suffix_color = t * out.background;  // sum of everything blended behind entry i
    VecX suffix_feat = VecX::Zero(dim);

    for (int i = n - 1; i >= 0; --i) {
      const int g = begin[i].gaussian_index;
      const double alpha = begin[i].alpha;
      const double ti = trans[i];
      const double weight = alpha * ti;
      const Vec3 color = cloud.colors.col(g);
      const VecX feature = cloud.features.col(g);

      grads.color.col(g) += weight * gc.transpose();
      grads.feature.col(g) += weight * gf.transpose();

      const double one_minus = 1.0 - alpha;
      double d_alpha = gc.dot((ti * color - suffix_color / one_minus).transpose());
      d_alpha += gf.dot((ti * feature - suffix_feat / one_minus).transpose());

      suffix_color += weight * color;
      suffix_feat += weight * feature;

      if (alpha >= kAlphaClamp) continue;  // clamp is flat
      const int s = out.splat_of_gaussian[g];
      const Splat2D& splat = out.splats[s];
      const double gauss = alpha / opacity_act[s];  // exp(power)
      g_opacity_act[s] += gauss * d_alpha;

      const double common = alpha * d_alpha;  // opacity * gauss * d_alpha
      const Vec2 d(u - splat.mean2d.x(), v - splat.mean2d.y());
      const Vec2 conic_d = conics[s] * d;
      g_mean.col(s) += common * conic_d;
      g_cov[s] += (-0.5 * common) * (d * d.transpose());
    }
  }

  // Chain the splat-level gradients to the 3D parameters.
  const Mat3 rot_wc = cam.rotation_matrix();
  for (int s = 0; s < n_splats; ++s) {
    const int g = out.splats[s].gaussian_index;

    // opacity through the sigmoid
    const double act = opacity_act[s];
    grads.opacity[g] += g_opacity_act[s] * act * (1.0 - act);

    // conic = cov2d^-1  =>  dL/dcov = -conic * dL/dconic * conic
    const Mat2 d_cov = -conics[s] * g_cov[s] * conics[s];

    const Vec3 t = rot_wc * Vec3(cloud.positions.col(g)) + cam.translation;
    const double z = t.z(), z2 = z * z, z3 = z2 * z;
    Eigen::Matrix<double, 2, 3> jac;
    jac << cam.fx / z, 0, -cam.fx * t.x() / z2,
        0, cam.fy / z, -cam.fy * t.y() / z2;
    const Eigen::Matrix<double, 2, 3> jw = jac * rot_wc;

    const Vec4 q_raw = cloud.rotations.col(g);
    const double q_norm = q_raw.norm();
    const Vec4 q = q_raw / q_norm;
    const Mat3 rot = rotation_matrix_of(q);
    const Vec3 scale = Vec3(cloud.log_scales.col(g)).array().exp();
    const Mat3 m = rot * scale.asDiagonal();
    const Mat3 sigma = m * m.transpose();

    // cov2d = jw * sigma * jw^T (plus the constant low-pass term)
    const Mat3 d_sigma = jw.transpose() * d_cov * jw;
    const Eigen::Matrix<double, 2, 3> d_jw = (d_cov + d_cov.transpose()) * jw * sigma;
    const Eigen::Matrix<double, 2, 3> d_jac = d_jw * rot_wc.transpose();

    // sigma = m m^T, m = rot * diag(scale)
    const Mat3 d_m = (d_sigma + d_sigma.transpose()) * m;
    const Mat3 d_rot = d_m * scale.asDiagonal();
    const Vec3 d_scale = (rot.transpose() * d_m).diagonal();
    grads.log_scale.col(g) += (d_scale.array() * scale.array()).matrix();

    const auto d_rot_dq = rotation_quaternion_derivatives(q);
    Vec4 d_qn;
    for (int k = 0; k < 4; ++k) d_qn[k] = (d_rot.array() * d_rot_dq[k].array()).sum();
    grads.rotation.col(g) += (d_qn - q * q.dot(d_qn)) / q_norm;

    // mean2d and the Jacobian entries both depend on the camera-space point
    Vec3 d_t = jac.transpose() * Vec2(g_mean.col(s));
    d_t.x() += d_jac(0, 2) * (-cam.fx / z2);
    d_t.y() += d_jac(1, 2) * (-cam.fy / z2);
    d_t.z() += d_jac(0, 0) * (-cam.fx / z2) + d_jac(0, 2) * (2.0 * cam.fx * t.x() / z3) +
               d_jac(1, 1) * (-cam.fy / z2) + d_jac(1, 2) * (2.0 * cam.fy * t.y() / z3);
    grads.position.col(g) += rot_wc.transpose() * d_t;
  }

  return grads;
}

}  // namespace splatseg
