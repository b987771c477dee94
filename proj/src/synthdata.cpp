#include "splatseg/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <unordered_map>
#include <unordered_set>

#include "splatseg/errors.hpp"

namespace splatseg {

namespace {

Vec4 random_unit_quaternion(std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vec4 q(normal(rng), normal(rng), normal(rng), normal(rng));
  q.normalize();
  if (q[0] < 0) q = -q;
  return q;
}

VecX random_unit_feature(int dim, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  VecX f(dim);
  for (int i = 0; i < dim; ++i) f[i] = normal(rng);
  const double n = f.norm();
  return n > 0 ? VecX(f / n) : f;
}

Camera look_at_camera(const Vec3& eye, const Vec3& target, double focal, int width, int height) {
  const Vec3 forward = (target - eye).normalized();
  const Vec3 up(0, 0, 1);
  const Vec3 x = forward.cross(up).normalized();
  const Vec3 y = forward.cross(x);
  Mat3 rot;
  rot.row(0) = x;
  rot.row(1) = y;
  rot.row(2) = forward;
  Eigen::Quaterniond q(rot);
  q.normalize();
  if (q.w() < 0) q.coeffs() = -q.coeffs();

  Camera cam;
  cam.fx = cam.fy = focal;
  cam.cx = 0.5 * (width - 1);
  cam.cy = 0.5 * (height - 1);
  cam.width = width;
  cam.height = height;
  cam.rotation = Vec4(q.w(), q.x(), q.y(), q.z());
  cam.translation = -(rot * eye);
  cam.near = 0.1;
  return cam;
}

}  // namespace

void SceneSpec::validate() const {
  if (objects.empty()) throw DataError("scene spec: at least one object required");
  if (ring.count < 2) throw DataError("scene spec: at least two cameras required");
  if (image_width < 16 || image_height < 16)
    throw DataError("scene spec: image dimensions must be at least 16");
  if (feature_dim < 1) throw DataError("scene spec: feature dimension must be positive");
  for (const auto& obj : objects)
    if (obj.count < 1 || obj.radius <= 0)
      throw DataError("scene spec: object count and radius must be positive");
  if (ring.elevation_deg <= -89.0 || ring.elevation_deg >= 89.0)
    throw DataError("scene spec: camera elevation must stay below 89 degrees");
}

SyntheticScene generate_scene(const SceneSpec& spec) {
  spec.validate();

  int total = spec.background_plane.enabled ? spec.background_plane.count : 0;
  for (const auto& obj : spec.objects) total += obj.count;

  SyntheticScene scene;
  scene.labeled.cloud = GaussianCloud::create(spec.feature_dim, total);
  scene.labeled.instance_id = Eigen::VectorXi::Zero(total);
  GaussianCloud& cloud = scene.labeled.cloud;

  int next = 0;
  for (int k = 0; k < static_cast<int>(spec.objects.size()); ++k) {
    const ObjectSpec& obj = spec.objects[k];
    std::mt19937_64 rng(mix_seed(spec.rng_seed, 0x0B0000 + k));
    std::normal_distribution<double> normal(0.0, 1.0);
    const double sigma = 1.2 * obj.radius / std::cbrt(static_cast<double>(obj.count));
    for (int g = 0; g < obj.count; ++g, ++next) {
      cloud.positions.col(next) =
          obj.center + 0.5 * obj.radius * Vec3(normal(rng), normal(rng), normal(rng));
      for (int a = 0; a < 3; ++a)
        cloud.log_scales(a, next) = std::log(sigma) + spec.scale_spread * normal(rng);
      cloud.rotations.col(next) = random_unit_quaternion(rng);
      cloud.opacities[next] = logit(spec.object_opacity) + 0.1 * normal(rng);
      cloud.colors.col(next) =
          (obj.color + 0.02 * Vec3(normal(rng), normal(rng), normal(rng)))
              .cwiseMax(0.02)
              .cwiseMin(0.98);
      cloud.features.col(next) = random_unit_feature(spec.feature_dim, rng);
      scene.labeled.instance_id[next] = k + 1;
    }
  }

  if (spec.background_plane.enabled) {
    const BackgroundPlaneSpec& plane = spec.background_plane;
    std::mt19937_64 rng(mix_seed(spec.rng_seed, 0x91A9E0));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> uniform(-plane.extent, plane.extent);
    const double sigma_xy = 1.4 * plane.extent / std::sqrt(static_cast<double>(plane.count));
    for (int g = 0; g < plane.count; ++g, ++next) {
      cloud.positions.col(next) = Vec3(uniform(rng), uniform(rng), plane.z + 0.01 * normal(rng));
      cloud.log_scales(0, next) = std::log(sigma_xy) + 0.5 * spec.scale_spread * normal(rng);
      cloud.log_scales(1, next) = std::log(sigma_xy) + 0.5 * spec.scale_spread * normal(rng);
      cloud.log_scales(2, next) = std::log(0.02);
      cloud.rotations.col(next) = Vec4(1, 0, 0, 0);
      cloud.opacities[next] = logit(0.9);
      cloud.colors.col(next) =
          (plane.color + 0.02 * Vec3(normal(rng), normal(rng), normal(rng)))
              .cwiseMax(0.02)
              .cwiseMin(0.98);
      cloud.features.col(next) = random_unit_feature(spec.feature_dim, rng);
      scene.labeled.instance_id[next] = 0;
    }
  }

  Vec3 target = Vec3::Zero();
  for (const auto& obj : spec.objects) target += obj.center;
  target /= static_cast<double>(spec.objects.size());

  const double focal = spec.ring.focal > 0 ? spec.ring.focal : 1.1 * spec.image_width;
  const double elev = spec.ring.elevation_deg * M_PI / 180.0;
  for (int i = 0; i < spec.ring.count; ++i) {
    const double theta = 2.0 * M_PI * i / spec.ring.count;
    const Vec3 eye = target + spec.ring.radius * Vec3(std::cos(theta) * std::cos(elev),
                                                      std::sin(theta) * std::cos(elev),
                                                      std::sin(elev));
    scene.cameras.push_back(
        look_at_camera(eye, target, focal, spec.image_width, spec.image_height));
    scene.is_test.push_back(spec.test_every > 0 && i % spec.test_every == spec.test_every / 2);
  }
  return scene;
}

SegmentMask render_gt_masks(const LabeledCloud& lc, const Camera& cam,
                            const RenderOptions& opts) {
  if (lc.instance_id.size() != lc.cloud.size())
    throw DataError("render_gt_masks: instance labels out of sync with the cloud");
  const RenderOutput out = rasterize(lc.cloud, cam, opts);

  const int max_id = lc.instance_id.size() > 0 ? lc.instance_id.maxCoeff() : 0;
  SegmentMask mask = SegmentMask::Zero(cam.height, cam.width);
  VecX weight = VecX::Zero(max_id + 1);

  for (int p = 0; p < cam.width * cam.height; ++p) {
    const auto [begin, end] = out.contributions(p);
    if (begin == end) continue;
    weight.setZero();
    double t = 1.0;
    for (auto* e = begin; e != end; ++e) {
      weight[lc.instance_id[e->gaussian_index]] += e->alpha * t;
      t *= 1.0 - e->alpha;
    }
    int best = 0;
    for (int id = 1; id <= max_id; ++id)
      if (weight[id] > weight[best]) best = id;
    if (best != 0 && weight[best] > 0.5) mask(p / cam.width, p % cam.width) = best;
  }
  return mask;
}

namespace {

std::vector<int> labels_in_scan_order(const SegmentMask& mask) {
  std::vector<int> labels;
  std::unordered_set<int> seen;
  for (int v = 0; v < mask.rows(); ++v)
    for (int u = 0; u < mask.cols(); ++u) {
      const int l = mask(v, u);
      if (l != 0 && seen.insert(l).second) labels.push_back(l);
    }
  return labels;
}

int fresh_label(std::unordered_set<int>& used, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> pick(1, 65535);
  for (;;) {
    const int candidate = pick(rng);
    if (used.insert(candidate).second) return candidate;
  }
}

}  // namespace

std::vector<SegmentMask> corrupt_masks(const std::vector<SegmentMask>& masks,
                                       const CorruptionOptions& opts) {
  if (opts.split_prob < 0 || opts.split_prob > 1 || opts.drop_prob < 0 || opts.drop_prob > 1 ||
      opts.merge_prob < 0 || opts.merge_prob > 1)
    throw DataError("corrupt_masks: probabilities must lie in [0, 1]");

  std::vector<SegmentMask> out;
  out.reserve(masks.size());
  for (int view = 0; view < static_cast<int>(masks.size()); ++view) {
    std::mt19937_64 rng(mix_seed(opts.rng_seed, static_cast<std::uint64_t>(view)));
    SegmentMask mask = masks[view];

    // Random bijection into a fresh ID space, always applied.
    std::unordered_set<int> used;
    std::unordered_map<int, int> rename;
    for (int label : labels_in_scan_order(mask)) rename[label] = fresh_label(used, rng);
    for (int v = 0; v < mask.rows(); ++v)
      for (int u = 0; u < mask.cols(); ++u)
        if (mask(v, u) != 0) mask(v, u) = rename[mask(v, u)];

    std::bernoulli_distribution do_split(opts.split_prob);
    if (do_split(rng)) {
      const auto labels = labels_in_scan_order(mask);
      if (!labels.empty()) {
        std::uniform_int_distribution<int> pick(0, static_cast<int>(labels.size()) - 1);
        const int target = labels[pick(rng)];
        std::vector<std::pair<int, int>> pix;
        double cu = 0, cv = 0;
        for (int v = 0; v < mask.rows(); ++v)
          for (int u = 0; u < mask.cols(); ++u)
            if (mask(v, u) == target) {
              pix.emplace_back(u, v);
              cu += u;
              cv += v;
            }
        cu /= pix.size();
        cv /= pix.size();
        std::uniform_real_distribution<double> angle(0.0, M_PI);
        for (int attempt = 0; attempt < 8; ++attempt) {
          const double a = angle(rng);
          const double nx = std::cos(a), ny = std::sin(a);
          int above = 0;
          for (const auto& [u, v] : pix)
            if ((u - cu) * nx + (v - cv) * ny > 0) ++above;
          if (above == 0 || above == static_cast<int>(pix.size())) continue;
          const int fresh = fresh_label(used, rng);
          for (const auto& [u, v] : pix)
            if ((u - cu) * nx + (v - cv) * ny > 0) mask(v, u) = fresh;
          break;
        }
      }
    }

    std::bernoulli_distribution do_merge(opts.merge_prob);
    if (do_merge(rng)) {
      const auto labels = labels_in_scan_order(mask);
      if (labels.size() >= 2) {
        std::uniform_int_distribution<int> pick(0, static_cast<int>(labels.size()) - 1);
        int a = pick(rng), b = pick(rng);
        while (b == a) b = pick(rng);
        for (int v = 0; v < mask.rows(); ++v)
          for (int u = 0; u < mask.cols(); ++u)
            if (mask(v, u) == labels[b]) mask(v, u) = labels[a];
      }
    }

    std::bernoulli_distribution do_drop(opts.drop_prob);
    if (do_drop(rng)) {
      const auto labels = labels_in_scan_order(mask);
      if (!labels.empty()) {
        std::uniform_int_distribution<int> pick(0, static_cast<int>(labels.size()) - 1);
        const int target = labels[pick(rng)];
        for (int v = 0; v < mask.rows(); ++v)
          for (int u = 0; u < mask.cols(); ++u)
            if (mask(v, u) == target) mask(v, u) = 0;
      }
    }

    out.push_back(std::move(mask));
  }
  return out;
}

}  // namespace splatseg
