#include "splatseg/segmenter.hpp"

#include <algorithm>
#include <string>

#include "splatseg/convex_hull.hpp"
#include "splatseg/errors.hpp"
#include "splatseg/losses.hpp"

namespace splatseg {

DiscriminativeFeature pick_discriminative_feature(const FeatureMap& fm, int u, int v) {
  if (u < 0 || u >= fm.width || v < 0 || v >= fm.height)
    throw DataError("pick_discriminative_feature: pixel (" + std::to_string(u) + ", " +
                    std::to_string(v) + ") out of bounds");
  DiscriminativeFeature out;
  const auto row = fm.data.row(pixel_index(u, v, fm.width));
  const double n = row.norm();
  if (n < kFeatureNormEps) {
    out.feature = VecX::Zero(fm.feature_dim());
    out.degenerate = true;
    return out;
  }
  out.feature = row.transpose() / n;
  return out;
}

SimilarityMap similarity_map(const FeatureMap& fm, const VecX& query) {
  const double qn = query.norm();
  if (qn < kFeatureNormEps) throw DataError("similarity_map: zero query feature");
  const VecX q = query / qn;

  SimilarityMap sim = SimilarityMap::Zero(fm.height, fm.width);
  for (int v = 0; v < fm.height; ++v) {
    for (int u = 0; u < fm.width; ++u) {
      const auto row = fm.data.row(pixel_index(u, v, fm.width));
      const double n = row.norm();
      if (n < kFeatureNormEps) continue;
      sim(v, u) = row.dot(q.transpose()) / n;
    }
  }
  return sim;
}

BoolMask object_mask(const SimilarityMap& sc, double t) {
  if (!(t > -1.0 && t < 1.0)) throw DataError("object_mask: threshold must lie in (-1, 1)");
  return sc >= t;
}

std::vector<int> select_gaussians_3d(const GaussianCloud& cloud, const VecX& query, double t) {
  const double qn = query.norm();
  if (qn < kFeatureNormEps) throw DataError("select_gaussians_3d: zero query feature");
  const VecX q = query / qn;

  std::vector<int> selected;
  for (int i = 0; i < cloud.size(); ++i) {
    const double n = cloud.features.col(i).norm();
    const double sim = n < kFeatureNormEps ? 0.0 : cloud.features.col(i).dot(q) / n;
    if (sim >= t) selected.push_back(i);
  }
  return selected;
}

ObjectSelection3D convex_hull_extract(const GaussianCloud& cloud, const std::vector<int>& seeds) {
  ObjectSelection3D out;
  out.seed_indices = seeds;
  std::sort(out.seed_indices.begin(), out.seed_indices.end());
  out.seed_indices.erase(std::unique(out.seed_indices.begin(), out.seed_indices.end()),
                         out.seed_indices.end());
  for (int i : out.seed_indices)
    if (i < 0 || i >= cloud.size()) throw DataError("convex_hull_extract: seed index out of range");

  std::vector<Vec3> seed_positions;
  seed_positions.reserve(out.seed_indices.size());
  for (int i : out.seed_indices) seed_positions.push_back(cloud.positions.col(i));

  const ConvexHull3 hull = convex_hull_3d(seed_positions);
  if (hull.degenerate) {
    out.hull_degenerate = true;
    out.hull_indices = out.seed_indices;
    return out;
  }

  std::vector<bool> inside(cloud.size(), false);
  for (int i : out.seed_indices) inside[i] = true;
  for (int i = 0; i < cloud.size(); ++i)
    if (!inside[i] && hull.contains(cloud.positions.col(i), 1e-9)) inside[i] = true;
  for (int i = 0; i < cloud.size(); ++i)
    if (inside[i]) out.hull_indices.push_back(i);
  return out;
}

BoolMask segment_query(const GaussianCloud& cloud, const Camera& reference, int u, int v,
                       const Camera& target, double t, const RenderOptions& opts) {
  const RenderOutput ref = rasterize(cloud, reference, opts);
  const DiscriminativeFeature feature = pick_discriminative_feature(ref.features, u, v);
  if (feature.degenerate)
    throw DataError("segment_query: degenerate feature at pixel (" + std::to_string(u) + ", " +
                    std::to_string(v) + ")");
  const RenderOutput tgt = rasterize(cloud, target, opts);
  return object_mask(similarity_map(tgt.features, feature.feature), t);
}

}  // namespace splatseg
