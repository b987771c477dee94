#pragma once

#include <vector>

#include "splatseg/rasterizer.hpp"
#include "splatseg/types.hpp"

namespace splatseg {

inline constexpr double kDefaultSimilarityThreshold = 0.7;

// Per-pixel cosine similarity in [-1, 1]; zero-feature pixels map to 0.
using SimilarityMap = Eigen::ArrayXXd;

struct DiscriminativeFeature {
  VecX feature;  // l2-normalized; zero when degenerate
  bool degenerate = false;
};

// The normalized rendered feature at one pixel; a (near-)zero feature is
// returned as zero with the degenerate flag set.
DiscriminativeFeature pick_discriminative_feature(const FeatureMap& fm, int u, int v);

// Cosine similarity of every pixel's normalized feature against the query.
SimilarityMap similarity_map(const FeatureMap& fm, const VecX& query);

// M(u, v) = 1 iff similarity >= t (boundary inclusive).
BoolMask object_mask(const SimilarityMap& sc, double t = kDefaultSimilarityThreshold);

// Indices of Gaussians whose normalized stored feature has cosine similarity
// >= t with the query.
std::vector<int> select_gaussians_3d(const GaussianCloud& cloud, const VecX& query,
                                     double t = kDefaultSimilarityThreshold);

struct ObjectSelection3D {
  std::vector<int> seed_indices;  // sorted, unique
  std::vector<int> hull_indices;  // sorted; always a superset of the seeds
  bool hull_degenerate = false;
};

// Builds the convex hull of the seed positions and adds every Gaussian whose
// position satisfies all hull halfspaces (tolerance 1e-9). Degenerate seed
// sets fall back to the seeds alone with a flag.
ObjectSelection3D convex_hull_extract(const GaussianCloud& cloud, const std::vector<int>& seeds);

// Pixel-prompted segmentation: render the reference view's feature map, pick
// the discriminative feature at the prompt, and threshold the similarity map
// of the target view. Throws DataError when the prompt feature is degenerate.
BoolMask segment_query(const GaussianCloud& cloud, const Camera& reference, int u, int v,
                       const Camera& target, double t = kDefaultSimilarityThreshold,
                       const RenderOptions& opts = {});

}  // namespace splatseg
