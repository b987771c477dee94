#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "splatseg/types.hpp"

namespace splatseg {

inline constexpr double kTemperatureEpsilon = 100.0;
inline constexpr double kTemperatureFloor = 1e-2;
inline constexpr double kFeatureNormEps = 1e-12;
inline constexpr int kDefaultMinClusterSize = 100;

struct LossReport {
  double value = 0.0;
  std::optional<Eigen::MatrixX3d> grad_image;  // w.r.t. the rendered color, (H*W) x 3
  std::optional<MatX> grad_feature_map;        // w.r.t. the rendered features, (H*W) x D
  std::optional<MatX> grad_cloud_features;     // w.r.t. stored features, D x N
  std::map<std::string, double> term_breakdown;
  bool degenerate = false;
};

// Mean SSIM between two images, 11x11 Gaussian window with sigma 1.5,
// C1 = 0.01^2, C2 = 0.03^2. Windows overlapping the border are truncated and
// renormalized, so constant images follow the uniform closed form exactly.
double ssim_mean(const ImageRGB& a, const ImageRGB& b);

// (1 - lambda) * L1 + lambda * (1 - SSIM), with the exact gradient w.r.t. the
// rendered image. sign(0) is taken as 0.
LossReport rendering_loss(const ImageRGB& rendered, const ImageRGB& truth, double lambda_dssim);

// Per-pixel l2 normalization with its backward closure. Pixels with norm
// below kFeatureNormEps stay zero and receive zero gradient.
struct NormalizedFeatureMap {
  FeatureMap map;
  VecX norms;

  MatX backward(const MatX& grad_normalized) const;
};
NormalizedFeatureMap l2_normalize_map(const FeatureMap& fm);

// phi^p = sum_q ||f_q - centroid|| / (n * log(n + epsilon)), floored.
// `members` holds one feature per row.
double cluster_temperature(const MatX& members, const VecX& centroid,
                           double epsilon = kTemperatureEpsilon, double floor = kTemperatureFloor);

struct ClusterStats {
  int segment_id = 0;
  int size = 0;
  VecX centroid;
  double temperature = 0;
};

// Clusters of an l2-normalized feature map grouped by segment ID, in order of
// first pixel occurrence (canonical under any relabeling). Label 0 and
// clusters with size <= min_cluster_size are dropped.
std::vector<ClusterStats> cluster_statistics(const FeatureMap& fm_normalized,
                                             const SegmentMask& mask, int min_cluster_size,
                                             double temperature_epsilon = kTemperatureEpsilon,
                                             double temperature_floor = kTemperatureFloor);

// Softmax contrastive loss pulling each pixel feature toward its own cluster
// centroid and away from the others. Centroids and temperatures are treated
// as constants in the gradient. Fewer than two surviving clusters yields
// value 0, zero gradient, and the degenerate flag.
LossReport contrastive_clustering_loss(const FeatureMap& fm_normalized, const SegmentMask& mask,
                                       int min_cluster_size = kDefaultMinClusterSize);
LossReport contrastive_clustering_loss(const FeatureMap& fm_normalized, const SegmentMask& mask,
                                       const std::vector<ClusterStats>& stats);

struct SpatialRegOptions {
  int sample_count = 1000;  // M; capped at the cloud size
  int near_count = 2;       // K
  int far_count = 5;        // L
  double lambda_near = 0.05;
  double lambda_far = 0.15;
  std::uint64_t rng_seed = 0;
};

// Sigmoid penalties on the cosine similarity between each sampled Gaussian
// and its nearest / farthest neighbors (Euclidean on positions, exact linear
// scan, ties by index). Gradient flows to both pair endpoints through the
// normalization.
LossReport spatial_regularization(const GaussianCloud& cloud, const SpatialRegOptions& opts);

// Weighted sum of the active terms; pass nullptr for an inactive term.
LossReport total_loss(const LossReport& rendering, const LossReport* clustering,
                      const LossReport* regularization, double lambda_clustering);

}  // namespace splatseg
