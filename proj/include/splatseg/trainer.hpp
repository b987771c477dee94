#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "splatseg/losses.hpp"
#include "splatseg/rasterizer.hpp"
#include "splatseg/types.hpp"

namespace splatseg {

struct LearningRates {
  double position_init = 1.6e-4;  // scaled by scene extent, decays exponentially
  double position_final = 1.6e-6;
  double log_scale = 5e-3;
  double rotation = 1e-3;
  double opacity = 5e-2;
  double color = 2.5e-3;
  double feature = 2.5e-3;
};

struct TrainConfig {
  int iterations = 30000;
  int clustering_every = 50;
  int regularization_every = 100;
  LearningRates lr;

  bool densify_enabled = true;
  int densify_interval = 100;
  int densify_start = 500;
  int densify_end = 15000;
  double prune_opacity = 0.005;
  double densify_grad_threshold = 2e-4;
  double split_scale_ratio = 0.01;  // x scene extent; above it split, below clone
  double prune_scale_ratio = 0.1;   // x scene extent; above it the Gaussian is removed
  double split_factor = 1.6;
  double scene_extent = 0.0;  // 0 = derive from the training cameras

  std::uint64_t rng_seed = 0;
  bool freeze_geometry = false;  // update segmentation features only

  // Second-moment decay for the feature group. At desk-scale budgets the
  // clustering transient otherwise dominates the moments long after it has
  // converged, freezing the regularization-driven diffusion.
  double feature_beta2 = 0.99;

  double lambda_dssim = 0.2;
  double lambda_clustering = 1e-6;
  int min_cluster_size = kDefaultMinClusterSize;
  SpatialRegOptions regularization;
  RenderOptions render;

  void validate() const;
};

// Bias-corrected Adam moments, shaped (rows x N) like the parameter group.
struct AdamState {
  MatX m, v;
  std::int64_t step = 0;
};

void adam_step(MatX& param, const MatX& grad, AdamState& state, double lr, double beta1 = 0.9,
               double beta2 = 0.999, double eps = 1e-15);
void adam_step(VecX& param, const VecX& grad, AdamState& state, double lr, double beta1 = 0.9,
               double beta2 = 0.999, double eps = 1e-15);

struct OptimizerStates {
  AdamState position, log_scale, rotation, opacity, color, feature;

  static OptimizerStates zero_like(const GaussianCloud& cloud);
  // Keeps columns flagged in `keep`, then appends `added` zero columns.
  void splice(const std::vector<bool>& keep, int added);
  int column_count() const { return static_cast<int>(position.m.cols()); }
};

struct TrainView {
  Camera camera;
  ImageRGB image;
  SegmentMask mask;
};

struct DensifyEvent {
  int iteration = 0;
  std::vector<int> pruned;  // indices in the cloud before the call
  struct Child {
    int child_index;  // index in the cloud after the call
    bool from_split;
    VecX parent_feature;
  };
  std::vector<Child> children;
  int clone_count = 0, split_count = 0;
};

using DensifyHook =
    std::function<void(const DensifyEvent&, const GaussianCloud&, const OptimizerStates&)>;

// Prunes low-opacity / oversized Gaussians and densifies high-gradient ones:
// clone below the split scale threshold, split (two children, scales divided
// by split_factor, positions sampled from the parent) above it. Features are
// copied to children verbatim. Gradient statistics are reset and optimizer
// rows spliced to match.
DensifyEvent densify_and_prune(GaussianCloud& cloud, const TrainConfig& cfg,
                               std::mt19937_64& rng, OptimizerStates& opt);

struct IterationLosses {
  LossReport total;
  CloudGradients gradients;
  RenderOutput render;
};

// Forward + backward for one view: rendering loss always, clustering and
// regularization on demand, gradients combined into per-parameter form.
IterationLosses evaluate_training_losses(const GaussianCloud& cloud, const TrainView& view,
                                         const TrainConfig& cfg, bool apply_clustering,
                                         bool apply_regularization, std::uint64_t reg_seed);

struct TrainLogRecord {
  int iteration = 0;
  double total = 0, rendering = 0, clustering = 0, regularization = 0;
  bool clustering_applied = false, regularization_applied = false;
  int gaussian_count = 0;
  double wall_ms = 0;
};

struct TrainResult {
  GaussianCloud cloud;
  std::vector<TrainLogRecord> log;
};

// Optimization loop: seeded epoch-reshuffled view sampling, rendering loss
// every iteration, clustering / regularization on their cadences, Adam
// updates per parameter group, densification on its own interval.
// freeze_geometry restricts updates to features and disables densification.
TrainResult train(GaussianCloud cloud, const std::vector<TrainView>& views,
                  const TrainConfig& cfg, const DensifyHook& hook = {});

}  // namespace splatseg
