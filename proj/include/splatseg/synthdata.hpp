#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "splatseg/rasterizer.hpp"
#include "splatseg/types.hpp"

namespace splatseg {

struct ObjectSpec {
  Vec3 center = Vec3::Zero();
  double radius = 1.0;
  int count = 200;
  Vec3 color = Vec3(0.8, 0.2, 0.2);
};

struct BackgroundPlaneSpec {
  bool enabled = false;
  int count = 0;
  double extent = 3.0;  // half-size of the covered square
  double z = -0.6;
  Vec3 color = Vec3(0.45, 0.45, 0.5);
};

struct CameraRingSpec {
  int count = 24;
  double radius = 7.0;
  double elevation_deg = 25.0;
  double focal = 0.0;  // 0 = 1.1 * image width
};

struct SceneSpec {
  std::string name = "scene";
  int image_width = 64, image_height = 64;
  int feature_dim = 16;
  std::uint64_t rng_seed = 0;
  std::vector<ObjectSpec> objects;
  BackgroundPlaneSpec background_plane;
  CameraRingSpec ring;
  int test_every = 5;  // view i is a test view when i % test_every == test_every / 2
  double object_opacity = 0.8;
  double scale_spread = 0.25;  // log-scale jitter

  void validate() const;
};

// A cloud plus its ground-truth per-Gaussian instance label (0 = background).
struct LabeledCloud {
  GaussianCloud cloud;
  Eigen::VectorXi instance_id;
};

struct SyntheticScene {
  LabeledCloud labeled;
  std::vector<Camera> cameras;
  std::vector<bool> is_test;
};

// Deterministic in the spec seed: Gaussian blobs per object with distinct
// colors and random unit features, an optional background plane, and a camera
// ring whose optical axes pass through the scene centroid.
SyntheticScene generate_scene(const SceneSpec& spec);

// Globally consistent instance mask for one view: per pixel, the instance
// with the largest accumulated blending weight, if that weight exceeds 0.5;
// ties go to the smaller id. Reuses the rasterizer's contribution log.
SegmentMask render_gt_masks(const LabeledCloud& lc, const Camera& cam,
                            const RenderOptions& opts = {});

struct CorruptionOptions {
  std::uint64_t rng_seed = 0;
  double split_prob = 0.0;  // chance of cutting one segment in two per view
  double drop_prob = 0.0;   // chance of blanking one segment per view
  double merge_prob = 0.0;  // chance of merging two segments; off by default
};

// Simulates cross-view segment-ID inconsistency: every view gets a random
// relabeling into a fresh ID space, plus optional split / drop / merge
// corruption. With merging off the output partitions refine the inputs.
std::vector<SegmentMask> corrupt_masks(const std::vector<SegmentMask>& masks,
                                       const CorruptionOptions& opts);

}  // namespace splatseg
