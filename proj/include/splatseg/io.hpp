#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "splatseg/synthdata.hpp"
#include "splatseg/trainer.hpp"
#include "splatseg/types.hpp"

namespace splatseg {

// Binary little-endian PLY, one float32 vertex per Gaussian with properties
// x y z, f_dc_0..2 (color), opacity (pre-sigmoid), scale_0..2 (log domain),
// rot_0..3 (quaternion wxyz), f_seg_0..f_seg_{D-1} (segmentation feature).
void save_cloud_ply(const std::filesystem::path& path, const GaussianCloud& cloud);
GaussianCloud load_cloud_ply(const std::filesystem::path& path);

// 16-bit binary PGM (P5, maxval 65535), most significant byte first.
void save_pgm16(const std::filesystem::path& path, const SegmentMask& mask);
SegmentMask load_pgm16(const std::filesystem::path& path);

inline SegmentMask to_labels(const BoolMask& mask) { return mask.cast<int>(); }

// 8-bit binary PPM (P6); values are clamped to [0, 1] and rounded.
void save_ppm(const std::filesystem::path& path, const ImageRGB& image);
ImageRGB load_ppm(const std::filesystem::path& path);

// Raw float32 feature map: 16-byte header (magic "CGCF", u32 height, width,
// feature dim, little-endian) followed by row-major H x W x D floats.
void save_feature_map(const std::filesystem::path& path, const FeatureMap& fm);
FeatureMap load_feature_map(const std::filesystem::path& path);

struct ManifestView {
  Camera camera;
  std::string image, mask, gt_mask;  // paths relative to the manifest
  bool is_test = false;
};

struct Manifest {
  int version = 1;
  std::string scene;
  int feature_dim = 16;
  std::vector<ManifestView> views;
  std::string cloud, instances, queries;  // optional relative paths
};

void save_manifest(const std::filesystem::path& path, const Manifest& manifest);
// Verifies that every referenced file exists next to the manifest.
Manifest load_manifest(const std::filesystem::path& path);

struct QueryRecord {
  int object_id = 0;
  int view = 0;
  int u = 0, v = 0;
};
void save_queries(const std::filesystem::path& path, const std::vector<QueryRecord>& queries);
std::vector<QueryRecord> load_queries(const std::filesystem::path& path);

void save_instance_ids(const std::filesystem::path& path, const Eigen::VectorXi& ids);
Eigen::VectorXi load_instance_ids(const std::filesystem::path& path);

void save_training_log(const std::filesystem::path& path,
                       const std::vector<TrainLogRecord>& log);

struct SceneSpecFile {
  SceneSpec scene;
  CorruptionOptions corruption;
};
void save_scene_spec(const std::filesystem::path& path, const SceneSpecFile& spec);
SceneSpecFile load_scene_spec(const std::filesystem::path& path);

Camera load_camera_json(const std::filesystem::path& path);
void save_camera_json(const std::filesystem::path& path, const Camera& cam);

}  // namespace splatseg
