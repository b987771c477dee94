#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "splatseg/errors.hpp"
#include "splatseg/io.hpp"
#include "test_support.hpp"

using namespace splatseg;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  const fs::path dir = fs::temp_directory_path() / "splatseg_io_test";
  fs::create_directories(dir);
  return dir;
}

std::string file_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

Camera random_camera(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  Camera cam;
  cam.width = 16 + static_cast<int>(uni(rng) * 48);
  cam.height = 16 + static_cast<int>(uni(rng) * 48);
  cam.fx = 20 + 80 * uni(rng);
  cam.fy = 20 + 80 * uni(rng);
  cam.cx = cam.width * 0.5 - uni(rng);
  cam.cy = cam.height * 0.5 - uni(rng);
  std::normal_distribution<double> normal(0.0, 1.0);
  Vec4 q(normal(rng), normal(rng), normal(rng), normal(rng));
  cam.rotation = q / q.norm();
  cam.translation = Vec3(normal(rng), normal(rng), 5 + uni(rng));
  cam.near = 0.05 + 0.1 * uni(rng);
  return cam;
}

}  // namespace

TEST_CASE("cloud ply save-load-save is byte identical") {
  const fs::path dir = temp_dir();
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> dim_pick(1, 24);
  std::uniform_int_distribution<int> count_pick(1, 60);
  for (int trial = 0; trial < 10; ++trial) {
    const GaussianCloud cloud =
        splatseg::testing::random_test_cloud(count_pick(rng), dim_pick(rng), rng);
    const fs::path first = dir / "cloud_a.ply";
    const fs::path second = dir / "cloud_b.ply";
    save_cloud_ply(first, cloud);
    const GaussianCloud loaded = load_cloud_ply(first);
    save_cloud_ply(second, loaded);
    CHECK(file_bytes(first) == file_bytes(second));
    CHECK(loaded.size() == cloud.size());
    CHECK(loaded.feature_dim() == cloud.feature_dim());
    // Values survive the float32 narrowing exactly on reload.
    CHECK(loaded.positions(0, 0) == static_cast<float>(cloud.positions(0, 0)));
  }
}

TEST_CASE("ply loader validates its input") {
  const fs::path dir = temp_dir();
  CHECK_THROWS_AS(load_cloud_ply(dir / "missing.ply"), DataError);

  const fs::path bogus = dir / "bogus.ply";
  std::ofstream(bogus) << "not a ply\n";
  CHECK_THROWS_AS(load_cloud_ply(bogus), DataError);

  const fs::path truncated = dir / "truncated.ply";
  {
    GaussianCloud cloud = GaussianCloud::create(2, 3);
    save_cloud_ply(truncated, cloud);
    auto bytes = file_bytes(truncated);
    std::ofstream out(truncated, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 8));
  }
  CHECK_THROWS_WITH_AS(load_cloud_ply(truncated), doctest::Contains("truncated"), DataError);
}

TEST_CASE("segment masks round trip through 16-bit pgm") {
  const fs::path dir = temp_dir();
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> label(0, 65535);
  for (int trial = 0; trial < 10; ++trial) {
    SegmentMask mask(12 + trial, 9 + trial);
    for (int v = 0; v < mask.rows(); ++v)
      for (int u = 0; u < mask.cols(); ++u) mask(v, u) = label(rng);
    const fs::path first = dir / "mask_a.pgm";
    const fs::path second = dir / "mask_b.pgm";
    save_pgm16(first, mask);
    const SegmentMask loaded = load_pgm16(first);
    CHECK((loaded == mask).all());
    save_pgm16(second, loaded);
    CHECK(file_bytes(first) == file_bytes(second));
  }

  SegmentMask bad(2, 2);
  bad.setConstant(70000);
  CHECK_THROWS_AS(save_pgm16(dir / "bad.pgm", bad), DataError);
}

TEST_CASE("images round trip through ppm after the first quantization") {
  const fs::path dir = temp_dir();
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> uni(-0.2, 1.2);  // exercises clamping
  ImageRGB img = ImageRGB::zero(13, 11);
  for (int p = 0; p < 13 * 11; ++p)
    for (int c = 0; c < 3; ++c) img.data(p, c) = uni(rng);

  const fs::path first = dir / "img_a.ppm";
  const fs::path second = dir / "img_b.ppm";
  save_ppm(first, img);
  const ImageRGB loaded = load_ppm(first);
  save_ppm(second, loaded);
  CHECK(file_bytes(first) == file_bytes(second));
  CHECK(loaded.width == 13);
  CHECK(loaded.data.minCoeff() >= 0.0);
  CHECK(loaded.data.maxCoeff() <= 1.0);
}

TEST_CASE("feature maps round trip through the cgcf container") {
  const fs::path dir = temp_dir();
  std::mt19937_64 rng(9);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    FeatureMap fm = FeatureMap::zero(6 + trial, 5 + trial, 1 + trial % 7);
    for (int p = 0; p < fm.data.rows(); ++p)
      for (int d = 0; d < fm.feature_dim(); ++d) fm.data(p, d) = normal(rng);
    const fs::path first = dir / "fm_a.cgcf";
    const fs::path second = dir / "fm_b.cgcf";
    save_feature_map(first, fm);
    const FeatureMap loaded = load_feature_map(first);
    CHECK(loaded.width == fm.width);
    CHECK(loaded.height == fm.height);
    CHECK(loaded.feature_dim() == fm.feature_dim());
    save_feature_map(second, loaded);
    CHECK(file_bytes(first) == file_bytes(second));
  }

  const fs::path bad = dir / "bad.cgcf";
  std::ofstream(bad, std::ios::binary) << "WXYZ00000000000000";
  CHECK_THROWS_WITH_AS(load_feature_map(bad), doctest::Contains("magic"), DataError);
}

TEST_CASE("manifest round trips and verifies referenced files") {
  const fs::path dir = temp_dir() / "scene";
  fs::create_directories(dir);
  std::mt19937_64 rng(11);

  Manifest manifest;
  manifest.scene = "roundtrip";
  manifest.feature_dim = 8;
  for (int i = 0; i < 3; ++i) {
    ManifestView view;
    view.camera = random_camera(rng);
    view.image = "img_" + std::to_string(i) + ".ppm";
    view.mask = "mask_" + std::to_string(i) + ".pgm";
    view.gt_mask = "gt_" + std::to_string(i) + ".pgm";
    view.is_test = (i == 1);
    save_ppm(dir / view.image, ImageRGB::zero(view.camera.width, view.camera.height));
    save_pgm16(dir / view.mask, SegmentMask::Zero(view.camera.height, view.camera.width));
    save_pgm16(dir / view.gt_mask, SegmentMask::Zero(view.camera.height, view.camera.width));
    manifest.views.push_back(std::move(view));
  }

  const fs::path first = dir / "manifest.json";
  const fs::path second = dir / "manifest2.json";
  save_manifest(first, manifest);
  const Manifest loaded = load_manifest(first);
  CHECK(loaded.scene == "roundtrip");
  CHECK(loaded.views.size() == 3);
  CHECK(loaded.views[1].is_test);
  CHECK(loaded.views[0].camera.rotation == manifest.views[0].camera.rotation);
  save_manifest(second, loaded);
  CHECK(file_bytes(first) == file_bytes(second));

  fs::remove(dir / "mask_2.pgm");
  CHECK_THROWS_WITH_AS(load_manifest(first), doctest::Contains("mask_2.pgm"), DataError);
}

TEST_CASE("queries and instance ids round trip") {
  const fs::path dir = temp_dir();
  const std::vector<QueryRecord> queries{{1, 0, 12, 30}, {2, 4, 5, 6}};
  save_queries(dir / "queries.json", queries);
  const auto loaded = load_queries(dir / "queries.json");
  REQUIRE(loaded.size() == 2);
  CHECK(loaded[1].object_id == 2);
  CHECK(loaded[1].u == 5);

  Eigen::VectorXi ids(5);
  ids << 0, 1, 1, 2, 0;
  save_instance_ids(dir / "ids.json", ids);
  CHECK(load_instance_ids(dir / "ids.json") == ids);
}

TEST_CASE("scene spec files round trip") {
  const fs::path dir = temp_dir();
  SceneSpecFile spec;
  spec.scene.name = "spec_roundtrip";
  spec.scene.rng_seed = 77;
  spec.scene.objects = {{Vec3(1, 2, 3), 0.5, 40, Vec3(0.1, 0.2, 0.3)}};
  spec.scene.background_plane.enabled = true;
  spec.scene.background_plane.count = 25;
  spec.corruption.split_prob = 0.25;

  save_scene_spec(dir / "spec.json", spec);
  const SceneSpecFile loaded = load_scene_spec(dir / "spec.json");
  CHECK(loaded.scene.name == "spec_roundtrip");
  CHECK(loaded.scene.rng_seed == 77);
  CHECK(loaded.scene.objects[0].center == Vec3(1, 2, 3));
  CHECK(loaded.scene.background_plane.count == 25);
  CHECK(loaded.corruption.split_prob == 0.25);
}

TEST_CASE("training log writes one json line per record") {
  const fs::path dir = temp_dir();
  std::vector<TrainLogRecord> log(3);
  for (int i = 0; i < 3; ++i) {
    log[i].iteration = i + 1;
    log[i].total = 0.5 / (i + 1);
    log[i].rendering = 0.25;
    log[i].clustering_applied = (i == 1);
    log[i].clustering = 1.5;
    log[i].gaussian_count = 100 + i;
  }
  save_training_log(dir / "log.jsonl", log);
  const std::string bytes = file_bytes(dir / "log.jsonl");
  CHECK(std::count(bytes.begin(), bytes.end(), '\n') == 3);
  CHECK(bytes.find("\"clustering\":null") != std::string::npos);
  CHECK(bytes.find("\"clustering\":1.5") != std::string::npos);
}
