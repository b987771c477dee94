#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "splatseg/errors.hpp"
#include "splatseg/metrics.hpp"
#include "splatseg/segmenter.hpp"
#include "splatseg/synthdata.hpp"
#include "test_support.hpp"

using namespace splatseg;

namespace {

BoolMask empty_mask(int h, int w) { return BoolMask::Constant(h, w, false); }

BoolMask rect_mask(int h, int w, int v0, int v1, int u0, int u1) {
  BoolMask m = empty_mask(h, w);
  for (int v = v0; v < v1; ++v)
    for (int u = u0; u < u1; ++u) m(v, u) = true;
  return m;
}

// Chebyshev-distance band around the boundary, enumerated directly.
BoolMask band_oracle(const BoolMask& mask, int d) {
  const int h = static_cast<int>(mask.rows()), w = static_cast<int>(mask.cols());
  BoolMask band = BoolMask::Constant(h, w, false);
  for (int v = 0; v < h; ++v)
    for (int u = 0; u < w; ++u) {
      bool near_boundary = false;
      for (int bv = 0; bv < h && !near_boundary; ++bv)
        for (int bu = 0; bu < w && !near_boundary; ++bu) {
          if (!mask(bv, bu)) continue;
          const bool on_boundary = bv == 0 || bv == h - 1 || bu == 0 || bu == w - 1 ||
                                   !mask(bv - 1, bu) || !mask(bv + 1, bu) || !mask(bv, bu - 1) ||
                                   !mask(bv, bu + 1);
          if (on_boundary && std::max(std::abs(v - bv), std::abs(u - bu)) <= d)
            near_boundary = true;
        }
      band(v, u) = near_boundary;
    }
  return band;
}

}  // namespace

TEST_CASE("iou basic values") {
  const BoolMask a = rect_mask(4, 4, 0, 2, 0, 2);
  CHECK(iou(a, a) == 1.0);
  CHECK(iou(a, rect_mask(4, 4, 2, 4, 2, 4)) == 0.0);

  // columns 0-1 vs 1-2 of a 3x1 grid
  const BoolMask pred = rect_mask(1, 3, 0, 1, 0, 2);
  const BoolMask gt = rect_mask(1, 3, 0, 1, 1, 3);
  CHECK(iou(pred, gt) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(iou(pred, gt) == iou(gt, pred));

  CHECK(iou(empty_mask(4, 4), empty_mask(4, 4)) == 1.0);
  CHECK(iou(a, empty_mask(4, 4)) == 0.0);
  CHECK(iou(empty_mask(4, 4), a) == 0.0);
  CHECK_THROWS_AS(iou(a, empty_mask(3, 4)), DataError);
}

TEST_CASE("boundary iou identities and saturation") {
  const BoolMask square = rect_mask(10, 10, 2, 8, 2, 8);
  CHECK(boundary_iou(square, square, 1) == 1.0);
  CHECK(boundary_iou(square, square, 2) == 1.0);

  std::mt19937_64 rng(7);
  std::bernoulli_distribution coin(0.4);
  for (int trial = 0; trial < 5; ++trial) {
    BoolMask a = empty_mask(9, 9), b = empty_mask(9, 9);
    for (int v = 0; v < 9; ++v)
      for (int u = 0; u < 9; ++u) {
        a(v, u) = coin(rng);
        b(v, u) = coin(rng);
      }
    // A band of the image diagonal covers every mask pixel.
    CHECK(boundary_iou(a, b, 13) == iou(a, b));
    CHECK(boundary_iou(a, b, 2) == boundary_iou(b, a, 2));
  }
}

TEST_CASE("boundary band matches the brute-force enumeration") {
  const BoolMask square = rect_mask(12, 12, 3, 9, 3, 9);
  const BoolMask shifted = rect_mask(12, 12, 4, 10, 3, 9);
  for (int d : {1, 2, 3}) {
    CHECK((boundary_band(square, d) == band_oracle(square, d)).all());
    CHECK((boundary_band(shifted, d) == band_oracle(shifted, d)).all());
  }

  // 6x6 square against itself shifted by one, d = 1.
  const BoolMask pred = rect_mask(16, 16, 5, 11, 5, 11);
  const BoolMask gt = rect_mask(16, 16, 6, 12, 5, 11);
  const BoolMask pred_inner = pred && band_oracle(pred, 1);
  const BoolMask gt_inner = gt && band_oracle(gt, 1);
  const double expected = static_cast<double>((pred_inner && gt_inner).count()) /
                          static_cast<double>((pred_inner || gt_inner).count());
  CHECK(boundary_iou(pred, gt, 1) == doctest::Approx(expected).epsilon(1e-15));
}

TEST_CASE("default boundary band follows the image diagonal") {
  CHECK(default_boundary_band(64, 64) == 2);
  CHECK(default_boundary_band(16, 16) == 1);   // floor of 1
  CHECK(default_boundary_band(256, 256) == 7);
}

TEST_CASE("evaluate scores queries against ground truth") {
  // A two-object scene with constant orthogonal features per object renders
  // cleanly separable similarity maps.
  SceneSpec spec;
  spec.image_width = spec.image_height = 32;
  spec.feature_dim = 4;
  spec.rng_seed = 19;
  spec.objects = {{Vec3(-1.5, 0, 0), 0.6, 90, Vec3(0.9, 0.2, 0.2)},
                  {Vec3(1.5, 0, 0), 0.6, 90, Vec3(0.2, 0.2, 0.9)}};
  spec.ring.count = 6;
  spec.ring.radius = 6.0;
  spec.ring.elevation_deg = 20.0;
  SyntheticScene scene = generate_scene(spec);
  for (int i = 0; i < scene.labeled.cloud.size(); ++i)
    scene.labeled.cloud.features.col(i) =
        VecX::Unit(4, scene.labeled.instance_id[i] - 1);

  std::vector<int> test_views{1, 3};
  std::vector<SegmentMask> gt;
  for (const auto& cam : scene.cameras) gt.push_back(render_gt_masks(scene.labeled, cam));

  // Find a prompt pixel inside each object on view 0.
  std::vector<SegmentationQuery> queries;
  for (int id = 1; id <= 2; ++id) {
    for (int v = 0; v < 32 && queries.size() < static_cast<size_t>(id); ++v)
      for (int u = 0; u < 32; ++u)
        if (gt[0](v, u) == id) {
          queries.push_back({id, 0, u, v});
          break;
        }
  }
  REQUIRE(queries.size() == 2);

  SUBCASE("predictions equal to ground truth give perfect scores") {
    // Use the model's own prediction for one query as the ground truth labels.
    const SegmentationQuery q = queries[0];
    std::vector<SegmentMask> self_gt(scene.cameras.size(), SegmentMask::Zero(32, 32));
    for (int view : test_views) {
      const BoolMask pred = segment_query(scene.labeled.cloud, scene.cameras[q.reference_view],
                                          q.u, q.v, scene.cameras[view]);
      for (int v = 0; v < 32; ++v)
        for (int u = 0; u < 32; ++u)
          if (pred(v, u)) self_gt[view](v, u) = q.object_id;
    }

    const EvalReport report =
        evaluate(scene.labeled.cloud, scene.cameras, test_views, self_gt, {q});
    CHECK(report.miou == 1.0);
    CHECK(report.mbiou == 1.0);
    CHECK(report.mean_render_ms > 0.0);
    CHECK(report.test_view_count == 2);
  }

  SUBCASE("disjoint ground truth scores zero and means average per-query values") {
    // Give each query the *other* object's region as ground truth.
    std::vector<SegmentationQuery> swapped = queries;
    swapped[0].object_id = 2;
    swapped[1].object_id = 1;
    const EvalReport report =
        evaluate(scene.labeled.cloud, scene.cameras, test_views, gt, swapped);
    CHECK(report.per_query[0].iou < 0.05);
    CHECK(report.per_query[1].iou < 0.05);

    double mean = 0;
    for (const auto& s : report.per_query) mean += s.iou;
    CHECK(report.miou == doctest::Approx(mean / report.per_query.size()).epsilon(1e-15));
  }

  SUBCASE("evaluation is independent of query order") {
    std::vector<SegmentationQuery> reversed{queries[1], queries[0]};
    const EvalReport a = evaluate(scene.labeled.cloud, scene.cameras, test_views, gt, queries);
    const EvalReport b = evaluate(scene.labeled.cloud, scene.cameras, test_views, gt, reversed);
    CHECK(a.miou == doctest::Approx(b.miou).epsilon(1e-15));
    CHECK(a.per_query[0].iou == b.per_query[1].iou);
  }

  SUBCASE("degenerate prompts score zero instead of failing") {
    // Pixel (0,0) is empty background in this plane-less scene.
    std::vector<SegmentationQuery> bad{{1, 0, 0, 0}, queries[1]};
    const EvalReport report = evaluate(scene.labeled.cloud, scene.cameras, test_views, gt, bad);
    CHECK(report.per_query[0].failed);
    CHECK(report.per_query[0].iou == 0.0);
    CHECK(report.per_query[1].iou > 0.2);  // untrained halo bleeds past the GT boundary
  }

  SUBCASE("report renders as a table and json lines") {
    const EvalReport report =
        evaluate(scene.labeled.cloud, scene.cameras, test_views, gt, queries);
    const std::string table = report.table();
    CHECK(table.find("mIoU") != std::string::npos);
    const std::string jsonl = report.jsonl();
    CHECK(std::count(jsonl.begin(), jsonl.end(), '\n') == 3);  // 2 queries + summary
  }
}
