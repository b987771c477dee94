#pragma once

#include <string>
#include <vector>

#include "splatseg/rasterizer.hpp"
#include "splatseg/types.hpp"

namespace splatseg {

// |pred n gt| / |pred u gt|; 1 when both masks are empty, 0 when exactly one is.
double iou(const BoolMask& pred, const BoolMask& gt);

// Pixels within Chebyshev distance d of the mask's boundary (mask pixels
// 4-adjacent to a non-mask pixel; out-of-image counts as non-mask).
BoolMask boundary_band(const BoolMask& mask, int d);

// IoU restricted to each mask's own boundary band.
double boundary_iou(const BoolMask& pred, const BoolMask& gt, int d);

// max(1, round(0.02 * image diagonal))
int default_boundary_band(int width, int height);

struct SegmentationQuery {
  int object_id = 0;
  int reference_view = 0;
  int u = 0, v = 0;
};

struct QueryScore {
  SegmentationQuery query;
  double iou = 0, biou = 0;  // means over the test views
  bool failed = false;
};

struct EvalReport {
  std::vector<QueryScore> per_query;
  double miou = 0, mbiou = 0;
  double mean_render_ms = 0;
  int test_view_count = 0;

  std::string table() const;
  std::string jsonl() const;
};

// Runs every pixel-prompted query against every test view and scores the
// predicted masks against the ground truth of the queried object. Degenerate
// prompts score 0 rather than aborting the evaluation. `gt_masks` is indexed
// like `cameras`; only the entries for `test_views` are consulted.
EvalReport evaluate(const GaussianCloud& cloud, const std::vector<Camera>& cameras,
                    const std::vector<int>& test_views, const std::vector<SegmentMask>& gt_masks,
                    const std::vector<SegmentationQuery>& queries, double t = 0.7,
                    const RenderOptions& opts = {});

}  // namespace splatseg
