#include "splatseg/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>

#include <nlohmann/json.hpp>

#include "splatseg/errors.hpp"
#include "splatseg/segmenter.hpp"

namespace splatseg {

double iou(const BoolMask& pred, const BoolMask& gt) {
  if (pred.rows() != gt.rows() || pred.cols() != gt.cols())
    throw DataError("iou: mask shapes do not match");
  const auto inter = (pred && gt).count();
  const auto uni = (pred || gt).count();
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

BoolMask boundary_band(const BoolMask& mask, int d) {
  if (d < 1) throw DataError("boundary_band: band radius must be at least 1");
  const int h = static_cast<int>(mask.rows()), w = static_cast<int>(mask.cols());
  BoolMask band = BoolMask::Constant(h, w, false);
  auto is_mask = [&](int v, int u) {
    return v >= 0 && v < h && u >= 0 && u < w && mask(v, u);
  };
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      if (!mask(v, u)) continue;
      const bool boundary =
          !is_mask(v - 1, u) || !is_mask(v + 1, u) || !is_mask(v, u - 1) || !is_mask(v, u + 1);
      if (!boundary) continue;
      for (int dv = -d; dv <= d; ++dv)
        for (int du = -d; du <= d; ++du) {
          const int vv = v + dv, uu = u + du;
          if (vv >= 0 && vv < h && uu >= 0 && uu < w) band(vv, uu) = true;
        }
    }
  }
  return band;
}

double boundary_iou(const BoolMask& pred, const BoolMask& gt, int d) {
  if (pred.rows() != gt.rows() || pred.cols() != gt.cols())
    throw DataError("boundary_iou: mask shapes do not match");
  const BoolMask pred_band = pred && boundary_band(pred, d);
  const BoolMask gt_band = gt && boundary_band(gt, d);
  return iou(pred_band, gt_band);
}

int default_boundary_band(int width, int height) {
  const double diag = std::hypot(static_cast<double>(width), static_cast<double>(height));
  return std::max(1, static_cast<int>(std::llround(0.02 * diag)));
}

EvalReport evaluate(const GaussianCloud& cloud, const std::vector<Camera>& cameras,
                    const std::vector<int>& test_views, const std::vector<SegmentMask>& gt_masks,
                    const std::vector<SegmentationQuery>& queries, double t,
                    const RenderOptions& opts) {
  if (gt_masks.size() != cameras.size())
    throw DataError("evaluate: ground-truth masks out of sync with the cameras");
  for (int view : test_views)
    if (view < 0 || view >= static_cast<int>(cameras.size()))
      throw DataError("evaluate: test view index out of range");

  EvalReport report;
  report.test_view_count = static_cast<int>(test_views.size());

  // Feature maps rendered once per needed view; test-view renders are timed.
  std::map<int, FeatureMap> rendered;
  double total_ms = 0;
  for (int view : test_views) {
    const auto t0 = std::chrono::steady_clock::now();
    rendered.emplace(view, rasterize(cloud, cameras[view], opts).features);
    total_ms +=
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  }
  report.mean_render_ms = test_views.empty() ? 0 : total_ms / test_views.size();
  for (const auto& q : queries) {
    if (q.reference_view < 0 || q.reference_view >= static_cast<int>(cameras.size()))
      throw DataError("evaluate: query reference view out of range");
    if (!rendered.count(q.reference_view))
      rendered.emplace(q.reference_view,
                       rasterize(cloud, cameras[q.reference_view], opts).features);
  }

  for (const auto& q : queries) {
    QueryScore score;
    score.query = q;
    const DiscriminativeFeature feature =
        pick_discriminative_feature(rendered.at(q.reference_view), q.u, q.v);
    if (feature.degenerate) {
      score.failed = true;  // mislocalized prompt scores zero
      report.per_query.push_back(score);
      continue;
    }
    double iou_sum = 0, biou_sum = 0;
    for (int view : test_views) {
      const BoolMask pred = object_mask(similarity_map(rendered.at(view), feature.feature), t);
      const BoolMask gt = (gt_masks[view] == q.object_id);
      const int d = default_boundary_band(static_cast<int>(gt.cols()), static_cast<int>(gt.rows()));
      iou_sum += iou(pred, gt);
      biou_sum += boundary_iou(pred, gt, d);
    }
    if (!test_views.empty()) {
      score.iou = iou_sum / test_views.size();
      score.biou = biou_sum / test_views.size();
    }
    report.per_query.push_back(score);
  }

  if (!report.per_query.empty()) {
    for (const auto& s : report.per_query) {
      report.miou += s.iou;
      report.mbiou += s.biou;
    }
    report.miou /= report.per_query.size();
    report.mbiou /= report.per_query.size();
  }
  return report;
}

std::string EvalReport::table() const {
  std::string out;
  char line[160];
  std::snprintf(line, sizeof(line), "%-8s %-10s %-12s %8s %8s\n", "object", "ref_view", "pixel",
                "iou", "biou");
  out += line;
  for (const auto& s : per_query) {
    char pixel[32];
    std::snprintf(pixel, sizeof(pixel), "(%d,%d)", s.query.u, s.query.v);
    std::snprintf(line, sizeof(line), "%-8d %-10d %-12s %8.4f %8.4f%s\n", s.query.object_id,
                  s.query.reference_view, pixel, s.iou, s.biou, s.failed ? "  (failed)" : "");
    out += line;
  }
  std::snprintf(line, sizeof(line), "mIoU %.4f  mBIoU %.4f  test views %d  render %.3f ms/view\n",
                miou, mbiou, test_view_count, mean_render_ms);
  out += line;
  return out;
}

std::string EvalReport::jsonl() const {
  std::string out;
  for (const auto& s : per_query) {
    nlohmann::json j{{"object_id", s.query.object_id},
                     {"reference_view", s.query.reference_view},
                     {"pixel", {s.query.u, s.query.v}},
                     {"iou", s.iou},
                     {"biou", s.biou},
                     {"failed", s.failed}};
    out += j.dump() + "\n";
  }
  nlohmann::json summary{{"miou", miou},
                         {"mbiou", mbiou},
                         {"test_views", test_view_count},
                         {"mean_render_ms", mean_render_ms}};
  out += summary.dump() + "\n";
  return out;
}

}  // namespace splatseg
