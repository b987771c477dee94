#pragma once

#include <vector>

#include "splatseg/math.hpp"

namespace splatseg {

struct HullFacet {
  Vec3 normal;  // unit outward normal
  double offset;
};

// Halfspace representation of a 3D convex hull: a point is inside when
// normal . x <= offset + tol for every facet.
struct ConvexHull3 {
  std::vector<HullFacet> facets;
  bool degenerate = false;

  bool contains(const Vec3& p, double tol) const {
    if (degenerate) return false;
    for (const auto& f : facets)
      if (f.normal.dot(p) > f.offset + tol) return false;
    return true;
  }
};

// Quickhull. Fewer than four points, or a collinear/coplanar input set, gives
// a hull marked degenerate with no facets.
ConvexHull3 convex_hull_3d(const std::vector<Vec3>& points);

}  // namespace splatseg
