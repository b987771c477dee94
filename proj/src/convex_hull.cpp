#include "splatseg/convex_hull.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <utility>

namespace splatseg {

namespace {

struct Face {
  int a, b, c;
  Vec3 normal;
  double offset;
  bool alive = true;
  std::vector<int> outside;
};

// Builds an outward-oriented face; `interior` is a point strictly inside.
Face make_face(const std::vector<Vec3>& pts, int a, int b, int c, const Vec3& interior) {
  Face f{a, b, c, Vec3::Zero(), 0.0};
  Vec3 n = (pts[b] - pts[a]).cross(pts[c] - pts[a]);
  const double len = n.norm();
  if (len > 0) n /= len;
  double off = n.dot(pts[a]);
  if (n.dot(interior) > off) {
    std::swap(f.b, f.c);
    n = -n;
    off = -off;
  }
  f.normal = n;
  f.offset = off;
  return f;
}

}  // namespace

ConvexHull3 convex_hull_3d(const std::vector<Vec3>& points) {
  ConvexHull3 hull;
  const int n = static_cast<int>(points.size());
  if (n < 4) {
    hull.degenerate = true;
    return hull;
  }

  double scale = 0;
  for (const auto& p : points) scale = std::max(scale, p.cwiseAbs().maxCoeff());
  const double eps = 1e-10 * std::max(scale, 1.0);

  // Initial simplex: the most distant extreme pair, then the point farthest
  // from their line, then the point farthest from that plane.
  int i0 = 0, i1 = 0;
  {
    int extremes[6] = {0, 0, 0, 0, 0, 0};
    for (int i = 1; i < n; ++i)
      for (int axis = 0; axis < 3; ++axis) {
        if (points[i][axis] < points[extremes[2 * axis]][axis]) extremes[2 * axis] = i;
        if (points[i][axis] > points[extremes[2 * axis + 1]][axis]) extremes[2 * axis + 1] = i;
      }
    double best = -1;
    for (int a = 0; a < 6; ++a)
      for (int b = a + 1; b < 6; ++b) {
        const double d = (points[extremes[a]] - points[extremes[b]]).squaredNorm();
        if (d > best) {
          best = d;
          i0 = extremes[a];
          i1 = extremes[b];
        }
      }
    if (std::sqrt(std::max(best, 0.0)) <= eps) {
      hull.degenerate = true;
      return hull;
    }
  }

  const Vec3 dir = (points[i1] - points[i0]).normalized();
  int i2 = -1;
  double best_line = eps;
  for (int i = 0; i < n; ++i) {
    const double d = ((points[i] - points[i0]).cross(dir)).norm();
    if (d > best_line) {
      best_line = d;
      i2 = i;
    }
  }
  if (i2 < 0) {
    hull.degenerate = true;
    return hull;
  }

  Vec3 plane_n = (points[i1] - points[i0]).cross(points[i2] - points[i0]).normalized();
  int i3 = -1;
  double best_plane = eps;
  for (int i = 0; i < n; ++i) {
    const double d = std::abs(plane_n.dot(points[i] - points[i0]));
    if (d > best_plane) {
      best_plane = d;
      i3 = i;
    }
  }
  if (i3 < 0) {
    hull.degenerate = true;
    return hull;
  }

  const Vec3 interior = 0.25 * (points[i0] + points[i1] + points[i2] + points[i3]);

  std::vector<Face> faces;
  faces.push_back(make_face(points, i0, i1, i2, interior));
  faces.push_back(make_face(points, i0, i1, i3, interior));
  faces.push_back(make_face(points, i0, i2, i3, interior));
  faces.push_back(make_face(points, i1, i2, i3, interior));

  auto assign_point = [&](int idx) {
    for (auto& f : faces) {
      if (!f.alive) continue;
      if (f.normal.dot(points[idx]) > f.offset + eps) {
        f.outside.push_back(idx);
        return;
      }
    }
  };
  for (int i = 0; i < n; ++i)
    if (i != i0 && i != i1 && i != i2 && i != i3) assign_point(i);

  for (;;) {
    int face_idx = -1;
    for (int f = 0; f < static_cast<int>(faces.size()); ++f)
      if (faces[f].alive && !faces[f].outside.empty()) {
        face_idx = f;
        break;
      }
    if (face_idx < 0) break;

    // Farthest point of this face's outside set (ties to the smaller index).
    const Face& owner = faces[face_idx];
    int apex = owner.outside[0];
    double best = owner.normal.dot(points[apex]) - owner.offset;
    for (int idx : owner.outside) {
      const double d = owner.normal.dot(points[idx]) - owner.offset;
      if (d > best || (d == best && idx < apex)) {
        best = d;
        apex = idx;
      }
    }

    // All faces the apex can see, their orphaned points, and the horizon.
    std::vector<int> visible;
    std::vector<int> orphans;
    for (int f = 0; f < static_cast<int>(faces.size()); ++f) {
      Face& face = faces[f];
      if (!face.alive) continue;
      if (face.normal.dot(points[apex]) > face.offset + eps) {
        visible.push_back(f);
        for (int idx : face.outside)
          if (idx != apex) orphans.push_back(idx);
        face.outside.clear();
      }
    }

    std::map<std::pair<int, int>, int> edge_count;
    for (int f : visible)
      for (auto [u, v] : {std::pair{faces[f].a, faces[f].b}, std::pair{faces[f].b, faces[f].c},
                          std::pair{faces[f].c, faces[f].a}})
        edge_count[{std::min(u, v), std::max(u, v)}]++;

    for (int f : visible) faces[f].alive = false;

    const int first_new = static_cast<int>(faces.size());
    for (const auto& [edge, count] : edge_count) {
      if (count != 1) continue;  // interior to the visible region
      faces.push_back(make_face(points, edge.first, edge.second, apex, interior));
    }

    for (int idx : orphans) {
      for (int f = first_new; f < static_cast<int>(faces.size()); ++f) {
        if (faces[f].normal.dot(points[idx]) > faces[f].offset + eps) {
          faces[f].outside.push_back(idx);
          break;
        }
      }
    }
  }

  for (const auto& f : faces)
    if (f.alive) hull.facets.push_back({f.normal, f.offset});
  return hull;
}

}  // namespace splatseg
