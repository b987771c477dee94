#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "splatseg/convex_hull.hpp"
#include "splatseg/errors.hpp"
#include "splatseg/segmenter.hpp"
#include "test_support.hpp"

using namespace splatseg;
using namespace splatseg::testing;

namespace {

// Brute-force hull membership: a point is inside iff it lies on the seed side
// of every supporting plane spanned by a seed triple.
bool halfspace_oracle(const std::vector<Vec3>& seeds, const Vec3& p, double tol) {
  const int n = static_cast<int>(seeds.size());
  for (int a = 0; a < n; ++a)
    for (int b = a + 1; b < n; ++b)
      for (int c = b + 1; c < n; ++c) {
        Vec3 normal = (seeds[b] - seeds[a]).cross(seeds[c] - seeds[a]);
        const double len = normal.norm();
        if (len < 1e-12) continue;
        normal /= len;
        const double offset = normal.dot(seeds[a]);
        double lo = 0, hi = 0;
        for (const auto& s : seeds) {
          const double d = normal.dot(s) - offset;
          lo = std::min(lo, d);
          hi = std::max(hi, d);
        }
        const double eps = 1e-9;
        if (lo >= -eps) {  // all seeds on the positive side: inward normal
          if (normal.dot(p) - offset < -tol) return false;
        } else if (hi <= eps) {  // all seeds on the negative side
          if (normal.dot(p) - offset > tol) return false;
        }
      }
  return true;
}

FeatureMap tiny_map() {
  FeatureMap fm = FeatureMap::zero(3, 2, 4);
  fm.data.row(0) = Eigen::RowVector4d(0, 0, 0, 2);   // normalizes to e3
  fm.data.row(1) = Eigen::RowVector4d(0, 0, 0, 0);   // degenerate
  fm.data.row(2) = Eigen::RowVector4d(1, 1, 0, 0);
  fm.data.row(3) = Eigen::RowVector4d(0, 0, 0, -3);  // antiparallel to e3
  fm.data.row(4) = Eigen::RowVector4d(0, 2, 0, 0);   // orthogonal to e3
  fm.data.row(5) = Eigen::RowVector4d(0, 0, 0, 1);
  return fm;
}

}  // namespace

TEST_CASE("discriminative feature is the normalized pixel feature") {
  const FeatureMap fm = tiny_map();
  const DiscriminativeFeature f = pick_discriminative_feature(fm, 0, 0);
  CHECK_FALSE(f.degenerate);
  CHECK(f.feature == VecX(Eigen::Vector4d(0, 0, 0, 1)));

  const DiscriminativeFeature zero = pick_discriminative_feature(fm, 1, 0);
  CHECK(zero.degenerate);
  CHECK(zero.feature.norm() == 0.0);

  CHECK_THROWS_WITH_AS(pick_discriminative_feature(fm, 5, 0), doctest::Contains("(5, 0)"),
                       DataError);
}

TEST_CASE("similarity map hits the parallel, orthogonal and antiparallel cases") {
  const FeatureMap fm = tiny_map();
  const SimilarityMap sim = similarity_map(fm, Eigen::Vector4d(0, 0, 0, 5));
  CHECK(sim(0, 0) == doctest::Approx(1.0).epsilon(1e-15));   // parallel
  CHECK(sim(0, 1) == 0.0);                                   // zero feature pixel
  CHECK(sim(1, 0) == doctest::Approx(-1.0).epsilon(1e-15));  // antiparallel
  CHECK(sim(1, 1) == doctest::Approx(0.0).epsilon(1e-15));   // orthogonal
  CHECK_THROWS_AS(similarity_map(fm, Eigen::Vector4d::Zero()), DataError);
}

TEST_CASE("object mask threshold is boundary inclusive") {
  SimilarityMap sim(1, 3);
  sim << 0.70, 0.69, 1.0;
  const BoolMask mask = object_mask(sim, 0.7);
  CHECK(mask(0, 0));
  CHECK_FALSE(mask(0, 1));
  CHECK(mask(0, 2));

  SimilarityMap ones = SimilarityMap::Constant(4, 4, 1.0);
  CHECK(object_mask(ones, 0.7).all());
  CHECK_THROWS_AS(object_mask(sim, 1.0), DataError);
}

TEST_CASE("object mask is monotone in the threshold") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  SimilarityMap sim(8, 8);
  for (int v = 0; v < 8; ++v)
    for (int u = 0; u < 8; ++u) sim(v, u) = uni(rng);
  for (double t1 : {-0.5, 0.0, 0.4}) {
    const BoolMask loose = object_mask(sim, t1);
    const BoolMask tight = object_mask(sim, t1 + 0.3);
    CHECK((tight && !loose).count() == 0);  // tight is a subset of loose
  }
}

TEST_CASE("3d selection follows cosine similarity and ignores feature scale") {
  GaussianCloud cloud = GaussianCloud::create(3, 4);
  const VecX query = Eigen::Vector3d(1, 0, 0);
  cloud.features.col(0) = Eigen::Vector3d(2, 0, 0);
  cloud.features.col(1) = Eigen::Vector3d(0, 1, 0);
  cloud.features.col(2) = Eigen::Vector3d(0.9, 0.1, 0);
  cloud.features.col(3) = Eigen::Vector3d(-1, 0, 0);

  CHECK(select_gaussians_3d(cloud, query, 0.7) == std::vector<int>{0, 2});

  GaussianCloud scaled = cloud;
  scaled.features *= 37.5;
  CHECK(select_gaussians_3d(scaled, query, 0.7) == select_gaussians_3d(cloud, query, 0.7));

  GaussianCloud orthogonal = cloud;
  for (int i = 0; i < 4; ++i) orthogonal.features.col(i) = Eigen::Vector3d(0, 1, 0);
  CHECK(select_gaussians_3d(orthogonal, query, 0.7).empty());

  GaussianCloud all = cloud;
  for (int i = 0; i < 4; ++i) all.features.col(i) = query * (i + 1.0);
  CHECK(select_gaussians_3d(all, query, 0.7) == std::vector<int>{0, 1, 2, 3});
}

TEST_CASE("hull extraction keeps interior points and drops exterior ones") {
  GaussianCloud cloud = GaussianCloud::create(1, 6);
  cloud.positions.col(0) = Vec3(0, 0, 0);
  cloud.positions.col(1) = Vec3(1, 0, 0);
  cloud.positions.col(2) = Vec3(0, 1, 0);
  cloud.positions.col(3) = Vec3(0, 0, 1);
  cloud.positions.col(4) = Vec3(0.25, 0.25, 0.25);  // centroid, inside
  cloud.positions.col(5) = Vec3(5, 5, 5);           // far outside

  const ObjectSelection3D sel = convex_hull_extract(cloud, {0, 1, 2, 3});
  CHECK_FALSE(sel.hull_degenerate);
  CHECK(sel.hull_indices == std::vector<int>{0, 1, 2, 3, 4});
}

TEST_CASE("cube-corner hull matches the brute-force halfspace oracle") {
  std::vector<Vec3> corners;
  for (int x : {-1, 1})
    for (int y : {-1, 1})
      for (int z : {-1, 1}) corners.push_back(Vec3(x, y, z));

  GaussianCloud cloud = GaussianCloud::create(1, 8 + 6 + 6);
  for (int i = 0; i < 8; ++i) cloud.positions.col(i) = corners[i];
  // face centers (inside) and their doubles (outside)
  const Vec3 faces[6] = {Vec3(1, 0, 0), Vec3(-1, 0, 0), Vec3(0, 1, 0),
                         Vec3(0, -1, 0), Vec3(0, 0, 1), Vec3(0, 0, -1)};
  for (int i = 0; i < 6; ++i) {
    cloud.positions.col(8 + i) = faces[i];
    cloud.positions.col(14 + i) = 2.0 * faces[i];
  }

  const ObjectSelection3D sel = convex_hull_extract(cloud, {0, 1, 2, 3, 4, 5, 6, 7});
  std::vector<bool> inside(cloud.size(), false);
  for (int i : sel.hull_indices) inside[i] = true;
  for (int i = 0; i < 8; ++i) CHECK(inside[i]);
  for (int i = 8; i < 14; ++i) CHECK(inside[i]);         // face centers in
  for (int i = 14; i < 20; ++i) CHECK_FALSE(inside[i]);  // doubled points out

  for (int i = 0; i < cloud.size(); ++i)
    CHECK(inside[i] == halfspace_oracle(corners, cloud.positions.col(i), 1e-9));
}

TEST_CASE("random hulls agree with the halfspace oracle") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<Vec3> seeds;
    for (int i = 0; i < 14; ++i) seeds.push_back(Vec3(normal(rng), normal(rng), normal(rng)));
    const ConvexHull3 hull = convex_hull_3d(seeds);
    REQUIRE_FALSE(hull.degenerate);

    for (int probe = 0; probe < 40; ++probe) {
      Vec3 p;
      if (probe % 2 == 0) {
        // convex combination of four random seeds: inside by construction
        Vec4 w(uni(rng), uni(rng), uni(rng), uni(rng));
        w /= w.sum();
        p = w[0] * seeds[probe % 14] + w[1] * seeds[(probe + 3) % 14] +
            w[2] * seeds[(probe + 7) % 14] + w[3] * seeds[(probe + 10) % 14];
      } else {
        p = Vec3(normal(rng), normal(rng), normal(rng)) * 1.5;
      }
      CHECK(hull.contains(p, 1e-9) == halfspace_oracle(seeds, p, 1e-9));
    }
  }
}

TEST_CASE("hull extraction is invariant to seed ordering and handles degeneracy") {
  std::mt19937_64 rng(13);
  GaussianCloud cloud = random_test_cloud(20, 2, rng);

  std::vector<int> seeds{3, 11, 7, 0, 15, 9};
  std::vector<int> shuffled{9, 0, 3, 15, 7, 11};
  const ObjectSelection3D a = convex_hull_extract(cloud, seeds);
  const ObjectSelection3D b = convex_hull_extract(cloud, shuffled);
  CHECK(a.hull_indices == b.hull_indices);
  CHECK(a.seed_indices == b.seed_indices);

  // Coplanar seeds fall back to the seed set with the degenerate flag.
  GaussianCloud flat = GaussianCloud::create(1, 5);
  for (int i = 0; i < 4; ++i) flat.positions.col(i) = Vec3(i % 2, i / 2, 0.0);
  flat.positions.col(4) = Vec3(0.5, 0.5, 0.0);
  const ObjectSelection3D degenerate = convex_hull_extract(flat, {0, 1, 2, 3});
  CHECK(degenerate.hull_degenerate);
  CHECK(degenerate.hull_indices == std::vector<int>{0, 1, 2, 3});
}

TEST_CASE("segment query rejects a degenerate background prompt") {
  // Scene without a background plane: an empty-alpha pixel has a zero feature.
  GaussianCloud cloud = GaussianCloud::create(4, 1);
  cloud.positions.col(0) = Vec3(0, 0, 5);
  cloud.log_scales.col(0).setConstant(std::log(0.2));
  cloud.opacities[0] = 2.0;
  cloud.features.col(0) = VecX::Ones(4);

  const Camera cam = simple_camera();
  CHECK_THROWS_WITH_AS(segment_query(cloud, cam, 0, 0, cam, 0.7), doctest::Contains("(0, 0)"),
                       DataError);

  // A prompt on the object produces a mask over the object region only.
  const BoolMask mask = segment_query(cloud, cam, 7, 7, cam, 0.7);
  CHECK(mask(7, 7));
  CHECK(mask.count() > 0);
  CHECK(mask.count() < mask.size());
}
