#include <cmath>
#include <fstream>
#include <random>

#include <Eigen/Dense>

#include "doctest.h"
#include "test_support.hpp"
#include "xstereo/rectification.hpp"

using namespace xstereo;

namespace {

// Two pinhole cameras looking at a random point cloud.
Correspondences projective_pairs(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0), depth(4.0, 8.0);
  Eigen::Matrix3d k;
  k << 500, 0, 256, 0, 520, 240, 0, 0, 1;
  const Eigen::Matrix3d r =
      (Eigen::AngleAxisd(0.12, Eigen::Vector3d::UnitY()) * Eigen::AngleAxisd(0.03, Eigen::Vector3d::UnitX()))
          .toRotationMatrix();
  const Eigen::Vector3d t(-0.8, 0.05, 0.1);
  Correspondences c;
  for (int i = 0; i < n; ++i) {
    const Eigen::Vector3d p(u(rng) * 2.0, u(rng) * 2.0, depth(rng));
    c.push_back({(k * p).hnormalized(), (k * (r * p + t)).hnormalized()});
  }
  return c;
}

// Camera rotated by `rot` about the image center and shifted down by `dy`,
// with depth-dependent horizontal parallax.
Correspondences misaligned_pairs(int n, double rot, double dy, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> x(60, 450), y(60, 450), z(0.0, 25.0);
  const double c0 = 255.5;
  Correspondences c;
  for (int i = 0; i < n; ++i) {
    const double px = x(rng), py = y(rng), d = z(rng);
    const Eigen::Vector2d left(px + 0.5 * d, py);
    const Eigen::Vector2d src(px - 0.5 * d - c0, py - c0);
    const Eigen::Vector2d right(std::cos(rot) * src.x() - std::sin(rot) * src.y() + c0,
                                std::sin(rot) * src.x() + std::cos(rot) * src.y() + c0 + dy);
    c.push_back({left, right});
  }
  return c;
}

double proportional_error(const Eigen::Matrix3d& f, const Eigen::Matrix3d& g) {
  const Eigen::Matrix3d a = f / f.norm(), b = g / g.norm();
  return std::min((a - b).cwiseAbs().maxCoeff(), (a + b).cwiseAbs().maxCoeff());
}

}  // namespace

TEST_CASE("horizontal parallax gives the canonical fundamental matrix") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0, 500), d(-20, 20);
  Correspondences c;
  for (int i = 0; i < 16; ++i) {
    const Eigen::Vector2d l(u(rng), u(rng));
    c.push_back({l, l + Eigen::Vector2d(d(rng), 0.0)});
  }
  const FundamentalMatrix f = estimate_fundamental(c);
  Eigen::Matrix3d canonical;
  canonical << 0, 0, 0, 0, 0, -1, 0, 1, 0;
  CHECK(proportional_error(f.matrix, canonical) < 1e-6);

  const RectifyingWarps w = rectifying_warps(f, c, 512, 512);
  CHECK((w.left - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() < 1e-6);
  CHECK((w.right - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("noise-free projective correspondences satisfy the epipolar constraint") {
  for (std::uint64_t seed : {2u, 3u, 4u}) {
    const Correspondences c = projective_pairs(16, seed);
    const FundamentalMatrix f = estimate_fundamental(c);
    CHECK(epipolar_residual(f, c) < 1e-9);
    CHECK(f.matrix.norm() == doctest::Approx(1.0).epsilon(1e-12));
    Eigen::JacobiSVD<Eigen::Matrix3d> svd(f.matrix);
    CHECK(svd.singularValues()(2) < 1e-12);
    CHECK(svd.singularValues()(1) > 1e-6);
  }
}

TEST_CASE("sign convention of the fundamental matrix") {
  const Correspondences c = projective_pairs(12, 5);
  Correspondences reordered(c.rbegin(), c.rend());
  const Eigen::Matrix3d a = estimate_fundamental(c).matrix, b = estimate_fundamental(reordered).matrix;
  CHECK((a - b).cwiseAbs().maxCoeff() < 1e-9);
  Eigen::Index r = 0, k = 0;
  a.cwiseAbs().maxCoeff(&r, &k);
  CHECK(a(r, k) > 0.0);
}

TEST_CASE("estimation preconditions") {
  const Correspondences c = projective_pairs(16, 6);
  CHECK_NOTHROW(estimate_fundamental(c));
  CHECK_THROWS_AS(estimate_fundamental(Correspondences(c.begin(), c.begin() + 7)),
                  std::invalid_argument);
  Correspondences dup = c;
  dup[3].left = dup[5].left;
  CHECK_THROWS_AS(estimate_fundamental(dup), std::invalid_argument);
  Correspondences flat;
  for (int i = 0; i < 10; ++i) flat.push_back({{i * 10.0, 0.0}, {i * 10.0 + 1.0, 0.0}});
  CHECK_THROWS_AS(estimate_fundamental(flat), std::invalid_argument);
}

TEST_CASE("rectified correspondences share rows") {
  for (auto [rot, dy] : {std::pair{0.0175, 2.0}, std::pair{-0.03, -3.5}, std::pair{0.005, 0.5}}) {
    const Correspondences c = misaligned_pairs(16, rot, dy, 7);
    const FundamentalMatrix f = estimate_fundamental(c);
    CHECK(epipolar_residual(f, c) < 1e-9);
    const RectifyingWarps w = rectifying_warps(f, c, 512, 512);
    for (const auto& p : c) {
      const Eigen::Vector2d l = apply_homography(w.left, p.left);
      const Eigen::Vector2d r = apply_homography(w.right, p.right);
      CHECK(std::abs(l.y() - r.y()) <= 0.5);
    }
    CHECK(std::abs(w.left.block<2, 2>(0, 0).determinant()) > 0.5);
    CHECK(std::abs(w.right.block<2, 2>(0, 0).determinant()) > 0.5);
  }
}

TEST_CASE("image warping") {
  std::mt19937_64 rng(8);
  const Raster2D img = test::random_raster(20, 16, rng);
  CHECK(warp_image(img, Eigen::Matrix3d::Identity()) == img);
  Eigen::Matrix3d shift = Eigen::Matrix3d::Identity();
  shift(0, 2) = 3.0;
  const Raster2D moved = warp_image(img, shift);
  CHECK(moved(5, 7) == doctest::Approx(img(2, 7)));
  CHECK(moved(1, 7) == 0.0);
}

TEST_CASE("correspondence files") {
  test::TempDir dir("corr");
  const Correspondences c = projective_pairs(9, 9);
  write_correspondences(c, dir / "c.txt");
  const Correspondences back = read_correspondences(dir / "c.txt");
  REQUIRE(back.size() == c.size());
  for (std::size_t i = 0; i < c.size(); ++i) {
    CHECK(back[i].left == c[i].left);
    CHECK(back[i].right == c[i].right);
  }
  {
    std::ofstream out(dir / "d.txt");
    out << "# header\n\n1 2 3 4 # trailing\n5 6 7 8\n";
  }
  CHECK(read_correspondences(dir / "d.txt").size() == 2);
  {
    std::ofstream out(dir / "bad.txt");
    out << "1 2 3\n";
  }
  CHECK_THROWS(read_correspondences(dir / "bad.txt"));
}
