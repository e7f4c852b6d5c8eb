#include <cmath>
#include <random>
#include <stdexcept>

#include "doctest.h"
#include "xstereo/geometry.hpp"

using namespace xstereo;

namespace {

StereoGeometry symmetric(double half_angle_deg) {
  StereoGeometry g;
  g.theta1 = g.theta2 = deg_to_rad(half_angle_deg);
  return g;
}

}  // namespace

TEST_CASE("object pixel pitch from the far-field sampling relation") {
  StereoGeometry g;
  g.roi_side = 2048;
  CHECK(object_pixel_pitch(g) == doctest::Approx(22.569444e-9).epsilon(1e-6));
  g.roi_side = 1024;
  CHECK(object_pixel_pitch(g) == doctest::Approx(45.138889e-9).epsilon(1e-6));
  g.roi_side = 512;
  CHECK(object_pixel_pitch(g) == doctest::Approx(90.277778e-9).epsilon(1e-6));
}

TEST_CASE("doubling the roi halves the pitch") {
  for (int n : {64, 128, 256, 512, 1024}) {
    StereoGeometry a, b;
    a.roi_side = n;
    b.roi_side = 2 * n;
    CHECK(object_pixel_pitch(b) == doctest::Approx(object_pixel_pitch(a) / 2.0).epsilon(1e-14));
  }
}

TEST_CASE("depth from disparity at a 19 degree separation") {
  const StereoGeometry g = symmetric(9.5);
  CHECK(depth_from_disparity(49e-9, g) == doctest::Approx(146.4062e-9).epsilon(1e-6));
  CHECK(depth_from_disparity(127e-9, g) == doctest::Approx(379.4610e-9).epsilon(1e-6));
  CHECK(depth_from_disparity(0.0, g) == 0.0);
}

TEST_CASE("axial voxel at 19 and 12 degrees for the default pitch") {
  const StereoGeometry g19 = symmetric(9.5), g12 = symmetric(6.0);
  const double pitch = object_pixel_pitch(g19);
  CHECK(g19.axial_voxel(pitch) == doctest::Approx(269.739e-9).epsilon(1e-5));
  CHECK(g12.axial_voxel(pitch) == doctest::Approx(429.468e-9).epsilon(1e-5));
}

TEST_CASE("disparity and depth are inverse") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> ang(1.0, 40.0), d(-5e-6, 5e-6);
  for (int i = 0; i < 200; ++i) {
    StereoGeometry g;
    g.theta1 = deg_to_rad(ang(rng));
    g.theta2 = deg_to_rad(ang(rng));
    const double disp = d(rng);
    CHECK(disparity_from_depth(depth_from_disparity(disp, g), g) ==
          doctest::Approx(disp).epsilon(1e-12));
  }
}

TEST_CASE("coordinate correction") {
  const double delta = 1.0;
  const double theta = deg_to_rad(9.5);
  CHECK(correct_coordinate(42.0, 0.0, theta, Side::kLeft) == 42.0);
  CHECK(correct_coordinate(42.0, 0.0, theta, Side::kRight) == 42.0);
  CHECK(correct_coordinate(100 * delta, 10 * delta, theta, Side::kLeft) ==
        doctest::Approx(98.326574).epsilon(1e-7));
}

TEST_CASE("both views map a point to the same object coordinate") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> ang(1.0, 30.0), x(-1e-5, 1e-5), z(-3e-6, 3e-6);
  for (int i = 0; i < 500; ++i) {
    StereoGeometry g;
    g.theta1 = deg_to_rad(ang(rng));
    g.theta2 = deg_to_rad(ang(rng));
    const double zz = z(rng), x1 = x(rng);
    const double x2 = x1 - zz * (std::tan(g.theta1) + std::tan(g.theta2));
    CHECK(correct_coordinate(x1, zz, g.theta1, Side::kLeft) ==
          doctest::Approx(correct_coordinate(x2, zz, g.theta2, Side::kRight)).epsilon(1e-12));
  }
}

TEST_CASE("projection shift follows the signed beam angle") {
  const StereoGeometry g = symmetric(9.5);
  const double z = 1e-6;
  const double left = projection_shift(z, signed_angle(g, Side::kLeft));
  const double right = projection_shift(z, signed_angle(g, Side::kRight));
  CHECK(left > 0.0);
  CHECK(right < 0.0);
  CHECK(left - right == doctest::Approx(disparity_from_depth(z, g)).epsilon(1e-12));
}

TEST_CASE("geometry validation") {
  StereoGeometry g;
  CHECK_NOTHROW(g.validate());
  g.wavelength = 0.0;
  CHECK_THROWS_AS(g.validate(), std::invalid_argument);
  g = StereoGeometry{};
  g.theta1 = g.theta2 = deg_to_rad(50.0);
  CHECK_THROWS_AS(g.validate(), std::invalid_argument);
  g = StereoGeometry{};
  g.roi_side = 4096;
  CHECK_THROWS_AS(g.validate(), std::invalid_argument);

  ObjectGrid grid = object_grid(StereoGeometry{});
  CHECK(grid.side == 512);
  CHECK(grid.coordinate(256) == 0.0);
  grid.pixel_pitch = 0.0;
  CHECK_THROWS_AS(grid.validate(), std::invalid_argument);
}
