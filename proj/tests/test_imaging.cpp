#include <cmath>
#include <complex>
#include <numbers>
#include <random>
#include <vector>

#include "doctest.h"
#include "test_support.hpp"
#include "xstereo/delaunay.hpp"
#include "xstereo/fft.hpp"
#include "xstereo/imaging.hpp"
#include "xstereo/registration.hpp"

using namespace xstereo;

TEST_CASE("reflective indexing") {
  CHECK(reflect_index(-1, 4) == 0);
  CHECK(reflect_index(-2, 4) == 1);
  CHECK(reflect_index(4, 4) == 3);
  CHECK(reflect_index(5, 4) == 2);
  CHECK(reflect_index(2, 4) == 2);
}

TEST_CASE("gaussian filter keeps constants and total mass of interior blobs") {
  Raster2D c(20, 15, 2.5);
  for (auto v : gaussian_filter(c, 1.9).values()) CHECK(v == doctest::Approx(2.5).epsilon(1e-12));

  Raster2D blob(41, 41, 0.0);
  blob(20, 20) = 1.0;
  const Raster2D g = gaussian_filter(blob, 2.0);
  double sum = 0.0;
  for (auto v : g.values()) sum += v;
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(g(20, 20) > g(21, 20));
  CHECK(g(21, 20) == doctest::Approx(g(20, 21)).epsilon(1e-12));
}

TEST_CASE("bicubic upsampling") {
  Raster2D c(6, 5, 0.7);
  const Raster2D up = resize_bicubic(c, 4);
  CHECK(up.width() == 24);
  CHECK(up.height() == 20);
  for (auto v : up.values()) CHECK(v == doctest::Approx(0.7).epsilon(1e-12));

  // Linear ramps are reproduced away from the borders.
  Raster2D ramp(16, 4);
  for (int y = 0; y < 4; ++y) {
    for (int x = 0; x < 16; ++x) ramp(x, y) = x;
  }
  const Raster2D r = resize_bicubic(ramp, 2);
  for (int x = 6; x < 26; ++x) CHECK(r(x, 3) == doctest::Approx((x + 0.5) / 2.0 - 0.5));
}

TEST_CASE("sobel responses") {
  Raster2D step(10, 6, 0.0);
  for (int y = 0; y < 6; ++y) {
    for (int x = 5; x < 10; ++x) step(x, y) = 1.0;
  }
  const Raster2D gx = sobel_x(step), gy = sobel_y(step);
  for (int y = 0; y < 6; ++y) {
    CHECK(gx(4, y) == doctest::Approx(4.0));
    CHECK(gx(5, y) == doctest::Approx(4.0));
    CHECK(gx(3, y) == 0.0);
    CHECK(gx(6, y) == 0.0);
    for (int x = 0; x < 10; ++x) CHECK(gy(x, y) == 0.0);
  }
}

TEST_CASE("bilinear sampling") {
  Raster2D r(2, 2);
  r(0, 0) = 0;
  r(1, 0) = 1;
  r(0, 1) = 2;
  r(1, 1) = 3;
  CHECK(sample_bilinear(r, 0.5, 0.5, false) == doctest::Approx(1.5));
  CHECK(sample_bilinear(r, -3.0, 0.0, true) == 0.0);
  CHECK(sample_bilinear(r, -3.0, 0.0, false, -7.0) == -7.0);
}

TEST_CASE("percentile interpolates linearly") {
  const std::vector<double> v{5, 1, 4, 2, 3};
  CHECK(percentile(v, 0) == 1.0);
  CHECK(percentile(v, 50) == 3.0);
  CHECK(percentile(v, 100) == 5.0);
  CHECK(percentile(v, 12.5) == doctest::Approx(1.5));
  CHECK_THROWS(percentile(std::vector<double>{}, 50));
}

TEST_CASE("connected components with 4 and 8 connectivity") {
  Mask m(5, 5, 0);
  m(0, 0) = m(1, 1) = m(2, 2) = 1;
  m(4, 0) = m(4, 1) = 1;
  const Components c4 = label_components(m, 4);
  const Components c8 = label_components(m, 8);
  CHECK(c4.count() == 4);
  CHECK(c8.count() == 2);
  CHECK(c8.labels(0, 0) == c8.labels(2, 2));
  CHECK(c8.labels(3, 3) == -1);
  CHECK_THROWS(label_components(m, 6));
}

TEST_CASE("disc dilation") {
  Mask m(9, 9, 0);
  m(4, 4) = 1;
  CHECK(count_nonzero(dilate_disc(m, 1.0)) == 5);
  CHECK(count_nonzero(dilate_disc(m, 1.5)) == 9);
  CHECK(dilate_disc(m, 0.0) == m);
}

TEST_CASE("pearson correlation") {
  std::mt19937_64 rng(1);
  const Raster2D a = test::random_raster(12, 12, rng);
  Raster2D b = a, c = a;
  for (auto& v : b.values()) v = 3.0 * v + 1.0;
  for (auto& v : c.values()) v = -v;
  CHECK(correlation(a, b) == doctest::Approx(1.0));
  CHECK(correlation(a, c) == doctest::Approx(-1.0));
}

TEST_CASE("fft round trip and Parseval") {
  std::mt19937_64 rng(2);
  const ComplexRaster x = test::random_field(24, 16, rng);
  Fft2D fft(24, 16);
  const ComplexRaster f = fft.forward(x);
  const ComplexRaster back = fft.inverse(f);
  double ex = 0.0, ef = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    CHECK(std::abs(back[i] - x[i]) < 1e-12);
    ex += std::norm(x[i]);
    ef += std::norm(f[i]);
  }
  CHECK(ef == doctest::Approx(ex * x.size()).epsilon(1e-12));

  ComplexRaster alias = x;
  fft.forward(alias, alias);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(alias[i] - f[i]) < 1e-12);
}

TEST_CASE("band fft agrees with the full transform") {
  std::mt19937_64 rng(3);
  ComplexRaster x = test::random_field(32, 20, rng);
  for (int y = 0; y < 20; ++y) {
    for (int c = 0; c < 32; ++c) {
      if (c < 9 || c > 17) x(c, y) = 0.0;
    }
  }
  Fft2D full(32, 20);
  BandFft2D band(32, 20, 9, 17);
  ComplexRaster fb;
  band.forward(x, fb);
  const ComplexRaster ff = full.forward(x);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(fb[i] - ff[i]) < 1e-10);
  ComplexRaster xb;
  band.inverse(ff, xb);
  for (int y = 0; y < 20; ++y) {
    for (int c = 9; c <= 17; ++c) CHECK(std::abs(xb(c, y) - x(c, y)) < 1e-12);
  }
}

TEST_CASE("fftshift and ifftshift are inverse") {
  Grid<int> g(5, 4);
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = static_cast<int>(i);
  CHECK(ifftshift(fftshift(g)) == g);
  CHECK(fftshift(g)(2, 2) == g(0, 0));
}

TEST_CASE("subpixel registration recovers a known translation") {
  std::mt19937_64 rng(9);
  ComplexRaster ref(64, 64);
  const Raster2D blur = gaussian_filter(test::random_raster(64, 64, rng), 2.0);
  for (std::size_t i = 0; i < ref.size(); ++i) ref[i] = blur[i];
  const std::complex<double> phase = std::polar(1.0, 0.7);
  ComplexRaster moving = shift_image(ref, -3.3, 2.1);
  for (auto& v : moving.values()) v *= phase;
  const Registration r = register_subpixel(ref, moving, 20);
  CHECK(r.dx == doctest::Approx(3.3).epsilon(0.02));
  CHECK(r.dy == doctest::Approx(-2.1).epsilon(0.03));
  CHECK(std::abs(r.phase - std::conj(phase)) < 1e-2);
  CHECK(r.peak > 0.99);
}

TEST_CASE("twin flip is an involution and integer translation zero fills") {
  std::mt19937_64 rng(6);
  const ComplexRaster x = test::random_field(8, 8, rng);
  CHECK(conjugate_flip(conjugate_flip(x)) == x);

  Raster2D r(4, 3, 1.0);
  const Raster2D t = translate(r, 1, -1);
  CHECK(t(0, 0) == 0.0);
  CHECK(t(1, 0) == 1.0);
  CHECK(t(1, 2) == 0.0);
}

TEST_CASE("delaunay triangulation of a square lattice") {
  std::vector<Eigen::Vector2d> pts;
  for (int y = 0; y < 5; ++y) {
    for (int x = 0; x < 5; ++x) pts.emplace_back(x, y);
  }
  const Delaunay2D tri(pts);
  CHECK(tri.triangles().size() == 32);

  const auto loc = tri.locate({1.25, 2.5});
  REQUIRE(loc);
  CHECK(loc->weights.sum() == doctest::Approx(1.0));
  Eigen::Vector2d p = Eigen::Vector2d::Zero();
  for (int k = 0; k < 3; ++k) {
    CHECK(loc->weights[k] >= -1e-12);
    p += loc->weights[k] * pts[loc->vertices[k]];
  }
  CHECK(p.x() == doctest::Approx(1.25));
  CHECK(p.y() == doctest::Approx(2.5));
  CHECK_FALSE(tri.locate({-0.5, 2.0}));
}

TEST_CASE("delaunay empty circumcircle property on random points") {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Eigen::Vector2d> pts;
  for (int i = 0; i < 300; ++i) pts.emplace_back(u(rng), u(rng));
  const Delaunay2D tri(pts);
  const auto tris = tri.triangles();
  CHECK(tris.size() > 500);
  int violations = 0;
  for (const auto& t : tris) {
    const Eigen::Vector2d a = pts[t[0]], b = pts[t[1]], c = pts[t[2]];
    CHECK((b - a).x() * (c - a).y() - (b - a).y() * (c - a).x() > 0.0);
    const double d = 2.0 * (a.x() * (b.y() - c.y()) + b.x() * (c.y() - a.y()) + c.x() * (a.y() - b.y()));
    const double ux = (a.squaredNorm() * (b.y() - c.y()) + b.squaredNorm() * (c.y() - a.y()) +
                       c.squaredNorm() * (a.y() - b.y())) / d;
    const double uy = (a.squaredNorm() * (c.x() - b.x()) + b.squaredNorm() * (a.x() - c.x()) +
                       c.squaredNorm() * (b.x() - a.x())) / d;
    const Eigen::Vector2d center(ux, uy);
    const double r2 = (a - center).squaredNorm();
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if (static_cast<int>(i) == t[0] || static_cast<int>(i) == t[1] || static_cast<int>(i) == t[2]) {
        continue;
      }
      violations += (pts[i] - center).squaredNorm() < r2 * (1.0 - 1e-9);
    }
  }
  CHECK(violations == 0);
}
