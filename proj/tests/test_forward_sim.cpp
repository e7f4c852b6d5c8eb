#include <algorithm>
#include <cmath>
#include <complex>
#include <random>
#include <vector>

#include "doctest.h"
#include "test_support.hpp"
#include "xstereo/forward_sim.hpp"
#include "xstereo/imaging.hpp"
#include "xstereo/registration.hpp"

using namespace xstereo;

namespace {

SampleModel square_sample(int side, double pitch, int x0, int y0, int size, double depth,
                          double amplitude = 0.0) {
  Mask m(side, side, 0);
  for (int y = y0; y < y0 + size; ++y) {
    for (int x = x0; x < x0 + size; ++x) m(x, y) = 1;
  }
  SampleModel s;
  s.lateral_pitch = pitch;
  s.structures.push_back({"square", m, depth, amplitude, 0.0});
  return s;
}

// Smoothed opacity, so the correlation peak is not flattened by sharp edges.
ComplexRaster opacity(const ComplexView& v) {
  Raster2D o(v.width(), v.height());
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = 1.0 - std::abs(v.field[i]);
  const Raster2D smooth = gaussian_filter(o, 2.0);
  ComplexRaster out(v.width(), v.height());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = smooth[i];
  return out;
}

}  // namespace

TEST_CASE("default cross sample") {
  const CrossSampleParams p;
  const SampleModel s = make_cross_sample(p);
  REQUIRE(s.structures.size() == 2);
  CHECK(s.structures[0].depth == 0.0);
  CHECK(s.structures[1].depth == doctest::Approx(300e-9));
  CHECK(p.width == doctest::Approx(6.9e-6));
  CHECK(p.height == doctest::Approx(6.1e-6));
  for (const auto& st : s.structures) {
    CHECK(st.transmission_amplitude == 0.0);
    CHECK(count_nonzero(st.mask) > 0);
  }
  CHECK_NOTHROW(s.validate());

  // Holes are fully open: the projection at normal incidence is binary.
  const ComplexView v = project_view(s, 0.0, ObjectGrid{p.pitch, p.side});
  std::size_t open = 0;
  for (auto c : v.field.values()) {
    const double a = std::abs(c);
    CHECK((a == 0.0 || a == 1.0));
    open += a == 1.0;
  }
  CHECK(open > 0);
}

TEST_CASE("phase variant carries distinct phases") {
  CrossSampleParams p;
  p.phase_variant = true;
  const SampleModel s = make_cross_sample(p);
  REQUIRE(s.structures.size() == 3);
  CHECK(s.structures[0].transmission_phase != s.structures[1].transmission_phase);
  CHECK(s.structures[0].transmission_amplitude > 0.0);
  CHECK(s.structures[1].transmission_amplitude > 0.0);
  const ComplexView v = project_view(s, 0.0, ObjectGrid{p.pitch, p.side});
  const Raster2D ph = v.phase();
  std::vector<double> levels;
  for (std::size_t i = 0; i < ph.size(); ++i) {
    if (std::abs(v.field[i]) > 0.0) levels.push_back(std::round(ph[i] * 100.0) / 100.0);
  }
  std::sort(levels.begin(), levels.end());
  levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
  CHECK(levels.size() >= 3);
}

TEST_CASE("sample parameter validation") {
  CrossSampleParams p;
  p.gap = 0.0;
  CHECK_THROWS_AS(make_cross_sample(p), std::invalid_argument);
  p = CrossSampleParams{};
  p.side = 32;
  CHECK_THROWS_AS(make_cross_sample(p), std::invalid_argument);
  p = CrossSampleParams{};
  p.window_notch = p.window;
  CHECK_THROWS_AS(make_cross_sample(p), std::invalid_argument);
}

TEST_CASE("normal incidence projection equals the mask") {
  const SampleModel s = square_sample(64, 1e-7, 20, 25, 10, 2e-6);
  const ComplexView v = project_view(s, 0.0, ObjectGrid{1e-7, 64});
  for (int y = 0; y < 64; ++y) {
    for (int x = 0; x < 64; ++x) {
      CHECK(std::abs(v.field(x, y)) == doctest::Approx(s.structures[0].mask(x, y) ? 0.0 : 1.0));
    }
  }
}

TEST_CASE("stereo projections are displaced by the ground-truth disparity") {
  StereoGeometry g;
  g.theta1 = g.theta2 = deg_to_rad(9.5);
  const double pitch = 1e-7;
  const double expected_px = 4.3;
  const double z = expected_px * pitch / g.tan_sum();
  const SampleModel s = square_sample(128, pitch, 50, 40, 24, z);
  const ObjectGrid grid{pitch, 128};
  const ComplexView left = project_view(s, signed_angle(g, Side::kLeft), grid);
  const ComplexView right = project_view(s, signed_angle(g, Side::kRight), grid);
  const Registration r = register_subpixel(opacity(left), opacity(right), 50);
  CHECK(r.dx == doctest::Approx(expected_px).epsilon(0.01));
  CHECK(std::abs(r.dy) < 0.02);
}

TEST_CASE("overlapping opaque structures multiply to zero") {
  SampleModel s = square_sample(48, 1e-7, 10, 10, 12, 0.0, 0.5);
  Mask m(48, 48, 0);
  for (int y = 16; y < 30; ++y) {
    for (int x = 16; x < 30; ++x) m(x, y) = 1;
  }
  s.structures.push_back({"b", m, 0.0, 0.0, 0.0});
  const ComplexView v = project_view(s, 0.0, ObjectGrid{1e-7, 48});
  CHECK(std::abs(v.field(18, 18)) == 0.0);
  CHECK(std::abs(v.field(12, 12)) == doctest::Approx(0.5));
  CHECK(std::abs(v.field(25, 25)) == 0.0);
  CHECK(std::abs(v.field(40, 40)) == 1.0);
}

TEST_CASE("diffraction of an open square aperture") {
  ComplexView v;
  v.field = ComplexRaster(32, 32);
  for (int y = 12; y < 20; ++y) {
    for (int x = 10; x < 18; ++x) v.field(x, y) = 0.5;
  }
  const Raster2D I = diffract(v);
  CHECK(I(16, 16) == doctest::Approx(std::pow(64 * 0.5, 2)).epsilon(1e-12));
  CHECK(I(16, 16) == *std::max_element(I.values().begin(), I.values().end()));
  // sinc^2 zeros along the axes at multiples of N / width.
  CHECK(I(20, 16) < 1e-20);
  CHECK(I(16, 12) < 1e-20);
}

TEST_CASE("diffraction is translation invariant and satisfies Parseval") {
  std::mt19937_64 rng(21);
  ComplexView v;
  v.field = ComplexRaster(40, 40);
  const ComplexRaster f = test::random_field(12, 14, rng);
  for (int y = 0; y < 14; ++y) {
    for (int x = 0; x < 12; ++x) v.field(x + 5, y + 3) = f(x, y);
  }
  ComplexView moved;
  moved.field = ComplexRaster(40, 40);
  for (int y = 0; y < 14; ++y) {
    for (int x = 0; x < 12; ++x) moved.field(x + 21, y + 19) = f(x, y);
  }
  const Raster2D a = diffract(v), b = diffract(moved);
  double energy = 0.0, total = 0.0;
  for (auto c : v.field.values()) energy += std::norm(c);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-9).scale(1.0));
    total += a[i];
  }
  CHECK(total == doctest::Approx(energy * 40 * 40).epsilon(1e-12));

  ComplexView wide;
  wide.field = ComplexRaster(40, 40);
  for (int x = 0; x < 25; ++x) wide.field(x, 0) = 1.0;
  CHECK_THROWS_AS(diffract(wide), std::invalid_argument);
}

TEST_CASE("poisson exposures converge to the ideal pattern") {
  std::mt19937_64 rng(2);
  const Raster2D ideal = test::random_raster(32, 32, rng, 0.5, 1.0);
  ExposureSpec e;
  e.photons_total = 1e9;
  e.seed = 17;
  const DiffractionFrame f = simulate_exposure(ideal, e);
  double total = 0.0;
  for (auto v : ideal.values()) total += v;
  const double cut = percentile(ideal.values(), 90.0);
  double worst = 0.0;
  for (std::size_t i = 0; i < ideal.size(); ++i) {
    if (ideal[i] < cut) continue;
    const double mean = ideal[i] * e.photons_total / total;
    worst = std::max(worst, std::abs(f.counts[i] - mean) / mean);
  }
  CHECK(worst < 0.01);
  CHECK(count_nonzero(f.saturated) == 0);

  const DiffractionFrame again = simulate_exposure(ideal, e);
  CHECK(again.counts == f.counts);
  e.seed = 18;
  CHECK_FALSE(simulate_exposure(ideal, e).counts == f.counts);
}

TEST_CASE("saturation clips and flags") {
  Raster2D ideal(4, 1, 1.0);
  ideal[0] = 100.0;
  ExposureSpec e;
  e.photons_total = 1e6;
  e.saturation_level = 1000.0;
  const DiffractionFrame f = simulate_exposure(ideal, e);
  CHECK(f.saturated[0] == 1);
  CHECK(f.counts[0] == 1000.0);
  CHECK(f.saturated[1] == 1);

  e.photons_total = 0.0;
  CHECK_THROWS_AS(simulate_exposure(ideal, e), std::invalid_argument);
}

TEST_CASE("dual frame composition") {
  std::mt19937_64 rng(5);
  const Raster2D l = test::random_raster(8, 6, rng), r = test::random_raster(8, 6, rng);

  const Raster2D apart = compose_dual_frame(l, r, 10);
  CHECK(apart.width() == 18);
  for (int y = 0; y < 6; ++y) {
    for (int x = 0; x < 8; ++x) {
      CHECK(apart(x, y) == l(x, y));
      CHECK(apart(x + 10, y) == r(x, y));
    }
    CHECK(apart(8, y) == 0.0);
    CHECK(apart(9, y) == 0.0);
  }

  const Raster2D summed = compose_dual_frame(l, r, 0);
  for (std::size_t i = 0; i < l.size(); ++i) CHECK(summed[i] == l[i] + r[i]);

  const DualLayout d = dual_layout(512, default_separation(512));
  CHECK(d.left_center_x == 256);
  CHECK(d.right_center_x == 256 + default_separation(512));
  CHECK(d.center_y == 256);
}

TEST_CASE("default separation overlaps only the faint outer band") {
  CrossSampleParams p;
  p.lid_offset = 1e-6;
  const SampleModel s = make_cross_sample(p);
  StereoGeometry g;
  const Raster2D I =
      diffract(project_view(s, signed_angle(g, Side::kLeft), ObjectGrid{p.pitch, p.side}));
  const int sep = default_separation(p.side);
  CHECK(sep < p.side);
  CHECK(p.side - sep <= p.side / 20);
  const double peak = *std::max_element(I.values().begin(), I.values().end());
  double band = 0.0, band_max = 0.0, total = 0.0;
  for (int y = 0; y < p.side; ++y) {
    for (int x = 0; x < p.side; ++x) {
      total += I(x, y);
      if (x >= sep) {
        band += I(x, y);
        band_max = std::max(band_max, I(x, y));
      }
    }
  }
  CHECK(band_max < 0.1 * peak);
  CHECK(band / total < 0.01);
}

TEST_CASE("misalignment by zero is the identity") {
  std::mt19937_64 rng(3);
  ComplexView v;
  v.field = test::random_field(16, 16, rng);
  const ComplexView same = misalign_view(v, 0.0, 0.0);
  for (std::size_t i = 0; i < v.field.size(); ++i) {
    CHECK(std::abs(same.field[i] - v.field[i]) < 1e-12);
  }
  const ComplexView down = misalign_view(v, 0.0, 2.0);
  CHECK(std::abs(down.field(5, 9) - v.field(5, 7)) < 1e-12);
}
