#include <algorithm>
#include <cmath>
#include <complex>
#include <random>
#include <vector>

#include "doctest.h"
#include "test_support.hpp"
#include "xstereo/fft.hpp"
#include "xstereo/forward_sim.hpp"
#include "xstereo/imaging.hpp"
#include "xstereo/phase_retrieval.hpp"
#include "xstereo/registration.hpp"

using namespace xstereo;

namespace {

// Random object confined to a box, with its noiseless diffraction pattern.
struct Problem {
  ComplexRaster object;
  Mask support;
  MeasuredPattern measured;
};

Problem random_problem(int n, int x0, int y0, int w, int h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const ComplexRaster f = test::random_field(w, h, rng);
  Problem p;
  p.object = ComplexRaster(n, n);
  p.support = Mask(n, n, 0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      p.object(x0 + x, y0 + y) = f(x, y);
      p.support(x0 + x, y0 + y) = 1;
    }
  }
  ComplexView v;
  v.field = p.object;
  p.measured = MeasuredPattern::all_valid(diffract(v));
  return p;
}

double max_diff(const ComplexRaster& a, const ComplexRaster& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

ComplexView small_cross(double pitch, int side) {
  CrossSampleParams p;
  p.side = side;
  p.pitch = pitch;
  p.lid_offset = 0.0;
  const SampleModel s = make_cross_sample(p);
  return project_view(s, 0.0, ObjectGrid{pitch, side});
}

}  // namespace

TEST_CASE("modulus projection") {
  const Problem p = random_problem(32, 8, 9, 10, 12, 1);
  CHECK(max_diff(project_modulus(p.object, p.measured), p.object) < 1e-10);

  const ComplexRaster zero(32, 32);
  const ComplexRaster pz = project_modulus(zero, p.measured);
  const Fft2D fft(32, 32);
  const Raster2D intensity = ifftshift(p.measured.intensity);
  const ComplexRaster spec = fft.forward(pz);
  for (std::size_t i = 0; i < spec.size(); ++i) {
    CHECK(spec[i].real() == doctest::Approx(std::sqrt(intensity[i])).epsilon(1e-9).scale(1.0));
    CHECK(std::abs(spec[i].imag()) < 1e-9);
  }

  std::mt19937_64 rng(2);
  const ComplexRaster x = test::random_field(32, 32, rng);
  const ComplexRaster once = project_modulus(x, p.measured);
  CHECK(max_diff(project_modulus(once, p.measured), once) < 1e-10);
}

TEST_CASE("modulus projection leaves invalid pixels unconstrained") {
  Problem p = random_problem(16, 4, 4, 5, 5, 3);
  p.measured.valid = Mask(16, 16, 0);
  std::mt19937_64 rng(4);
  const ComplexRaster x = test::random_field(16, 16, rng);
  CHECK(max_diff(project_modulus(x, p.measured), x) < 1e-12);
}

TEST_CASE("support projection") {
  std::mt19937_64 rng(5);
  const ComplexRaster x = test::random_field(12, 12, rng);
  CHECK(project_support(x, Mask(12, 12, 1)) == x);
  const ComplexRaster none = project_support(x, Mask(12, 12, 0));
  for (auto v : none.values()) CHECK(v == std::complex<double>{});
  Mask s(12, 12, 0);
  s(3, 4) = s(7, 7) = 1;
  const ComplexRaster once = project_support(x, s);
  CHECK(project_support(once, s) == once);
  CHECK(once(3, 4) == x(3, 4));
  CHECK(once(4, 4) == std::complex<double>{});
}

TEST_CASE("fourier error") {
  const Problem p = random_problem(32, 6, 5, 9, 11, 6);
  CHECK(fourier_error(p.object, p.measured, p.support) < 1e-12);
  CHECK(fourier_error(ComplexRaster(32, 32), p.measured, p.support) == doctest::Approx(1.0));

  Mask wide(32, 32, 0);
  for (int y = 2; y < 18; ++y) {
    for (int x = 2; x < 18; ++x) wide(x, y) = 1;
  }
  std::mt19937_64 rng(7);
  ComplexRaster f(32, 32), g(32, 32);
  const ComplexRaster r = test::random_field(8, 8, rng);
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 8; ++x) {
      f(x + 3, y + 4) = r(x, y);
      g(x + 9, y + 7) = r(x, y);
    }
  }
  CHECK(fourier_error(f, p.measured, wide) ==
        doctest::Approx(fourier_error(g, p.measured, wide)).epsilon(1e-12));
}

TEST_CASE("support from the autocorrelation") {
  const Problem p = random_problem(64, 10, 20, 12, 8, 8);
  const Mask s = support_from_autocorrelation(p.measured, 1e-6, 0);
  const Components c = label_components(s, 4);
  REQUIRE(c.count() == 1);
  CHECK(c.max_x[0] - c.min_x[0] + 1 == 12);
  CHECK(c.max_y[0] - c.min_y[0] + 1 == 8);
  const Mask grown = support_from_autocorrelation(p.measured, 1e-6, 2);
  CHECK(count_nonzero(grown) == 16u * 12u);
}

TEST_CASE("retrieval configuration invariants") {
  RetrievalConfig c;
  CHECK_NOTHROW(c.validate(64, 64));
  c.iterations = 0;
  CHECK_THROWS_AS(c.validate(64, 64), std::invalid_argument);
  c = RetrievalConfig{};
  c.beta = 0.0;
  CHECK_THROWS_AS(c.validate(64, 64), std::invalid_argument);
  c = RetrievalConfig{};
  c.keep_best = c.runs + 1;
  CHECK_THROWS_AS(c.validate(64, 64), std::invalid_argument);
  c = RetrievalConfig{};
  c.support = Mask(64, 64, 0);
  CHECK_THROWS_AS(c.validate(64, 64), std::invalid_argument);
  c.support = Mask(64, 64, 1);
  CHECK_THROWS_AS(c.validate(64, 64), std::invalid_argument);
}

TEST_CASE("run_retrieval iterates the difference map step") {
  const Problem p = random_problem(32, 10, 10, 8, 9, 9);
  std::mt19937_64 rng(10);
  ComplexRaster x = project_support(test::random_field(32, 32, rng), p.support);
  RetrievalConfig cfg;
  cfg.iterations = 6;
  cfg.beta = 0.8;
  cfg.runs = cfg.keep_best = 1;
  cfg.support = p.support;
  cfg.initial = x;
  const RetrievalResult r = run_retrieval(p.measured, cfg);
  REQUIRE(r.error_history.size() == 6u);
  std::vector<ComplexRaster> estimates;
  for (int it = 0; it < 6; ++it) {
    const ComplexRaster estimate = project_support(project_modulus(x, p.measured), p.support);
    CHECK(r.error_history[it] ==
          doctest::Approx(fourier_error(estimate, p.measured, p.support)).epsilon(1e-9));
    estimates.push_back(estimate);
    x = difference_map_step(x, p.measured, p.support, cfg.beta);
  }
  CHECK(max_diff(r.view.field, estimates[r.best_iteration]) < 1e-9);
  CHECK(r.final_error == *std::min_element(r.error_history.begin(), r.error_history.end()));
}

TEST_CASE("difference map fixed point") {
  const Problem p = random_problem(32, 5, 6, 7, 7, 11);
  const ComplexRaster next = difference_map_step(p.object, p.measured, p.support, 0.9);
  CHECK(max_diff(next, p.object) < 1e-10);
}

// Coarse 128 pixel grid; the full-size check lives in the acceptance suite.
TEST_CASE("retrieval of a noiseless binary cross") {
  const ComplexView truth = small_cross(0.18e-6, 128);
  const MeasuredPattern m = MeasuredPattern::all_valid(diffract(truth));
  RetrievalConfig cfg;
  cfg.iterations = 200;
  cfg.beta = 0.9;
  cfg.runs = cfg.keep_best = 6;
  cfg.seed = 3;
  cfg.pixel_pitch = 0.18e-6;
  const auto results = run_retrievals(m, cfg);
  REQUIRE(results.size() == 6u);
  const auto best = std::min_element(results.begin(), results.end(), [](const auto& a, const auto& b) {
    return a.final_error < b.final_error;
  });
  // On this grid the lowest error does not always mark the closest run, so
  // the single-run bound sits below the averaged one.
  CHECK(test::aligned_correlation(truth, best->view) >= 0.85);
  CHECK(test::aligned_correlation(truth, align_and_average(results, cfg.keep_best)) >= 0.9);

  for (const auto& r : results) {
    CHECK(r.error_history.size() == 200u);
    CHECK(r.final_error >= 0.0);
    double running = r.error_history.front();
    bool monotone = true;
    for (double e : r.error_history) {
      REQUIRE(std::isfinite(e));
      const double next = std::min(running, e);
      monotone = monotone && next <= running;
      running = next;
    }
    CHECK(monotone);
    CHECK(running == r.final_error);
  }

  RetrievalConfig one = cfg;
  one.runs = one.keep_best = 1;
  one.seed = cfg.seed + 2;
  const RetrievalResult again = run_retrieval(m, one);
  CHECK(again.view.field == results[2].view.field);
  CHECK(again.error_history == results[2].error_history);
}

TEST_CASE("averaging aligned runs") {
  const ComplexView truth = small_cross(0.18e-6, 128);
  auto result = [&](const ComplexRaster& f, double err) {
    RetrievalResult r;
    r.view.field = f;
    r.view.pixel_pitch = truth.pixel_pitch;
    r.final_error = err;
    return r;
  };

  SUBCASE("identical inputs") {
    const std::vector<RetrievalResult> rs{result(truth.field, 0.1), result(truth.field, 0.2)};
    CHECK(max_diff(align_and_average(rs, 2).field, truth.field) < 1e-9);
  }
  SUBCASE("integer translations keep the contrast") {
    const std::vector<RetrievalResult> rs{result(truth.field, 0.1),
                                          result(shift_image(truth.field, 3, -2), 0.2),
                                          result(shift_image(truth.field, -5, 4), 0.3)};
    const Raster2D a = align_and_average(rs, 3).amplitude(), t = truth.amplitude();
    const auto [amin, amax] = std::minmax_element(a.values().begin(), a.values().end());
    const auto [tmin, tmax] = std::minmax_element(t.values().begin(), t.values().end());
    CHECK(*amax - *amin == doctest::Approx(*tmax - *tmin).epsilon(1e-6));
  }
  SUBCASE("a twin among aligned copies is flipped back") {
    const std::vector<RetrievalResult> rs{result(truth.field, 0.1), result(truth.field, 0.2),
                                          result(conjugate_flip(truth.field), 0.3)};
    ComplexView naive;
    naive.field = truth.field;
    for (std::size_t i = 0; i < naive.field.size(); ++i) {
      naive.field[i] = (2.0 * truth.field[i] + rs[2].view.field[i]) / 3.0;
    }
    const ComplexView avg = align_and_average(rs, 3);
    const double after = correlation(avg.amplitude(), truth.amplitude());
    CHECK(after >= correlation(naive.amplitude(), truth.amplitude()));
    CHECK(after > 0.999);
  }
  SUBCASE("divergent runs are dropped") {
    ComplexRaster junk(128, 128, {5.0, 0.0});
    const std::vector<RetrievalResult> rs{result(truth.field, 0.1), result(truth.field, 0.11),
                                          result(junk, 0.9)};
    CHECK(max_diff(align_and_average(rs, 3).field, truth.field) < 1e-9);
  }
}

TEST_CASE("resolution estimate") {
  const int n = 64;
  const double pitch = 50e-9;
  Raster2D step(n, n, 0.0);
  for (int y = 0; y < n; ++y) {
    for (int x = n / 2; x < n; ++x) step(x, y) = 1.0;
  }
  const EdgeHint hint{n / 2, n / 2, true};
  auto view_of = [&](const Raster2D& amp) {
    return ComplexView::from_polar(amp, Raster2D(n, n, 0.0), pitch);
  };
  CHECK(estimate_resolution(view_of(step), hint) <= 2.0 * pitch);

  const double sigma = 3.0;
  const Raster2D blurred = gaussian_filter(step, sigma);
  const double res = estimate_resolution(view_of(blurred), hint);
  CHECK(res == doctest::Approx(2.5631 * sigma * pitch).epsilon(0.03));

  Raster2D scaled = blurred;
  for (auto& v : scaled.values()) v *= 7.5;
  CHECK(estimate_resolution(view_of(scaled), hint) == doctest::Approx(res).epsilon(1e-12));
  CHECK(estimate_resolution(view_of(blurred)) == doctest::Approx(res).epsilon(1e-9));
}
