#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "doctest.h"
#include "test_support.hpp"
#include "xstereo/raster_io.hpp"

using namespace xstereo;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Raster2D float_exact(int w, int h, std::mt19937_64& rng) {
  Raster2D r = test::random_raster(w, h, rng, -1e3, 1e3);
  for (auto& v : r.values()) v = static_cast<float>(v);
  return r;
}

}  // namespace

TEST_CASE("raster round trip is bit exact") {
  test::TempDir dir("raster");
  std::mt19937_64 rng(3);
  for (int i = 0; i < 5; ++i) {
    Raster2D r = float_exact(7 + i, 3 + 2 * i, rng);
    r.pixel_pitch = 90.27e-9 * (i + 1);
    const auto base = dir / ("r" + std::to_string(i));
    write_raster(r, base, {{"note", "x"}});
    HeaderExtras extras;
    const Raster2D back = read_raster(base, &extras);
    CHECK(back == r);
    REQUIRE(back.pixel_pitch);
    CHECK(*back.pixel_pitch == *r.pixel_pitch);
    CHECK(extras.at("note") == "x");
  }
}

TEST_CASE("2x2 raster header records its shape") {
  test::TempDir dir("hdr");
  Raster2D r(2, 2);
  r(0, 0) = 0;
  r(1, 0) = 1;
  r(0, 1) = 2;
  r(1, 1) = 3;
  write_raster(r, dir / "small");
  const std::string hdr = slurp(raster_files(dir / "small").header);
  CHECK(hdr.find("width 2\n") != std::string::npos);
  CHECK(hdr.find("height 2\n") != std::string::npos);
  CHECK(read_raster(dir / "small.hdr") == r);
  CHECK(read_raster(dir / "small.raw") == r);
}

TEST_CASE("payload shorter than the header is a size mismatch") {
  test::TempDir dir("mismatch");
  Raster2D r(4, 4, 1.0);
  write_raster(r, dir / "r");
  std::filesystem::resize_file(raster_files(dir / "r").payload, 4 * 15);
  CHECK_THROWS_WITH_AS(read_raster(dir / "r"), doctest::Contains("size mismatch"), FormatError);
}

TEST_CASE("non-finite values are refused") {
  test::TempDir dir("nan");
  Raster2D r(2, 1, 0.0);
  r[1] = std::nan("");
  CHECK_THROWS_AS(write_raster(r, dir / "r"), FormatError);
}

TEST_CASE("mask and complex view round trips") {
  test::TempDir dir("mask");
  Mask m(5, 4, 0);
  m(1, 2) = 1;
  m(4, 3) = 1;
  write_mask(m, dir / "m");
  CHECK(read_mask(dir / "m") == m);

  std::mt19937_64 rng(8);
  Raster2D amp = float_exact(6, 6, rng), ph(6, 6);
  for (auto& v : amp.values()) v = std::abs(v);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (auto& v : ph.values()) v = static_cast<float>(u(rng));
  const ComplexView v = ComplexView::from_polar(amp, ph, 1e-7);
  write_complex_view(v, dir / "v");
  const ComplexView back = read_complex_view(dir / "v");
  CHECK(back.pixel_pitch == v.pixel_pitch);
  for (std::size_t i = 0; i < amp.size(); ++i) {
    CHECK(std::abs(back.field[i] - v.field[i]) < 1e-6 * (1.0 + std::abs(v.field[i])));
  }
}

TEST_CASE("point cloud files") {
  test::TempDir dir("ply");
  PointCloud one;
  one.push_back({1e-6, -2e-6, 3.5e-7}, PointSource::kRightMap, 1);
  write_pointcloud(one, dir / "one.ply");
  const std::string text = slurp(dir / "one.ply");
  CHECK(text.find("element vertex 1\n") != std::string::npos);

  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1e-5, 1e-5);
  PointCloud c;
  for (int i = 0; i < 100; ++i) {
    c.push_back({u(rng), u(rng), u(rng)}, static_cast<PointSource>(i % 4), i % 3 - 1);
  }
  write_pointcloud(c, dir / "c.ply");
  const PointCloud back = read_pointcloud(dir / "c.ply");
  REQUIRE(back.size() == c.size());
  for (std::size_t i = 0; i < c.size(); ++i) {
    for (int a = 0; a < 3; ++a) {
      CHECK(back.points[i][a] == doctest::Approx(c.points[i][a]).epsilon(1e-6));
    }
    CHECK(back.sources[i] == c.sources[i]);
    CHECK(back.structure[i] == c.structure[i]);
  }

  CHECK_THROWS_AS(write_pointcloud(PointCloud{}, dir / "empty.ply"), FormatError);
  CHECK_FALSE(std::filesystem::exists(dir / "empty.ply"));
}

TEST_CASE("mesh of a fully defined 3x2 lattice") {
  test::TempDir dir("obj");
  HeightField h;
  h.z = Raster2D(3, 2, 1e-7);
  h.defined = Mask(3, 2, 1);
  h.pitch = 1e-7;
  write_mesh(h, dir / "s.obj");
  std::istringstream in(slurp(dir / "s.obj"));
  int vertices = 0, faces = 0;
  for (std::string line; std::getline(in, line);) {
    vertices += line.starts_with("v ");
    faces += line.starts_with("f ");
  }
  CHECK(vertices == 6);
  CHECK(faces == 4);

  h.defined = Mask(3, 2, 0);
  CHECK_THROWS_AS(write_mesh(h, dir / "none.obj"), FormatError);
}

TEST_CASE("format_double round trips") {
  for (double v : {0.1, 1.0 / 3.0, 90.27777777777778e-9, -1e300}) {
    CHECK(std::stod(format_double(v)) == v);
  }
}
