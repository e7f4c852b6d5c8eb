#include "xstereo/forward_sim.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "xstereo/fft.hpp"
#include "xstereo/imaging.hpp"

namespace xstereo {
namespace {

struct Rect {
  double x0, x1, y0, y1;
  bool contains(double x, double y) const { return x >= x0 && x < x1 && y >= y0 && y < y1; }
};

// Bars of the cross, grown (positive) or shrunk (negative) by `grow`.
std::pair<Rect, Rect> cross_bars(const CrossSampleParams& p, double grow) {
  const double bar_y = (p.bar_position - 0.5) * p.height;
  Rect vertical{-0.5 * p.arm_width - grow, 0.5 * p.arm_width + grow,
                -0.5 * p.height - grow, 0.5 * p.height + grow};
  Rect horizontal{-0.5 * p.width - grow, 0.5 * p.width + grow,
                  bar_y - 0.5 * p.arm_width - grow, bar_y + 0.5 * p.arm_width + grow};
  return {vertical, horizontal};
}

Raster2D to_raster(const Mask& m) {
  Raster2D r(m.width(), m.height());
  for (std::size_t i = 0; i < m.size(); ++i) r[i] = m[i] ? 1.0 : 0.0;
  return r;
}

// Bounding box (sample pixels) of mask pixels that touch a pixel of the
// other value; empty structures report an inverted box.
struct Box {
  int x0 = std::numeric_limits<int>::max(), x1 = std::numeric_limits<int>::min();
  int y0 = std::numeric_limits<int>::max(), y1 = std::numeric_limits<int>::min();
  bool valid() const { return x0 <= x1 && y0 <= y1; }
};

Box transition_box(const Mask& m) {
  Box b;
  for (int y = 0; y < m.height(); ++y) {
    for (int x = 0; x < m.width(); ++x) {
      const auto v = m(x, y);
      const bool edge = (x + 1 < m.width() && m(x + 1, y) != v) ||
                        (y + 1 < m.height() && m(x, y + 1) != v);
      if (!edge) continue;
      b.x0 = std::min(b.x0, x);
      b.x1 = std::max(b.x1, x + 1);
      b.y0 = std::min(b.y0, y);
      b.y1 = std::max(b.y1, y + 1);
    }
  }
  return b;
}

double sample_coordinate(double meters, const SampleModel& s, int side) {
  return meters / s.lateral_pitch + 0.5 * side;
}

}  // namespace

void SampleModel::validate() const {
  if (structures.empty()) throw std::invalid_argument("SampleModel: no structures");
  if (!(lateral_pitch > 0.0)) throw std::invalid_argument("SampleModel: lateral_pitch <= 0");
  for (const auto& st : structures) {
    if (!std::isfinite(st.depth)) throw std::invalid_argument("SampleModel: non-finite depth");
    if (st.transmission_amplitude < 0.0 || st.transmission_amplitude > 1.0) {
      throw std::invalid_argument("SampleModel: transmission amplitude outside [0, 1]");
    }
    if (!st.mask.same_shape(structures.front().mask)) {
      throw std::invalid_argument("SampleModel: structure masks differ in shape");
    }
  }
}

SampleModel make_cross_sample(const CrossSampleParams& p) {
  if (p.side <= 0 || !(p.pitch > 0.0)) {
    throw std::invalid_argument("make_cross_sample: invalid grid");
  }
  if (p.window_notch < 0.0 || p.window_notch >= p.window) {
    throw std::invalid_argument("make_cross_sample: window_notch must lie in [0, window)");
  }
  if (!(p.gap > 0.0) || p.arm_width <= 2.0 * p.gap) {
    throw std::invalid_argument("make_cross_sample: gap must be positive and < arm_width / 2");
  }
  const double extent = p.side * p.pitch;
  const double needed = p.phase_variant ? std::max({p.window, p.width, p.height})
                                        : std::max(p.width, p.height);
  if (needed > extent) throw std::invalid_argument("make_cross_sample: cross larger than grid");

  const auto [outer_v, outer_h] = cross_bars(p, 0.0);
  const auto [inner_v, inner_h] = cross_bars(p, -p.gap);
  Mask membrane(p.side, p.side), lid(p.side, p.side), frame(p.side, p.side);
  for (int j = 0; j < p.side; ++j) {
    const double y = (j - 0.5 * p.side) * p.pitch;
    for (int i = 0; i < p.side; ++i) {
      const double x = (i - 0.5 * p.side) * p.pitch;
      const bool in_cut = outer_v.contains(x, y) || outer_h.contains(x, y);
      const bool in_lid = inner_v.contains(x, y) || inner_h.contains(x, y);
      const bool in_window = std::abs(x) < 0.5 * p.window && std::abs(y) < 0.5 * p.window &&
                             x + y < p.window - p.window_notch;
      lid(i, j) = in_lid;
      if (p.phase_variant) {
        membrane(i, j) = in_window && !in_cut;
        frame(i, j) = !in_window;
      } else {
        membrane(i, j) = !in_cut;
      }
    }
  }
  SampleModel s;
  s.lateral_pitch = p.pitch;
  if (p.phase_variant) {
    s.structures.push_back({"membrane", std::move(membrane), 0.0, p.membrane_amplitude,
                            p.membrane_phase});
    s.structures.push_back({"lid", std::move(lid), p.lid_offset, p.lid_amplitude, p.lid_phase});
    s.structures.push_back({"frame", std::move(frame), 0.0, 0.0, 0.0});
  } else {
    s.structures.push_back({"membrane", std::move(membrane), 0.0, 0.0, 0.0});
    s.structures.push_back({"lid", std::move(lid), p.lid_offset, 0.0, 0.0});
  }
  return s;
}

namespace {

void check_projection(const SampleModel& s, double theta, const ObjectGrid& grid) {
  if (!(std::abs(theta) < std::numbers::pi / 4.0)) {
    throw std::invalid_argument("project_view: |theta| must be below 45 degrees");
  }
  grid.validate();
  const double lo = grid.coordinate(0.0), hi = grid.coordinate(grid.side - 1.0);
  for (const auto& st : s.structures) {
    const Box b = transition_box(st.mask);
    if (!b.valid()) continue;
    const int side = st.mask.width();
    const double shift = projection_shift(st.depth, theta);
    const double x0 = (b.x0 - 0.5 * side) * s.lateral_pitch + shift;
    const double x1 = (b.x1 - 0.5 * side) * s.lateral_pitch + shift;
    const double y0 = (b.y0 - 0.5 * st.mask.height()) * s.lateral_pitch;
    const double y1 = (b.y1 - 0.5 * st.mask.height()) * s.lateral_pitch;
    if (x0 < lo || x1 > hi || y0 < lo || y1 > hi) {
      throw std::invalid_argument("project_view: projection of structure '" + st.name +
                                  "' exceeds grid bounds");
    }
  }
}

}  // namespace

ComplexView project_view(const SampleModel& s, double theta, const ObjectGrid& grid) {
  s.validate();
  check_projection(s, theta, grid);
  ComplexView v;
  v.pixel_pitch = grid.pixel_pitch;
  v.field = ComplexRaster(grid.side, grid.side, {1.0, 0.0});
  v.field.pixel_pitch = grid.pixel_pitch;
  for (const auto& st : s.structures) {
    const Raster2D m = to_raster(st.mask);
    const std::complex<double> t = std::polar(st.transmission_amplitude, st.transmission_phase);
    const double shift = projection_shift(st.depth, theta);
    for (int j = 0; j < grid.side; ++j) {
      const double sy = sample_coordinate(grid.coordinate(j), s, m.height());
      for (int i = 0; i < grid.side; ++i) {
        const double sx = sample_coordinate(grid.coordinate(i) - shift, s, m.width());
        const double cover = sample_bilinear(m, sx, sy, true);
        v.field(i, j) *= 1.0 + cover * (t - 1.0);
      }
    }
  }
  return v;
}

Mask project_footprint(const SampleModel& s, std::size_t structure, double theta,
                       const ObjectGrid& grid) {
  const auto& st = s.structures.at(structure);
  const Raster2D m = to_raster(st.mask);
  const double shift = projection_shift(st.depth, theta);
  Mask out(grid.side, grid.side);
  out.pixel_pitch = grid.pixel_pitch;
  for (int j = 0; j < grid.side; ++j) {
    const double sy = sample_coordinate(grid.coordinate(j), s, m.height());
    for (int i = 0; i < grid.side; ++i) {
      const double sx = sample_coordinate(grid.coordinate(i) - shift, s, m.width());
      out(i, j) = sample_bilinear(m, sx, sy, true) >= 0.5;
    }
  }
  return out;
}

ComplexView misalign_view(const ComplexView& v, double rotation, double dy_pixels) {
  Raster2D re(v.width(), v.height()), im(v.width(), v.height());
  for (std::size_t i = 0; i < v.field.size(); ++i) {
    re[i] = v.field[i].real();
    im[i] = v.field[i].imag();
  }
  const double cx = 0.5 * v.width(), cy = 0.5 * v.height();
  const double c = std::cos(rotation), sn = std::sin(rotation);
  ComplexView out = v;
  for (int y = 0; y < v.height(); ++y) {
    for (int x = 0; x < v.width(); ++x) {
      // Inverse map: output pixel -> source pixel.
      const double ox = x - cx, oy = y - dy_pixels - cy;
      const double sx = c * ox + sn * oy + cx;
      const double sy = -sn * ox + c * oy + cy;
      out.field(x, y) = {sample_bilinear(re, sx, sy, true), sample_bilinear(im, sx, sy, true)};
    }
  }
  return out;
}

Raster2D diffract(const ComplexView& v) {
  const int w = v.width(), h = v.height();
  int x0 = w, x1 = -1, y0 = h, y1 = -1;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (v.field(x, y) == std::complex<double>{}) continue;
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
    }
  }
  if (x1 >= 0 && (2 * (x1 - x0 + 1) > w || 2 * (y1 - y0 + 1) > h)) {
    throw std::invalid_argument(
        "diffract: insufficient oversampling (exit wave spans more than half the frame)");
  }
  const Fft2D fft(w, h);
  const ComplexRaster spectrum = fft.forward(v.field);
  Raster2D intensity(w, h);
  for (std::size_t i = 0; i < spectrum.size(); ++i) intensity[i] = std::norm(spectrum[i]);
  return fftshift(intensity);
}

void ExposureSpec::validate() const {
  if (!(photons_total > 0.0)) throw std::invalid_argument("ExposureSpec: photons_total <= 0");
  if (!(exposure_scale > 0.0)) throw std::invalid_argument("ExposureSpec: exposure_scale <= 0");
  if (!(saturation_level > 0.0)) throw std::invalid_argument("ExposureSpec: saturation <= 0");
}

DiffractionFrame simulate_exposure(const Raster2D& ideal, const ExposureSpec& e) {
  e.validate();
  double total = 0.0;
  for (double v : ideal.values()) {
    if (!(v >= 0.0)) throw std::invalid_argument("simulate_exposure: negative ideal intensity");
    total += v;
  }
  DiffractionFrame f;
  f.counts = Raster2D(ideal.width(), ideal.height());
  f.saturated = Mask(ideal.width(), ideal.height());
  f.exposure_scale = e.exposure_scale;
  if (total == 0.0) return f;
  const double scale = e.photons_total * e.exposure_scale / total;
  std::mt19937_64 rng(e.seed);
  for (std::size_t i = 0; i < ideal.size(); ++i) {
    const double mean = ideal[i] * scale;
    double n = 0.0;
    if (mean > 0.0) {
      std::poisson_distribution<long long> dist(mean);
      n = static_cast<double>(dist(rng));
    }
    if (n >= e.saturation_level) {
      n = e.saturation_level;
      f.saturated[i] = 1;
    }
    f.counts[i] = n;
  }
  return f;
}

DualLayout dual_layout(int frame_side, int separation_px) {
  return {frame_side / 2, separation_px + frame_side / 2, frame_side / 2};
}

int default_separation(int frame_side) {
  return frame_side - std::max(1, frame_side / 20);
}

Raster2D compose_dual_frame(const Raster2D& left, const Raster2D& right, int separation_px) {
  require_same_shape(left, right, "compose_dual_frame");
  if (separation_px < 0) {
    throw std::invalid_argument("compose_dual_frame: frames do not fit the composite");
  }
  const int w = left.width(), h = left.height();
  Raster2D out(separation_px + w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      out(x, y) += left(x, y);
      out(x + separation_px, y) += right(x, y);
    }
  }
  return out;
}

DiffractionFrame compose_dual_frame(const DiffractionFrame& left, const DiffractionFrame& right,
                                    int separation_px) {
  if (left.exposure_scale != right.exposure_scale) {
    throw std::invalid_argument("compose_dual_frame: frames have different exposures");
  }
  DiffractionFrame out;
  out.counts = compose_dual_frame(left.counts, right.counts, separation_px);
  out.exposure_scale = left.exposure_scale;
  out.saturated = Mask(out.counts.width(), out.counts.height());
  for (int y = 0; y < left.saturated.height(); ++y) {
    for (int x = 0; x < left.saturated.width(); ++x) {
      if (left.saturated(x, y)) out.saturated(x, y) = 1;
      if (right.saturated(x, y)) out.saturated(x + separation_px, y) = 1;
    }
  }
  return out;
}

}  // namespace xstereo
