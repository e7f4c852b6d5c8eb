#include "xstereo/raster.hpp"

#include <cmath>
#include <numbers>

namespace xstereo {

double wrap_phase(double phi) {
  constexpr double kPi = std::numbers::pi;
  double w = std::remainder(phi, 2.0 * kPi);
  if (w <= -kPi) w += 2.0 * kPi;
  return w;
}

Raster2D ComplexView::amplitude() const {
  Raster2D out(field.width(), field.height());
  for (std::size_t i = 0; i < field.size(); ++i) out[i] = std::abs(field[i]);
  out.pixel_pitch = pixel_pitch;
  return out;
}

Raster2D ComplexView::phase() const {
  Raster2D out(field.width(), field.height());
  for (std::size_t i = 0; i < field.size(); ++i) {
    out[i] = wrap_phase(std::arg(field[i]));
  }
  out.pixel_pitch = pixel_pitch;
  return out;
}

ComplexView ComplexView::from_polar(const Raster2D& amplitude, const Raster2D& phase,
                                    double pixel_pitch) {
  require_same_shape(amplitude, phase, "ComplexView::from_polar");
  ComplexView v;
  v.pixel_pitch = pixel_pitch;
  v.field = ComplexRaster(amplitude.width(), amplitude.height());
  for (std::size_t i = 0; i < amplitude.size(); ++i) {
    v.field[i] = std::polar(amplitude[i], phase[i]);
  }
  v.field.pixel_pitch = pixel_pitch;
  return v;
}

const char* to_string(PointSource s) {
  switch (s) {
    case PointSource::kLeftMap: return "left-map";
    case PointSource::kRightMap: return "right-map";
    case PointSource::kFrame: return "frame";
    case PointSource::kFittedSurface: return "fitted-surface";
  }
  return "unknown";
}

void PointCloud::append(const PointCloud& other) {
  points.insert(points.end(), other.points.begin(), other.points.end());
  sources.insert(sources.end(), other.sources.begin(), other.sources.end());
  structure.insert(structure.end(), other.structure.begin(), other.structure.end());
}

PointCloud PointCloud::subset(const std::vector<std::size_t>& indices) const {
  PointCloud out;
  out.points.reserve(indices.size());
  for (auto i : indices) out.push_back(points[i], sources[i], structure[i]);
  return out;
}

}  // namespace xstereo
