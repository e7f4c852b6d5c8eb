#include "xstereo/geometry.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace xstereo {

void StereoGeometry::validate() const {
  const double sum = theta1 + theta2;
  if (!(sum > 0.0) || !(sum < std::numbers::pi / 2.0)) {
    throw std::invalid_argument("StereoGeometry: theta1 + theta2 must lie in (0, pi/2), got " +
                                std::to_string(sum));
  }
  if (!(wavelength > 0.0) || !(detector_distance > 0.0) || !(detector_pixel > 0.0)) {
    throw std::invalid_argument(
        "StereoGeometry: wavelength, detector_distance and detector_pixel must be positive");
  }
  if (detector_side <= 0 || roi_side <= 0) {
    throw std::invalid_argument("StereoGeometry: detector_side and roi_side must be positive");
  }
  if (roi_side > detector_side) {
    throw std::invalid_argument("StereoGeometry: roi_side exceeds detector_side");
  }
}

double StereoGeometry::tan_sum() const { return std::tan(theta1) + std::tan(theta2); }

double StereoGeometry::axial_voxel(double lateral_pitch) const {
  return lateral_pitch / tan_sum();
}

void ObjectGrid::validate() const {
  if (!(pixel_pitch > 0.0) || side <= 0) {
    throw std::invalid_argument("ObjectGrid: pixel_pitch and side must be positive");
  }
}

double object_pixel_pitch(const StereoGeometry& g) {
  g.validate();
  return g.wavelength * g.detector_distance / (g.roi_side * g.detector_pixel);
}

ObjectGrid object_grid(const StereoGeometry& g) {
  return ObjectGrid{object_pixel_pitch(g), g.roi_side};
}

double depth_from_disparity(double disparity, const StereoGeometry& g) {
  const double t = g.tan_sum();
  if (g.theta1 + g.theta2 == 0.0 || t == 0.0) {
    throw std::invalid_argument("depth_from_disparity: degenerate geometry (theta1 + theta2 = 0)");
  }
  return disparity / t;
}

double disparity_from_depth(double depth, const StereoGeometry& g) {
  return depth * g.tan_sum();
}

double correct_coordinate(double x_view, double z, double theta, Side side) {
  return side == Side::kLeft ? x_view - z * std::tan(theta) : x_view + z * std::tan(theta);
}

double projection_shift(double z, double signed_theta) { return z * std::tan(signed_theta); }

double signed_angle(const StereoGeometry& g, Side side) {
  return side == Side::kLeft ? g.theta1 : -g.theta2;
}

}  // namespace xstereo
