#pragma once

#include <numbers>

namespace xstereo {

enum class Side { kLeft, kRight };

constexpr double deg_to_rad(double deg) { return deg * std::numbers::pi / 180.0; }

/// Stereo acquisition geometry. Both beam angles are magnitudes measured from
/// the detector normal; the left beam sits on the positive-x side of the
/// normal and the right beam on the negative-x side.
///
/// Disparity sign convention: positive disparity means the left-view
/// coordinate of a point is larger than its right-view coordinate, i.e.
/// d = x_left - x_right = z * (tan theta1 + tan theta2).
struct StereoGeometry {
  double theta1 = deg_to_rad(9.5);
  double theta2 = deg_to_rad(9.5);
  double wavelength = 24e-9;
  double detector_distance = 26e-3;
  double detector_pixel = 13.5e-6;
  int detector_side = 2048;
  int roi_side = 512;

  /// Throws std::invalid_argument when any invariant is violated.
  void validate() const;

  double tan_sum() const;
  /// Depth quantum for a given lateral sampling.
  double axial_voxel(double lateral_pitch) const;
  double angle(Side side) const { return side == Side::kLeft ? theta1 : theta2; }
};

/// Metric sampling of a square object-plane grid.
struct ObjectGrid {
  double pixel_pitch = 0.0;
  int side = 0;

  void validate() const;
  /// Coordinate (meters) of pixel index i measured from the grid center.
  double coordinate(double i) const { return (i - 0.5 * side) * pixel_pitch; }
};

/// Far-field object-plane sampling: wavelength * distance / (roi * pixel).
double object_pixel_pitch(const StereoGeometry& g);

ObjectGrid object_grid(const StereoGeometry& g);

/// Relative depth of a point from its metric disparity.
double depth_from_disparity(double disparity, const StereoGeometry& g);

/// Inverse of depth_from_disparity.
double disparity_from_depth(double depth, const StereoGeometry& g);

/// Maps a view coordinate at depth z to the object coordinate. The right
/// beam lies on the opposite side of the normal, so its signed angle is
/// -theta2 and the correction becomes x_view + z tan(theta2).
double correct_coordinate(double x_view, double z, double theta, Side side);

/// Lateral shift of a structure at depth z seen by a beam of signed angle.
double projection_shift(double z, double signed_theta);

/// Signed beam angle used by the projection model for each view.
double signed_angle(const StereoGeometry& g, Side side);

}  // namespace xstereo
