#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "xstereo/geometry.hpp"
#include "xstereo/grid.hpp"
#include "xstereo/raster.hpp"

namespace xstereo {

/// One planar component of a synthetic sample. Inside `mask` the exit wave
/// is multiplied by amplitude * exp(i phase); outside it is left unchanged.
struct Structure {
  std::string name;
  Mask mask;
  double depth = 0.0;
  double transmission_amplitude = 0.0;
  double transmission_phase = 0.0;
};

/// Stacked planar structures sampled on a common lateral raster whose
/// center pixel (side/2) sits at the optical axis.
struct SampleModel {
  std::vector<Structure> structures;
  double lateral_pitch = 0.0;

  void validate() const;
};

/// Cross cut in a membrane with a free-standing inner lid. The horizontal bar
/// sits off-center (bar_position < 0.5) so the sample has no 180-degree
/// rotational symmetry.
struct CrossSampleParams {
  int side = 512;
  double pitch = 90e-9;
  double width = 6.9e-6;
  double height = 6.1e-6;
  double arm_width = 2.0e-6;
  double gap = 0.6e-6;
  double bar_position = 0.35;
  double lid_offset = 300e-9;
  bool phase_variant = false;
  /// Phase variant only: the semi-transparent membrane is held in an opaque
  /// frame with a square window of this size.
  double window = 10e-6;
  /// Phase variant only: leg length of a triangular notch cut from the
  /// window's (+x, +y) corner, which removes the window's point symmetry.
  double window_notch = 3e-6;
  double membrane_amplitude = 0.8;
  double membrane_phase = 1.0;
  double lid_amplitude = 0.7;
  double lid_phase = 2.0;
};

SampleModel make_cross_sample(const CrossSampleParams& p);

/// Tilted parallel projection: each structure is sheared laterally by
/// depth * tan(theta) and the transmissions are multiplied. `theta` is the
/// signed beam angle (see signed_angle()).
ComplexView project_view(const SampleModel& s, double theta, const ObjectGrid& grid);

/// Binary footprint of a structure on the grid as seen at the given angle.
Mask project_footprint(const SampleModel& s, std::size_t structure, double theta,
                       const ObjectGrid& grid);

/// Rotates a view about its center and shifts it vertically, bilinear
/// resampling. Models an imperfectly aligned camera.
ComplexView misalign_view(const ComplexView& v, double rotation, double dy_pixels);

/// Far-field intensity |DFT|^2 with the zero frequency at (N/2, N/2).
/// Requires the nonzero exit wave to span at most half the frame per axis.
Raster2D diffract(const ComplexView& v);

struct ExposureSpec {
  double photons_total = 1e7;
  double exposure_scale = 1.0;
  double saturation_level = std::numeric_limits<double>::infinity();
  std::uint64_t seed = 0;

  void validate() const;
};

struct DiffractionFrame {
  Raster2D counts;
  Mask saturated;
  double exposure_scale = 1.0;
};

/// Scales the ideal pattern to photons_total * exposure_scale expected
/// counts, draws Poisson counts and clips at the saturation level.
DiffractionFrame simulate_exposure(const Raster2D& ideal, const ExposureSpec& e);

/// Places two equally sized frames side by side on one virtual detector,
/// the right one offset by `separation_px` columns, summing where they meet.
Raster2D compose_dual_frame(const Raster2D& left, const Raster2D& right, int separation_px);
DiffractionFrame compose_dual_frame(const DiffractionFrame& left, const DiffractionFrame& right,
                                    int separation_px);

/// Column of the pattern center of each frame within the composite.
struct DualLayout {
  int left_center_x = 0;
  int right_center_x = 0;
  int center_y = 0;
};
DualLayout dual_layout(int frame_side, int separation_px);

/// Default separation for a frame of the given side: the patterns overlap
/// only in their outermost (highest-frequency) 5% band.
int default_separation(int frame_side);

}  // namespace xstereo
