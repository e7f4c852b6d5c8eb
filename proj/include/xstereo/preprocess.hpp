#pragma once

#include <array>
#include <cstddef>

#include "xstereo/forward_sim.hpp"
#include "xstereo/grid.hpp"
#include "xstereo/phase_retrieval.hpp"
#include "xstereo/raster.hpp"

namespace xstereo {

struct PreprocConfig {
  int resize_factor = 4;
  double smooth_sigma = 1.9;
  double threshold_left = 0.40;
  double threshold_right = 0.25;
  /// Minimum component size at the original sampling; scaled by
  /// resize_factor^2 after upsampling.
  int min_region = 400;
  double stitch_sigma = 2.0;

  void validate() const;
};

struct StitchedPattern {
  Raster2D intensity;
  /// Pixels saturated in both exposures; filled from the short frame.
  Mask saturated;
  std::size_t both_saturated = 0;
};

/// Combines a short and a long exposure into one pattern in photons per unit
/// exposure. The long frame is used where unsaturated; the blend weight is
/// the unsaturated mask times its Gaussian-smoothed copy, so it falls to zero
/// before the saturated core.
StitchedPattern stitch_hdr(const DiffractionFrame& short_frame, const DiffractionFrame& long_frame,
                           const PreprocConfig& cfg);

struct PixelCoord {
  int x = 0;
  int y = 0;
};

/// Cuts two (2 radius)^2 frames centered on the two pattern centers. Pixels
/// covered by the other pattern's (2 radius)^2 footprint, or flagged in
/// `invalid`, are marked invalid. Throws when the footprints overlap by more
/// than `max_overlap` of their area or a crop leaves the composite.
std::array<MeasuredPattern, 2> isolate_patterns(const Raster2D& composite,
                                                const std::array<PixelCoord, 2>& centers,
                                                int radius, double max_overlap = 0.2,
                                                const Mask* invalid = nullptr);

/// Amplitude normalized by its 99.5th percentile, bicubic upsampling,
/// Gaussian smoothing, thresholding and removal of 8-connected components
/// smaller than min_region * resize_factor^2 pixels.
///
/// With a partner image (the other binarized view at the same sampling) a
/// small component survives when the partner has foreground within
/// `partner_search` columns of its bounding box.
Mask binarize_view(const ComplexView& v, double threshold, const PreprocConfig& cfg,
                   const Mask* partner = nullptr, int partner_search = 0);

/// Removes 8-connected components smaller than `min_pixels`, keeping those
/// with a partner correspondence as in binarize_view.
Mask despeckle(const Mask& in, std::size_t min_pixels, const Mask* partner = nullptr,
               int partner_search = 0);

/// |horizontal Sobel| normalized to [0, 1] by its maximum.
Raster2D gradient_view(const Raster2D& img);

}  // namespace xstereo
