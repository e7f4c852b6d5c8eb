#pragma once

#include <span>
#include <vector>

#include "xstereo/grid.hpp"

namespace xstereo {

/// Mirror index into [0, n) with edge duplication (d c b a | a b c d).
int reflect_index(int i, int n);

/// Separable Gaussian blur, kernel radius ceil(4 sigma), reflective borders.
Raster2D gaussian_filter(const Raster2D& in, double sigma);

/// Bicubic (Keys, a = -0.5) upsampling by an integer factor with
/// pixel-center alignment and reflective borders.
Raster2D resize_bicubic(const Raster2D& in, int factor);

/// Signed horizontal Sobel response: columns (-1, 0, 1) weighted (1, 2, 1).
Raster2D sobel_x(const Raster2D& in);
Raster2D sobel_y(const Raster2D& in);

/// Bilinear sample at continuous pixel coordinates (pixel centers at integer
/// positions). Outside the raster the nearest edge value is used when
/// `clamp` is set, otherwise `outside`.
double sample_bilinear(const Raster2D& in, double x, double y, bool clamp, double outside = 0.0);

/// Linear-interpolated percentile (p in [0, 100]) of a value set.
double percentile(std::span<const double> values, double p);

struct Components {
  Grid<int> labels;               // -1 for pixels outside the mask
  std::vector<std::size_t> sizes; // pixel count per label
  std::vector<int> min_x, max_x, min_y, max_y;
  std::size_t count() const { return sizes.size(); }
};

/// Connected components of the nonzero pixels, labelled in raster order.
Components label_components(const Mask& mask, int connectivity);

/// Dilation by a Euclidean disc of the given radius in pixels.
Mask dilate_disc(const Mask& in, double radius);

Mask threshold(const Raster2D& in, double level);

/// Pearson correlation of two equally shaped rasters.
double correlation(const Raster2D& a, const Raster2D& b);

}  // namespace xstereo
