#pragma once

#include <complex>

#include "xstereo/grid.hpp"

namespace xstereo {

/// Result of registering a moving image onto a reference. Applying
/// `shift_image(moving, dx, dy)` and multiplying by `phase` superposes the
/// moving image on the reference.
struct Registration {
  double dx = 0.0;
  double dy = 0.0;
  /// Unit-modulus global phase factor.
  std::complex<double> phase{1.0, 0.0};
  /// Normalized cross-correlation peak |<ref, moved>| / (|ref| |moving|).
  double peak = 0.0;
};

/// Subpixel registration by cross-correlation refined with a matrix-multiply
/// upsampled DFT around the integer peak; accuracy 1/upsample pixel.
Registration register_subpixel(const ComplexRaster& reference, const ComplexRaster& moving,
                               int upsample = 10);

/// Circular Fourier-domain translation: content at p moves to p + (dx, dy).
ComplexRaster shift_image(const ComplexRaster& in, double dx, double dy);

/// Twin image conj(f(-r)) with index reflection about the origin.
ComplexRaster conjugate_flip(const ComplexRaster& in);

/// Integer translation with zero fill (non-circular).
Raster2D translate(const Raster2D& in, int dx, int dy);

}  // namespace xstereo
