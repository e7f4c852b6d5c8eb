#pragma once

#include <memory>

#include "xstereo/grid.hpp"

namespace xstereo {

/// 2D complex DFT of a fixed shape backed by FFTW.
///
/// Plans are created with FFTW_ESTIMATE so the chosen algorithm, and hence
/// every output bit, does not depend on timing measurements. Planning is
/// serialized internally; a single instance must not be shared between
/// threads while executing.
class Fft2D {
 public:
  Fft2D(int width, int height);
  ~Fft2D();
  Fft2D(const Fft2D&) = delete;
  Fft2D& operator=(const Fft2D&) = delete;
  Fft2D(Fft2D&&) noexcept;
  Fft2D& operator=(Fft2D&&) noexcept;

  int width() const;
  int height() const;

  /// Unnormalized forward transform. `in` and `out` may alias.
  void forward(const ComplexRaster& in, ComplexRaster& out) const;
  /// Inverse transform scaled by 1/(width*height). `in` and `out` may alias.
  void inverse(const ComplexRaster& in, ComplexRaster& out) const;

  ComplexRaster forward(const ComplexRaster& in) const;
  ComplexRaster inverse(const ComplexRaster& in) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// 2D DFT for fields that vanish outside the column band [col0, col1]. The
/// forward transform skips the empty columns; the inverse only produces the
/// band (columns outside it are left unspecified). Same threading rules as
/// Fft2D.
class BandFft2D {
 public:
  BandFft2D(int width, int height, int col0, int col1);
  ~BandFft2D();
  BandFft2D(const BandFft2D&) = delete;
  BandFft2D& operator=(const BandFft2D&) = delete;

  /// `in` must be zero outside the band; `in` and `out` must not alias.
  void forward(const ComplexRaster& in, ComplexRaster& out) const;
  /// Scaled by 1/(width*height); `in` and `out` must not alias.
  void inverse(const ComplexRaster& in, ComplexRaster& out) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Moves the zero-frequency sample from index 0 to index n/2 on both axes.
template <typename T>
Grid<T> fftshift(const Grid<T>& in) {
  Grid<T> out(in.width(), in.height());
  const int w = in.width(), h = in.height();
  for (int y = 0; y < h; ++y) {
    const int ys = (y + h / 2) % h;
    for (int x = 0; x < w; ++x) out((x + w / 2) % w, ys) = in(x, y);
  }
  out.pixel_pitch = in.pixel_pitch;
  return out;
}

/// Inverse of fftshift.
template <typename T>
Grid<T> ifftshift(const Grid<T>& in) {
  Grid<T> out(in.width(), in.height());
  const int w = in.width(), h = in.height();
  for (int y = 0; y < h; ++y) {
    const int ys = (y + h / 2) % h;
    for (int x = 0; x < w; ++x) out(x, y) = in((x + w / 2) % w, ys);
  }
  out.pixel_pitch = in.pixel_pitch;
  return out;
}

}  // namespace xstereo
