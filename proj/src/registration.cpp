#include "xstereo/registration.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include <Eigen/Core>

#include "xstereo/fft.hpp"

namespace xstereo {
namespace {

using CMat = Eigen::Matrix<std::complex<double>, Eigen::Dynamic, Eigen::Dynamic>;
constexpr std::complex<double> kI{0.0, 1.0};

// Signed frequency of FFT index k on an axis of length n.
int frequency(int k, int n) { return k < (n + 1) / 2 ? k : k - n; }

// Upsampled inverse DFT of `spectrum` on an (out_rows x out_cols) patch with
// sample spacing 1/upsample, starting at (row_offset, col_offset) in
// upsampled units.
CMat upsampled_dft(const ComplexRaster& spectrum, int out_rows, int out_cols, int upsample,
                   double row_offset, double col_offset) {
  const int nr = spectrum.height(), nc = spectrum.width();
  CMat kern_c(nc, out_cols);
  for (int k = 0; k < nc; ++k) {
    for (int j = 0; j < out_cols; ++j) {
      kern_c(k, j) = std::exp(kI * (2.0 * std::numbers::pi / (nc * upsample)) *
                              static_cast<double>(frequency(k, nc)) * (j - col_offset));
    }
  }
  CMat kern_r(out_rows, nr);
  for (int i = 0; i < out_rows; ++i) {
    for (int k = 0; k < nr; ++k) {
      kern_r(i, k) = std::exp(kI * (2.0 * std::numbers::pi / (nr * upsample)) * (i - row_offset) *
                              static_cast<double>(frequency(k, nr)));
    }
  }
  CMat in(nr, nc);
  for (int y = 0; y < nr; ++y) {
    for (int x = 0; x < nc; ++x) in(y, x) = spectrum(x, y);
  }
  return kern_r * in * kern_c;
}

double norm2(const ComplexRaster& f) {
  double s = 0.0;
  for (const auto& v : f.values()) s += std::norm(v);
  return std::sqrt(s);
}

}  // namespace

Registration register_subpixel(const ComplexRaster& reference, const ComplexRaster& moving,
                               int upsample) {
  require_same_shape(reference, moving, "register_subpixel");
  if (upsample < 1) throw std::invalid_argument("register_subpixel: upsample must be >= 1");
  const int w = reference.width(), h = reference.height();
  const Fft2D fft(w, h);
  const ComplexRaster f_ref = fft.forward(reference);
  const ComplexRaster f_mov = fft.forward(moving);
  ComplexRaster product(w, h);
  for (std::size_t i = 0; i < product.size(); ++i) product[i] = f_ref[i] * std::conj(f_mov[i]);
  const ComplexRaster cc = fft.inverse(product);

  std::size_t best = 0;
  for (std::size_t i = 1; i < cc.size(); ++i) {
    if (std::abs(cc[i]) > std::abs(cc[best])) best = i;
  }
  double row_shift = frequency(static_cast<int>(best / w), h);
  double col_shift = frequency(static_cast<int>(best % w), w);
  std::complex<double> peak = cc[best];

  if (upsample > 1) {
    const int patch = static_cast<int>(std::ceil(upsample * 1.5));
    const double center = std::floor(patch / 2.0);
    // Cross-correlation resampled on a 1/upsample lattice around the peak.
    const CMat up = upsampled_dft(product, patch, patch, upsample,
                                  center - row_shift * upsample, center - col_shift * upsample);
    int br = 0, bc = 0;
    for (int i = 0; i < patch; ++i) {
      for (int j = 0; j < patch; ++j) {
        if (std::abs(up(i, j)) > std::abs(up(br, bc))) {
          br = i;
          bc = j;
        }
      }
    }
    row_shift += (br - center) / upsample;
    col_shift += (bc - center) / upsample;
    peak = up(br, bc) / (static_cast<double>(w) * h);
  }

  Registration r;
  r.dx = col_shift;
  r.dy = row_shift;
  const double denom = norm2(reference) * norm2(moving);
  r.peak = denom > 0.0 ? std::abs(peak) / denom : 0.0;
  r.phase = std::abs(peak) > 0.0 ? peak / std::abs(peak) : std::complex<double>{1.0, 0.0};
  return r;
}

ComplexRaster shift_image(const ComplexRaster& in, double dx, double dy) {
  const int w = in.width(), h = in.height();
  if (dx == std::round(dx) && dy == std::round(dy)) {
    ComplexRaster out(w, h);
    const int ix = static_cast<int>(dx), iy = static_cast<int>(dy);
    for (int y = 0; y < h; ++y) {
      const int ty = ((y + iy) % h + h) % h;
      for (int x = 0; x < w; ++x) out(((x + ix) % w + w) % w, ty) = in(x, y);
    }
    out.pixel_pitch = in.pixel_pitch;
    return out;
  }
  const Fft2D fft(w, h);
  ComplexRaster spec = fft.forward(in);
  for (int y = 0; y < h; ++y) {
    const double fy = static_cast<double>(frequency(y, h)) / h;
    for (int x = 0; x < w; ++x) {
      const double fx = static_cast<double>(frequency(x, w)) / w;
      spec(x, y) *= std::exp(-kI * 2.0 * std::numbers::pi * (fx * dx + fy * dy));
    }
  }
  ComplexRaster out = fft.inverse(spec);
  out.pixel_pitch = in.pixel_pitch;
  return out;
}

ComplexRaster conjugate_flip(const ComplexRaster& in) {
  const int w = in.width(), h = in.height();
  ComplexRaster out(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) out((w - x) % w, (h - y) % h) = std::conj(in(x, y));
  }
  out.pixel_pitch = in.pixel_pitch;
  return out;
}

Raster2D translate(const Raster2D& in, int dx, int dy) {
  Raster2D out(in.width(), in.height());
  out.pixel_pitch = in.pixel_pitch;
  for (int y = 0; y < in.height(); ++y) {
    for (int x = 0; x < in.width(); ++x) {
      if (out.contains(x + dx, y + dy)) out(x + dx, y + dy) = in(x, y);
    }
  }
  return out;
}

}  // namespace xstereo
