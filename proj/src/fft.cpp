#include "xstereo/fft.hpp"

#include <fftw3.h>

#include <algorithm>
#include <mutex>
#include <stdexcept>
#include <vector>

namespace xstereo {
namespace {

std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

fftw_complex* as_fftw(std::complex<double>* p) { return reinterpret_cast<fftw_complex*>(p); }

}  // namespace

struct Fft2D::Impl {
  int width = 0;
  int height = 0;
  fftw_plan forward = nullptr;
  fftw_plan backward = nullptr;

  Impl(int w, int h) : width(w), height(h) {
    if (w <= 0 || h <= 0) throw std::invalid_argument("Fft2D: non-positive size");
    // Planning arrays only fix the layout; FFTW_UNALIGNED lets the plans run
    // on any std::vector storage through the new-array execute interface.
    std::vector<std::complex<double>> a(static_cast<std::size_t>(w) * h);
    std::vector<std::complex<double>> b(a.size());
    std::lock_guard lock(planner_mutex());
    const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
    forward = fftw_plan_dft_2d(h, w, as_fftw(a.data()), as_fftw(b.data()), FFTW_FORWARD, flags);
    backward = fftw_plan_dft_2d(h, w, as_fftw(a.data()), as_fftw(b.data()), FFTW_BACKWARD, flags);
    if (!forward || !backward) throw std::runtime_error("Fft2D: FFTW planning failed");
  }

  ~Impl() {
    std::lock_guard lock(planner_mutex());
    if (forward) fftw_destroy_plan(forward);
    if (backward) fftw_destroy_plan(backward);
  }

  void run(fftw_plan plan, const ComplexRaster& in, ComplexRaster& out) const {
    if (in.width() != width || in.height() != height) {
      throw std::invalid_argument("Fft2D: input shape does not match plan");
    }
    if (!out.same_shape(in)) out = ComplexRaster(width, height);
    // FFTW's new-array execute does not accept in-place use of an
    // out-of-place plan, so aliasing goes through a temporary.
    if (&in == &out) {
      ComplexRaster tmp(width, height);
      fftw_execute_dft(plan, as_fftw(const_cast<std::complex<double>*>(in.storage().data())),
                       as_fftw(tmp.storage().data()));
      out.storage().swap(tmp.storage());
    } else {
      fftw_execute_dft(plan, as_fftw(const_cast<std::complex<double>*>(in.storage().data())),
                       as_fftw(out.storage().data()));
    }
  }
};

Fft2D::Fft2D(int width, int height) : impl_(std::make_unique<Impl>(width, height)) {}
Fft2D::~Fft2D() = default;
Fft2D::Fft2D(Fft2D&&) noexcept = default;
Fft2D& Fft2D::operator=(Fft2D&&) noexcept = default;

int Fft2D::width() const { return impl_->width; }
int Fft2D::height() const { return impl_->height; }

void Fft2D::forward(const ComplexRaster& in, ComplexRaster& out) const {
  impl_->run(impl_->forward, in, out);
}

void Fft2D::inverse(const ComplexRaster& in, ComplexRaster& out) const {
  impl_->run(impl_->backward, in, out);
  const double scale = 1.0 / (static_cast<double>(impl_->width) * impl_->height);
  for (auto& v : out.values()) v *= scale;
}

ComplexRaster Fft2D::forward(const ComplexRaster& in) const {
  ComplexRaster out(in.width(), in.height());
  forward(in, out);
  out.pixel_pitch = in.pixel_pitch;
  return out;
}

ComplexRaster Fft2D::inverse(const ComplexRaster& in) const {
  ComplexRaster out(in.width(), in.height());
  inverse(in, out);
  out.pixel_pitch = in.pixel_pitch;
  return out;
}

struct BandFft2D::Impl {
  int width = 0;
  int height = 0;
  int col0 = 0;
  int cols = 0;
  fftw_plan rows_forward = nullptr;
  fftw_plan rows_backward = nullptr;
  fftw_plan cols_forward = nullptr;
  fftw_plan cols_backward = nullptr;

  Impl(int w, int h, int c0, int c1) : width(w), height(h), col0(c0), cols(c1 - c0 + 1) {
    if (w <= 0 || h <= 0) throw std::invalid_argument("BandFft2D: non-positive size");
    if (c0 < 0 || c1 < c0 || c1 >= w) throw std::invalid_argument("BandFft2D: invalid column band");
    std::vector<std::complex<double>> a(static_cast<std::size_t>(w) * h);
    std::lock_guard lock(planner_mutex());
    const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
    int n_row[] = {w};
    int n_col[] = {h};
    // All rows, contiguous, in place.
    rows_forward = fftw_plan_many_dft(1, n_row, h, as_fftw(a.data()), nullptr, 1, w,
                                      as_fftw(a.data()), nullptr, 1, w, FFTW_FORWARD, flags);
    rows_backward = fftw_plan_many_dft(1, n_row, h, as_fftw(a.data()), nullptr, 1, w,
                                       as_fftw(a.data()), nullptr, 1, w, FFTW_BACKWARD, flags);
    // Band columns only, strided, in place.
    cols_forward = fftw_plan_many_dft(1, n_col, cols, as_fftw(a.data()), nullptr, w, 1,
                                      as_fftw(a.data()), nullptr, w, 1, FFTW_FORWARD, flags);
    cols_backward = fftw_plan_many_dft(1, n_col, cols, as_fftw(a.data()), nullptr, w, 1,
                                       as_fftw(a.data()), nullptr, w, 1, FFTW_BACKWARD, flags);
    if (!rows_forward || !rows_backward || !cols_forward || !cols_backward) {
      throw std::runtime_error("BandFft2D: FFTW planning failed");
    }
  }

  ~Impl() {
    std::lock_guard lock(planner_mutex());
    for (fftw_plan p : {rows_forward, rows_backward, cols_forward, cols_backward}) {
      if (p) fftw_destroy_plan(p);
    }
  }

  void check(const ComplexRaster& in, ComplexRaster& out) const {
    if (in.width() != width || in.height() != height) {
      throw std::invalid_argument("BandFft2D: input shape does not match plan");
    }
    if (&in == &out) throw std::invalid_argument("BandFft2D: in and out must differ");
    if (!out.same_shape(in)) out = ComplexRaster(width, height);
  }
};

BandFft2D::BandFft2D(int width, int height, int col0, int col1)
    : impl_(std::make_unique<Impl>(width, height, col0, col1)) {}
BandFft2D::~BandFft2D() = default;

void BandFft2D::forward(const ComplexRaster& in, ComplexRaster& out) const {
  const Impl& m = *impl_;
  m.check(in, out);
  auto& dst = out.storage();
  const auto& src = in.storage();
  std::fill(dst.begin(), dst.end(), std::complex<double>{});
  for (int y = 0; y < m.height; ++y) {
    const std::size_t row = static_cast<std::size_t>(y) * m.width;
    std::copy(src.begin() + row + m.col0, src.begin() + row + m.col0 + m.cols,
              dst.begin() + row + m.col0);
  }
  fftw_execute_dft(m.cols_forward, as_fftw(dst.data() + m.col0), as_fftw(dst.data() + m.col0));
  fftw_execute_dft(m.rows_forward, as_fftw(dst.data()), as_fftw(dst.data()));
}

void BandFft2D::inverse(const ComplexRaster& in, ComplexRaster& out) const {
  const Impl& m = *impl_;
  m.check(in, out);
  auto& dst = out.storage();
  std::copy(in.storage().begin(), in.storage().end(), dst.begin());
  fftw_execute_dft(m.rows_backward, as_fftw(dst.data()), as_fftw(dst.data()));
  fftw_execute_dft(m.cols_backward, as_fftw(dst.data() + m.col0), as_fftw(dst.data() + m.col0));
  const double scale = 1.0 / (static_cast<double>(m.width) * m.height);
  for (int y = 0; y < m.height; ++y) {
    const std::size_t row = static_cast<std::size_t>(y) * m.width;
    for (int x = m.col0; x < m.col0 + m.cols; ++x) dst[row + x] *= scale;
  }
}

}  // namespace xstereo
