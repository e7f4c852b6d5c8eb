#include "xstereo/imaging.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace xstereo {

int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * n;
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - 1 - i;
}

namespace {

std::vector<double> gaussian_kernel(double sigma) {
  if (!(sigma > 0.0)) throw std::invalid_argument("gaussian_filter: sigma must be positive");
  const int radius = std::max(1, static_cast<int>(std::ceil(4.0 * sigma)));
  std::vector<double> k(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
    sum += k[i + radius];
  }
  for (auto& v : k) v /= sum;
  return k;
}

Raster2D convolve_rows(const Raster2D& in, const std::vector<double>& k) {
  const int r = static_cast<int>(k.size() / 2);
  Raster2D out(in.width(), in.height());
  for (int y = 0; y < in.height(); ++y) {
    for (int x = 0; x < in.width(); ++x) {
      double acc = 0.0;
      for (int i = -r; i <= r; ++i) acc += k[i + r] * in(reflect_index(x + i, in.width()), y);
      out(x, y) = acc;
    }
  }
  return out;
}

Raster2D convolve_cols(const Raster2D& in, const std::vector<double>& k) {
  const int r = static_cast<int>(k.size() / 2);
  Raster2D out(in.width(), in.height());
  for (int y = 0; y < in.height(); ++y) {
    for (int x = 0; x < in.width(); ++x) {
      double acc = 0.0;
      for (int i = -r; i <= r; ++i) acc += k[i + r] * in(x, reflect_index(y + i, in.height()));
      out(x, y) = acc;
    }
  }
  return out;
}

double cubic_weight(double t) {
  constexpr double a = -0.5;
  t = std::abs(t);
  if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
  if (t < 2.0) return (((t - 5.0) * t + 8.0) * t - 4.0) * a;
  return 0.0;
}

}  // namespace

Raster2D gaussian_filter(const Raster2D& in, double sigma) {
  const auto k = gaussian_kernel(sigma);
  Raster2D out = convolve_cols(convolve_rows(in, k), k);
  out.pixel_pitch = in.pixel_pitch;
  return out;
}

Raster2D resize_bicubic(const Raster2D& in, int factor) {
  if (factor < 1) throw std::invalid_argument("resize_bicubic: factor must be >= 1");
  if (factor == 1) return in;
  const int w = in.width() * factor, h = in.height() * factor;
  // Separable: horizontal pass then vertical pass.
  Raster2D tmp(w, in.height());
  for (int x = 0; x < w; ++x) {
    const double sx = (x + 0.5) / factor - 0.5;
    const int x0 = static_cast<int>(std::floor(sx));
    double wts[4];
    int idx[4];
    for (int k = 0; k < 4; ++k) {
      idx[k] = reflect_index(x0 - 1 + k, in.width());
      wts[k] = cubic_weight(sx - (x0 - 1 + k));
    }
    for (int y = 0; y < in.height(); ++y) {
      double acc = 0.0;
      for (int k = 0; k < 4; ++k) acc += wts[k] * in(idx[k], y);
      tmp(x, y) = acc;
    }
  }
  Raster2D out(w, h);
  for (int y = 0; y < h; ++y) {
    const double sy = (y + 0.5) / factor - 0.5;
    const int y0 = static_cast<int>(std::floor(sy));
    double wts[4];
    int idx[4];
    for (int k = 0; k < 4; ++k) {
      idx[k] = reflect_index(y0 - 1 + k, in.height());
      wts[k] = cubic_weight(sy - (y0 - 1 + k));
    }
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int k = 0; k < 4; ++k) acc += wts[k] * tmp(x, idx[k]);
      out(x, y) = acc;
    }
  }
  if (in.pixel_pitch) out.pixel_pitch = *in.pixel_pitch / factor;
  return out;
}

Raster2D sobel_x(const Raster2D& in) {
  Raster2D out(in.width(), in.height());
  const int w = in.width(), h = in.height();
  for (int y = 0; y < h; ++y) {
    const int ym = reflect_index(y - 1, h), yp = reflect_index(y + 1, h);
    for (int x = 0; x < w; ++x) {
      const int xm = reflect_index(x - 1, w), xp = reflect_index(x + 1, w);
      out(x, y) = (in(xp, ym) - in(xm, ym)) + 2.0 * (in(xp, y) - in(xm, y)) +
                  (in(xp, yp) - in(xm, yp));
    }
  }
  out.pixel_pitch = in.pixel_pitch;
  return out;
}

Raster2D sobel_y(const Raster2D& in) {
  Raster2D out(in.width(), in.height());
  const int w = in.width(), h = in.height();
  for (int y = 0; y < h; ++y) {
    const int ym = reflect_index(y - 1, h), yp = reflect_index(y + 1, h);
    for (int x = 0; x < w; ++x) {
      const int xm = reflect_index(x - 1, w), xp = reflect_index(x + 1, w);
      out(x, y) = (in(xm, yp) - in(xm, ym)) + 2.0 * (in(x, yp) - in(x, ym)) +
                  (in(xp, yp) - in(xp, ym));
    }
  }
  out.pixel_pitch = in.pixel_pitch;
  return out;
}

double sample_bilinear(const Raster2D& in, double x, double y, bool clamp, double outside) {
  const int w = in.width(), h = in.height();
  if (!clamp && (x < -0.5 || y < -0.5 || x > w - 0.5 || y > h - 0.5)) return outside;
  const double cx = std::clamp(x, 0.0, static_cast<double>(w - 1));
  const double cy = std::clamp(y, 0.0, static_cast<double>(h - 1));
  const int x0 = std::min(static_cast<int>(std::floor(cx)), w - 1);
  const int y0 = std::min(static_cast<int>(std::floor(cy)), h - 1);
  const int x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
  const double fx = cx - x0, fy = cy - y0;
  const double top = in(x0, y0) * (1.0 - fx) + in(x1, y0) * fx;
  const double bot = in(x0, y1) * (1.0 - fx) + in(x1, y1) * fx;
  return top * (1.0 - fy) + bot * fy;
}

double percentile(std::span<const double> values, double p) {
  if (values.empty()) throw std::invalid_argument("percentile: empty input");
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  const double pos = std::clamp(p, 0.0, 100.0) / 100.0 * (v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - lo) * (v[hi] - v[lo]);
}

Components label_components(const Mask& mask, int connectivity) {
  if (connectivity != 4 && connectivity != 8) {
    throw std::invalid_argument("label_components: connectivity must be 4 or 8");
  }
  const int w = mask.width(), h = mask.height();
  Components c;
  c.labels = Grid<int>(w, h, -1);
  std::vector<std::pair<int, int>> stack;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!mask(x, y) || c.labels(x, y) >= 0) continue;
      const int label = static_cast<int>(c.sizes.size());
      c.sizes.push_back(0);
      c.min_x.push_back(x);
      c.max_x.push_back(x);
      c.min_y.push_back(y);
      c.max_y.push_back(y);
      c.labels(x, y) = label;
      stack.assign(1, {x, y});
      while (!stack.empty()) {
        auto [px, py] = stack.back();
        stack.pop_back();
        ++c.sizes[label];
        c.min_x[label] = std::min(c.min_x[label], px);
        c.max_x[label] = std::max(c.max_x[label], px);
        c.min_y[label] = std::min(c.min_y[label], py);
        c.max_y[label] = std::max(c.max_y[label], py);
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            if ((dx == 0 && dy == 0) || (connectivity == 4 && dx != 0 && dy != 0)) continue;
            const int nx = px + dx, ny = py + dy;
            if (!mask.contains(nx, ny) || !mask(nx, ny) || c.labels(nx, ny) >= 0) continue;
            c.labels(nx, ny) = label;
            stack.emplace_back(nx, ny);
          }
        }
      }
    }
  }
  return c;
}

Mask dilate_disc(const Mask& in, double radius) {
  if (radius < 0.0) throw std::invalid_argument("dilate_disc: negative radius");
  const int r = static_cast<int>(std::floor(radius));
  if (r == 0) return in;
  std::vector<std::pair<int, int>> offsets;
  for (int dy = -r; dy <= r; ++dy) {
    for (int dx = -r; dx <= r; ++dx) {
      if (dx * dx + dy * dy <= radius * radius) offsets.emplace_back(dx, dy);
    }
  }
  Mask out(in.width(), in.height(), 0);
  out.pixel_pitch = in.pixel_pitch;
  for (int y = 0; y < in.height(); ++y) {
    for (int x = 0; x < in.width(); ++x) {
      if (!in(x, y)) continue;
      for (auto [dx, dy] : offsets) {
        if (out.contains(x + dx, y + dy)) out(x + dx, y + dy) = 1;
      }
    }
  }
  return out;
}

Mask threshold(const Raster2D& in, double level) {
  Mask out(in.width(), in.height());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] > level;
  out.pixel_pitch = in.pixel_pitch;
  return out;
}

double correlation(const Raster2D& a, const Raster2D& b) {
  require_same_shape(a, b, "correlation");
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

}  // namespace xstereo
