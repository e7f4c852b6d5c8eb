#include "xstereo/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "xstereo/imaging.hpp"

namespace xstereo {

void PreprocConfig::validate() const {
  if (resize_factor < 1) throw std::invalid_argument("PreprocConfig: resize_factor must be >= 1");
  if (!(smooth_sigma > 0.0) || !(stitch_sigma > 0.0)) {
    throw std::invalid_argument("PreprocConfig: sigmas must be > 0");
  }
  for (double t : {threshold_left, threshold_right}) {
    if (!(t >= 0.0 && t <= 1.0)) throw std::invalid_argument("PreprocConfig: thresholds in [0, 1]");
  }
  if (min_region < 0) throw std::invalid_argument("PreprocConfig: min_region must be >= 0");
}

StitchedPattern stitch_hdr(const DiffractionFrame& short_frame, const DiffractionFrame& long_frame,
                           const PreprocConfig& cfg) {
  cfg.validate();
  require_same_shape(short_frame.counts, long_frame.counts, "stitch_hdr");
  require_same_shape(short_frame.counts, short_frame.saturated, "stitch_hdr");
  require_same_shape(long_frame.counts, long_frame.saturated, "stitch_hdr");
  if (!(short_frame.exposure_scale > 0.0) || !(long_frame.exposure_scale > 0.0)) {
    throw std::invalid_argument("stitch_hdr: exposure scales must be > 0");
  }
  const int w = long_frame.counts.width(), h = long_frame.counts.height();
  Raster2D usable(w, h);
  for (std::size_t i = 0; i < usable.size(); ++i) usable[i] = long_frame.saturated[i] ? 0.0 : 1.0;
  const Raster2D smooth = gaussian_filter(usable, cfg.stitch_sigma);

  StitchedPattern out;
  out.intensity = Raster2D(w, h);
  out.saturated = Mask(w, h);
  out.intensity.pixel_pitch = long_frame.counts.pixel_pitch;
  for (std::size_t i = 0; i < usable.size(); ++i) {
    const double wl = usable[i] * std::clamp(smooth[i], 0.0, 1.0);
    const double from_long = long_frame.counts[i] / long_frame.exposure_scale;
    const double from_short = short_frame.counts[i] / short_frame.exposure_scale;
    out.intensity[i] = wl * from_long + (1.0 - wl) * from_short;
    if (long_frame.saturated[i] && short_frame.saturated[i]) {
      out.saturated[i] = 1;
      ++out.both_saturated;
    }
  }
  return out;
}

std::array<MeasuredPattern, 2> isolate_patterns(const Raster2D& composite,
                                                const std::array<PixelCoord, 2>& centers,
                                                int radius, double max_overlap,
                                                const Mask* invalid) {
  if (radius < 1) throw std::invalid_argument("isolate_patterns: radius must be >= 1");
  if (invalid) require_same_shape(composite, *invalid, "isolate_patterns");
  const int side = 2 * radius;
  const int ox = std::max(0, side - std::abs(centers[0].x - centers[1].x));
  const int oy = std::max(0, side - std::abs(centers[0].y - centers[1].y));
  const double overlap = static_cast<double>(ox) * oy / (static_cast<double>(side) * side);
  if (overlap > max_overlap) {
    throw std::invalid_argument("isolate_patterns: patterns overlap by " +
                                std::to_string(overlap * 100.0) + "% of their area");
  }
  std::array<MeasuredPattern, 2> out;
  for (int k = 0; k < 2; ++k) {
    const PixelCoord c = centers[k], o = centers[1 - k];
    const int x0 = c.x - radius, y0 = c.y - radius;
    if (x0 < 0 || y0 < 0 || x0 + side > composite.width() || y0 + side > composite.height()) {
      throw std::invalid_argument("isolate_patterns: crop leaves the composite");
    }
    MeasuredPattern& m = out[k];
    m.intensity = Raster2D(side, side);
    m.valid = Mask(side, side, 1);
    m.intensity.pixel_pitch = composite.pixel_pitch;
    for (int y = 0; y < side; ++y) {
      for (int x = 0; x < side; ++x) {
        const int cx = x0 + x, cy = y0 + y;
        m.intensity(x, y) = composite(cx, cy);
        const bool in_other = cx >= o.x - radius && cx < o.x + radius && cy >= o.y - radius &&
                              cy < o.y + radius;
        if (in_other || (invalid && (*invalid)(cx, cy))) m.valid(x, y) = 0;
      }
    }
  }
  return out;
}

Mask despeckle(const Mask& in, std::size_t min_pixels, const Mask* partner, int partner_search) {
  if (partner) require_same_shape(in, *partner, "despeckle");
  const Components comps = label_components(in, 8);
  std::vector<std::uint8_t> keep(comps.count(), 1);
  for (std::size_t l = 0; l < comps.count(); ++l) {
    if (comps.sizes[l] >= min_pixels) continue;
    keep[l] = 0;
    if (!partner) continue;
    const int x0 = std::max(0, comps.min_x[l] - partner_search);
    const int x1 = std::min(in.width() - 1, comps.max_x[l] + partner_search);
    for (int y = comps.min_y[l]; y <= comps.max_y[l] && !keep[l]; ++y) {
      for (int x = x0; x <= x1; ++x) {
        if ((*partner)(x, y)) {
          keep[l] = 1;
          break;
        }
      }
    }
  }
  Mask out(in.width(), in.height());
  out.pixel_pitch = in.pixel_pitch;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const int l = comps.labels[i];
    out[i] = l >= 0 && keep[l] ? 1 : 0;
  }
  return out;
}

Mask binarize_view(const ComplexView& v, double threshold_level, const PreprocConfig& cfg,
                   const Mask* partner, int partner_search) {
  cfg.validate();
  if (!(threshold_level >= 0.0 && threshold_level <= 1.0)) {
    throw std::invalid_argument("binarize_view: threshold outside [0, 1]");
  }
  Raster2D amp = v.amplitude();
  const double scale = percentile(amp.values(), 99.5);
  if (scale > 0.0) {
    for (auto& a : amp.values()) a /= scale;
  }
  amp.pixel_pitch = v.pixel_pitch;
  const Raster2D smooth = gaussian_filter(resize_bicubic(amp, cfg.resize_factor), cfg.smooth_sigma);
  const Mask raw = threshold(smooth, threshold_level);
  const auto min_pixels = static_cast<std::size_t>(cfg.min_region) * cfg.resize_factor *
                          cfg.resize_factor;
  Mask out = despeckle(raw, min_pixels, partner, partner_search);
  out.pixel_pitch = smooth.pixel_pitch;
  return out;
}

Raster2D gradient_view(const Raster2D& img) {
  if (img.width() < 3 || img.height() < 3) {
    throw std::invalid_argument("gradient_view: image smaller than 3x3");
  }
  Raster2D g = sobel_x(img);
  double peak = 0.0;
  for (auto& v : g.values()) {
    v = std::abs(v);
    peak = std::max(peak, v);
  }
  if (peak > 0.0) {
    for (auto& v : g.values()) v /= peak;
  }
  g.pixel_pitch = img.pixel_pitch;
  return g;
}

}  // namespace xstereo
