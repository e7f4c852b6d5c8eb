#include "xstereo/phase_retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>

#include "xstereo/fft.hpp"
#include "xstereo/imaging.hpp"
#include "xstereo/registration.hpp"

namespace xstereo {

MeasuredPattern MeasuredPattern::all_valid(Raster2D intensity) {
  MeasuredPattern m;
  m.valid = Mask(intensity.width(), intensity.height(), 1);
  m.intensity = std::move(intensity);
  return m;
}

void MeasuredPattern::validate() const {
  require_same_shape(intensity, valid, "MeasuredPattern");
  for (double v : intensity.values()) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw std::invalid_argument("MeasuredPattern: intensities must be finite and >= 0");
    }
  }
}

namespace {

// Modulus constraint with the measurement stored in FFT order.
class ModulusProjector {
 public:
  explicit ModulusProjector(const MeasuredPattern& m)
      : fft_(m.intensity.width(), m.intensity.height()),
        amplitude_(m.intensity.width(), m.intensity.height()),
        valid_(ifftshift(m.valid)) {
    const Raster2D unshifted = ifftshift(m.intensity);
    for (std::size_t i = 0; i < unshifted.size(); ++i) {
      amplitude_[i] = std::sqrt(unshifted[i]);
      if (valid_[i]) norm_ += unshifted[i];
    }
    norm_ = std::sqrt(norm_);
  }

  int width() const { return fft_.width(); }
  int height() const { return fft_.height(); }
  const Raster2D& amplitude() const { return amplitude_; }
  const Mask& valid() const { return valid_; }
  const Fft2D& fft() const { return fft_; }

  void project(const ComplexRaster& field, ComplexRaster& out) const {
    fft_.forward(field, out);
    for (std::size_t i = 0; i < out.size(); ++i) {
      if (!valid_[i]) continue;
      const double mag = std::abs(out[i]);
      out[i] = mag > 0.0 ? out[i] * (amplitude_[i] / mag) : std::complex<double>(amplitude_[i], 0.0);
    }
    fft_.inverse(out, out);
  }

  // Error of a field that already satisfies the support constraint.
  double error(const ComplexRaster& supported, ComplexRaster& scratch) const {
    if (!(norm_ > 0.0)) {
      throw std::invalid_argument("fourier_error: no valid pixel carries signal");
    }
    fft_.forward(supported, scratch);
    double num = 0.0;
    for (std::size_t i = 0; i < scratch.size(); ++i) {
      if (!valid_[i]) continue;
      const double d = std::abs(scratch[i]) - amplitude_[i];
      num += d * d;
    }
    return std::sqrt(num) / norm_;
  }

 private:
  Fft2D fft_;
  Raster2D amplitude_;
  Mask valid_;
  double norm_ = 0.0;
};

void validate_support(const Mask& s, int width, int height) {
  if (s.width() != width || s.height() != height) {
    throw std::invalid_argument("RetrievalConfig: support shape mismatch");
  }
  int x0 = width, x1 = -1, y0 = height, y1 = -1;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      if (!s(x, y)) continue;
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
    }
  }
  if (x1 < 0) throw std::invalid_argument("RetrievalConfig: empty support");
  if (2 * (x1 - x0 + 1) > width || 2 * (y1 - y0 + 1) > height) {
    throw std::invalid_argument("RetrievalConfig: support exceeds half the frame per dimension");
  }
}

}  // namespace

void RetrievalConfig::validate(int width, int height) const {
  if (iterations < 1) throw std::invalid_argument("RetrievalConfig: iterations must be >= 1");
  if (!(beta > 0.0 && beta <= 1.0)) throw std::invalid_argument("RetrievalConfig: beta in (0, 1]");
  if (keep_best < 1 || runs < keep_best) {
    throw std::invalid_argument("RetrievalConfig: need runs >= keep_best >= 1");
  }
  if (support) validate_support(*support, width, height);
}

ComplexRaster project_modulus(const ComplexRaster& field, const MeasuredPattern& measured) {
  require_same_shape(field, measured.intensity, "project_modulus");
  measured.validate();
  const ModulusProjector p(measured);
  ComplexRaster out(field.width(), field.height());
  p.project(field, out);
  out.pixel_pitch = field.pixel_pitch;
  return out;
}

ComplexRaster project_support(const ComplexRaster& field, const Mask& support) {
  require_same_shape(field, support, "project_support");
  ComplexRaster out = field;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!support[i]) out[i] = {};
  }
  return out;
}

double fourier_error(const ComplexRaster& field, const MeasuredPattern& measured,
                     const Mask& support) {
  require_same_shape(field, measured.intensity, "fourier_error");
  require_same_shape(field, support, "fourier_error");
  if (count_nonzero(measured.valid) == 0) {
    throw std::invalid_argument("fourier_error: all pixels are invalid");
  }
  const ModulusProjector p(measured);
  ComplexRaster scratch;
  return p.error(project_support(field, support), scratch);
}

Mask support_from_autocorrelation(const MeasuredPattern& measured, double threshold,
                                  int dilation) {
  measured.validate();
  const int w = measured.intensity.width(), h = measured.intensity.height();
  ComplexRaster spectrum(w, h);
  const Raster2D unshifted = ifftshift(measured.intensity);
  const Mask valid = ifftshift(measured.valid);
  for (std::size_t i = 0; i < spectrum.size(); ++i) {
    spectrum[i] = valid[i] ? unshifted[i] : 0.0;
  }
  const Fft2D fft(w, h);
  const ComplexRaster ac = fftshift(fft.inverse(spectrum));
  const int cx = w / 2, cy = h / 2;
  const double peak = std::abs(ac(cx, cy));
  if (!(peak > 0.0)) throw std::invalid_argument("support_from_autocorrelation: zero pattern");
  Mask above(w, h);
  for (std::size_t i = 0; i < ac.size(); ++i) above[i] = std::abs(ac[i]) >= threshold * peak;
  const Components comps = label_components(above, 8);
  const int label = comps.labels(cx, cy);
  const int ext_x = comps.max_x[label] - comps.min_x[label] + 1;
  const int ext_y = comps.max_y[label] - comps.min_y[label] + 1;
  const int len_x = (ext_x + 1) / 2, len_y = (ext_y + 1) / 2;
  const int x0 = cx - len_x / 2 - dilation, x1 = cx - len_x / 2 + len_x - 1 + dilation;
  const int y0 = cy - len_y / 2 - dilation, y1 = cy - len_y / 2 + len_y - 1 + dilation;
  Mask s(w, h);
  for (int y = std::max(0, y0); y <= std::min(h - 1, y1); ++y) {
    for (int x = std::max(0, x0); x <= std::min(w - 1, x1); ++x) s(x, y) = 1;
  }
  return s;
}

ComplexRaster difference_map_step(const ComplexRaster& x, const MeasuredPattern& measured,
                                  const Mask& support, double beta) {
  require_same_shape(x, support, "difference_map_step");
  const ComplexRaster pm = project_modulus(x, measured);
  ComplexRaster reflected(x.width(), x.height());
  for (std::size_t i = 0; i < x.size(); ++i) reflected[i] = 2.0 * pm[i] - x[i];
  const ComplexRaster ps = project_support(reflected, support);
  ComplexRaster out = x;
  for (std::size_t i = 0; i < x.size(); ++i) out[i] += beta * (ps[i] - pm[i]);
  return out;
}

RetrievalResult run_retrieval(const MeasuredPattern& measured, const RetrievalConfig& cfg) {
  measured.validate();
  const int w = measured.intensity.width(), h = measured.intensity.height();
  cfg.validate(w, h);
  const Mask support = cfg.support ? *cfg.support : support_from_autocorrelation(measured);
  validate_support(support, w, h);
  const ModulusProjector modulus(measured);
  const Raster2D& amplitude = modulus.amplitude();
  const Mask& valid = modulus.valid();
  if (cfg.initial) require_same_shape(*cfg.initial, support, "run_retrieval");

  int col0 = w, col1 = -1;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!support(x, y)) continue;
      col0 = std::min(col0, x);
      col1 = std::max(col1, x);
    }
  }
  const BandFft2D band(w, h, col0, col1);

  // The iterate is tracked through the spectra of its parts inside (a) and
  // outside (b) the support; both parts evolve linearly, so only the
  // band-limited transforms of the modulus projection are needed.
  ComplexRaster spectrum(w, h);
  if (cfg.initial) {
    modulus.fft().forward(*cfg.initial, spectrum);
  } else {
    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> phase(-std::numbers::pi, std::numbers::pi);
    for (std::size_t i = 0; i < spectrum.size(); ++i) {
      spectrum[i] = std::polar(valid[i] ? amplitude[i] : 0.0, phase(rng));
    }
  }
  ComplexRaster x0 = modulus.fft().inverse(spectrum);
  for (std::size_t i = 0; i < x0.size(); ++i) {
    if (!support[i]) x0[i] = {};
  }
  ComplexRaster a(w, h), b(w, h);
  band.forward(x0, a);
  for (std::size_t i = 0; i < b.size(); ++i) b[i] = spectrum[i] - a[i];

  double norm = 0.0;
  for (std::size_t i = 0; i < amplitude.size(); ++i) {
    if (valid[i]) norm += amplitude[i] * amplitude[i];
  }
  norm = std::sqrt(norm);
  if (!(norm > 0.0)) throw std::invalid_argument("run_retrieval: no valid pixel carries signal");

  RetrievalResult result;
  result.seed = cfg.seed;
  result.error_history.reserve(cfg.iterations);
  ComplexRaster pm_spec(w, h), pm(w, h), estimate(w, h), est_spec(w, h), best(w, h);
  double best_error = std::numeric_limits<double>::infinity();
  const double beta = cfg.beta;
  for (int it = 0; it < cfg.iterations; ++it) {
    for (std::size_t i = 0; i < pm_spec.size(); ++i) {
      const std::complex<double> v = a[i] + b[i];
      if (!valid[i]) {
        pm_spec[i] = v;
        continue;
      }
      const double mag = std::sqrt(std::norm(v));
      pm_spec[i] = mag > 0.0 ? v * (amplitude[i] / mag) : std::complex<double>(amplitude[i], 0.0);
    }
    band.inverse(pm_spec, pm);
    for (int y = 0; y < h; ++y) {
      for (int x = col0; x <= col1; ++x) estimate(x, y) = support(x, y) ? pm(x, y) : 0.0;
    }
    band.forward(estimate, est_spec);
    double num = 0.0;
    for (std::size_t i = 0; i < est_spec.size(); ++i) {
      if (!valid[i]) continue;
      const double d = std::sqrt(std::norm(est_spec[i])) - amplitude[i];
      num += d * d;
    }
    const double err = std::sqrt(num) / norm;
    if (!std::isfinite(err)) {
      throw std::runtime_error("run_retrieval: non-finite error at iteration " +
                               std::to_string(it));
    }
    result.error_history.push_back(err);
    if (err < best_error) {
      best_error = err;
      best = estimate;
      result.best_iteration = it;
    }
    for (std::size_t i = 0; i < a.size(); ++i) {
      a[i] = (1.0 - beta) * a[i] + beta * est_spec[i];
      b[i] -= beta * (pm_spec[i] - est_spec[i]);
    }
  }
  result.final_error = best_error;
  result.view.field = std::move(best);
  result.view.field.pixel_pitch = cfg.pixel_pitch;
  result.view.pixel_pitch = cfg.pixel_pitch;
  return result;
}

std::vector<RetrievalResult> run_retrievals(const MeasuredPattern& measured,
                                            const RetrievalConfig& cfg) {
  measured.validate();
  cfg.validate(measured.intensity.width(), measured.intensity.height());
  RetrievalConfig shared = cfg;
  if (!shared.support) shared.support = support_from_autocorrelation(measured);

  std::vector<RetrievalResult> results(cfg.runs);
  int workers = cfg.threads > 0 ? cfg.threads
                                : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  workers = std::min(workers, cfg.runs);
  std::vector<std::exception_ptr> errors(workers);
  auto work = [&](int worker) {
    try {
      for (int r = worker; r < cfg.runs; r += workers) {
        RetrievalConfig run_cfg = shared;
        run_cfg.seed = cfg.seed + static_cast<std::uint64_t>(r);
        results[r] = run_retrieval(measured, run_cfg);
      }
    } catch (...) {
      errors[worker] = std::current_exception();
    }
  };
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < workers; ++t) pool.emplace_back(work, t);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return results;
}

ComplexView align_and_average(const std::vector<RetrievalResult>& results, int keep_best) {
  if (keep_best < 1 || static_cast<int>(results.size()) < keep_best) {
    throw std::invalid_argument("align_and_average: fewer results than keep_best");
  }
  std::vector<std::size_t> order(results.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return results[a].final_error < results[b].final_error;
  });
  std::vector<double> errors;
  for (const auto& r : results) errors.push_back(r.final_error);
  const double median = percentile(errors, 50.0);
  std::vector<std::size_t> kept;
  for (auto i : order) {
    if (static_cast<int>(kept.size()) == keep_best) break;
    if (kept.empty() || results[i].final_error <= 2.0 * median) kept.push_back(i);
  }

  const ComplexRaster& reference = results[kept.front()].view.field;
  ComplexRaster sum = reference;
  for (std::size_t k = 1; k < kept.size(); ++k) {
    const ComplexRaster& f = results[kept[k]].view.field;
    require_same_shape(reference, f, "align_and_average");
    const ComplexRaster twin = conjugate_flip(f);
    const Registration direct = register_subpixel(reference, f);
    const Registration flipped = register_subpixel(reference, twin);
    const bool use_twin = flipped.peak > direct.peak;
    const Registration& reg = use_twin ? flipped : direct;
    const ComplexRaster aligned = shift_image(use_twin ? twin : f, reg.dx, reg.dy);
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += aligned[i] * reg.phase;
  }
  const double n = static_cast<double>(kept.size());
  for (auto& v : sum.values()) v /= n;

  ComplexView out;
  out.field = std::move(sum);
  out.pixel_pitch = results[kept.front()].view.pixel_pitch;
  out.field.pixel_pitch = out.pixel_pitch;
  return out;
}

namespace {

// Position where a monotone-in-neighbourhood profile crosses `level`,
// searching outward from `center`.
std::optional<double> crossing(const std::vector<double>& p, int center, double level) {
  const int n = static_cast<int>(p.size());
  if (p[center] < level) {
    for (int i = center; i + 1 < n; ++i) {
      if (p[i] < level && p[i + 1] >= level) return i + (level - p[i]) / (p[i + 1] - p[i]);
    }
  } else {
    for (int i = center - 1; i >= 0; --i) {
      if (p[i] < level && p[i + 1] >= level) return i + (level - p[i]) / (p[i + 1] - p[i]);
    }
  }
  return std::nullopt;
}

}  // namespace

double estimate_resolution(const ComplexView& view, std::optional<EdgeHint> hint) {
  const Raster2D amp = view.amplitude();
  const int w = amp.width(), h = amp.height();
  if (w < 5 || h < 5) throw std::invalid_argument("estimate_resolution: view too small");
  EdgeHint edge;
  if (hint) {
    edge = *hint;
  } else {
    const Raster2D gx = sobel_x(amp), gy = sobel_y(amp);
    double best = 0.0;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double g = std::hypot(gx(x, y), gy(x, y));
        if (g > best) {
          best = g;
          edge = {x, y, std::abs(gx(x, y)) >= std::abs(gy(x, y))};
        }
      }
    }
    if (!(best > 0.0)) throw std::invalid_argument("estimate_resolution: no suitable edge found");
  }
  constexpr int kHalf = 24;  // profile half length
  constexpr int kBand = 2;   // lines averaged on each side of the profile
  std::vector<double> profile(2 * kHalf + 1, 0.0);
  for (int t = -kHalf; t <= kHalf; ++t) {
    double acc = 0.0;
    int n = 0;
    for (int s = -kBand; s <= kBand; ++s) {
      const int x = edge.along_x ? edge.x + t : edge.x + s;
      const int y = edge.along_x ? edge.y + s : edge.y + t;
      if (!amp.contains(x, y)) continue;
      acc += amp(x, y);
      ++n;
    }
    profile[t + kHalf] = n ? acc / n : std::numeric_limits<double>::quiet_NaN();
  }
  // Trim to the samples inside the raster.
  int lo_i = 0, hi_i = static_cast<int>(profile.size()) - 1;
  while (lo_i < kHalf && std::isnan(profile[lo_i])) ++lo_i;
  while (hi_i > kHalf && std::isnan(profile[hi_i])) --hi_i;
  std::vector<double> p(profile.begin() + lo_i, profile.begin() + hi_i + 1);
  int center = kHalf - lo_i;
  if (p.back() < p.front()) {
    std::reverse(p.begin(), p.end());
    center = static_cast<int>(p.size()) - 1 - center;
  }
  const auto [mn, mx] = std::minmax_element(p.begin(), p.end());
  const double range = *mx - *mn;
  if (!(range > 0.0)) throw std::invalid_argument("estimate_resolution: no suitable edge found");
  const auto x10 = crossing(p, center, *mn + 0.1 * range);
  const auto x90 = crossing(p, center, *mn + 0.9 * range);
  if (!x10 || !x90 || *x90 < *x10) {
    throw std::invalid_argument("estimate_resolution: no suitable edge found");
  }
  return (*x90 - *x10) * view.pixel_pitch;
}

}  // namespace xstereo
