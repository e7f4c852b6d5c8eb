#include "xstereo/pipeline.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <set>
#include <sstream>
#include <type_traits>

#include "xstereo/fft.hpp"
#include "xstereo/imaging.hpp"
#include "xstereo/phase_retrieval.hpp"
#include "xstereo/raster_io.hpp"
#include "xstereo/rectification.hpp"
#include "xstereo/registration.hpp"

namespace xstereo {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr const char* kStageNames[] = {"simulate", "preprocess", "retrieve",
                                       "rectify",  "disparity",  "depth"};

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Reads the keys of one JSON object, rejecting unknown ones.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j.is_object()) throw ValidationError(where_ + ": expected an object");
  }

  template <typename T>
  void get(const char* key, T& value) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      value = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ValidationError(where_ + "." + key + ": " + e.what());
    }
  }

  void path(const char* key, fs::path& value) {
    std::string s = value.string();
    get(key, s);
    value = s;
  }

  const json* child(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) throw ValidationError(where_ + ": unknown key '" + k + "'");
    }
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

double to_deg(double rad) { return rad * 180.0 / std::numbers::pi; }

void require(bool ok, const std::string& what) {
  if (!ok) throw ValidationError(what);
}

// Runs a module validator, converting its exception.
template <typename F>
void validated(const std::string& where, F&& f) {
  try {
    f();
  } catch (const std::invalid_argument& e) {
    throw ValidationError(where + ": " + e.what());
  }
}

fs::path suffixed(const fs::path& base, const std::string& suffix) {
  fs::path p = base;
  p += suffix;
  return p;
}

std::vector<fs::path> raster_paths(const fs::path& base) {
  const auto f = raster_files(base);
  return {f.header, f.payload};
}

std::vector<fs::path> complex_paths(const fs::path& base) {
  return {suffixed(base, ".hdr"), suffixed(base, ".amp.raw"), suffixed(base, ".phase.raw")};
}

std::vector<fs::path> raster_with_mask_paths(const fs::path& base, const std::string& mask_suffix) {
  auto p = raster_paths(base);
  for (auto& m : raster_paths(suffixed(base, mask_suffix))) p.push_back(m);
  return p;
}

void require_files(const std::vector<fs::path>& files, const std::string& what) {
  for (const auto& f : files) {
    if (!fs::exists(f)) throw ValidationError(what + ": missing input file " + f.string());
  }
}

// Collects manifest entries of one stage.
class Recorder {
 public:
  Recorder(fs::path root, Stage stage) : root_(std::move(root)), stage_(stage) {}

  void add(const std::string& kind, const std::vector<fs::path>& files) {
    ManifestEntry e;
    e.stage = stage_;
    e.kind = kind;
    e.path = fs::relative(files.front(), root_).generic_string();
    e.sha256 = sha256_files(files);
    entries_.push_back(std::move(e));
  }

  const std::vector<ManifestEntry>& entries() const { return entries_; }

 private:
  fs::path root_;
  Stage stage_;
  std::vector<ManifestEntry> entries_;
};

void write_frame(const DiffractionFrame& f, const fs::path& base) {
  write_raster(f.counts, base, {{"exposure_scale", format_double(f.exposure_scale)}});
  write_mask(f.saturated, suffixed(base, ".saturated"));
}

DiffractionFrame read_frame(const fs::path& base) {
  HeaderExtras extras;
  DiffractionFrame f;
  f.counts = read_raster(base, &extras);
  const auto it = extras.find("exposure_scale");
  if (it == extras.end()) throw FormatError(base.string() + ": missing exposure_scale");
  f.exposure_scale = std::stod(it->second);
  f.saturated = read_mask(suffixed(base, ".saturated"));
  require_same_shape(f.counts, f.saturated, "read_frame");
  return f;
}

std::vector<fs::path> frame_paths(const fs::path& base) {
  return raster_with_mask_paths(base, ".saturated");
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

void write_height_field(const HeightField& h, const fs::path& base) {
  write_raster(h.z, base,
               {{"lattice_pitch", format_double(h.pitch)},
                {"origin_x", format_double(h.origin_x)},
                {"origin_y", format_double(h.origin_y)}});
  write_mask(h.defined, suffixed(base, ".defined"));
}

// Input locations that depend on whether the data was simulated.
struct Sources {
  fs::path composite_short, composite_long;
  fs::path reference_left, reference_right;
  fs::path correspondences;
  std::array<fs::path, 2> support;
};

Sources sources(const PipelineConfig& cfg) {
  const fs::path& out = cfg.output_dir;
  Sources s;
  if (cfg.simulate.enabled) {
    s.composite_short = out / layout::kCompositeShort;
    s.composite_long = out / layout::kCompositeLong;
    s.reference_left = out / layout::kTruthLeft;
    s.reference_right = out / layout::kTruthRight;
    if (cfg.mode == PipelineMode::kPhase) {
      s.correspondences = out / layout::kCorrespondences;
      s.support = {out / layout::kSupportLeft, out / layout::kSupportRight};
    }
  } else {
    s.composite_short = cfg.inputs.composite_short;
    s.composite_long = cfg.inputs.composite_long;
    s.reference_left = cfg.inputs.reference_left;
    s.reference_right = cfg.inputs.reference_right;
    s.correspondences = cfg.inputs.correspondences;
    s.support = {cfg.inputs.support_left, cfg.inputs.support_right};
  }
  return s;
}

int separation(const PipelineConfig& cfg) {
  return cfg.preprocess.separation_px > 0 ? cfg.preprocess.separation_px
                                          : default_separation(cfg.geometry.roi_side);
}

// ---------------------------------------------------------------- simulate

// Ground-truth correspondences: the outer cut corners at depth 0 and the lid
// corners at its offset, projected into both views; the right points follow
// the camera misalignment.
Correspondences truth_correspondences(const CrossSampleParams& p, const StereoGeometry& g,
                                      double rotation, double dy) {
  const double t1 = std::tan(g.theta1), t2 = std::tan(g.theta2);
  const double half = 0.5 * p.side;
  const double bar_y = (p.bar_position - 0.5) * p.height;
  Correspondences out;
  for (const auto& [grow, z] : {std::pair{0.0, 0.0}, std::pair{-p.gap, p.lid_offset}}) {
    const double hw = 0.5 * p.arm_width + grow;
    const double boxes[2][4] = {
        {-hw, hw, -0.5 * p.height - grow, 0.5 * p.height + grow},
        {-0.5 * p.width - grow, 0.5 * p.width + grow, bar_y - hw, bar_y + hw}};
    for (const auto& b : boxes) {
      for (double x : {b[0], b[1]}) {
        for (double y : {b[2], b[3]}) {
          const Eigen::Vector2d left((x + z * t1) / p.pitch + half, y / p.pitch + half);
          const Eigen::Vector2d r0((x - z * t2) / p.pitch + half, y / p.pitch + half);
          const double c = std::cos(rotation), s = std::sin(rotation);
          const Eigen::Vector2d d = r0 - Eigen::Vector2d(half, half);
          const Eigen::Vector2d right(c * d.x() - s * d.y() + half, s * d.x() + c * d.y() + half + dy);
          out.push_back({left, right});
        }
      }
    }
  }
  return out;
}

json sample_json(const CrossSampleParams& p, const SampleModel& s) {
  json j;
  j["side"] = p.side;
  j["pitch"] = p.pitch;
  j["width"] = p.width;
  j["height"] = p.height;
  j["arm_width"] = p.arm_width;
  j["gap"] = p.gap;
  j["bar_position"] = p.bar_position;
  j["lid_offset"] = p.lid_offset;
  j["phase_variant"] = p.phase_variant;
  j["structures"] = json::array();
  for (const auto& st : s.structures) {
    j["structures"].push_back({{"name", st.name},
                               {"depth", st.depth},
                               {"transmission_amplitude", st.transmission_amplitude},
                               {"transmission_phase", st.transmission_phase},
                               {"pixels", count_nonzero(st.mask)}});
  }
  return j;
}

std::vector<ManifestEntry> stage_simulate(const PipelineConfig& cfg) {
  const fs::path& out = cfg.output_dir;
  fs::create_directories(out / "sim");
  Recorder rec(out, Stage::kSimulate);
  const StereoGeometry& g = cfg.geometry;
  const ObjectGrid grid = object_grid(g);
  CrossSampleParams p = cfg.simulate.sample;
  p.side = grid.side;
  p.pitch = grid.pixel_pitch;
  p.phase_variant = cfg.mode == PipelineMode::kPhase;
  const SampleModel sample = make_cross_sample(p);

  const ComplexView left = project_view(sample, signed_angle(g, Side::kLeft), grid);
  ComplexView right = project_view(sample, signed_angle(g, Side::kRight), grid);
  const double rotation = deg_to_rad(cfg.simulate.misalign_rotation_deg);
  const double dy = cfg.simulate.misalign_dy_px;
  if (rotation != 0.0 || dy != 0.0) right = misalign_view(right, rotation, dy);

  write_text(out / layout::kSample, sample_json(p, sample).dump(2) + "\n");
  rec.add("truth", {out / layout::kSample});
  write_complex_view(left, out / layout::kTruthLeft);
  rec.add("truth", complex_paths(out / layout::kTruthLeft));
  write_complex_view(right, out / layout::kTruthRight);
  rec.add("truth", complex_paths(out / layout::kTruthRight));

  const std::array<Raster2D, 2> ideal{diffract(left), diffract(right)};
  const std::uint64_t seed = stage_seed(cfg.seed, Stage::kSimulate);
  const int sep = separation(cfg);
  const char* side_name[2] = {"left", "right"};
  struct Exposure {
    const char* name;
    double time;
    const char* composite;
  };
  const Exposure exposures[2] = {{"short", cfg.simulate.short_exposure, layout::kCompositeShort},
                                 {"long", cfg.simulate.long_exposure, layout::kCompositeLong}};
  for (int e = 0; e < 2; ++e) {
    std::array<DiffractionFrame, 2> frames;
    for (int k = 0; k < 2; ++k) {
      ExposureSpec spec;
      spec.photons_total = cfg.simulate.photons_total;
      spec.exposure_scale = exposures[e].time / cfg.simulate.long_exposure;
      spec.saturation_level = cfg.simulate.saturation_level;
      spec.seed = splitmix64(seed + 2 * e + k);
      frames[k] = simulate_exposure(ideal[k], spec);
      const fs::path base =
          out / "sim" / (std::string("frame_") + side_name[k] + "_" + exposures[e].name);
      write_frame(frames[k], base);
      rec.add("frame", frame_paths(base));
    }
    const DiffractionFrame composite = compose_dual_frame(frames[0], frames[1], sep);
    write_frame(composite, out / exposures[e].composite);
    rec.add("composite", frame_paths(out / exposures[e].composite));
  }

  if (cfg.mode == PipelineMode::kPhase) {
    // The opaque frame's aperture is known; it serves as the support.
    const std::size_t frame = sample.structures.size() - 1;
    const Mask aperture = project_footprint(sample, frame, 0.0, grid);
    ComplexView open;
    open.pixel_pitch = grid.pixel_pitch;
    open.field = ComplexRaster(grid.side, grid.side);
    for (std::size_t i = 0; i < aperture.size(); ++i) open.field[i] = aperture[i] ? 0.0 : 1.0;
    const ComplexView open_right =
        rotation != 0.0 || dy != 0.0 ? misalign_view(open, rotation, dy) : open;
    for (int k = 0; k < 2; ++k) {
      const Raster2D a = (k == 0 ? open : open_right).amplitude();
      const Mask support = dilate_disc(threshold(a, 0.5), 2.0);
      const fs::path base = out / (k == 0 ? layout::kSupportLeft : layout::kSupportRight);
      write_mask(support, base);
      rec.add("truth", raster_paths(base));
    }
    write_correspondences(truth_correspondences(p, g, rotation, dy), out / layout::kCorrespondences);
    rec.add("truth", {out / layout::kCorrespondences});
  }
  return rec.entries();
}

// -------------------------------------------------------------- preprocess

std::vector<ManifestEntry> stage_preprocess(const PipelineConfig& cfg) {
  const fs::path& out = cfg.output_dir;
  fs::create_directories(out / "patterns");
  Recorder rec(out, Stage::kPreprocess);
  const Sources src = sources(cfg);
  const DiffractionFrame short_frame = read_frame(src.composite_short);
  const DiffractionFrame long_frame = read_frame(src.composite_long);
  const StitchedPattern stitched = stitch_hdr(short_frame, long_frame, cfg.preprocess.preproc);
  write_raster(stitched.intensity, out / layout::kStitched,
               {{"both_saturated", std::to_string(stitched.both_saturated)}});
  write_mask(stitched.saturated, suffixed(out / layout::kStitched, ".saturated"));
  rec.add("aux", raster_with_mask_paths(out / layout::kStitched, ".saturated"));

  const int side = cfg.geometry.roi_side;
  const DualLayout dl = dual_layout(side, separation(cfg));
  const std::array<PixelCoord, 2> centers{PixelCoord{dl.left_center_x, dl.center_y},
                                          PixelCoord{dl.right_center_x, dl.center_y}};
  const auto patterns = isolate_patterns(stitched.intensity, centers, side / 2,
                                         cfg.preprocess.max_overlap, &stitched.saturated);
  for (int k = 0; k < 2; ++k) {
    const fs::path base = out / (k == 0 ? layout::kPatternLeft : layout::kPatternRight);
    write_raster(patterns[k].intensity, base);
    write_mask(patterns[k].valid, suffixed(base, ".valid"));
    rec.add("pattern", raster_with_mask_paths(base, ".valid"));
  }
  return rec.entries();
}

// ---------------------------------------------------------------- retrieve

std::vector<ManifestEntry> stage_retrieve(const PipelineConfig& cfg) {
  const fs::path& out = cfg.output_dir;
  fs::create_directories(out / "views");
  Recorder rec(out, Stage::kRetrieve);
  const std::uint64_t seed = stage_seed(cfg.seed, Stage::kRetrieve);
  const Sources src = sources(cfg);
  std::ostringstream summary;
  for (int k = 0; k < 2; ++k) {
    const fs::path pattern = out / (k == 0 ? layout::kPatternLeft : layout::kPatternRight);
    MeasuredPattern m;
    m.intensity = read_raster(pattern);
    m.valid = read_mask(suffixed(pattern, ".valid"));
    m.validate();

    RetrievalConfig rc;
    rc.iterations = cfg.retrieve.iterations;
    rc.beta = cfg.retrieve.beta;
    rc.runs = cfg.retrieve.runs;
    rc.keep_best = cfg.retrieve.keep_best;
    rc.threads = cfg.retrieve.threads;
    rc.seed = splitmix64(seed + k);
    rc.pixel_pitch = object_pixel_pitch(cfg.geometry);
    if (!src.support[k].empty()) rc.support = read_mask(src.support[k]);
    const auto results = run_retrievals(m, rc);
    const ComplexView view = align_and_average(results, rc.keep_best);

    const fs::path base = out / (k == 0 ? layout::kViewLeft : layout::kViewRight);
    write_complex_view(view, base);
    rec.add("view", complex_paths(base));

    std::ostringstream csv;
    csv << "run,iteration,error\n";
    for (std::size_t r = 0; r < results.size(); ++r) {
      for (std::size_t i = 0; i < results[r].error_history.size(); ++i) {
        csv << r << ',' << i << ',' << format_double(results[r].error_history[i]) << '\n';
      }
    }
    const fs::path errors = suffixed(base, ".errors.csv");
    write_text(errors, csv.str());
    rec.add("aux", {errors});

    double best = results.front().final_error;
    for (const auto& r : results) best = std::min(best, r.final_error);
    summary << (k == 0 ? "left" : "right") << "_best_error " << format_double(best) << '\n';
  }
  write_text(out / "views/summary.txt", summary.str());
  rec.add("aux", {out / "views/summary.txt"});
  return rec.entries();
}

// ----------------------------------------------------------------- rectify

ComplexRaster amplitude_field(const ComplexRaster& f) {
  ComplexRaster a(f.width(), f.height());
  for (std::size_t i = 0; i < f.size(); ++i) a[i] = std::abs(f[i]);
  return a;
}

// Registers the amplitude of `view` and of its twin image onto the
// reference amplitude, keeps the candidate with the larger complex overlap
// and matches the global phase.
ComplexView align_to(const ComplexView& view, const ComplexView& reference) {
  require_same_shape(view.field, reference.field, "align_to");
  const ComplexRaster ref_amp = amplitude_field(reference.field);
  auto overlap = [&](const ComplexRaster& f) {
    std::complex<double> dot{};
    for (std::size_t i = 0; i < f.size(); ++i) dot += reference.field[i] * std::conj(f[i]);
    return dot;
  };
  ComplexView out = view;
  std::complex<double> best{};
  bool first = true;
  for (const ComplexRaster& candidate : {view.field, conjugate_flip(view.field)}) {
    const Registration reg = register_subpixel(ref_amp, amplitude_field(candidate));
    ComplexRaster shifted = shift_image(candidate, reg.dx, reg.dy);
    const std::complex<double> dot = overlap(shifted);
    if (first || std::abs(dot) > std::abs(best)) {
      best = dot;
      out.field = std::move(shifted);
      first = false;
    }
  }
  const double mag = std::abs(best);
  const std::complex<double> phase = mag > 0.0 ? best / mag : std::complex<double>{1.0, 0.0};
  for (auto& v : out.field.values()) v *= phase;
  return out;
}

ComplexView warp_view(const ComplexView& v, const Eigen::Matrix3d& h) {
  Raster2D re(v.width(), v.height()), im(v.width(), v.height());
  for (std::size_t i = 0; i < v.field.size(); ++i) {
    re[i] = v.field[i].real();
    im[i] = v.field[i].imag();
  }
  const Raster2D wre = warp_image(re, h), wim = warp_image(im, h);
  ComplexView out = v;
  for (std::size_t i = 0; i < out.field.size(); ++i) out.field[i] = {wre[i], wim[i]};
  return out;
}

std::string matrix_text(const char* name, const Eigen::Matrix3d& m) {
  std::ostringstream os;
  os << name;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) os << ' ' << format_double(m(r, c));
  }
  os << '\n';
  return os.str();
}

std::vector<ManifestEntry> stage_rectify(const PipelineConfig& cfg) {
  const fs::path& out = cfg.output_dir;
  fs::create_directories(out / "aligned");
  Recorder rec(out, Stage::kRectify);
  const Sources src = sources(cfg);
  ComplexView left = read_complex_view(out / layout::kViewLeft);
  ComplexView right = read_complex_view(out / layout::kViewRight);
  if (!src.reference_left.empty()) left = align_to(left, read_complex_view(src.reference_left));
  if (!src.reference_right.empty()) {
    right = align_to(right, read_complex_view(src.reference_right));
  } else {
    right = align_to(right, left);
  }

  std::ostringstream info;
  if (!src.correspondences.empty()) {
    const Correspondences c = read_correspondences(src.correspondences);
    const FundamentalMatrix f = estimate_fundamental(c);
    const RectifyingWarps warps = rectifying_warps(f, c, left.width(), left.height());
    left = warp_view(left, warps.left);
    right = warp_view(right, warps.right);
    info << matrix_text("fundamental", f.matrix) << matrix_text("warp_left", warps.left)
         << matrix_text("warp_right", warps.right)
         << "epipolar_residual_px " << format_double(epipolar_residual_pixels(f, c)) << '\n';
  } else {
    info << "rectified 0\n";
  }
  write_complex_view(left, out / layout::kAlignedLeft);
  rec.add("aligned_view", complex_paths(out / layout::kAlignedLeft));
  write_complex_view(right, out / layout::kAlignedRight);
  rec.add("aligned_view", complex_paths(out / layout::kAlignedRight));
  write_text(out / "aligned/rectification.txt", info.str());
  rec.add("aux", {out / "aligned/rectification.txt"});
  return rec.entries();
}

// --------------------------------------------------------------- disparity

struct CropBox {
  int x0 = 0, y0 = 0, width = 0, height = 0;
};

CropBox content_box(const std::array<Raster2D, 2>& amps, double level, int margin) {
  int x0 = amps[0].width(), x1 = -1, y0 = amps[0].height(), y1 = -1;
  for (const auto& a : amps) {
    const double peak = *std::max_element(a.values().begin(), a.values().end());
    if (!(peak > 0.0)) throw std::runtime_error("disparity: empty view");
    for (int y = 0; y < a.height(); ++y) {
      for (int x = 0; x < a.width(); ++x) {
        if (a(x, y) <= level * peak) continue;
        x0 = std::min(x0, x);
        x1 = std::max(x1, x);
        y0 = std::min(y0, y);
        y1 = std::max(y1, y);
      }
    }
  }
  x0 = std::max(0, x0 - margin);
  y0 = std::max(0, y0 - margin);
  x1 = std::min(amps[0].width() - 1, x1 + margin);
  y1 = std::min(amps[0].height() - 1, y1 + margin);
  return {x0, y0, x1 - x0 + 1, y1 - y0 + 1};
}

template <typename T>
Grid<T> crop(const Grid<T>& in, const CropBox& b) {
  Grid<T> out(b.width, b.height);
  for (int y = 0; y < b.height; ++y) {
    for (int x = 0; x < b.width; ++x) out(x, y) = in(b.x0 + x, b.y0 + y);
  }
  out.pixel_pitch = in.pixel_pitch;
  return out;
}

Raster2D to_raster(const Mask& m) {
  Raster2D r(m.width(), m.height());
  for (std::size_t i = 0; i < m.size(); ++i) r[i] = m[i] ? 1.0 : 0.0;
  return r;
}

// Phase relative to its most frequent value among pixels above the
// amplitude floor; dimmer pixels are set to zero.
Raster2D referenced_phase(const ComplexView& v, double floor_fraction) {
  const Raster2D amp = v.amplitude(), phase = v.phase();
  const double peak = *std::max_element(amp.values().begin(), amp.values().end());
  const double floor = floor_fraction * peak;
  constexpr int kBins = 64;
  std::vector<std::size_t> hist(kBins, 0);
  auto bin_of = [&](double phi) {
    const int b = static_cast<int>(std::floor((phi + std::numbers::pi) / (2.0 * std::numbers::pi) * kBins));
    return std::clamp(b, 0, kBins - 1);
  };
  for (std::size_t i = 0; i < amp.size(); ++i) {
    if (amp[i] > floor) ++hist[bin_of(phase[i])];
  }
  const int mode = static_cast<int>(std::max_element(hist.begin(), hist.end()) - hist.begin());
  // Circular mean of the mode bin's members refines the origin.
  std::complex<double> acc{};
  for (std::size_t i = 0; i < amp.size(); ++i) {
    if (amp[i] > floor && bin_of(phase[i]) == mode) acc += std::polar(1.0, phase[i]);
  }
  const double origin = std::arg(acc);
  // Dark pixels sit at -pi, away from the dominant level at 0, so the edges
  // of the dominant structure stay visible.
  Raster2D out(amp.width(), amp.height());
  for (std::size_t i = 0; i < amp.size(); ++i) {
    out[i] = amp[i] > floor ? wrap_phase(phase[i] - origin) : -std::numbers::pi;
  }
  return out;
}

std::pair<DisparityMap, DisparityMap> match_pair(const Raster2D& left, const Raster2D& right,
                                                 const DisparityStageConfig& dc,
                                                 const Raster2D* gate_left = nullptr,
                                                 const Raster2D* gate_right = nullptr) {
  DisparityMap l = compute_disparity(left, right, Side::kLeft, dc.match);
  DisparityMap r = compute_disparity(right, left, Side::kRight, dc.match);
  if (gate_left && gate_right) {
    for (std::size_t i = 0; i < l.valid.size(); ++i) {
      if ((*gate_left)[i] < dc.min_gradient) l.valid[i] = 0;
      if ((*gate_right)[i] < dc.min_gradient) r.valid[i] = 0;
    }
  }
  return cross_consistency(l, r, dc.consistency_tol);
}

void record_disparity(Recorder& rec, const StoredDisparity& d, const fs::path& base) {
  write_disparity(d, base);
  rec.add("disparity", raster_with_mask_paths(base, ".valid"));
}

// Horizontal Sobel response scaled by its largest magnitude, sign kept so
// rising and falling edges do not match each other.
Raster2D signed_gradient(const Raster2D& img) {
  Raster2D g = sobel_x(img);
  double peak = 0.0;
  for (double v : g.values()) peak = std::max(peak, std::abs(v));
  if (peak > 0.0) {
    for (auto& v : g.values()) v /= peak;
  }
  return g;
}

std::vector<ManifestEntry> stage_disparity(const PipelineConfig& cfg) {
  const fs::path& out = cfg.output_dir;
  fs::create_directories(out / "disparity");
  Recorder rec(out, Stage::kDisparity);
  const ComplexView left = read_complex_view(out / layout::kAlignedLeft);
  const ComplexView right = read_complex_view(out / layout::kAlignedRight);
  const auto& dc = cfg.disparity;
  const auto& pp = cfg.preprocess.preproc;
  const int f = pp.resize_factor;
  const CropBox box = content_box({left.amplitude(), right.amplitude()}, dc.crop_level, dc.crop_margin);
  const ViewFrame frame =
      ViewFrame::from_grid(object_grid(cfg.geometry)).crop_resized(box.x0, box.y0, f);
  ComplexView cl = left, cr = right;
  cl.field = crop(left.field, box);
  cr.field = crop(right.field, box);

  if (cfg.mode == PipelineMode::kAmplitude) {
    const int search = dc.match.search;
    const Mask bl0 = binarize_view(cl, pp.threshold_left, pp);
    const Mask br0 = binarize_view(cr, pp.threshold_right, pp);
    const Mask bl = binarize_view(cl, pp.threshold_left, pp, &br0, search);
    const Mask br = binarize_view(cr, pp.threshold_right, pp, &bl0, search);
    write_mask(bl, out / "disparity/binary_left");
    rec.add("aux", raster_paths(out / "disparity/binary_left"));
    write_mask(br, out / "disparity/binary_right");
    rec.add("aux", raster_paths(out / "disparity/binary_right"));
    auto [ml, mr] = match_pair(to_raster(bl), to_raster(br), dc);
    record_disparity(rec, {ml, frame}, out / layout::kMapLeft);
    record_disparity(rec, {mr, frame}, out / layout::kMapRight);
    return rec.entries();
  }

  const double floor = cfg.depth.amplitude_floor;
  const Raster2D gl = resize_bicubic(referenced_phase(cl, floor), f);
  const Raster2D gr = resize_bicubic(referenced_phase(cr, floor), f);
  const Raster2D al = resize_bicubic(cl.amplitude(), f);
  const Raster2D ar = resize_bicubic(cr.amplitude(), f);
  const Raster2D dl = gradient_view(gl), dr = gradient_view(gr);
  for (const auto& [name, r] : {std::pair{"grey_left", &gl}, std::pair{"grey_right", &gr},
                                std::pair{"amplitude_left", &al}, std::pair{"amplitude_right", &ar}}) {
    write_raster(*r, out / "disparity" / name);
    rec.add("aux", raster_paths(out / "disparity" / name));
  }
  auto [ml, mr] = match_pair(gl, gr, dc, &dl, &dr);
  record_disparity(rec, {ml, frame}, out / layout::kMapLeft);
  record_disparity(rec, {mr, frame}, out / layout::kMapRight);
  auto [gml, gmr] = match_pair(signed_gradient(gl), signed_gradient(gr), dc, &dl, &dr);
  record_disparity(rec, {gml, frame}, out / layout::kGradMapLeft);
  record_disparity(rec, {gmr, frame}, out / layout::kGradMapRight);
  return rec.entries();
}

// ------------------------------------------------------------------- depth

class Report {
 public:
  template <typename T>
  void add(const std::string& key, const T& value) {
    std::ostringstream os;
    if constexpr (std::is_floating_point_v<T>) {
      os << format_double(value);
    } else {
      os << value;
    }
    lines_ << key << ' ' << os.str() << '\n';
  }
  std::string str() const { return lines_.str(); }

 private:
  std::ostringstream lines_;
};

Eigen::Vector3d centroid(const PointCloud& c) {
  Eigen::Vector3d m = Eigen::Vector3d::Zero();
  for (const auto& p : c.points) m += p;
  return c.empty() ? m : Eigen::Vector3d(m / static_cast<double>(c.size()));
}

void report_plane(Report& rep, int j, const FittedPlane& plane, std::size_t points,
                  const Eigen::Vector3d& at) {
  const std::string key = "plane_" + std::to_string(j) + "_";
  rep.add(key + "depth_m", plane.z_at(at.x(), at.y()));
  rep.add(key + "normal", format_double(plane.normal.x()) + " " + format_double(plane.normal.y()) +
                              " " + format_double(plane.normal.z()));
  rep.add(key + "rms_m", plane.rms);
  rep.add(key + "points", points);
}

void write_surface(Recorder& rec, const HeightField& h, const fs::path& dir, const std::string& name) {
  write_mesh(h, dir / (name + ".obj"));
  rec.add("surface", {dir / (name + ".obj")});
  write_height_field(h, dir / name);
  rec.add("aux", raster_with_mask_paths(dir / name, ".defined"));
}

std::vector<ManifestEntry> stage_depth(const PipelineConfig& cfg) {
  const fs::path& out = cfg.output_dir;
  fs::create_directories(out / "depth");
  Recorder rec(out, Stage::kDepth);
  const StereoGeometry& g = cfg.geometry;
  const auto& dc = cfg.depth;
  const double pitch = object_pixel_pitch(g);
  const double axial = g.axial_voxel(pitch);
  const double lateral_tol = dc.lateral_tol * pitch, axial_tol = dc.axial_tol * axial;
  const int f = cfg.preprocess.preproc.resize_factor;

  Report rep;
  rep.add("mode", cfg.mode == PipelineMode::kAmplitude ? "amplitude" : "phase");
  rep.add("lateral_voxel_m", pitch);
  rep.add("axial_voxel_m", axial);

  const StoredDisparity ml = read_disparity(out / layout::kMapLeft);
  const StoredDisparity mr = read_disparity(out / layout::kMapRight);
  PointCloud raw = cloud_from_disparities(ml.map, mr.map, g, ml.frame);
  PointCloud matched = match_clouds(raw, lateral_tol, axial_tol);
  if (cfg.mode == PipelineMode::kPhase) {
    const StoredDisparity gl = read_disparity(out / layout::kGradMapLeft);
    const StoredDisparity gr = read_disparity(out / layout::kGradMapRight);
    const PointCloud graw = cloud_from_disparities(gl.map, gr.map, g, gl.frame);
    raw.append(graw);
    matched.append(match_clouds(graw, lateral_tol, axial_tol));
  }
  rep.add("points_raw", raw.size());
  rep.add("points_consistent", matched.size());
  if (cfg.mode == PipelineMode::kAmplitude) {
    if (matched.size() <= static_cast<std::size_t>(dc.outliers.k)) {
      throw std::runtime_error("too few consistent points (" + std::to_string(matched.size()) +
                               ") for outlier removal with k = " + std::to_string(dc.outliers.k));
    }
    PointCloud cleaned = remove_outliers(matched, dc.outliers);
    rep.add("outlier_k", dc.outliers.k);
    rep.add("outlier_t", dc.outliers.t);
    rep.add("points_after_outliers", cleaned.size());
    rep.add("points_removed_outliers", matched.size() - cleaned.size());
    const Eigen::Vector3d center = centroid(cleaned);
    const ProjectedView pl{read_mask(out / "disparity/binary_left"), ml.frame,
                           signed_angle(g, Side::kLeft)};
    const ProjectedView pr{read_mask(out / "disparity/binary_right"), mr.frame,
                           signed_angle(g, Side::kRight)};
    label_from_background(cleaned, pl, pr, 4 * f);
    std::array<std::vector<std::size_t>, 2> members;
    for (std::size_t i = 0; i < cleaned.size(); ++i) {
      const int s = cleaned.structure[i];
      if (s == 0 || s == 1) members[s].push_back(i);
    }
    std::array<FittedPlane, 2> planes;
    for (int j = 0; j < 2; ++j) {
      if (members[j].size() < 3) {
        throw std::runtime_error("structure " + std::to_string(j) + " has too few points");
      }
      planes[j] = fit_plane_robust(cleaned.subset(members[j]), axial);
    }
    rep.add("structures", 2);
    for (int j = 0; j < 2; ++j) report_plane(rep, j, planes[j], members[j].size(), center);
    rep.add("interplane_distance_m",
            planes[1].z_at(center.x(), center.y()) - planes[0].z_at(center.x(), center.y()));

    write_pointcloud(cleaned, out / layout::kCloud);
    rec.add("cloud", {out / layout::kCloud});
    const PointCloud framed = add_frame(cleaned, planes[0], dc.frame_thickness, pitch);
    const HeightField surface =
        carve_empty(interpolate_surface(framed, pitch), {pl, pr}, dc.carve_radius);
    write_surface(rec, surface, out / "depth", "surface");
    rep.add("surface_nodes_total", surface.defined_count());
  } else {
    std::array<PhaseView, 2> views;
    const char* names[2] = {"left", "right"};
    for (int k = 0; k < 2; ++k) {
      views[k].phase = read_raster(out / "disparity" / (std::string("grey_") + names[k]));
      views[k].amplitude = read_raster(out / "disparity" / (std::string("amplitude_") + names[k]));
      views[k].frame = ml.frame;
      views[k].signed_theta = signed_angle(g, k == 0 ? Side::kLeft : Side::kRight);
    }
    PhaseAssemblyConfig pac;
    pac.phase_bins = dc.phase_bins;
    pac.min_component = static_cast<std::size_t>(cfg.preprocess.preproc.min_region) * f * f;
    pac.amplitude_floor = dc.amplitude_floor;
    pac.expected_structures = dc.expected_structures;
    pac.frame_thickness = dc.frame_thickness;
    pac.carve_radius = dc.carve_radius;
    pac.lattice_pitch = pitch;
    // Structure planes reject the outliers here: edge points of a raised
    // structure are too sparse for the neighbour-distance test.
    const auto structures = assemble_phase_structures(matched, views, g, pac);
    PointCloud labelled;
    for (const auto& st : structures) labelled.append(st.cloud);
    rep.add("points_after_outliers", labelled.size());
    rep.add("points_removed_outliers", matched.size() - labelled.size());
    rep.add("structures", structures.size());
    const Eigen::Vector3d center = centroid(labelled);
    std::size_t nodes = 0;
    for (std::size_t j = 0; j < structures.size(); ++j) {
      report_plane(rep, static_cast<int>(j), structures[j].plane, structures[j].cloud.size(), center);
    }
    if (structures.size() >= 2) {
      rep.add("interplane_distance_m", structures[1].plane.z_at(center.x(), center.y()) -
                                           structures[0].plane.z_at(center.x(), center.y()));
    }
    write_pointcloud(labelled, out / layout::kCloud);
    rec.add("cloud", {out / layout::kCloud});
    for (std::size_t j = 0; j < structures.size(); ++j) {
      write_surface(rec, structures[j].surface, out / "depth", "surface_" + std::to_string(j));
      rep.add("surface_" + std::to_string(j) + "_nodes", structures[j].surface.defined_count());
      nodes += structures[j].surface.defined_count();
    }
    rep.add("surface_nodes_total", nodes);
  }
  write_text(out / layout::kReport, rep.str());
  rec.add("report", {out / layout::kReport});
  return rec.entries();
}

std::vector<ManifestEntry> dispatch(const PipelineConfig& cfg, Stage stage) {
  switch (stage) {
    case Stage::kSimulate: return stage_simulate(cfg);
    case Stage::kPreprocess: return stage_preprocess(cfg);
    case Stage::kRetrieve: return stage_retrieve(cfg);
    case Stage::kRectify: return stage_rectify(cfg);
    case Stage::kDisparity: return stage_disparity(cfg);
    case Stage::kDepth: return stage_depth(cfg);
  }
  throw std::logic_error("unknown stage");
}

void write_manifest(const Manifest& m, const fs::path& path) {
  write_text(path, m.to_json().dump(2) + "\n");
}

std::vector<ManifestEntry> run_and_record(const PipelineConfig& cfg, Stage stage,
                                          Manifest& manifest) {
  std::vector<ManifestEntry> produced;
  try {
    fs::create_directories(cfg.output_dir);
    produced = dispatch(cfg, stage);
  } catch (const std::exception& e) {
    throw StageError(to_string(stage), e.what());
  }
  manifest.seed = cfg.seed;
  manifest.merge(stage, produced);
  write_manifest(manifest, cfg.output_dir / layout::kManifest);
  return produced;
}

}  // namespace

const char* to_string(Stage s) { return kStageNames[static_cast<int>(s)]; }

Stage parse_stage(const std::string& name) {
  for (Stage s : kAllStages) {
    if (name == to_string(s)) return s;
  }
  throw ValidationError("unknown stage '" + name + "'");
}

std::uint64_t stage_seed(std::uint64_t seed, Stage s) {
  return splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(s) + 1));
}

std::string sha256_files(const std::vector<fs::path>& files) {
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
    EVP_MD_CTX_free(ctx);
    throw std::runtime_error("sha256: digest initialisation failed");
  }
  std::vector<char> buf(1 << 16);
  for (const auto& f : files) {
    std::ifstream in(f, std::ios::binary);
    if (!in) {
      EVP_MD_CTX_free(ctx);
      throw std::runtime_error("sha256: cannot open " + f.string());
    }
    while (in) {
      in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
      EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(in.gcount()));
    }
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) {
    os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  }
  return os.str();
}

void Manifest::merge(Stage stage, const std::vector<ManifestEntry>& produced) {
  std::erase_if(entries, [&](const ManifestEntry& e) { return e.stage == stage; });
  entries.insert(entries.end(), produced.begin(), produced.end());
  std::stable_sort(entries.begin(), entries.end(), [](const ManifestEntry& a, const ManifestEntry& b) {
    return static_cast<int>(a.stage) < static_cast<int>(b.stage);
  });
}

std::size_t Manifest::count(const std::string& kind) const {
  return static_cast<std::size_t>(std::count_if(
      entries.begin(), entries.end(), [&](const ManifestEntry& e) { return e.kind == kind; }));
}

json Manifest::to_json() const {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["seed"] = seed;
  j["entries"] = json::array();
  for (const auto& e : entries) {
    j["entries"].push_back(
        {{"stage", to_string(e.stage)}, {"kind", e.kind}, {"path", e.path}, {"sha256", e.sha256}});
  }
  return j;
}

Manifest Manifest::from_json(const json& j) {
  Manifest m;
  m.seed = j.at("seed").get<std::uint64_t>();
  for (const auto& e : j.at("entries")) {
    m.entries.push_back({parse_stage(e.at("stage").get<std::string>()), e.at("kind").get<std::string>(),
                         e.at("path").get<std::string>(), e.at("sha256").get<std::string>()});
  }
  return m;
}

Manifest read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest " + path.string());
  return Manifest::from_json(json::parse(in));
}

// ------------------------------------------------------------------ config

void PipelineConfig::validate() const {
  require(schema_version == kSchemaVersion,
          "schema_version " + std::to_string(schema_version) + " is not supported (expected " +
              std::to_string(kSchemaVersion) + ")");
  require(!output_dir.empty(), "output_dir must be set");
  validated("geometry", [&] { geometry.validate(); });

  const auto& s = simulate;
  if (s.enabled) {
    require(s.photons_total > 0.0, "simulate.photons_total must be > 0");
    require(s.short_exposure > 0.0 && s.long_exposure > 0.0, "simulate exposures must be > 0");
    require(s.short_exposure <= s.long_exposure, "simulate.short_exposure exceeds long_exposure");
    require(s.saturation_level > 0.0, "simulate.saturation_level must be > 0");
    require(std::isfinite(s.misalign_rotation_deg) && std::isfinite(s.misalign_dy_px),
            "simulate misalignment must be finite");
    require(s.sample.gap > 0.0 && s.sample.lid_offset >= 0.0, "simulate.sample: invalid gap/offset");
  } else {
    require(!inputs.composite_short.empty() && !inputs.composite_long.empty(),
            "inputs.composite_short and inputs.composite_long are required without simulation");
  }

  validated("preprocess", [&] { preprocess.preproc.validate(); });
  require(preprocess.separation_px >= 0, "preprocess.separation_px must be >= 0");
  require(preprocess.max_overlap >= 0.0 && preprocess.max_overlap <= 1.0,
          "preprocess.max_overlap must lie in [0, 1]");

  RetrievalConfig rc;
  rc.iterations = retrieve.iterations;
  rc.beta = retrieve.beta;
  rc.runs = retrieve.runs;
  rc.keep_best = retrieve.keep_best;
  rc.threads = retrieve.threads;
  rc.pixel_pitch = 1.0;
  validated("retrieve", [&] { rc.validate(geometry.roi_side, geometry.roi_side); });

  validated("disparity.match", [&] { disparity.match.validate(); });
  require(disparity.consistency_tol > 0.0, "disparity.consistency_tol must be > 0");
  require(disparity.crop_level > 0.0 && disparity.crop_level < 1.0,
          "disparity.crop_level must lie in (0, 1)");
  require(disparity.crop_margin >= 0, "disparity.crop_margin must be >= 0");
  require(disparity.min_gradient >= 0.0 && disparity.min_gradient < 1.0,
          "disparity.min_gradient must lie in [0, 1)");

  validated("depth.outliers", [&] { depth.outliers.validate(); });
  require(depth.frame_thickness >= 0, "depth.frame_thickness must be >= 0");
  require(depth.carve_radius >= 0.0, "depth.carve_radius must be >= 0");
  require(depth.lateral_tol > 0.0 && depth.axial_tol > 0.0, "depth tolerances must be > 0");
  require(depth.phase_bins >= 2, "depth.phase_bins must be >= 2");
  require(depth.amplitude_floor >= 0.0 && depth.amplitude_floor < 1.0,
          "depth.amplitude_floor must lie in [0, 1)");
  require(depth.expected_structures >= 1, "depth.expected_structures must be >= 1");

  std::vector<fs::path> paths{output_dir};
  for (const auto* p : {&inputs.composite_short, &inputs.composite_long, &inputs.reference_left,
                        &inputs.reference_right, &inputs.correspondences, &inputs.support_left,
                        &inputs.support_right}) {
    if (!p->empty()) paths.push_back(fs::absolute(*p).lexically_normal());
  }
  paths.front() = fs::absolute(output_dir).lexically_normal();
  std::set<fs::path> unique(paths.begin(), paths.end());
  require(unique.size() == paths.size(), "configured paths must be distinct");
}

void PipelineConfig::resolve_paths(const fs::path& base) {
  for (auto* p : {&output_dir, &inputs.composite_short, &inputs.composite_long,
                  &inputs.reference_left, &inputs.reference_right, &inputs.correspondences,
                  &inputs.support_left, &inputs.support_right}) {
    if (!p->empty() && p->is_relative()) *p = base / *p;
  }
}

PipelineConfig PipelineConfig::from_json(const json& j) {
  PipelineConfig c;
  ObjectReader top(j, "config");
  top.get("schema_version", c.schema_version);
  std::string mode = "amplitude";
  top.get("mode", mode);
  if (mode == "amplitude") {
    c.mode = PipelineMode::kAmplitude;
  } else if (mode == "phase") {
    c.mode = PipelineMode::kPhase;
  } else {
    throw ValidationError("config.mode must be 'amplitude' or 'phase'");
  }
  top.get("seed", c.seed);
  top.path("output_dir", c.output_dir);

  if (const json* g = top.child("geometry")) {
    ObjectReader r(*g, "geometry");
    double t1 = to_deg(c.geometry.theta1), t2 = to_deg(c.geometry.theta2);
    r.get("theta1_deg", t1);
    r.get("theta2_deg", t2);
    c.geometry.theta1 = deg_to_rad(t1);
    c.geometry.theta2 = deg_to_rad(t2);
    r.get("wavelength", c.geometry.wavelength);
    r.get("detector_distance", c.geometry.detector_distance);
    r.get("detector_pixel", c.geometry.detector_pixel);
    r.get("detector_side", c.geometry.detector_side);
    r.get("roi_side", c.geometry.roi_side);
    r.finish();
  }
  if (const json* s = top.child("simulate")) {
    ObjectReader r(*s, "simulate");
    auto& sim = c.simulate;
    r.get("enabled", sim.enabled);
    r.get("photons_total", sim.photons_total);
    r.get("short_exposure", sim.short_exposure);
    r.get("long_exposure", sim.long_exposure);
    r.get("saturation_level", sim.saturation_level);
    r.get("misalign_rotation_deg", sim.misalign_rotation_deg);
    r.get("misalign_dy_px", sim.misalign_dy_px);
    if (const json* p = r.child("sample")) {
      ObjectReader sr(*p, "simulate.sample");
      auto& sp = sim.sample;
      sr.get("width", sp.width);
      sr.get("height", sp.height);
      sr.get("arm_width", sp.arm_width);
      sr.get("gap", sp.gap);
      sr.get("bar_position", sp.bar_position);
      sr.get("lid_offset", sp.lid_offset);
      sr.get("window", sp.window);
      sr.get("window_notch", sp.window_notch);
      sr.get("membrane_amplitude", sp.membrane_amplitude);
      sr.get("membrane_phase", sp.membrane_phase);
      sr.get("lid_amplitude", sp.lid_amplitude);
      sr.get("lid_phase", sp.lid_phase);
      sr.finish();
    }
    r.finish();
  }
  if (const json* in = top.child("inputs")) {
    ObjectReader r(*in, "inputs");
    r.path("composite_short", c.inputs.composite_short);
    r.path("composite_long", c.inputs.composite_long);
    r.path("reference_left", c.inputs.reference_left);
    r.path("reference_right", c.inputs.reference_right);
    r.path("correspondences", c.inputs.correspondences);
    r.path("support_left", c.inputs.support_left);
    r.path("support_right", c.inputs.support_right);
    r.finish();
  }
  if (const json* p = top.child("preprocess")) {
    ObjectReader r(*p, "preprocess");
    auto& pp = c.preprocess.preproc;
    r.get("resize_factor", pp.resize_factor);
    r.get("smooth_sigma", pp.smooth_sigma);
    r.get("threshold_left", pp.threshold_left);
    r.get("threshold_right", pp.threshold_right);
    r.get("min_region", pp.min_region);
    r.get("stitch_sigma", pp.stitch_sigma);
    r.get("separation_px", c.preprocess.separation_px);
    r.get("max_overlap", c.preprocess.max_overlap);
    r.finish();
  }
  if (const json* p = top.child("retrieve")) {
    ObjectReader r(*p, "retrieve");
    r.get("iterations", c.retrieve.iterations);
    r.get("beta", c.retrieve.beta);
    r.get("runs", c.retrieve.runs);
    r.get("keep_best", c.retrieve.keep_best);
    r.get("threads", c.retrieve.threads);
    r.finish();
  }
  if (const json* p = top.child("disparity")) {
    ObjectReader r(*p, "disparity");
    auto& m = c.disparity.match;
    r.get("block", m.block);
    r.get("search", m.search);
    r.get("proximity_weight", m.proximity_weight);
    r.get("subpixel", m.subpixel);
    r.get("threads", m.threads);
    r.get("consistency_tol", c.disparity.consistency_tol);
    r.get("crop_level", c.disparity.crop_level);
    r.get("crop_margin", c.disparity.crop_margin);
    r.get("min_gradient", c.disparity.min_gradient);
    r.finish();
  }
  if (const json* p = top.child("depth")) {
    ObjectReader r(*p, "depth");
    auto& d = c.depth;
    r.get("outlier_k", d.outliers.k);
    r.get("outlier_t", d.outliers.t);
    r.get("frame_thickness", d.frame_thickness);
    r.get("carve_radius", d.carve_radius);
    r.get("lateral_tol", d.lateral_tol);
    r.get("axial_tol", d.axial_tol);
    r.get("phase_bins", d.phase_bins);
    r.get("amplitude_floor", d.amplitude_floor);
    r.get("expected_structures", d.expected_structures);
    r.finish();
  }
  top.finish();
  return c;
}

json PipelineConfig::to_json() const {
  const auto& sp = simulate.sample;
  const auto& pp = preprocess.preproc;
  const auto& m = disparity.match;
  return {
      {"schema_version", schema_version},
      {"mode", mode == PipelineMode::kAmplitude ? "amplitude" : "phase"},
      {"seed", seed},
      {"output_dir", output_dir.generic_string()},
      {"geometry",
       {{"theta1_deg", to_deg(geometry.theta1)},
        {"theta2_deg", to_deg(geometry.theta2)},
        {"wavelength", geometry.wavelength},
        {"detector_distance", geometry.detector_distance},
        {"detector_pixel", geometry.detector_pixel},
        {"detector_side", geometry.detector_side},
        {"roi_side", geometry.roi_side}}},
      {"simulate",
       {{"enabled", simulate.enabled},
        {"photons_total", simulate.photons_total},
        {"short_exposure", simulate.short_exposure},
        {"long_exposure", simulate.long_exposure},
        {"saturation_level", simulate.saturation_level},
        {"misalign_rotation_deg", simulate.misalign_rotation_deg},
        {"misalign_dy_px", simulate.misalign_dy_px},
        {"sample",
         {{"width", sp.width},
          {"height", sp.height},
          {"arm_width", sp.arm_width},
          {"gap", sp.gap},
          {"bar_position", sp.bar_position},
          {"lid_offset", sp.lid_offset},
          {"window", sp.window},
          {"window_notch", sp.window_notch},
          {"membrane_amplitude", sp.membrane_amplitude},
          {"membrane_phase", sp.membrane_phase},
          {"lid_amplitude", sp.lid_amplitude},
          {"lid_phase", sp.lid_phase}}}}},
      {"inputs",
       {{"composite_short", inputs.composite_short.generic_string()},
        {"composite_long", inputs.composite_long.generic_string()},
        {"reference_left", inputs.reference_left.generic_string()},
        {"reference_right", inputs.reference_right.generic_string()},
        {"correspondences", inputs.correspondences.generic_string()},
        {"support_left", inputs.support_left.generic_string()},
        {"support_right", inputs.support_right.generic_string()}}},
      {"preprocess",
       {{"resize_factor", pp.resize_factor},
        {"smooth_sigma", pp.smooth_sigma},
        {"threshold_left", pp.threshold_left},
        {"threshold_right", pp.threshold_right},
        {"min_region", pp.min_region},
        {"stitch_sigma", pp.stitch_sigma},
        {"separation_px", preprocess.separation_px},
        {"max_overlap", preprocess.max_overlap}}},
      {"retrieve",
       {{"iterations", retrieve.iterations},
        {"beta", retrieve.beta},
        {"runs", retrieve.runs},
        {"keep_best", retrieve.keep_best},
        {"threads", retrieve.threads}}},
      {"disparity",
       {{"block", m.block},
        {"search", m.search},
        {"proximity_weight", m.proximity_weight},
        {"subpixel", m.subpixel},
        {"threads", m.threads},
        {"consistency_tol", disparity.consistency_tol},
        {"crop_level", disparity.crop_level},
        {"crop_margin", disparity.crop_margin},
        {"min_gradient", disparity.min_gradient}}},
      {"depth",
       {{"outlier_k", depth.outliers.k},
        {"outlier_t", depth.outliers.t},
        {"frame_thickness", depth.frame_thickness},
        {"carve_radius", depth.carve_radius},
        {"lateral_tol", depth.lateral_tol},
        {"axial_tol", depth.axial_tol},
        {"phase_bins", depth.phase_bins},
        {"amplitude_floor", depth.amplitude_floor},
        {"expected_structures", depth.expected_structures}}},
  };
}

PipelineConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError("config " + path.string() + ": " + e.what());
  }
  PipelineConfig c = PipelineConfig::from_json(j);
  c.resolve_paths(path.parent_path());
  return c;
}

void check_stage_inputs(const PipelineConfig& cfg, Stage stage) {
  const fs::path& out = cfg.output_dir;
  const Sources src = sources(cfg);
  const std::string what = to_string(stage);
  switch (stage) {
    case Stage::kSimulate:
      require(cfg.simulate.enabled, "simulate: simulation is disabled in the config");
      break;
    case Stage::kPreprocess:
      require_files(frame_paths(src.composite_short), what);
      require_files(frame_paths(src.composite_long), what);
      break;
    case Stage::kRetrieve:
      require_files(raster_with_mask_paths(out / layout::kPatternLeft, ".valid"), what);
      require_files(raster_with_mask_paths(out / layout::kPatternRight, ".valid"), what);
      for (const auto& sup : src.support) {
        if (!sup.empty()) require_files(raster_paths(sup), what);
      }
      break;
    case Stage::kRectify:
      require_files(complex_paths(out / layout::kViewLeft), what);
      require_files(complex_paths(out / layout::kViewRight), what);
      for (const auto* ref : {&src.reference_left, &src.reference_right}) {
        if (!ref->empty()) require_files(complex_paths(*ref), what);
      }
      if (!src.correspondences.empty()) require_files({src.correspondences}, what);
      break;
    case Stage::kDisparity:
      require_files(complex_paths(out / layout::kAlignedLeft), what);
      require_files(complex_paths(out / layout::kAlignedRight), what);
      break;
    case Stage::kDepth:
      require_files(raster_with_mask_paths(out / layout::kMapLeft, ".valid"), what);
      require_files(raster_with_mask_paths(out / layout::kMapRight, ".valid"), what);
      if (cfg.mode == PipelineMode::kPhase) {
        require_files(raster_with_mask_paths(out / layout::kGradMapLeft, ".valid"), what);
        require_files(raster_with_mask_paths(out / layout::kGradMapRight, ".valid"), what);
      } else {
        require_files(raster_paths(out / "disparity/binary_left"), what);
        require_files(raster_paths(out / "disparity/binary_right"), what);
      }
      break;
  }
}

std::vector<ManifestEntry> run_stage(const PipelineConfig& cfg, Stage stage) {
  cfg.validate();
  check_stage_inputs(cfg, stage);
  Manifest manifest;
  const fs::path mpath = cfg.output_dir / layout::kManifest;
  if (fs::exists(mpath)) {
    try {
      manifest = read_manifest(mpath);
    } catch (const std::exception& e) {
      throw ValidationError(std::string("unreadable manifest: ") + e.what());
    }
  }
  return run_and_record(cfg, stage, manifest);
}

Manifest run_pipeline(const PipelineConfig& cfg) {
  cfg.validate();
  std::vector<Stage> stages;
  for (Stage s : kAllStages) {
    if (s != Stage::kSimulate || cfg.simulate.enabled) stages.push_back(s);
  }
  if (!cfg.simulate.enabled) {
    check_stage_inputs(cfg, Stage::kPreprocess);
    const Sources src = sources(cfg);
    for (const auto* ref : {&src.reference_left, &src.reference_right}) {
      if (!ref->empty()) require_files(complex_paths(*ref), "rectify");
    }
    if (!src.correspondences.empty()) require_files({src.correspondences}, "rectify");
    for (const auto& sup : src.support) {
      if (!sup.empty()) require_files(raster_paths(sup), "retrieve");
    }
  }
  Manifest manifest;
  fs::create_directories(cfg.output_dir);
  fs::remove(cfg.output_dir / layout::kManifest);
  for (Stage s : stages) run_and_record(cfg, s, manifest);
  return manifest;
}

// ------------------------------------------------------- stored disparity

void write_disparity(const StoredDisparity& d, const fs::path& base) {
  const auto& m = d.map;
  write_raster(m.values, base,
               {{"reference", m.reference == Side::kLeft ? "left" : "right"},
                {"frame_pitch", format_double(d.frame.pitch)},
                {"frame_origin_x", format_double(d.frame.origin_x)},
                {"frame_origin_y", format_double(d.frame.origin_y)},
                {"block", std::to_string(m.config.block)},
                {"search", std::to_string(m.config.search)},
                {"proximity_weight", format_double(m.config.proximity_weight)},
                {"subpixel", m.config.subpixel ? "1" : "0"}});
  write_mask(m.valid, suffixed(base, ".valid"));
}

StoredDisparity read_disparity(const fs::path& base) {
  HeaderExtras ex;
  StoredDisparity d;
  d.map.values = read_raster(base, &ex);
  d.map.valid = read_mask(suffixed(base, ".valid"));
  require_same_shape(d.map.values, d.map.valid, "read_disparity");
  auto get = [&](const char* key) {
    const auto it = ex.find(key);
    if (it == ex.end()) throw FormatError(base.string() + ": missing header key " + key);
    return it->second;
  };
  const std::string ref = get("reference");
  if (ref != "left" && ref != "right") throw FormatError(base.string() + ": bad reference " + ref);
  d.map.reference = ref == "left" ? Side::kLeft : Side::kRight;
  d.frame.pitch = std::stod(get("frame_pitch"));
  d.frame.origin_x = std::stod(get("frame_origin_x"));
  d.frame.origin_y = std::stod(get("frame_origin_y"));
  d.map.config.block = std::stoi(get("block"));
  d.map.config.search = std::stoi(get("search"));
  d.map.config.proximity_weight = std::stod(get("proximity_weight"));
  d.map.config.subpixel = get("subpixel") == "1";
  return d;
}

std::map<std::string, std::string> read_report(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open report " + path.string());
  std::map<std::string, std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    const auto sp = line.find(' ');
    if (sp == std::string::npos) continue;
    out[line.substr(0, sp)] = line.substr(sp + 1);
  }
  return out;
}

}  // namespace xstereo
