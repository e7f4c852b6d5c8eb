#include "xstereo/depth_recon.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include <Eigen/Eigenvalues>
#include <boost/geometry.hpp>
#include <boost/geometry/geometries/box.hpp>
#include <boost/geometry/geometries/point.hpp>
#include <boost/geometry/index/rtree.hpp>

#include "xstereo/delaunay.hpp"
#include "xstereo/imaging.hpp"

namespace xstereo {
namespace bg = boost::geometry;
namespace bgi = boost::geometry::index;

namespace {

using BPoint = bg::model::point<double, 3, bg::cs::cartesian>;
using BBox = bg::model::box<BPoint>;
using Entry = std::pair<BPoint, std::size_t>;
using RTree = bgi::rtree<Entry, bgi::rstar<16>>;

BPoint to_bpoint(const Eigen::Vector3d& p, const Eigen::Vector3d& scale = Eigen::Vector3d::Ones()) {
  return {p.x() / scale.x(), p.y() / scale.y(), p.z() / scale.z()};
}

}  // namespace

ViewFrame ViewFrame::from_grid(const ObjectGrid& grid) {
  grid.validate();
  return {grid.pixel_pitch, grid.coordinate(0), grid.coordinate(0)};
}

ViewFrame ViewFrame::crop_resized(int x0, int y0, int factor) const {
  if (factor < 1) throw std::invalid_argument("ViewFrame: factor must be >= 1");
  const double half = 0.5 / factor - 0.5;
  return {pitch / factor, x(x0 + half), y(y0 + half)};
}

Eigen::Vector2d ProjectedView::project(const Eigen::Vector3d& p) const {
  const double xv = p.x() + projection_shift(p.z(), signed_theta);
  return {frame.u(xv), frame.v(p.y())};
}

void OutlierParams::validate() const {
  if (k < 1) throw std::invalid_argument("OutlierParams: k must be >= 1");
  if (!(t > 0.0)) throw std::invalid_argument("OutlierParams: t must be > 0");
}

double FittedPlane::z_at(double x, double y) const {
  if (std::abs(normal.z()) < 1e-12) throw std::domain_error("FittedPlane: vertical plane");
  return (offset - normal.x() * x - normal.y() * y) / normal.z();
}

std::vector<std::size_t> FittedPlane::inliers(const PointCloud& c) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (std::abs(distance(c.points[i])) <= inlier_tol) out.push_back(i);
  }
  return out;
}

PointCloud cloud_from_disparities(const DisparityMap& left_map, const DisparityMap& right_map,
                                  const StereoGeometry& g, const ViewFrame& frame) {
  g.validate();
  if (!(frame.pitch > 0.0)) throw std::invalid_argument("cloud_from_disparities: pitch must be > 0");
  require_same_shape(left_map.values, right_map.values, "cloud_from_disparities");
  PointCloud cloud;
  for (const DisparityMap* map : {&left_map, &right_map}) {
    const Side side = map->reference;
    const PointSource src = side == Side::kLeft ? PointSource::kLeftMap : PointSource::kRightMap;
    for (int v = 0; v < map->values.height(); ++v) {
      for (int u = 0; u < map->values.width(); ++u) {
        if (!map->valid(u, v)) continue;
        const double z = depth_from_disparity(map->physical(u, v) * frame.pitch, g);
        const double x = correct_coordinate(frame.x(u), z, g.angle(side), side);
        cloud.push_back({x, frame.y(v), z}, src);
      }
    }
  }
  return cloud;
}

PointCloud cloud_from_disparities(const DisparityMap& left_map, const DisparityMap& right_map,
                                  const StereoGeometry& g, const ObjectGrid& grid) {
  return cloud_from_disparities(left_map, right_map, g, ViewFrame::from_grid(grid));
}

PointCloud match_clouds(const PointCloud& c, double lateral_tol, double axial_tol) {
  if (!(lateral_tol > 0.0) || !(axial_tol > 0.0)) {
    throw std::invalid_argument("match_clouds: tolerances must be > 0");
  }
  const Eigen::Vector3d scale(lateral_tol, lateral_tol, axial_tol);
  std::vector<Entry> left, right;
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (c.sources[i] == PointSource::kLeftMap) left.emplace_back(to_bpoint(c.points[i], scale), i);
    if (c.sources[i] == PointSource::kRightMap) right.emplace_back(to_bpoint(c.points[i], scale), i);
  }
  const RTree left_tree(left.begin(), left.end());
  const RTree right_tree(right.begin(), right.end());
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < c.size(); ++i) {
    const RTree* partner = nullptr;
    if (c.sources[i] == PointSource::kLeftMap) partner = &right_tree;
    if (c.sources[i] == PointSource::kRightMap) partner = &left_tree;
    if (!partner) {
      keep.push_back(i);
      continue;
    }
    const BPoint p = to_bpoint(c.points[i], scale);
    const BBox box({bg::get<0>(p) - 1, bg::get<1>(p) - 1, bg::get<2>(p) - 1},
                   {bg::get<0>(p) + 1, bg::get<1>(p) + 1, bg::get<2>(p) + 1});
    if (partner->qbegin(bgi::intersects(box)) != partner->qend()) keep.push_back(i);
  }
  return c.subset(keep);
}

std::vector<double> mean_neighbor_distances(const PointCloud& c, int k) {
  if (k < 1) throw std::invalid_argument("mean_neighbor_distances: k must be >= 1");
  if (c.size() <= static_cast<std::size_t>(k)) {
    throw std::invalid_argument("remove_outliers: cloud has " + std::to_string(c.size()) +
                                " points, need more than k = " + std::to_string(k));
  }
  std::vector<Entry> entries;
  entries.reserve(c.size());
  for (std::size_t i = 0; i < c.size(); ++i) entries.emplace_back(to_bpoint(c.points[i]), i);
  const RTree tree(entries.begin(), entries.end());
  std::vector<double> out(c.size());
  std::vector<double> d;
  for (std::size_t i = 0; i < c.size(); ++i) {
    d.clear();
    for (auto it = tree.qbegin(bgi::nearest(entries[i].first, static_cast<unsigned>(k + 1)));
         it != tree.qend(); ++it) {
      d.push_back((c.points[it->second] - c.points[i]).norm());
    }
    std::sort(d.begin(), d.end());
    // The query point itself is the first (zero-distance) neighbour.
    out[i] = std::accumulate(d.begin() + 1, d.end(), 0.0) / k;
  }
  return out;
}

PointCloud remove_outliers(const PointCloud& c, const OutlierParams& p) {
  p.validate();
  const std::vector<double> d = mean_neighbor_distances(c, p.k);
  const double n = static_cast<double>(d.size());
  const double mean = std::accumulate(d.begin(), d.end(), 0.0) / n;
  double var = 0.0;
  for (double v : d) var += (v - mean) * (v - mean);
  const double std_dev = n > 1 ? std::sqrt(var / (n - 1)) : 0.0;
  const double limit = mean + p.t * std_dev;
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d[i] <= limit) keep.push_back(i);
  }
  return c.subset(keep);
}

FittedPlane fit_plane(const PointCloud& c, double inlier_tol) {
  if (c.size() < 3) throw std::invalid_argument("fit_plane: need at least 3 points");
  Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
  for (const auto& p : c.points) centroid += p;
  centroid /= static_cast<double>(c.size());
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (const auto& p : c.points) cov += (p - centroid) * (p - centroid).transpose();
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
  const Eigen::Vector3d ev = eig.eigenvalues();
  if (!(ev(1) > 1e-12 * ev(2))) throw std::invalid_argument("fit_plane: collinear or degenerate cloud");
  FittedPlane plane;
  plane.normal = eig.eigenvectors().col(0).normalized();
  if (plane.normal.z() < 0.0) plane.normal = -plane.normal;
  plane.offset = plane.normal.dot(centroid);
  plane.inlier_tol = inlier_tol;
  double ss = 0.0;
  for (const auto& p : c.points) ss += std::pow(plane.distance(p), 2);
  plane.rms = std::sqrt(ss / static_cast<double>(c.size()));
  return plane;
}

FittedPlane fit_plane_robust(const PointCloud& c, double inlier_tol, int iterations) {
  FittedPlane plane = fit_plane(c, inlier_tol);
  std::vector<std::size_t> previous;
  for (int it = 0; it < iterations; ++it) {
    const std::vector<std::size_t> in = plane.inliers(c);
    if (in.size() < 3 || in == previous) break;
    plane = fit_plane(c.subset(in), inlier_tol);
    previous = in;
  }
  return plane;
}

LatticeBox lattice_box(const PointCloud& c, double pitch) {
  if (c.empty()) throw std::invalid_argument("lattice_box: empty cloud");
  if (!(pitch > 0.0)) throw std::invalid_argument("lattice_box: pitch must be > 0");
  double xmin = c.points[0].x(), xmax = xmin, ymin = c.points[0].y(), ymax = ymin;
  for (const auto& p : c.points) {
    xmin = std::min(xmin, p.x());
    xmax = std::max(xmax, p.x());
    ymin = std::min(ymin, p.y());
    ymax = std::max(ymax, p.y());
  }
  LatticeBox b;
  b.i0 = static_cast<int>(std::floor(xmin / pitch + 1e-9));
  b.i1 = static_cast<int>(std::ceil(xmax / pitch - 1e-9));
  b.j0 = static_cast<int>(std::floor(ymin / pitch + 1e-9));
  b.j1 = static_cast<int>(std::ceil(ymax / pitch - 1e-9));
  return b;
}

PointCloud add_frame(const PointCloud& c, const FittedPlane& plane, int thickness, double pitch) {
  if (thickness < 0) throw std::invalid_argument("add_frame: thickness must be >= 0");
  PointCloud out = c;
  if (thickness == 0) return out;
  const LatticeBox b = lattice_box(c, pitch);
  for (int j = b.j0 - thickness; j <= b.j1 + thickness; ++j) {
    for (int i = b.i0 - thickness; i <= b.i1 + thickness; ++i) {
      if (i >= b.i0 && i <= b.i1 && j >= b.j0 && j <= b.j1) continue;
      const double x = i * pitch, y = j * pitch;
      out.push_back({x, y, plane.z_at(x, y)}, PointSource::kFrame);
    }
  }
  return out;
}

HeightField interpolate_surface(const PointCloud& c, double pitch) {
  if (!(pitch > 0.0)) throw std::invalid_argument("interpolate_surface: pitch must be > 0");
  struct Acc {
    Eigen::Vector2d xy;
    double z = 0.0;
    int n = 0;
  };
  std::map<std::pair<long long, long long>, Acc> merged;
  const double quantum = pitch * 1e-6;
  for (const auto& p : c.points) {
    const std::pair<long long, long long> key{std::llround(p.x() / quantum),
                                              std::llround(p.y() / quantum)};
    Acc& a = merged[key];
    if (a.n == 0) a.xy = p.head<2>();
    a.z += p.z();
    ++a.n;
  }
  std::vector<Eigen::Vector2d> xy;
  std::vector<double> z;
  for (const auto& [key, a] : merged) {
    xy.push_back(a.xy);
    z.push_back(a.z / a.n);
  }
  const Delaunay2D tri(xy);
  const LatticeBox b = lattice_box(c, pitch);
  HeightField hf;
  hf.pitch = pitch;
  hf.origin_x = b.i0 * pitch;
  hf.origin_y = b.j0 * pitch;
  hf.z = Raster2D(b.width(), b.height());
  hf.defined = Mask(b.width(), b.height());
  for (int j = 0; j < b.height(); ++j) {
    for (int i = 0; i < b.width(); ++i) {
      const auto loc = tri.locate({hf.node_x(i), hf.node_y(j)});
      if (!loc) continue;
      double v = 0.0;
      for (int k = 0; k < 3; ++k) v += loc->weights(k) * z[loc->vertices[k]];
      hf.z(i, j) = v;
      hf.defined(i, j) = 1;
    }
  }
  return hf;
}

HeightField interpolate_surface(const PointCloud& c, const ObjectGrid& grid) {
  grid.validate();
  return interpolate_surface(c, grid.pixel_pitch);
}

HeightField carve_empty(const HeightField& surface, const std::vector<ProjectedView>& views,
                        double radius) {
  if (!(radius >= 0.0)) throw std::invalid_argument("carve_empty: radius must be >= 0");
  HeightField out = surface;
  if (views.empty()) return out;
  std::vector<Mask> near_empty;
  for (const auto& v : views) {
    if (!(v.frame.pitch > 0.0)) throw std::invalid_argument("carve_empty: view pitch must be > 0");
    near_empty.push_back(dilate_disc(v.mask, radius / v.frame.pitch));
  }
  for (int j = 0; j < out.height(); ++j) {
    for (int i = 0; i < out.width(); ++i) {
      if (!out.defined(i, j)) continue;
      const Eigen::Vector3d p(out.node_x(i), out.node_y(j), out.z(i, j));
      bool empty_everywhere = true;
      for (std::size_t k = 0; k < views.size() && empty_everywhere; ++k) {
        const Eigen::Vector2d uv = views[k].project(p);
        const long u = std::lround(uv.x()), v = std::lround(uv.y());
        empty_everywhere = near_empty[k].contains(static_cast<int>(u), static_cast<int>(v)) &&
                           near_empty[k](static_cast<int>(u), static_cast<int>(v));
      }
      if (empty_everywhere) {
        out.defined(i, j) = 0;
        out.z(i, j) = 0.0;
      }
    }
  }
  return out;
}

namespace {

// Background component id per pixel: 0 for components touching the border,
// 1 for the largest enclosed one, -1 otherwise (and on foreground).
Grid<int> background_classes(const Mask& view) {
  Mask background(view.width(), view.height());
  for (std::size_t i = 0; i < view.size(); ++i) background[i] = view[i] ? 0 : 1;
  const Components comps = label_components(background, 4);
  const int w = view.width(), h = view.height();
  std::vector<int> cls(comps.count(), -1);
  int largest = -1;
  for (std::size_t l = 0; l < comps.count(); ++l) {
    const bool border = comps.min_x[l] == 0 || comps.min_y[l] == 0 || comps.max_x[l] == w - 1 ||
                        comps.max_y[l] == h - 1;
    if (border) {
      cls[l] = 0;
    } else if (largest < 0 || comps.sizes[l] > comps.sizes[largest]) {
      largest = static_cast<int>(l);
    }
  }
  if (largest >= 0) cls[largest] = 1;
  Grid<int> out(w, h, -1);
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (comps.labels[i] >= 0) out[i] = cls[comps.labels[i]];
  }
  return out;
}

}  // namespace

void label_from_background(PointCloud& c, const ProjectedView& left, const ProjectedView& right,
                           int search) {
  const Grid<int> lcls = background_classes(left.mask);
  const Grid<int> rcls = background_classes(right.mask);
  for (std::size_t i = 0; i < c.size(); ++i) {
    const bool from_left = c.sources[i] == PointSource::kLeftMap;
    const bool from_right = c.sources[i] == PointSource::kRightMap;
    if (!from_left && !from_right) continue;
    const ProjectedView& view = from_left ? left : right;
    const Grid<int>& cls = from_left ? lcls : rcls;
    const Eigen::Vector2d uv = view.project(c.points[i]);
    const int u = static_cast<int>(std::lround(uv.x())), v = static_cast<int>(std::lround(uv.y()));
    c.structure[i] = -1;
    for (int d = 0; d <= search; ++d) {
      for (int s : {-d, d}) {
        if (!view.mask.contains(u + s, v) || view.mask(u + s, v)) continue;
        c.structure[i] = cls(u + s, v);
        d = search + 1;
        break;
      }
    }
  }
}

void PhaseAssemblyConfig::validate() const {
  if (phase_bins < 2) throw std::invalid_argument("PhaseAssemblyConfig: phase_bins must be >= 2");
  if (expected_structures < 1) {
    throw std::invalid_argument("PhaseAssemblyConfig: expected_structures must be >= 1");
  }
  if (frame_thickness < 0 || attach_radius < 0 || !(carve_radius >= 0.0) ||
      !(lattice_pitch > 0.0) || !(inlier_tol >= 0.0) || !(amplitude_floor >= 0.0)) {
    throw std::invalid_argument("PhaseAssemblyConfig: invalid parameter");
  }
}

namespace {

double circular_distance(double a, double b) { return std::abs(wrap_phase(a - b)); }

// Phase levels: maxima of a smoothed circular histogram of the given
// phases, at least pi / bins apart, at most `bins` of them, each holding at
// least `min_pixels` samples once every sample joins its nearest level.
std::vector<double> phase_levels(const std::vector<double>& phases, int bins,
                                 std::size_t min_pixels) {
  const int n = 16 * bins;
  const double width = 2.0 * std::numbers::pi / n;
  auto slot = [&](double phi) {
    const long b = std::lround((wrap_phase(phi) + std::numbers::pi) / width);
    return static_cast<int>(((b % n) + n) % n);
  };
  std::vector<double> hist(n, 0.0), smooth(n, 0.0);
  for (double phi : phases) hist[slot(phi)] += 1.0;
  for (int i = 0; i < n; ++i) {
    for (int k = -6; k <= 6; ++k) smooth[i] += hist[((i + k) % n + n) % n] * std::exp(-k * k / 8.0);
  }
  std::vector<int> peaks;
  for (int i = 0; i < n; ++i) {
    const double l = smooth[(i + n - 1) % n], r = smooth[(i + 1) % n];
    if (smooth[i] > l && smooth[i] >= r) peaks.push_back(i);
  }
  std::sort(peaks.begin(), peaks.end(), [&](int a, int b) { return smooth[a] > smooth[b]; });
  std::vector<double> levels;
  for (int i : peaks) {
    const double phi = -std::numbers::pi + i * width;
    const bool apart = std::all_of(levels.begin(), levels.end(), [&](double l) {
      return circular_distance(l, phi) >= std::numbers::pi / bins;
    });
    if (apart && static_cast<int>(levels.size()) < bins) levels.push_back(phi);
  }
  // Drop the weakest underpopulated level until every level is populated.
  for (;;) {
    std::vector<std::size_t> counts(levels.size(), 0);
    for (double phi : phases) {
      std::size_t best = 0;
      for (std::size_t k = 1; k < levels.size(); ++k) {
        if (circular_distance(levels[k], phi) < circular_distance(levels[best], phi)) best = k;
      }
      if (!levels.empty()) ++counts[best];
    }
    const auto weakest = std::min_element(counts.begin(), counts.end());
    if (weakest == counts.end() || *weakest >= min_pixels) break;
    levels.erase(levels.begin() + (weakest - counts.begin()));
  }
  return levels;
}

}  // namespace

Segmentation segment_phase(const PhaseView& v, const PhaseAssemblyConfig& cfg) {
  require_same_shape(v.phase, v.amplitude, "segment_phase");
  const int w = v.phase.width(), h = v.phase.height();
  double peak = 0.0;
  for (double a : v.amplitude.values()) peak = std::max(peak, a);
  std::vector<double> bright;
  for (std::size_t i = 0; i < v.phase.size(); ++i) {
    if (v.amplitude[i] >= cfg.amplitude_floor * peak) bright.push_back(v.phase[i]);
  }
  const std::vector<double> levels = phase_levels(bright, cfg.phase_bins, cfg.min_component);
  const int level_count = static_cast<int>(levels.size());
  Grid<int> bin(w, h, -1);
  for (std::size_t i = 0; i < bin.size() && level_count > 0; ++i) {
    if (v.amplitude[i] < cfg.amplitude_floor * peak) continue;
    int best = 0;
    for (int k = 1; k < level_count; ++k) {
      if (circular_distance(levels[k], v.phase[i]) < circular_distance(levels[best], v.phase[i])) {
        best = k;
      }
    }
    bin[i] = best;
  }

  struct Segment {
    int bin;
    std::vector<std::size_t> pixels;
  };
  std::vector<Segment> segments;
  for (int b = 0; b < level_count; ++b) {
    Mask m(w, h);
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = bin[i] == b;
    const Components comps = label_components(m, 8);
    std::vector<Segment> local(comps.count());
    for (std::size_t i = 0; i < m.size(); ++i) {
      const int l = comps.labels[i];
      if (l < 0 || comps.sizes[l] < cfg.min_component) continue;
      local[l].bin = b;
      local[l].pixels.push_back(i);
    }
    for (auto& s : local) {
      if (!s.pixels.empty()) segments.push_back(std::move(s));
    }
  }
  // Free space is the level with the brightest upper decile; means are
  // pulled down by blurred edges on thin regions.
  std::map<int, std::vector<double>> per_bin;
  for (const auto& seg : segments) {
    for (auto i : seg.pixels) per_bin[seg.bin].push_back(v.amplitude[i]);
  }
  int free_bin = -1;
  double brightest = -1.0;
  for (const auto& [b, amps] : per_bin) {
    const double upper = percentile(amps, 90.0);
    if (upper > brightest) {
      brightest = upper;
      free_bin = b;
    }
  }
  Segmentation out;
  out.labels = Grid<int>(w, h, -1);
  for (const auto& s : segments) {
    if (s.bin == free_bin && per_bin.size() > 1) continue;
    const int id = static_cast<int>(out.count());
    for (auto i : s.pixels) out.labels[i] = id;
    out.bin_of.push_back(s.bin);
    out.sizes.push_back(s.pixels.size());
  }
  return out;
}

namespace {

// Groups points around the k most populated depth levels: a histogram of z
// with bins of width `tol` is scanned for the densest three-bin window, the
// window's neighbourhood is suppressed and the search repeats. Points farther
// than 1.5 tol from every level stay unassigned (-1).
std::vector<int> cluster_depths(const PointCloud& c, int k, double tol) {
  double lo = c.points.front().z(), hi = lo;
  for (const auto& p : c.points) {
    lo = std::min(lo, p.z());
    hi = std::max(hi, p.z());
  }
  const int bins = static_cast<int>(std::floor((hi - lo) / tol)) + 1;
  std::vector<int> count(bins, 0);
  std::vector<double> sum(bins, 0.0);
  auto bin_of = [&](double z) { return std::min(bins - 1, static_cast<int>((z - lo) / tol)); };
  for (const auto& p : c.points) {
    ++count[bin_of(p.z())];
    sum[bin_of(p.z())] += p.z();
  }
  std::vector<char> taken(bins, 0);
  std::vector<double> levels;
  for (int j = 0; j < k; ++j) {
    int best = -1, best_n = 0;
    for (int b = 0; b < bins; ++b) {
      if (taken[b]) continue;
      int n = 0;
      for (int d = -1; d <= 1; ++d) {
        if (b + d >= 0 && b + d < bins && !taken[b + d]) n += count[b + d];
      }
      if (n > best_n) {
        best_n = n;
        best = b;
      }
    }
    if (best < 0) break;
    double zs = 0.0;
    for (int d = -1; d <= 1; ++d) {
      if (best + d >= 0 && best + d < bins && !taken[best + d]) zs += sum[best + d];
    }
    levels.push_back(zs / best_n);
    for (int d = -2; d <= 2; ++d) {
      if (best + d >= 0 && best + d < bins) taken[best + d] = 1;
    }
  }
  std::vector<int> assign(c.size(), -1);
  for (std::size_t i = 0; i < c.size(); ++i) {
    double best_d = 1.5 * tol;
    for (std::size_t j = 0; j < levels.size(); ++j) {
      const double d = std::abs(c.points[i].z() - levels[j]);
      if (d <= best_d) {
        best_d = d;
        assign[i] = static_cast<int>(j);
      }
    }
  }
  return assign;
}

}  // namespace

std::vector<StructureSurface> assemble_phase_structures(const PointCloud& cloud,
                                                        const std::array<PhaseView, 2>& views,
                                                        const StereoGeometry& g,
                                                        const PhaseAssemblyConfig& cfg) {
  cfg.validate();
  g.validate();
  const std::array<Segmentation, 2> seg{segment_phase(views[0], cfg), segment_phase(views[1], cfg)};
  for (const auto& s : seg) {
    if (static_cast<int>(s.count()) < cfg.expected_structures) {
      throw std::runtime_error("assemble_phase_structures: " + std::to_string(s.count()) +
                               " structures detected, " +
                               std::to_string(cfg.expected_structures) + " planes requested");
    }
  }
  const double tol = cfg.inlier_tol > 0.0 ? cfg.inlier_tol : g.axial_voxel(cfg.lattice_pitch);

  std::vector<std::size_t> data_idx;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (cloud.sources[i] == PointSource::kLeftMap || cloud.sources[i] == PointSource::kRightMap) {
      data_idx.push_back(i);
    }
  }
  const PointCloud data = cloud.subset(data_idx);
  const int k = cfg.expected_structures;
  if (data.size() < static_cast<std::size_t>(3 * k)) {
    throw std::runtime_error("assemble_phase_structures: too few points");
  }
  const std::vector<int> cluster = cluster_depths(data, k, tol);
  std::vector<FittedPlane> planes;
  for (int j = 0; j < k; ++j) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (cluster[i] == j) members.push_back(i);
    }
    if (members.size() < 3) {
      throw std::runtime_error("assemble_phase_structures: fewer depth levels than structures");
    }
    planes.push_back(fit_plane_robust(data.subset(members), tol));
  }
  std::sort(planes.begin(), planes.end(), [](const FittedPlane& a, const FittedPlane& b) {
    return a.offset / a.normal.z() < b.offset / b.normal.z();
  });

  // Partition: each point joins the nearest plane when within tolerance.
  std::vector<std::vector<std::size_t>> members(k);
  for (std::size_t i = 0; i < data.size(); ++i) {
    int best = -1;
    double best_d = tol;
    for (int j = 0; j < k; ++j) {
      const double d = std::abs(planes[j].distance(data.points[i]));
      if (d <= best_d) {
        best_d = d;
        best = j;
      }
    }
    if (best >= 0) members[best].push_back(i);
  }

  // Segments vote for the plane of the points attached to them.
  std::array<std::vector<std::vector<int>>, 2> votes;
  for (int s = 0; s < 2; ++s) {
    votes[s].assign(seg[s].count(), std::vector<int>(k, 0));
  }
  for (int j = 0; j < k; ++j) {
    for (auto i : members[j]) {
      const int s = data.sources[i] == PointSource::kLeftMap ? 0 : 1;
      ProjectedView pv{Mask(), views[s].frame, views[s].signed_theta};
      const Eigen::Vector2d uv = pv.project(data.points[i]);
      const int u = static_cast<int>(std::lround(uv.x())), v = static_cast<int>(std::lround(uv.y()));
      int label = -1;
      double best = std::numeric_limits<double>::infinity();
      for (int dy = -cfg.attach_radius; dy <= cfg.attach_radius; ++dy) {
        for (int dx = -cfg.attach_radius; dx <= cfg.attach_radius; ++dx) {
          if (!seg[s].labels.contains(u + dx, v + dy)) continue;
          const int l = seg[s].labels(u + dx, v + dy);
          const double d2 = dx * dx + dy * dy;
          if (l >= 0 && d2 < best) {
            best = d2;
            label = l;
          }
        }
      }
      if (label >= 0) ++votes[s][label][j];
    }
  }

  std::vector<StructureSurface> out;
  for (int j = 0; j < k; ++j) {
    StructureSurface st;
    st.plane = planes[j];
    st.plane.inlier_tol = tol;
    st.cloud = data.subset(members[j]);
    for (auto& id : st.cloud.structure) id = j;
    if (st.cloud.size() < 3) throw std::runtime_error("assemble_phase_structures: empty structure");
    const PointCloud framed = add_frame(st.cloud, st.plane, cfg.frame_thickness, cfg.lattice_pitch);
    st.surface = interpolate_surface(framed, cfg.lattice_pitch);
    std::vector<ProjectedView> carve_views;
    for (int s = 0; s < 2; ++s) {
      ProjectedView pv;
      pv.frame = views[s].frame;
      pv.signed_theta = views[s].signed_theta;
      pv.mask = Mask(seg[s].labels.width(), seg[s].labels.height(), 1);
      for (std::size_t p = 0; p < pv.mask.size(); ++p) {
        const int l = seg[s].labels[p];
        if (l < 0) continue;
        const auto& vl = votes[s][l];
        const int owner = static_cast<int>(std::max_element(vl.begin(), vl.end()) - vl.begin());
        if (vl[owner] > 0 && owner == j) pv.mask[p] = 0;
      }
      carve_views.push_back(std::move(pv));
    }
    st.surface = carve_empty(st.surface, carve_views, cfg.carve_radius);
    out.push_back(std::move(st));
  }
  return out;
}

}  // namespace xstereo
