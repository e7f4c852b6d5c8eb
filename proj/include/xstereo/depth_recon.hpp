#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "xstereo/geometry.hpp"
#include "xstereo/grid.hpp"
#include "xstereo/raster.hpp"
#include "xstereo/stereo_match.hpp"

namespace xstereo {

/// Metric placement of a view raster: pixel (u, v) sits at
/// (origin_x + u * pitch, origin_y + v * pitch).
struct ViewFrame {
  double pitch = 0.0;
  double origin_x = 0.0;
  double origin_y = 0.0;

  double x(double u) const { return origin_x + u * pitch; }
  double y(double v) const { return origin_y + v * pitch; }
  double u(double x) const { return (x - origin_x) / pitch; }
  double v(double y) const { return (y - origin_y) / pitch; }

  static ViewFrame from_grid(const ObjectGrid& grid);
  /// Frame of the window starting at pixel (x0, y0) of this frame,
  /// upsampled by `factor` with pixel-center alignment.
  ViewFrame crop_resized(int x0, int y0, int factor) const;
};

/// A binary or labelled view together with where it sits and the signed
/// beam angle it was seen under.
struct ProjectedView {
  Mask mask;
  ViewFrame frame;
  double signed_theta = 0.0;

  /// Pixel coordinates of the 3D point (x, y, z) in this view.
  Eigen::Vector2d project(const Eigen::Vector3d& p) const;
};

struct OutlierParams {
  int k = 80;
  double t = 0.1;

  void validate() const;
};

struct FittedPlane {
  Eigen::Vector3d normal = Eigen::Vector3d::UnitZ();
  double offset = 0.0;
  double inlier_tol = 0.0;
  double rms = 0.0;

  /// Signed distance normal . p - offset.
  double distance(const Eigen::Vector3d& p) const { return normal.dot(p) - offset; }
  /// Height of the plane above (x, y). Requires a non-vertical plane.
  double z_at(double x, double y) const;
  std::vector<std::size_t> inliers(const PointCloud& c) const;
};

/// Each valid pixel of each map becomes a point: z from the metric
/// disparity, x corrected with that map's beam angle, y unchanged.
PointCloud cloud_from_disparities(const DisparityMap& left_map, const DisparityMap& right_map,
                                  const StereoGeometry& g, const ViewFrame& frame);
PointCloud cloud_from_disparities(const DisparityMap& left_map, const DisparityMap& right_map,
                                  const StereoGeometry& g, const ObjectGrid& grid);

/// Keeps left-map points with a right-map point within `lateral_tol` in x
/// and y and `axial_tol` in z, and vice versa. Other sources pass through.
PointCloud match_clouds(const PointCloud& c, double lateral_tol, double axial_tol);

/// Mean distance from each point to its k nearest neighbours.
std::vector<double> mean_neighbor_distances(const PointCloud& c, int k);

/// Removes points whose mean k-neighbour distance exceeds the mean of those
/// distances plus t sample standard deviations.
PointCloud remove_outliers(const PointCloud& c, const OutlierParams& p);

/// Total-least-squares plane through the cloud (smallest principal axis of
/// the centered points, oriented with non-negative z component).
FittedPlane fit_plane(const PointCloud& c, double inlier_tol = 0.0);

/// Repeated fits on the points within `inlier_tol` of the previous plane.
FittedPlane fit_plane_robust(const PointCloud& c, double inlier_tol, int iterations = 5);

/// Lattice-aligned bounding box (node indices, node = index * pitch).
struct LatticeBox {
  int i0 = 0, i1 = -1, j0 = 0, j1 = -1;
  int width() const { return i1 - i0 + 1; }
  int height() const { return j1 - j0 + 1; }
};
LatticeBox lattice_box(const PointCloud& c, double pitch);

/// Appends a ring `thickness` nodes deep around the cloud's lattice bounding
/// box, lying in the plane and tagged as frame points.
PointCloud add_frame(const PointCloud& c, const FittedPlane& plane, int thickness, double pitch);

/// Linear interpolation over the Delaunay triangulation of the points' (x, y)
/// on the lattice covering the cloud. Coincident (x, y) samples are merged
/// by averaging z. Nodes outside the convex hull stay undefined.
HeightField interpolate_surface(const PointCloud& c, double pitch);
HeightField interpolate_surface(const PointCloud& c, const ObjectGrid& grid);

/// Removes nodes lying within `radius` of an empty pixel (mask != 0) in
/// every view. A node projecting outside a view is kept.
HeightField carve_empty(const HeightField& surface, const std::vector<ProjectedView>& views,
                        double radius);

/// Labels points of an amplitude reconstruction from the background
/// (mask == 0) components of each binary view: the component touching the
/// border is structure 0, the largest enclosed one structure 1. Each point is
/// looked up in the view of its source map by the nearest background pixel
/// on its row within `search` pixels.
void label_from_background(PointCloud& c, const ProjectedView& left, const ProjectedView& right,
                           int search);

struct PhaseAssemblyConfig {
  /// At most this many phase levels, at least pi / phase_bins apart.
  int phase_bins = 8;
  /// Minimum component size in view pixels.
  std::size_t min_component = 400;
  /// View pixels dimmer than this fraction of the amplitude maximum carry
  /// no phase.
  double amplitude_floor = 0.1;
  int expected_structures = 2;
  double inlier_tol = 0.0;
  int frame_thickness = 3;
  double carve_radius = 0.2e-6;
  double lattice_pitch = 0.0;
  /// Radius (view pixels) when attaching points to segments.
  int attach_radius = 3;

  void validate() const;
};

/// A phase view referenced to a common phase origin with its metric frame.
struct PhaseView {
  Raster2D phase;
  Raster2D amplitude;
  ViewFrame frame;
  double signed_theta = 0.0;
};

struct Segmentation {
  Grid<int> labels;  // -1 outside every kept component
  std::vector<int> bin_of;
  std::vector<std::size_t> sizes;
  std::size_t count() const { return sizes.size(); }
};

/// Quantizes the phase of bright pixels to the nearest of the levels found
/// as peaks of its histogram, keeps 8-connected components of at least
/// min_component pixels and drops the level whose upper-decile amplitude is
/// brightest (free space).
Segmentation segment_phase(const PhaseView& v, const PhaseAssemblyConfig& cfg);

struct StructureSurface {
  FittedPlane plane;
  PointCloud cloud;
  HeightField surface;
};

/// Segments both phase views, fits one plane per structure to the cloud
/// (seeded by the most populated depth levels, refined on inliers), partitions the cloud into
/// per-plane inlier clouds and interpolates and carves each one against the
/// pixels of the other segments. Planes are ordered by increasing depth.
std::vector<StructureSurface> assemble_phase_structures(const PointCloud& cloud,
                                                        const std::array<PhaseView, 2>& views,
                                                        const StereoGeometry& g,
                                                        const PhaseAssemblyConfig& cfg);

}  // namespace xstereo
