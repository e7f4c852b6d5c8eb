#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "xstereo/grid.hpp"

namespace xstereo {

/// A retrieved (or simulated) real-space exit wave on a square grid.
///
/// The field is stored as complex samples; amplitude and phase are derived on
/// demand. Phase is reported on the principal branch (-pi, pi].
struct ComplexView {
  ComplexRaster field;
  double pixel_pitch = 0.0;

  int width() const { return field.width(); }
  int height() const { return field.height(); }

  Raster2D amplitude() const;
  Raster2D phase() const;

  static ComplexView from_polar(const Raster2D& amplitude, const Raster2D& phase,
                                double pixel_pitch);
};

/// Wraps an angle to (-pi, pi].
double wrap_phase(double phi);

enum class PointSource : std::uint8_t {
  kLeftMap = 0,
  kRightMap = 1,
  kFrame = 2,
  kFittedSurface = 3,
};

const char* to_string(PointSource s);

/// Metric point cloud with per-point provenance. `structure` is -1 when the
/// point has not been assigned to a sample component.
struct PointCloud {
  std::vector<Eigen::Vector3d> points;
  std::vector<PointSource> sources;
  std::vector<int> structure;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }

  void push_back(const Eigen::Vector3d& p, PointSource src, int structure_id = -1) {
    points.push_back(p);
    sources.push_back(src);
    structure.push_back(structure_id);
  }
  void append(const PointCloud& other);
  PointCloud subset(const std::vector<std::size_t>& indices) const;
};

/// Height map z(x, y) on a regular lattice. Node (i, j) sits at
/// x = origin_x + i * pitch, y = origin_y + j * pitch. Undefined nodes carry
/// z = 0 and defined = 0.
struct HeightField {
  Raster2D z;
  Mask defined;
  double pitch = 0.0;
  double origin_x = 0.0;
  double origin_y = 0.0;

  int width() const { return z.width(); }
  int height() const { return z.height(); }
  double node_x(int i) const { return origin_x + i * pitch; }
  double node_y(int j) const { return origin_y + j * pitch; }
  std::size_t defined_count() const { return count_nonzero(defined); }
};

}  // namespace xstereo
