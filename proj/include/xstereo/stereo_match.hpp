#pragma once

#include <span>
#include <utility>

#include "xstereo/geometry.hpp"
#include "xstereo/grid.hpp"

namespace xstereo {

struct MatchConfig {
  int block = 3;
  int search = 65;
  double proximity_weight = 0.05;
  bool subpixel = true;
  /// Worker threads over rows; 0 picks hardware concurrency.
  int threads = 0;

  void validate() const;
};

/// Per-pixel offset to the matching pixel in the other image: the match of
/// reference pixel x lies at x + value. For a left-referenced map the
/// physical disparity x_left - x_right is therefore -value, for a
/// right-referenced map it is +value.
struct DisparityMap {
  Raster2D values;
  Mask valid;
  Side reference = Side::kLeft;
  MatchConfig config;

  std::size_t valid_count() const { return count_nonzero(valid); }
  /// x_left - x_right in pixels at a valid pixel.
  double physical(int x, int y) const {
    return reference == Side::kLeft ? -values(x, y) : values(x, y);
  }
};

/// Sum of absolute differences plus proximity_weight * |offset|.
double block_cost(std::span<const double> ref_block, std::span<const double> cand_block,
                  int offset, const MatchConfig& cfg);

/// Row-wise block matching. Pixels whose block leaves the image, whose block
/// is uniform (standard deviation below 1e-6) or whose block has identical
/// columns (no horizontal structure to match) are invalid.
DisparityMap compute_disparity(const Raster2D& ref_img, const Raster2D& other, Side reference,
                               const MatchConfig& cfg);

/// Left-right check: a pixel survives when the other map, read at its match
/// (rounded to the nearest column), points back within `tol`.
std::pair<DisparityMap, DisparityMap> cross_consistency(const DisparityMap& left_map,
                                                        const DisparityMap& right_map,
                                                        double tol = 1.0);

}  // namespace xstereo
