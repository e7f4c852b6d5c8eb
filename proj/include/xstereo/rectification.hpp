#pragma once

#include <filesystem>
#include <vector>

#include <Eigen/Core>

#include "xstereo/grid.hpp"

namespace xstereo {

/// A manually or synthetically paired point, in pixel coordinates of the
/// left and right view.
struct Correspondence {
  Eigen::Vector2d left;
  Eigen::Vector2d right;
};

using Correspondences = std::vector<Correspondence>;

/// Plain text, one pair per line (x1 y1 x2 y2), '#' starts a comment.
Correspondences read_correspondences(const std::filesystem::path& path);
void write_correspondences(const Correspondences& c, const std::filesystem::path& path);

/// Rank-2 matrix with x_right^T F x_left = 0, unit Frobenius norm. The sign
/// is fixed so that the entry of largest magnitude (first in row-major order
/// among ties) is positive.
struct FundamentalMatrix {
  Eigen::Matrix3d matrix = Eigen::Matrix3d::Zero();
};

/// Normalized eight-point estimate. Throws for fewer than 8 pairs, repeated
/// left points, or a design matrix with condition number above 1e12.
FundamentalMatrix estimate_fundamental(const Correspondences& c);

/// Maximum |x2^T F x1| with both point sets and F expressed in the
/// normalized (centroid, mean distance sqrt 2) coordinates of `c`.
double epipolar_residual(const FundamentalMatrix& f, const Correspondences& c);

/// Maximum |x2^T F x1| in pixel coordinates.
double epipolar_residual_pixels(const FundamentalMatrix& f, const Correspondences& c);

struct RectifyingWarps {
  Eigen::Matrix3d left = Eigen::Matrix3d::Identity();
  Eigen::Matrix3d right = Eigen::Matrix3d::Identity();
};

/// Warps sending both epipoles to infinity along x. The right warp rotates
/// its epipole onto the x axis about the image center; the left warp is the
/// matched homography whose x row is fitted to the original left x
/// coordinates of the correspondences. A common translation keeps the mean
/// left position fixed. Throws when an epipole lies inside its image.
RectifyingWarps rectifying_warps(const FundamentalMatrix& f, const Correspondences& c,
                                 int width, int height);

Eigen::Vector2d apply_homography(const Eigen::Matrix3d& h, const Eigen::Vector2d& p);

struct RectifiedPair {
  Raster2D left;
  Raster2D right;
  RectifyingWarps warps;
};

/// Resamples both images through their warps (bilinear, zero outside).
RectifiedPair rectify_pair(const Raster2D& left, const Raster2D& right,
                           const FundamentalMatrix& f, const Correspondences& c);

/// Applies a homography to an image on the same lattice.
Raster2D warp_image(const Raster2D& in, const Eigen::Matrix3d& h);

}  // namespace xstereo
