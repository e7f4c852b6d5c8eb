#pragma once

#include <array>
#include <optional>
#include <vector>

#include <Eigen/Core>

namespace xstereo {

/// Incremental (Bowyer-Watson) Delaunay triangulation of planar points.
/// Input points must be distinct.
class Delaunay2D {
 public:
  explicit Delaunay2D(const std::vector<Eigen::Vector2d>& points);

  struct Location {
    std::array<int, 3> vertices;
    Eigen::Vector3d weights;  // barycentric, sums to 1
  };

  /// Triangle containing `p` with its barycentric weights, or nothing when
  /// `p` lies outside the convex hull.
  std::optional<Location> locate(const Eigen::Vector2d& p) const;

  /// Triangles between input points, counter-clockwise.
  std::vector<std::array<int, 3>> triangles() const;

 private:
  struct Tri {
    std::array<int, 3> v;
    std::array<int, 3> n;  // neighbour opposite v[k], -1 on the outer boundary
    bool alive = true;
  };

  Eigen::Vector2d normalized(const Eigen::Vector2d& p) const;
  int walk(const Eigen::Vector2d& q, int start) const;
  bool is_outer(const Tri& t) const;
  void insert(int vertex);

  std::vector<Eigen::Vector2d> pts_;  // normalized, followed by 3 outer vertices
  std::size_t n_input_ = 0;
  std::vector<Tri> tris_;
  Eigen::Vector2d shift_ = Eigen::Vector2d::Zero();
  double scale_ = 1.0;
  mutable int hint_ = 0;
};

}  // namespace xstereo
