#include "xstereo/rectification.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <set>
#include <sstream>
#include <stdexcept>
#include <utility>

#include <Eigen/Dense>

#include "xstereo/imaging.hpp"

namespace xstereo {
namespace {

// Similarity moving the centroid to the origin with mean distance sqrt 2.
Eigen::Matrix3d normalizing_transform(const std::vector<Eigen::Vector2d>& pts) {
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  for (const auto& p : pts) mean += p;
  mean /= static_cast<double>(pts.size());
  double dist = 0.0;
  for (const auto& p : pts) dist += (p - mean).norm();
  dist /= static_cast<double>(pts.size());
  if (!(dist > 0.0)) throw std::invalid_argument("estimate_fundamental: coincident points");
  const double s = std::sqrt(2.0) / dist;
  Eigen::Matrix3d t;
  t << s, 0, -s * mean.x(), 0, s, -s * mean.y(), 0, 0, 1;
  return t;
}

std::pair<Eigen::Matrix3d, Eigen::Matrix3d> normalizers(const Correspondences& c) {
  std::vector<Eigen::Vector2d> l, r;
  for (const auto& p : c) {
    l.push_back(p.left);
    r.push_back(p.right);
  }
  return {normalizing_transform(l), normalizing_transform(r)};
}

Eigen::Matrix3d unit_norm_signed(Eigen::Matrix3d f) {
  f /= f.norm();
  double best = 0.0;
  for (int i = 0; i < 9; ++i) best = std::max(best, std::abs(f(i / 3, i % 3)));
  for (int i = 0; i < 9; ++i) {
    const double v = f(i / 3, i % 3);
    if (std::abs(v) >= best * (1.0 - 1e-9)) {
      if (v < 0.0) f = -f;
      break;
    }
  }
  return f;
}

double max_residual(const Eigen::Matrix3d& f, const Correspondences& c, const Eigen::Matrix3d& tl,
                    const Eigen::Matrix3d& tr) {
  double worst = 0.0;
  for (const auto& p : c) {
    const Eigen::Vector3d x1 = tl * p.left.homogeneous();
    const Eigen::Vector3d x2 = tr * p.right.homogeneous();
    worst = std::max(worst, std::abs(x2.dot(f * x1)));
  }
  return worst;
}

Eigen::Matrix3d cross_matrix(const Eigen::Vector3d& e) {
  Eigen::Matrix3d m;
  m << 0, -e.z(), e.y(), e.z(), 0, -e.x(), -e.y(), e.x(), 0;
  return m;
}

Eigen::Matrix3d translation(double tx, double ty) {
  Eigen::Matrix3d t = Eigen::Matrix3d::Identity();
  t(0, 2) = tx;
  t(1, 2) = ty;
  return t;
}

void require_outside(const Eigen::Vector3d& e, int width, int height, const char* which) {
  if (std::abs(e.z()) <= 1e-12 * e.head<2>().norm()) return;
  const double x = e.x() / e.z(), y = e.y() / e.z();
  if (x >= -0.5 && x <= width - 0.5 && y >= -0.5 && y <= height - 0.5) {
    throw std::invalid_argument(std::string("rectify: ") + which +
                                " epipole lies inside the image");
  }
}

}  // namespace

Correspondences read_correspondences(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open correspondence file " + path.string());
  Correspondences out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ss(line);
    double v[4];
    int n = 0;
    while (n < 4 && ss >> v[n]) ++n;
    if (n == 0 && ss.eof()) continue;
    std::string rest;
    if (n != 4 || (ss >> rest)) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) +
                               ": expected four numbers");
    }
    out.push_back({{v[0], v[1]}, {v[2], v[3]}});
  }
  return out;
}

void write_correspondences(const Correspondences& c, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "# x1 y1 x2 y2\n" << std::setprecision(17);
  for (const auto& p : c) {
    out << p.left.x() << ' ' << p.left.y() << ' ' << p.right.x() << ' ' << p.right.y() << '\n';
  }
}

FundamentalMatrix estimate_fundamental(const Correspondences& c) {
  if (c.size() < 8) {
    throw std::invalid_argument("estimate_fundamental: need at least 8 correspondences, got " +
                                std::to_string(c.size()));
  }
  std::set<std::pair<double, double>> seen;
  for (const auto& p : c) {
    if (!p.left.allFinite() || !p.right.allFinite()) {
      throw std::invalid_argument("estimate_fundamental: non-finite coordinate");
    }
    if (!seen.emplace(p.left.x(), p.left.y()).second) {
      throw std::invalid_argument("estimate_fundamental: duplicate left point");
    }
  }
  const auto [tl, tr] = normalizers(c);
  Eigen::MatrixXd a(static_cast<Eigen::Index>(c.size()), 9);
  for (std::size_t i = 0; i < c.size(); ++i) {
    const Eigen::Vector3d x1 = tl * c[i].left.homogeneous();
    const Eigen::Vector3d x2 = tr * c[i].right.homogeneous();
    for (int r = 0; r < 3; ++r) {
      for (int k = 0; k < 3; ++k) a(static_cast<Eigen::Index>(i), 3 * r + k) = x2(r) * x1(k);
    }
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  if (!(sv(7) > 0.0) || sv(0) / sv(7) > 1e12) {
    throw std::invalid_argument("estimate_fundamental: degenerate configuration");
  }
  const Eigen::VectorXd v = svd.matrixV().col(8);
  Eigen::Matrix3d f;
  f << v(0), v(1), v(2), v(3), v(4), v(5), v(6), v(7), v(8);
  Eigen::JacobiSVD<Eigen::Matrix3d> fs(f, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Vector3d s = fs.singularValues();
  s(2) = 0.0;
  f = fs.matrixU() * s.asDiagonal() * fs.matrixV().transpose();
  FundamentalMatrix out;
  out.matrix = unit_norm_signed(tr.transpose() * f * tl);
  return out;
}

double epipolar_residual(const FundamentalMatrix& f, const Correspondences& c) {
  const auto [tl, tr] = normalizers(c);
  const Eigen::Matrix3d fn = tr.inverse().transpose() * f.matrix * tl.inverse();
  return max_residual(fn / fn.norm(), c, tl, tr);
}

double epipolar_residual_pixels(const FundamentalMatrix& f, const Correspondences& c) {
  return max_residual(f.matrix, c, Eigen::Matrix3d::Identity(), Eigen::Matrix3d::Identity());
}

Eigen::Vector2d apply_homography(const Eigen::Matrix3d& h, const Eigen::Vector2d& p) {
  return (h * p.homogeneous()).hnormalized();
}

RectifyingWarps rectifying_warps(const FundamentalMatrix& f, const Correspondences& c, int width,
                                 int height) {
  if (c.size() < 3) throw std::invalid_argument("rectify: need correspondences for the x fit");
  const Eigen::Matrix3d& fm = f.matrix;
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(fm, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::Vector3d e_left = svd.matrixV().col(2);
  const Eigen::Vector3d e_right = svd.matrixU().col(2);
  require_outside(e_left, width, height, "left");
  require_outside(e_right, width, height, "right");

  const double cx = 0.5 * (width - 1), cy = 0.5 * (height - 1);
  const Eigen::Matrix3d t = translation(-cx, -cy);
  const Eigen::Vector3d et = t * e_right;
  // Minimal rotation bringing the epipole onto the x axis.
  const double angle = std::abs(et.x()) > 0.0 ? std::atan(et.y() / et.x())
                                              : (et.y() > 0 ? std::numbers::pi / 2 : -std::numbers::pi / 2);
  Eigen::Matrix3d r = Eigen::Matrix3d::Identity();
  r(0, 0) = std::cos(angle);
  r(0, 1) = std::sin(angle);
  r(1, 0) = -std::sin(angle);
  r(1, 1) = std::cos(angle);
  const Eigen::Vector3d er = r * et;
  Eigen::Matrix3d g = Eigen::Matrix3d::Identity();
  if (std::abs(er.z()) > 1e-12 * std::abs(er.x())) g(2, 0) = -er.z() / er.x();
  const Eigen::Matrix3d h_right = t.inverse() * g * r * t;

  const Eigen::Matrix3d m = cross_matrix(e_right) * fm + e_right * Eigen::RowVector3d::Ones();
  const Eigen::Matrix3d h0 = h_right * m;

  // x row of the left warp: least-squares fit to the original left x.
  Eigen::MatrixXd a(static_cast<Eigen::Index>(c.size()), 3);
  Eigen::VectorXd b(static_cast<Eigen::Index>(c.size()));
  for (std::size_t i = 0; i < c.size(); ++i) {
    const Eigen::Vector2d q = apply_homography(h0, c[i].left);
    a.row(static_cast<Eigen::Index>(i)) << q.x(), q.y(), 1.0;
    b(static_cast<Eigen::Index>(i)) = c[i].left.x();
  }
  const Eigen::Vector3d abc = a.colPivHouseholderQr().solve(b);
  Eigen::Matrix3d ha = Eigen::Matrix3d::Identity();
  ha.row(0) = abc.transpose();

  RectifyingWarps w;
  w.left = ha * h0;
  w.right = h_right;
  double dy = 0.0;
  for (const auto& p : c) dy += apply_homography(w.left, p.left).y() - p.left.y();
  dy /= static_cast<double>(c.size());
  const Eigen::Matrix3d shift = translation(0.0, -dy);
  w.left = shift * w.left;
  w.right = shift * w.right;
  w.left /= w.left(2, 2);
  w.right /= w.right(2, 2);
  for (const Eigen::Matrix3d* h : {&w.left, &w.right}) {
    if (!h->allFinite() || std::abs(h->block<2, 2>(0, 0).determinant()) < 1e-9) {
      throw std::invalid_argument("rectify: singular warp");
    }
  }
  return w;
}

Raster2D warp_image(const Raster2D& in, const Eigen::Matrix3d& h) {
  const Eigen::Matrix3d inv = h.inverse();
  Raster2D out(in.width(), in.height());
  out.pixel_pitch = in.pixel_pitch;
  for (int y = 0; y < in.height(); ++y) {
    for (int x = 0; x < in.width(); ++x) {
      const Eigen::Vector2d s = apply_homography(inv, Eigen::Vector2d(x, y));
      out(x, y) = sample_bilinear(in, s.x(), s.y(), false, 0.0);
    }
  }
  return out;
}

RectifiedPair rectify_pair(const Raster2D& left, const Raster2D& right,
                           const FundamentalMatrix& f, const Correspondences& c) {
  require_same_shape(left, right, "rectify_pair");
  RectifiedPair out;
  out.warps = rectifying_warps(f, c, left.width(), left.height());
  out.left = warp_image(left, out.warps.left);
  out.right = warp_image(right, out.warps.right);
  return out;
}

}  // namespace xstereo
