#include "xstereo/delaunay.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <stdexcept>

namespace xstereo {
namespace {

double orient(const Eigen::Vector2d& a, const Eigen::Vector2d& b, const Eigen::Vector2d& c) {
  return (b.x() - a.x()) * (c.y() - a.y()) - (b.y() - a.y()) * (c.x() - a.x());
}

// Positive when d lies strictly inside the circumcircle of ccw (a, b, c).
double incircle(const Eigen::Vector2d& a, const Eigen::Vector2d& b, const Eigen::Vector2d& c,
                const Eigen::Vector2d& d) {
  const double adx = a.x() - d.x(), ady = a.y() - d.y();
  const double bdx = b.x() - d.x(), bdy = b.y() - d.y();
  const double cdx = c.x() - d.x(), cdy = c.y() - d.y();
  const double ad = adx * adx + ady * ady, bd = bdx * bdx + bdy * bdy, cd = cdx * cdx + cdy * cdy;
  return adx * (bdy * cd - bd * cdy) - ady * (bdx * cd - bd * cdx) + ad * (bdx * cdy - bdy * cdx);
}

constexpr double kEps = 1e-13;

}  // namespace

Delaunay2D::Delaunay2D(const std::vector<Eigen::Vector2d>& points) : n_input_(points.size()) {
  if (points.size() < 3) throw std::invalid_argument("Delaunay2D: need at least 3 points");
  Eigen::Vector2d lo = points.front(), hi = points.front();
  for (const auto& p : points) {
    if (!p.allFinite()) throw std::invalid_argument("Delaunay2D: non-finite point");
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  scale_ = std::max(hi.x() - lo.x(), hi.y() - lo.y());
  if (!(scale_ > 0.0)) throw std::invalid_argument("Delaunay2D: degenerate point set");
  shift_ = lo;
  pts_.reserve(points.size() + 3);
  for (const auto& p : points) pts_.push_back(normalized(p));
  // Enclosing triangle far outside the unit square.
  pts_.emplace_back(-50.0, -50.0);
  pts_.emplace_back(150.0, -50.0);
  pts_.emplace_back(0.5, 150.0);
  const int o = static_cast<int>(n_input_);
  tris_.push_back({{o, o + 1, o + 2}, {-1, -1, -1}, true});
  for (int i = 0; i < o; ++i) insert(i);

  bool any = false;
  for (const auto& t : tris_) any = any || (t.alive && !is_outer(t));
  if (!any) throw std::invalid_argument("Delaunay2D: degenerate triangulation (collinear points)");
}

Eigen::Vector2d Delaunay2D::normalized(const Eigen::Vector2d& p) const {
  return (p - shift_) / scale_;
}

bool Delaunay2D::is_outer(const Tri& t) const {
  const int o = static_cast<int>(n_input_);
  return t.v[0] >= o || t.v[1] >= o || t.v[2] >= o;
}

int Delaunay2D::walk(const Eigen::Vector2d& q, int start) const {
  int t = start;
  if (t < 0 || t >= static_cast<int>(tris_.size()) || !tris_[t].alive) {
    t = 0;
    while (!tris_[t].alive) ++t;
  }
  const std::size_t limit = 4 * tris_.size() + 16;
  for (std::size_t step = 0; step < limit; ++step) {
    const Tri& tri = tris_[t];
    int next = -1;
    for (int k = 0; k < 3; ++k) {
      const Eigen::Vector2d& a = pts_[tri.v[(k + 1) % 3]];
      const Eigen::Vector2d& b = pts_[tri.v[(k + 2) % 3]];
      if (orient(a, b, q) < -kEps && tri.n[k] >= 0) {
        next = tri.n[k];
        break;
      }
    }
    if (next < 0) return t;
    t = next;
  }
  // Walk failed to converge under round-off; fall back to a scan.
  int best = -1;
  double best_margin = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < static_cast<int>(tris_.size()); ++i) {
    if (!tris_[i].alive) continue;
    double margin = std::numeric_limits<double>::infinity();
    for (int k = 0; k < 3; ++k) {
      margin = std::min(margin, orient(pts_[tris_[i].v[(k + 1) % 3]], pts_[tris_[i].v[(k + 2) % 3]], q));
    }
    if (margin > best_margin) {
      best_margin = margin;
      best = i;
    }
  }
  return best;
}

void Delaunay2D::insert(int vertex) {
  const Eigen::Vector2d& p = pts_[vertex];
  const int start = walk(p, hint_);

  std::vector<int> cavity{start};
  std::vector<char> in_cavity(tris_.size(), 0);
  in_cavity[start] = 1;
  for (std::size_t i = 0; i < cavity.size(); ++i) {
    const Tri& t = tris_[cavity[i]];
    for (int k = 0; k < 3; ++k) {
      const int nb = t.n[k];
      if (nb < 0 || in_cavity[nb]) continue;
      const Tri& u = tris_[nb];
      if (incircle(pts_[u.v[0]], pts_[u.v[1]], pts_[u.v[2]], p) > kEps) {
        in_cavity[nb] = 1;
        cavity.push_back(nb);
      }
    }
  }

  struct Edge {
    int a, b, outside;
  };
  std::vector<Edge> boundary;
  for (int ti : cavity) {
    const Tri& t = tris_[ti];
    for (int k = 0; k < 3; ++k) {
      const int nb = t.n[k];
      if (nb >= 0 && in_cavity[nb]) continue;
      boundary.push_back({t.v[(k + 1) % 3], t.v[(k + 2) % 3], nb});
    }
  }
  for (int ti : cavity) tris_[ti].alive = false;

  std::map<int, int> by_start, by_end;
  std::vector<int> created;
  for (const Edge& e : boundary) {
    const int id = static_cast<int>(tris_.size());
    tris_.push_back({{e.a, e.b, vertex}, {-1, -1, e.outside}, true});
    created.push_back(id);
    by_start[e.a] = id;
    by_end[e.b] = id;
    if (e.outside >= 0) {
      Tri& o = tris_[e.outside];
      for (int k = 0; k < 3; ++k) {
        const int oa = o.v[(k + 1) % 3], ob = o.v[(k + 2) % 3];
        if (oa == e.b && ob == e.a) o.n[k] = id;
      }
    }
  }
  for (int id : created) {
    Tri& t = tris_[id];
    // Opposite v[0] = a lies edge (b, p); opposite v[1] = b lies edge (p, a).
    t.n[0] = by_start.at(t.v[1]);
    t.n[1] = by_end.at(t.v[0]);
  }
  hint_ = created.front();
}

std::optional<Delaunay2D::Location> Delaunay2D::locate(const Eigen::Vector2d& p) const {
  const Eigen::Vector2d q = normalized(p);
  const int t = walk(q, hint_);
  if (t < 0) return std::nullopt;
  hint_ = t;
  auto inside = [&](int ti) -> std::optional<Location> {
    const Tri& tri = tris_[ti];
    if (!tri.alive || is_outer(tri)) return std::nullopt;
    const Eigen::Vector2d& a = pts_[tri.v[0]];
    const Eigen::Vector2d& b = pts_[tri.v[1]];
    const Eigen::Vector2d& c = pts_[tri.v[2]];
    const double area = orient(a, b, c);
    if (!(area > 0.0)) return std::nullopt;
    Eigen::Vector3d w(orient(b, c, q), orient(c, a, q), orient(a, b, q));
    if (w.minCoeff() < -1e-9 * area) return std::nullopt;
    w = w.cwiseMax(0.0);
    w /= w.sum();
    return Location{tri.v, w};
  };
  if (auto hit = inside(t)) return hit;
  // Points on the hull boundary may end the walk in an outer neighbour.
  for (int nb : tris_[t].n) {
    if (nb < 0) continue;
    if (auto hit = inside(nb)) return hit;
  }
  return std::nullopt;
}

std::vector<std::array<int, 3>> Delaunay2D::triangles() const {
  std::vector<std::array<int, 3>> out;
  for (const auto& t : tris_) {
    if (t.alive && !is_outer(t)) out.push_back(t.v);
  }
  return out;
}

}  // namespace xstereo
