#include "xstereo/stereo_match.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <thread>
#include <vector>

namespace xstereo {

void MatchConfig::validate() const {
  if (block < 3 || block % 2 == 0) throw std::invalid_argument("MatchConfig: block must be odd >= 3");
  if (search < 1) throw std::invalid_argument("MatchConfig: search must be >= 1");
  if (!(proximity_weight >= 0.0)) {
    throw std::invalid_argument("MatchConfig: proximity_weight must be >= 0");
  }
}

double block_cost(std::span<const double> ref_block, std::span<const double> cand_block,
                  int offset, const MatchConfig& cfg) {
  if (ref_block.size() != cand_block.size()) {
    throw std::invalid_argument("block_cost: block shapes differ");
  }
  double sad = 0.0;
  for (std::size_t i = 0; i < ref_block.size(); ++i) sad += std::abs(ref_block[i] - cand_block[i]);
  return sad + cfg.proximity_weight * std::abs(offset);
}

namespace {

bool matchable(const Raster2D& img, int x, int y, int r) {
  double sum = 0.0, sum2 = 0.0;
  bool columns_differ = false;
  const int n = (2 * r + 1) * (2 * r + 1);
  for (int dy = -r; dy <= r; ++dy) {
    const double first = img(x - r, y + dy);
    for (int dx = -r; dx <= r; ++dx) {
      const double v = img(x + dx, y + dy);
      sum += v;
      sum2 += v * v;
      if (v != first) columns_differ = true;
    }
  }
  const double mean = sum / n;
  const double var = std::max(0.0, sum2 / n - mean * mean);
  return columns_differ && std::sqrt(var) >= 1e-6;
}

void match_row(const Raster2D& ref, const Raster2D& other, int y, const MatchConfig& cfg,
               DisparityMap& out) {
  const int w = ref.width(), r = cfg.block / 2;
  std::vector<double> costs(2 * cfg.search + 1);
  for (int x = r; x < w - r; ++x) {
    if (!matchable(ref, x, y, r)) continue;
    int best = -1;
    double best_cost = std::numeric_limits<double>::infinity();
    for (int o = -cfg.search; o <= cfg.search; ++o) {
      const int k = o + cfg.search;
      costs[k] = std::numeric_limits<double>::infinity();
      const int cx = x + o;
      if (cx < r || cx >= w - r) continue;
      double sad = 0.0;
      for (int dy = -r; dy <= r; ++dy) {
        for (int dx = -r; dx <= r; ++dx) {
          sad += std::abs(ref(x + dx, y + dy) - other(cx + dx, y + dy));
        }
      }
      costs[k] = sad + cfg.proximity_weight * std::abs(o);
      if (costs[k] < best_cost) {
        best_cost = costs[k];
        best = k;
      }
    }
    if (best < 0) continue;
    double d = best - cfg.search;
    if (cfg.subpixel && best > 0 && best + 1 < static_cast<int>(costs.size()) &&
        std::isfinite(costs[best - 1]) && std::isfinite(costs[best + 1])) {
      const double cm = costs[best - 1], c0 = costs[best], cp = costs[best + 1];
      const double denom = cm - 2.0 * c0 + cp;
      if (denom > 0.0) d += std::clamp(0.5 * (cm - cp) / denom, -0.5, 0.5);
    }
    out.values(x, y) = d;
    out.valid(x, y) = 1;
  }
}

}  // namespace

DisparityMap compute_disparity(const Raster2D& ref_img, const Raster2D& other, Side reference,
                               const MatchConfig& cfg) {
  cfg.validate();
  require_same_shape(ref_img, other, "compute_disparity");
  if (ref_img.width() < cfg.block || ref_img.height() < cfg.block) {
    throw std::invalid_argument("compute_disparity: image smaller than the block");
  }
  DisparityMap out;
  out.values = Raster2D(ref_img.width(), ref_img.height());
  out.valid = Mask(ref_img.width(), ref_img.height());
  out.values.pixel_pitch = ref_img.pixel_pitch;
  out.reference = reference;
  out.config = cfg;

  const int r = cfg.block / 2;
  const int rows = ref_img.height() - 2 * r;
  int workers = cfg.threads > 0 ? cfg.threads
                                : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  workers = std::clamp(workers, 1, rows);
  std::atomic<int> next{r};
  auto work = [&] {
    for (int y = next++; y < ref_img.height() - r; y = next++) match_row(ref_img, other, y, cfg, out);
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < workers; ++t) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  return out;
}

namespace {

DisparityMap prune(const DisparityMap& map, const DisparityMap& partner, double tol) {
  DisparityMap out = map;
  const int w = map.values.width();
  for (int y = 0; y < map.values.height(); ++y) {
    for (int x = 0; x < w; ++x) {
      if (!map.valid(x, y)) continue;
      const long xm = std::lround(x + map.values(x, y));
      const bool ok = xm >= 0 && xm < w && partner.valid(static_cast<int>(xm), y) &&
                      std::abs(map.values(x, y) + partner.values(static_cast<int>(xm), y)) <= tol;
      if (!ok) {
        out.valid(x, y) = 0;
        out.values(x, y) = 0.0;
      }
    }
  }
  return out;
}

}  // namespace

std::pair<DisparityMap, DisparityMap> cross_consistency(const DisparityMap& left_map,
                                                        const DisparityMap& right_map,
                                                        double tol) {
  require_same_shape(left_map.values, right_map.values, "cross_consistency");
  if (left_map.reference == right_map.reference) {
    throw std::invalid_argument("cross_consistency: maps share the same reference view");
  }
  if (!(tol >= 0.0)) throw std::invalid_argument("cross_consistency: tol must be >= 0");
  return {prune(left_map, right_map, tol), prune(right_map, left_map, tol)};
}

}  // namespace xstereo
