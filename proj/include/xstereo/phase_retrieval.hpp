#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "xstereo/grid.hpp"
#include "xstereo/raster.hpp"

namespace xstereo {

/// A diffraction intensity with the zero frequency at (N/2, N/2). Pixels with
/// valid == 0 (overlap-cropped or saturated) are left unconstrained.
struct MeasuredPattern {
  Raster2D intensity;
  Mask valid;

  static MeasuredPattern all_valid(Raster2D intensity);
  void validate() const;
};

struct RetrievalConfig {
  int iterations = 200;
  double beta = 0.9;
  int runs = 45;
  int keep_best = 45;
  /// Overrides the autocorrelation-derived support when set.
  std::optional<Mask> support;
  std::uint64_t seed = 0;
  /// Object-plane sampling of the retrieved view (meters).
  double pixel_pitch = 0.0;
  /// Worker threads for independent runs; 0 picks hardware concurrency.
  int threads = 0;
  /// Starting field; a seeded random Fourier-phase start when unset.
  std::optional<ComplexRaster> initial;

  void validate(int width, int height) const;
};

struct RetrievalResult {
  ComplexView view;
  std::vector<double> error_history;
  double final_error = 0.0;
  int best_iteration = 0;
  std::uint64_t seed = 0;
};

/// Replaces each Fourier modulus by sqrt(measured) on valid pixels and keeps
/// the phase (zero phase where the spectrum vanishes).
ComplexRaster project_modulus(const ComplexRaster& field, const MeasuredPattern& measured);

/// Zero outside the support, identity inside.
ComplexRaster project_support(const ComplexRaster& field, const Mask& support);

/// || |F(P_S field)| - sqrt(I) ||_2 / || sqrt(I) ||_2 over valid pixels.
double fourier_error(const ComplexRaster& field, const MeasuredPattern& measured,
                     const Mask& support);

/// Centered rectangular support: half the extent of the autocorrelation above
/// `threshold` of its peak (component containing the origin), dilated by
/// `dilation` pixels.
Mask support_from_autocorrelation(const MeasuredPattern& measured, double threshold = 0.04,
                                  int dilation = 2);

/// One real-space difference-map update x + beta [P_S(2 P_M x - x) - P_M x].
ComplexRaster difference_map_step(const ComplexRaster& x, const MeasuredPattern& measured,
                                  const Mask& support, double beta);

/// One difference-map reconstruction, x <- x + beta [P_S(2 P_M x - x) - P_M x],
/// returning the support-projected estimate at the minimal-error iterate.
RetrievalResult run_retrieval(const MeasuredPattern& measured, const RetrievalConfig& cfg);

/// cfg.runs independent reconstructions with seeds cfg.seed + run index.
std::vector<RetrievalResult> run_retrievals(const MeasuredPattern& measured,
                                            const RetrievalConfig& cfg);

/// Sorts by final error, drops divergent runs (error above twice the median),
/// keeps at most keep_best, resolves global phase, translation and twin
/// orientation against the lowest-error run and averages the fields.
ComplexView align_and_average(const std::vector<RetrievalResult>& results, int keep_best);

/// Optional hint for estimate_resolution: a pixel on the edge and the axis
/// along which the profile is taken.
struct EdgeHint {
  int x = 0;
  int y = 0;
  bool along_x = true;
};

/// 10-90% edge-response width (meters) of the view amplitude across the
/// strongest edge, or across the hinted edge.
double estimate_resolution(const ComplexView& view, std::optional<EdgeHint> hint = {});

}  // namespace xstereo
