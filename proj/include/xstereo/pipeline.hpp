#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "xstereo/depth_recon.hpp"
#include "xstereo/forward_sim.hpp"
#include "xstereo/geometry.hpp"
#include "xstereo/preprocess.hpp"
#include "xstereo/stereo_match.hpp"

namespace xstereo {

/// Bad configuration or missing inputs, detected before any stage runs.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A stage that started and failed.
class StageError : public std::runtime_error {
 public:
  StageError(const std::string& stage, const std::string& cause)
      : std::runtime_error(stage + ": " + cause), stage_(stage) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

enum class Stage { kSimulate, kPreprocess, kRetrieve, kRectify, kDisparity, kDepth };

inline constexpr Stage kAllStages[] = {Stage::kSimulate, Stage::kPreprocess, Stage::kRetrieve,
                                       Stage::kRectify, Stage::kDisparity, Stage::kDepth};

const char* to_string(Stage s);
Stage parse_stage(const std::string& name);

enum class PipelineMode { kAmplitude, kPhase };

struct SimulateConfig {
  bool enabled = true;
  /// side and pitch are taken from the geometry.
  CrossSampleParams sample;
  double photons_total = 1e7;
  double short_exposure = 30.0;
  double long_exposure = 140.0;
  /// Detector full well in counts.
  double saturation_level = 65535.0;
  /// Camera misalignment applied to the right view (phase mode).
  double misalign_rotation_deg = 0.0;
  double misalign_dy_px = 0.0;
};

/// Measured data used when simulation is disabled. Frames are raster bases
/// with an `exposure_scale` header key and a `<base>.saturated` mask.
struct InputPaths {
  std::filesystem::path composite_short;
  std::filesystem::path composite_long;
  /// Optional complex views the retrieved views are registered to.
  std::filesystem::path reference_left;
  std::filesystem::path reference_right;
  /// Optional correspondence file; enables rectification.
  std::filesystem::path correspondences;
  /// Optional known support masks (e.g. the sample aperture) per view.
  std::filesystem::path support_left;
  std::filesystem::path support_right;
};

struct PreprocessStageConfig {
  PreprocConfig preproc;
  /// Column offset of the right pattern; 0 selects default_separation.
  int separation_px = 0;
  double max_overlap = 0.2;
};

struct RetrieveStageConfig {
  int iterations = 200;
  double beta = 0.9;
  int runs = 45;
  int keep_best = 45;
  int threads = 0;
};

struct DisparityStageConfig {
  MatchConfig match;
  double consistency_tol = 1.0;
  /// Crop: pixels brighter than crop_level of the maximum amplitude, grown
  /// by crop_margin pixels.
  double crop_level = 0.1;
  int crop_margin = 12;
  /// Phase mode: matches survive only where the gradient view exceeds this.
  double min_gradient = 0.1;
};

struct DepthStageConfig {
  OutlierParams outliers;
  int frame_thickness = 3;
  double carve_radius = 0.2e-6;
  /// Cloud consistency tolerances in lateral pixels and axial voxels.
  double lateral_tol = 1.0;
  double axial_tol = 1.0;
  int phase_bins = 8;
  double amplitude_floor = 0.1;
  int expected_structures = 2;
};

struct PipelineConfig {
  int schema_version = 1;
  PipelineMode mode = PipelineMode::kAmplitude;
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "out";
  StereoGeometry geometry;
  SimulateConfig simulate;
  InputPaths inputs;
  PreprocessStageConfig preprocess;
  RetrieveStageConfig retrieve;
  DisparityStageConfig disparity;
  DepthStageConfig depth;

  /// Throws ValidationError.
  void validate() const;
  /// Resolves relative paths against `base`.
  void resolve_paths(const std::filesystem::path& base);

  static PipelineConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

inline constexpr int kSchemaVersion = 1;

PipelineConfig load_config(const std::filesystem::path& path);

/// Seed for one stage, derived from the top-level seed.
std::uint64_t stage_seed(std::uint64_t seed, Stage s);

struct ManifestEntry {
  Stage stage = Stage::kSimulate;
  std::string kind;
  /// Relative to the output directory.
  std::string path;
  std::string sha256;
};

struct Manifest {
  std::uint64_t seed = 0;
  std::vector<ManifestEntry> entries;

  /// Replaces the entries of `stage`, keeping stage order.
  void merge(Stage stage, const std::vector<ManifestEntry>& produced);
  std::size_t count(const std::string& kind) const;
  nlohmann::json to_json() const;
  static Manifest from_json(const nlohmann::json& j);
};

/// Hex SHA-256 of the concatenated contents of `files`.
std::string sha256_files(const std::vector<std::filesystem::path>& files);

/// Fixed locations inside the output directory.
namespace layout {
inline constexpr const char* kManifest = "manifest.json";
inline constexpr const char* kSample = "sim/sample.json";
inline constexpr const char* kTruthLeft = "sim/truth_left";
inline constexpr const char* kTruthRight = "sim/truth_right";
inline constexpr const char* kCompositeShort = "sim/composite_short";
inline constexpr const char* kCompositeLong = "sim/composite_long";
inline constexpr const char* kCorrespondences = "sim/correspondences.txt";
inline constexpr const char* kSupportLeft = "sim/support_left";
inline constexpr const char* kSupportRight = "sim/support_right";
inline constexpr const char* kStitched = "patterns/stitched";
inline constexpr const char* kPatternLeft = "patterns/pattern_left";
inline constexpr const char* kPatternRight = "patterns/pattern_right";
inline constexpr const char* kViewLeft = "views/view_left";
inline constexpr const char* kViewRight = "views/view_right";
inline constexpr const char* kAlignedLeft = "aligned/view_left";
inline constexpr const char* kAlignedRight = "aligned/view_right";
inline constexpr const char* kMapLeft = "disparity/map_left";
inline constexpr const char* kMapRight = "disparity/map_right";
inline constexpr const char* kGradMapLeft = "disparity/gradient_map_left";
inline constexpr const char* kGradMapRight = "disparity/gradient_map_right";
inline constexpr const char* kCloud = "depth/cloud.ply";
inline constexpr const char* kReport = "depth/report.txt";
}  // namespace layout

/// Checks that the inputs `stage` reads exist. Throws ValidationError.
void check_stage_inputs(const PipelineConfig& cfg, Stage stage);

/// Runs one stage into cfg.output_dir and records its outputs in the
/// manifest there. Failures surface as StageError.
std::vector<ManifestEntry> run_stage(const PipelineConfig& cfg, Stage stage);

/// Validates, then runs every applicable stage in order.
Manifest run_pipeline(const PipelineConfig& cfg);

Manifest read_manifest(const std::filesystem::path& path);

/// Disparity raster written by the disparity stage with its view frame.
struct StoredDisparity {
  DisparityMap map;
  ViewFrame frame;
};
void write_disparity(const StoredDisparity& d, const std::filesystem::path& base);
StoredDisparity read_disparity(const std::filesystem::path& base);

/// `key value` lines of a depth report.
std::map<std::string, std::string> read_report(const std::filesystem::path& path);

}  // namespace xstereo
