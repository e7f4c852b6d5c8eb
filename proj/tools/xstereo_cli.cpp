#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "xstereo/pipeline.hpp"

namespace {

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

// Stage-specific overrides; unset flags keep the config value.
struct Overrides {
  std::optional<int> resize_factor, min_region;
  std::optional<double> smooth_sigma, threshold_left, threshold_right, stitch_sigma;
  std::optional<int> iterations, runs, keep_best, threads;
  std::optional<double> beta;
  std::optional<int> block, search;
  std::optional<double> proximity_weight, min_gradient;
  std::optional<int> k;
  std::optional<double> t, carve_radius;
};

void add_common(CLI::App* app, CommonOptions& o) {
  app->add_option("--config", o.config, "JSON pipeline configuration");
  app->add_option("--seed", o.seed, "Top-level seed (overrides the config)");
  app->add_option("--out", o.out, "Output directory (overrides the config)");
}

void add_preprocess_flags(CLI::App* app, Overrides& v) {
  app->add_option("--resize-factor", v.resize_factor, "Upsampling factor for binarization");
  app->add_option("--smooth-sigma", v.smooth_sigma, "Gaussian sigma after upsampling");
  app->add_option("--threshold-left", v.threshold_left, "Left view binarization threshold");
  app->add_option("--threshold-right", v.threshold_right, "Right view binarization threshold");
  app->add_option("--min-region", v.min_region, "Minimum component size (original pixels)");
  app->add_option("--stitch-sigma", v.stitch_sigma, "HDR blend smoothing sigma");
}

void add_retrieve_flags(CLI::App* app, Overrides& v) {
  app->add_option("--iterations", v.iterations, "Difference-map iterations per run");
  app->add_option("--beta", v.beta, "Difference-map feedback parameter");
  app->add_option("--runs", v.runs, "Independent reconstructions");
  app->add_option("--keep-best", v.keep_best, "Runs averaged into the final view");
  app->add_option("--threads", v.threads, "Worker threads (0 = hardware concurrency)");
}

void add_disparity_flags(CLI::App* app, Overrides& v) {
  app->add_option("--block", v.block, "Odd block size");
  app->add_option("--search", v.search, "Search half-width in pixels");
  app->add_option("--proximity-weight", v.proximity_weight, "Cost per pixel of offset");
  app->add_option("--min-gradient", v.min_gradient, "Phase mode edge gate");
}

void add_depth_flags(CLI::App* app, Overrides& v) {
  app->add_option("-k,--outlier-k", v.k, "Neighbours for outlier removal");
  app->add_option("-t,--outlier-t", v.t, "Standard deviations above the mean distance");
  app->add_option("--carve-radius", v.carve_radius, "Empty-region carving radius (meters)");
}

template <typename T, typename U>
void apply(const std::optional<T>& flag, U& target) {
  if (flag) target = *flag;
}

xstereo::PipelineConfig build_config(const CommonOptions& o, const Overrides& v) {
  xstereo::PipelineConfig cfg = o.config.empty() ? xstereo::PipelineConfig{}
                                                 : xstereo::load_config(o.config);
  if (o.seed) cfg.seed = *o.seed;
  if (!o.out.empty()) cfg.output_dir = o.out;
  auto& pp = cfg.preprocess.preproc;
  apply(v.resize_factor, pp.resize_factor);
  apply(v.smooth_sigma, pp.smooth_sigma);
  apply(v.threshold_left, pp.threshold_left);
  apply(v.threshold_right, pp.threshold_right);
  apply(v.min_region, pp.min_region);
  apply(v.stitch_sigma, pp.stitch_sigma);
  apply(v.iterations, cfg.retrieve.iterations);
  apply(v.beta, cfg.retrieve.beta);
  apply(v.runs, cfg.retrieve.runs);
  apply(v.keep_best, cfg.retrieve.keep_best);
  apply(v.threads, cfg.retrieve.threads);
  apply(v.block, cfg.disparity.match.block);
  apply(v.search, cfg.disparity.match.search);
  apply(v.proximity_weight, cfg.disparity.match.proximity_weight);
  apply(v.min_gradient, cfg.disparity.min_gradient);
  apply(v.k, cfg.depth.outliers.k);
  apply(v.t, cfg.depth.outliers.t);
  apply(v.carve_radius, cfg.depth.carve_radius);
  return cfg;
}

void print_entries(const std::vector<xstereo::ManifestEntry>& entries) {
  for (const auto& e : entries) {
    std::cout << xstereo::to_string(e.stage) << ' ' << e.kind << ' ' << e.path << ' '
              << e.sha256 << '\n';
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stereo coherent diffractive imaging reconstruction"};
  app.require_subcommand(1);
  CommonOptions common;
  Overrides overrides;

  struct Command {
    const char* name;
    const char* help;
    std::optional<xstereo::Stage> stage;
  };
  const Command commands[] = {
      {"simulate", "Simulate a cross sample and its diffraction frames", xstereo::Stage::kSimulate},
      {"preprocess", "Stitch exposures and isolate the two patterns", xstereo::Stage::kPreprocess},
      {"retrieve", "Retrieve both views by phase retrieval", xstereo::Stage::kRetrieve},
      {"rectify", "Align the views and rectify them from correspondences", xstereo::Stage::kRectify},
      {"disparity", "Compute cross-checked disparity maps", xstereo::Stage::kDisparity},
      {"depth", "Build the point cloud and surfaces", xstereo::Stage::kDepth},
      {"pipeline", "Run every stage in order", std::nullopt},
  };
  for (const auto& c : commands) {
    CLI::App* sub = app.add_subcommand(c.name, c.help);
    add_common(sub, common);
    const std::string name = c.name;
    if (name == "preprocess" || name == "disparity" || name == "pipeline") {
      add_preprocess_flags(sub, overrides);
    }
    if (name == "retrieve" || name == "pipeline") add_retrieve_flags(sub, overrides);
    if (name == "disparity" || name == "pipeline") add_disparity_flags(sub, overrides);
    if (name == "depth" || name == "pipeline") add_depth_flags(sub, overrides);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    const xstereo::PipelineConfig cfg = build_config(common, overrides);
    for (const auto& c : commands) {
      if (!app.got_subcommand(c.name)) continue;
      if (c.stage) {
        print_entries(xstereo::run_stage(cfg, *c.stage));
      } else {
        print_entries(xstereo::run_pipeline(cfg).entries);
      }
    }
  } catch (const xstereo::ValidationError& e) {
    std::cerr << "validation error: " << e.what() << '\n';
    return 2;
  } catch (const xstereo::StageError& e) {
    std::cerr << "stage failed: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
