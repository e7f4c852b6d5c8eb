#pragma once

#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>

#include "xstereo/grid.hpp"
#include "xstereo/raster.hpp"

namespace xstereo {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raster files are a plain-text header `<base>.hdr` next to a raw
/// little-endian float32 payload `<base>.raw`. `path` may be the base or
/// either of the two file names.
///
/// Header lines are `key value`, in a fixed order:
///   xstereo-raster 1
///   width W
///   height H
///   dtype float32 | complex-polar-float32
///   byte_order little
///   pixel_pitch P        (optional, meters, %.17g)
///   <extra keys>         (sorted)
///   payload F | payload_amplitude F + payload_phase F
using HeaderExtras = std::map<std::string, std::string>;

struct RasterFiles {
  std::filesystem::path header;
  std::filesystem::path payload;
};

RasterFiles raster_files(const std::filesystem::path& path);

void write_raster(const Raster2D& r, const std::filesystem::path& path,
                  const HeaderExtras& extras = {});
Raster2D read_raster(const std::filesystem::path& path, HeaderExtras* extras = nullptr);

void write_mask(const Mask& m, const std::filesystem::path& path);
Mask read_mask(const std::filesystem::path& path);

/// Complex views are stored as two payloads (amplitude, phase) sharing one
/// header: `<base>.amp.raw` and `<base>.phase.raw`.
void write_complex_view(const ComplexView& v, const std::filesystem::path& path);
ComplexView read_complex_view(const std::filesystem::path& path);

/// ASCII PLY with double x/y/z, a uchar source tag and an int structure id.
void write_pointcloud(const PointCloud& c, const std::filesystem::path& path);
PointCloud read_pointcloud(const std::filesystem::path& path);

/// Wavefront OBJ: one vertex per defined node, two triangles per lattice
/// cell whose corners are all defined.
void write_mesh(const HeightField& surface, const std::filesystem::path& path);

/// Serializes a double with round-trip precision in the C locale.
std::string format_double(double v);

}  // namespace xstereo
