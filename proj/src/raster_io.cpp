#include "xstereo/raster_io.hpp"

#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

namespace xstereo {
namespace fs = std::filesystem;

namespace {

constexpr const char* kMagic = "xstereo-raster";

fs::path base_of(const fs::path& path) {
  fs::path p = path;
  const auto ext = p.extension().string();
  if (ext == ".hdr" || ext == ".raw") p.replace_extension();
  return p;
}

fs::path with_suffix(const fs::path& base, const std::string& suffix) {
  fs::path p = base;
  p += suffix;
  return p;
}

void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) {
    throw FormatError(std::string(what) + ": refusing to serialize a non-finite value");
  }
}

void write_payload(const std::vector<float>& values, const fs::path& path) {
  std::vector<unsigned char> bytes(values.size() * 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto u = std::bit_cast<std::uint32_t>(values[i]);
    bytes[4 * i + 0] = static_cast<unsigned char>(u & 0xffu);
    bytes[4 * i + 1] = static_cast<unsigned char>((u >> 8) & 0xffu);
    bytes[4 * i + 2] = static_cast<unsigned char>((u >> 16) & 0xffu);
    bytes[4 * i + 3] = static_cast<unsigned char>((u >> 24) & 0xffu);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("write failed: " + path.string());
}

std::vector<float> read_payload(const fs::path& path, std::size_t expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open payload " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() != expected * 4) {
    throw FormatError("size mismatch: header expects " + std::to_string(expected) +
                      " float32 values, payload " + path.string() + " holds " +
                      std::to_string(bytes.size()) + " bytes");
  }
  std::vector<float> values(expected);
  for (std::size_t i = 0; i < expected; ++i) {
    const std::uint32_t u = std::uint32_t(bytes[4 * i]) | (std::uint32_t(bytes[4 * i + 1]) << 8) |
                            (std::uint32_t(bytes[4 * i + 2]) << 16) |
                            (std::uint32_t(bytes[4 * i + 3]) << 24);
    values[i] = std::bit_cast<float>(u);
  }
  return values;
}

struct Header {
  int width = -1;
  int height = -1;
  std::string dtype;
  std::optional<double> pixel_pitch;
  std::map<std::string, std::string> payloads;
  HeaderExtras extras;
};

double parse_double(const std::string& s, const std::string& key) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) throw FormatError("malformed header value for " + key);
  return v;
}

int parse_int(const std::string& s, const std::string& key) {
  int v = 0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end || v < 0) {
    throw FormatError("malformed header value for " + key);
  }
  return v;
}

Header read_header(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open header " + path.string());
  Header h;
  std::string line;
  bool magic = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto sp = line.find(' ');
    if (sp == std::string::npos) throw FormatError("malformed header line: " + line);
    const std::string key = line.substr(0, sp);
    const std::string value = line.substr(sp + 1);
    if (key == kMagic) {
      if (value != "1") throw FormatError("unsupported raster header version " + value);
      magic = true;
    } else if (key == "width") {
      h.width = parse_int(value, key);
    } else if (key == "height") {
      h.height = parse_int(value, key);
    } else if (key == "dtype") {
      h.dtype = value;
    } else if (key == "byte_order") {
      if (value != "little") throw FormatError("unsupported byte order " + value);
    } else if (key == "pixel_pitch") {
      h.pixel_pitch = parse_double(value, key);
    } else if (key.starts_with("payload")) {
      h.payloads[key] = value;
    } else {
      h.extras[key] = value;
    }
  }
  if (!magic) throw FormatError("malformed header: missing magic line in " + path.string());
  if (h.width < 0 || h.height < 0) throw FormatError("malformed header: missing width/height");
  return h;
}

void write_header(const fs::path& path, int width, int height, const std::string& dtype,
                  const std::optional<double>& pitch, const HeaderExtras& extras,
                  const std::vector<std::pair<std::string, std::string>>& payloads) {
  std::ostringstream os;
  os << kMagic << " 1\n";
  os << "width " << width << "\n";
  os << "height " << height << "\n";
  os << "dtype " << dtype << "\n";
  os << "byte_order little\n";
  if (pitch) {
    require_finite(*pitch, "write_raster");
    os << "pixel_pitch " << format_double(*pitch) << "\n";
  }
  for (const auto& [k, v] : extras) {
    if (k.empty() || k.find(' ') != std::string::npos || k.starts_with("payload")) {
      throw FormatError("invalid header key '" + k + "'");
    }
    os << k << " " << v << "\n";
  }
  for (const auto& [k, v] : payloads) os << k << " " << v << "\n";
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  out << os.str();
}

std::vector<float> to_float(const Raster2D& r, const char* what) {
  std::vector<float> v(r.size());
  for (std::size_t i = 0; i < r.size(); ++i) {
    require_finite(r[i], what);
    v[i] = static_cast<float>(r[i]);
  }
  return v;
}

}  // namespace

std::string format_double(double v) {
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v,
                                 std::chars_format::general, 17);
  if (ec != std::errc()) throw FormatError("format_double failed");
  return std::string(buf.data(), ptr);
}

RasterFiles raster_files(const fs::path& path) {
  const auto base = base_of(path);
  return {with_suffix(base, ".hdr"), with_suffix(base, ".raw")};
}

void write_raster(const Raster2D& r, const fs::path& path, const HeaderExtras& extras) {
  const auto files = raster_files(path);
  const auto values = to_float(r, "write_raster");
  write_payload(values, files.payload);
  write_header(files.header, r.width(), r.height(), "float32", r.pixel_pitch, extras,
               {{"payload", files.payload.filename().string()}});
}

Raster2D read_raster(const fs::path& path, HeaderExtras* extras) {
  const auto files = raster_files(path);
  const Header h = read_header(files.header);
  if (h.dtype != "float32") throw FormatError("read_raster: unexpected dtype " + h.dtype);
  auto it = h.payloads.find("payload");
  const fs::path payload =
      it == h.payloads.end() ? files.payload : files.header.parent_path() / it->second;
  const auto values = read_payload(payload, static_cast<std::size_t>(h.width) * h.height);
  Raster2D r(h.width, h.height);
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) throw FormatError("read_raster: non-finite value in payload");
    r[i] = values[i];
  }
  r.pixel_pitch = h.pixel_pitch;
  if (extras) *extras = h.extras;
  return r;
}

void write_mask(const Mask& m, const fs::path& path) {
  Raster2D r(m.width(), m.height());
  for (std::size_t i = 0; i < m.size(); ++i) r[i] = m[i] ? 1.0 : 0.0;
  r.pixel_pitch = m.pixel_pitch;
  write_raster(r, path, {{"kind", "mask"}});
}

Mask read_mask(const fs::path& path) {
  const Raster2D r = read_raster(path);
  Mask m(r.width(), r.height());
  for (std::size_t i = 0; i < r.size(); ++i) m[i] = r[i] != 0.0;
  m.pixel_pitch = r.pixel_pitch;
  return m;
}

void write_complex_view(const ComplexView& v, const fs::path& path) {
  const auto base = base_of(path);
  const auto header = with_suffix(base, ".hdr");
  const auto amp_path = with_suffix(base, ".amp.raw");
  const auto phase_path = with_suffix(base, ".phase.raw");
  write_payload(to_float(v.amplitude(), "write_complex_view"), amp_path);
  write_payload(to_float(v.phase(), "write_complex_view"), phase_path);
  write_header(header, v.width(), v.height(), "complex-polar-float32", v.pixel_pitch, {},
               {{"payload_amplitude", amp_path.filename().string()},
                {"payload_phase", phase_path.filename().string()}});
}

ComplexView read_complex_view(const fs::path& path) {
  const auto base = base_of(path);
  const auto header = with_suffix(base, ".hdr");
  const Header h = read_header(header);
  if (h.dtype != "complex-polar-float32") {
    throw FormatError("read_complex_view: unexpected dtype " + h.dtype);
  }
  const auto n = static_cast<std::size_t>(h.width) * h.height;
  auto get = [&](const char* key) {
    auto it = h.payloads.find(key);
    if (it == h.payloads.end()) throw FormatError(std::string("missing ") + key);
    return read_payload(header.parent_path() / it->second, n);
  };
  const auto amp = get("payload_amplitude");
  const auto phase = get("payload_phase");
  Raster2D a(h.width, h.height), p(h.width, h.height);
  for (std::size_t i = 0; i < n; ++i) {
    a[i] = amp[i];
    p[i] = phase[i];
  }
  return ComplexView::from_polar(a, p, h.pixel_pitch.value_or(0.0));
}

void write_pointcloud(const PointCloud& c, const fs::path& path) {
  if (c.empty()) throw FormatError("write_pointcloud: empty cloud");
  std::ostringstream os;
  os << "ply\nformat ascii 1.0\ncomment xstereo point cloud (meters)\n";
  os << "element vertex " << c.size() << "\n";
  os << "property double x\nproperty double y\nproperty double z\n";
  os << "property uchar source\nproperty int structure\nend_header\n";
  for (std::size_t i = 0; i < c.size(); ++i) {
    const auto& p = c.points[i];
    for (int k = 0; k < 3; ++k) require_finite(p[k], "write_pointcloud");
    os << format_double(p.x()) << ' ' << format_double(p.y()) << ' ' << format_double(p.z())
       << ' ' << static_cast<int>(c.sources[i]) << ' ' << c.structure[i] << '\n';
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  out << os.str();
}

PointCloud read_pointcloud(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  std::string line;
  std::size_t count = 0;
  bool header_done = false;
  if (!std::getline(in, line) || line != "ply") throw FormatError("not a PLY file");
  while (std::getline(in, line)) {
    if (line.starts_with("element vertex ")) count = std::stoul(line.substr(15));
    if (line == "end_header") {
      header_done = true;
      break;
    }
  }
  if (!header_done) throw FormatError("malformed PLY header");
  PointCloud c;
  for (std::size_t i = 0; i < count; ++i) {
    double x, y, z;
    int src, sid;
    if (!(in >> x >> y >> z >> src >> sid) || src < 0 || src > 3) {
      throw FormatError("malformed PLY vertex record " + std::to_string(i));
    }
    c.push_back({x, y, z}, static_cast<PointSource>(src), sid);
  }
  return c;
}

void write_mesh(const HeightField& s, const fs::path& path) {
  require_same_shape(s.z, s.defined, "write_mesh");
  std::vector<long> index(s.z.size(), 0);
  std::ostringstream os;
  os << "# xstereo surface (meters)\n";
  long next = 1;
  for (int j = 0; j < s.height(); ++j) {
    for (int i = 0; i < s.width(); ++i) {
      if (!s.defined(i, j)) continue;
      const double z = s.z(i, j);
      require_finite(z, "write_mesh");
      index[static_cast<std::size_t>(j) * s.width() + i] = next++;
      os << "v " << format_double(s.node_x(i)) << ' ' << format_double(s.node_y(j)) << ' '
         << format_double(z) << '\n';
    }
  }
  if (next == 1) throw FormatError("write_mesh: surface has no defined nodes");
  auto id = [&](int i, int j) { return index[static_cast<std::size_t>(j) * s.width() + i]; };
  for (int j = 0; j + 1 < s.height(); ++j) {
    for (int i = 0; i + 1 < s.width(); ++i) {
      const long a = id(i, j), b = id(i + 1, j), c = id(i, j + 1), d = id(i + 1, j + 1);
      if (a && b && d) os << "f " << a << ' ' << b << ' ' << d << '\n';
      if (a && d && c) os << "f " << a << ' ' << d << ' ' << c << '\n';
    }
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  out << os.str();
}

}  // namespace xstereo
