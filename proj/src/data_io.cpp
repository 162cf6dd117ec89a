#include "vxp/data_io.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>
#include <unordered_set>

#include "bytes.hpp"
#include "vxp/error.hpp"

namespace vxp {

namespace {

using detail::ByteReader;
using detail::ByteWriter;

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

bool parse_double(std::string_view s, double& out) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size() && std::isfinite(out);
}

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::string line;
  std::istringstream in(text);
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

std::vector<std::string> split_ws(const std::string& s) {
  std::istringstream in(s);
  return {std::istream_iterator<std::string>(in), std::istream_iterator<std::string>()};
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = s.find(',', start);
    out.push_back(s.substr(start, comma - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

std::vector<double> parse_numbers(const std::vector<std::string>& tokens, const std::string& where) {
  std::vector<double> out;
  for (const auto& t : tokens) {
    double v = 0.0;
    if (!parse_double(t, v)) throw Error(ErrorCode::ParseError, where + ": bad number '" + t + "'");
    out.push_back(v);
  }
  return out;
}

void require_magic(ByteReader& r, std::string_view magic, const std::string& what) {
  if (r.remaining() < magic.size()) throw Error(ErrorCode::TruncatedFile, what + ": shorter than its magic");
  if (r.raw(magic.size()) != magic) throw Error(ErrorCode::BadMagic, what + ": expected '" + std::string(magic) + "'");
}

}  // namespace

// ---- byte helpers ----------------------------------------------------------

std::vector<std::uint8_t> read_file_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::IoError, "short write to " + path.string());
}

std::string read_text_file(const fs::path& path) {
  const auto bytes = read_file_bytes(path);
  return {bytes.begin(), bytes.end()};
}

void write_text_file(const fs::path& path, const std::string& text) {
  write_file_bytes(path, {text.begin(), text.end()});
}

std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t seed) {
  const auto* p = static_cast<const std::uint8_t*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

// ---- point clouds ----------------------------------------------------------

PointCloud load_point_cloud_bin(const fs::path& path) {
  const auto bytes = read_file_bytes(path);
  if (bytes.size() % 16 != 0)
    throw Error(ErrorCode::MalformedFile, path.string() + ": size " + std::to_string(bytes.size()) +
                                              " is not a multiple of 16 bytes");
  ByteReader r(bytes, path.string());
  PointCloud cloud;
  cloud.id = path.stem().string();
  cloud.points.reserve(bytes.size() / 16);
  while (r.remaining() > 0) {
    const double x = r.f32(), y = r.f32(), z = r.f32();
    r.f32();  // intensity
    cloud.points.emplace_back(x, y, z);
  }
  return cloud;
}

void write_point_cloud_bin(const fs::path& path, const PointCloud& cloud) {
  ByteWriter w;
  for (const auto& p : cloud.points) {
    w.f32(static_cast<float>(p.x()));
    w.f32(static_cast<float>(p.y()));
    w.f32(static_cast<float>(p.z()));
    w.f32(0.0f);
  }
  write_file_bytes(path, w.take());
}

// ---- images ----------------------------------------------------------------

Image load_image_f32(const fs::path& path) {
  const auto bytes = read_file_bytes(path);
  ByteReader r(bytes, path.string());
  Image img;
  img.width = static_cast<int>(r.u32());
  img.height = static_cast<int>(r.u32());
  img.channels = 1;
  const std::size_t n = static_cast<std::size_t>(img.width) * static_cast<std::size_t>(img.height);
  if (r.remaining() != n * 4)
    throw Error(ErrorCode::MalformedFile, path.string() + ": expected " + std::to_string(n * 4) +
                                              " pixel bytes, found " + std::to_string(r.remaining()));
  img.data.resize(n);
  for (auto& v : img.data) v = r.f32();
  return img;
}

void write_image_f32(const fs::path& path, const Image& image) {
  if (image.channels != 1) throw Error(ErrorCode::ShapeMismatch, "raw image files hold one channel");
  ByteWriter w;
  w.u32(static_cast<std::uint32_t>(image.width));
  w.u32(static_cast<std::uint32_t>(image.height));
  for (double v : image.data) w.f32(static_cast<float>(v));
  write_file_bytes(path, w.take());
}

// ---- calibration -----------------------------------------------------------

ProjectionModel parse_kitti_calib_text(const std::string& text, int image_width, int image_height) {
  if (image_width < 1 || image_height < 1) throw Error(ErrorCode::InvalidConfig, "image dims must be >= 1");
  std::vector<double> p2, tr;
  const auto lines = split_lines(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto colon = lines[i].find(':');
    if (colon == std::string::npos) continue;
    const std::string key = lines[i].substr(0, colon);
    if (key != "P2" && key != "Tr" && key != "Tr_velo_to_cam") continue;
    const std::string where = "calib line " + std::to_string(i + 1);
    auto values = parse_numbers(split_ws(lines[i].substr(colon + 1)), where);
    if (values.size() != 12)
      throw Error(ErrorCode::ParseError, where + ": " + key + " needs 12 values, got " + std::to_string(values.size()));
    (key == "P2" ? p2 : tr) = std::move(values);
  }
  if (p2.empty()) throw Error(ErrorCode::MissingKey, "calib has no P2 line");
  if (tr.empty()) throw Error(ErrorCode::MissingKey, "calib has no Tr line");
  ProjectionModel proj;
  proj.fx_n = p2[0] / image_width;
  proj.fy_n = p2[5] / image_height;
  proj.cx_n = p2[2] / image_width;
  proj.cy_n = p2[6] / image_height;
  proj.extrinsic = Eigen::Matrix4d::Identity();
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 4; ++c) proj.extrinsic(r, c) = tr[static_cast<std::size_t>(r * 4 + c)];
  return proj;
}

ProjectionModel parse_kitti_calib(const fs::path& path, int image_width, int image_height) {
  return parse_kitti_calib_text(read_text_file(path), image_width, image_height);
}

ProjectionModel parse_calibration_text(const std::string& text) {
  std::vector<std::string> lines;
  for (auto& l : split_lines(text))
    if (!split_ws(l).empty()) lines.push_back(l);
  if (lines.size() != 4)
    throw Error(ErrorCode::ParseError, "VXP-CAL needs 4 non-empty lines, found " + std::to_string(lines.size()));
  const auto intr = parse_numbers(split_ws(lines[0]), "calibration line 1");
  if (intr.size() != 4) throw Error(ErrorCode::ParseError, "calibration line 1: expected fx_n fy_n cx_n cy_n");
  ProjectionModel proj;
  proj.fx_n = intr[0];
  proj.fy_n = intr[1];
  proj.cx_n = intr[2];
  proj.cy_n = intr[3];
  proj.extrinsic = Eigen::Matrix4d::Identity();
  for (int r = 0; r < 3; ++r) {
    const std::string where = "calibration line " + std::to_string(r + 2);
    const auto row = parse_numbers(split_ws(lines[static_cast<std::size_t>(r + 1)]), where);
    if (row.size() != 4) throw Error(ErrorCode::ParseError, where + ": expected 4 values");
    for (int c = 0; c < 4; ++c) proj.extrinsic(r, c) = row[static_cast<std::size_t>(c)];
  }
  proj.validate();
  return proj;
}

ProjectionModel read_calibration(const fs::path& path) { return parse_calibration_text(read_text_file(path)); }

std::string format_calibration(const ProjectionModel& proj) {
  std::string s = format_double(proj.fx_n) + ' ' + format_double(proj.fy_n) + ' ' + format_double(proj.cx_n) +
                  ' ' + format_double(proj.cy_n) + '\n';
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 4; ++c) s += (c ? " " : "") + format_double(proj.extrinsic(r, c));
    s += '\n';
  }
  return s;
}

void write_calibration(const fs::path& path, const ProjectionModel& proj) {
  write_text_file(path, format_calibration(proj));
}

// ---- manifest --------------------------------------------------------------

std::vector<SampleManifestRow> parse_manifest_text(const std::string& text) {
  const auto lines = split_lines(text);
  if (lines.empty() || lines[0] != kManifestHeader)
    throw Error(ErrorCode::HeaderMismatch, "manifest header must be '" + std::string(kManifestHeader) + "'");
  std::vector<SampleManifestRow> rows;
  std::unordered_set<std::string> seen;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const std::string where = "manifest line " + std::to_string(i + 1);
    const auto f = split_csv(lines[i]);
    if (f.size() != 8)
      throw Error(ErrorCode::ParseError, where + ": expected 8 fields, got " + std::to_string(f.size()));
    SampleManifestRow row;
    row.id = f[0];
    if (row.id.empty()) throw Error(ErrorCode::ParseError, where + ": empty id");
    if (!parse_double(f[1], row.timestamp_s)) throw Error(ErrorCode::ParseError, where + ": bad timestamp_s");
    for (int a = 0; a < 3; ++a)
      if (!parse_double(f[static_cast<std::size_t>(2 + a)], row.position[a]))
        throw Error(ErrorCode::ParseError, where + ": bad coordinate field " + std::to_string(3 + a));
    row.cloud_path = f[5];
    row.image_path = f[6];
    row.run_id = f[7];
    if (!seen.insert(row.id).second) throw Error(ErrorCode::DuplicateId, where + ": id '" + row.id + "' repeats");
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<SampleManifestRow> parse_manifest(const fs::path& path) {
  return parse_manifest_text(read_text_file(path));
}

std::string format_manifest(const std::vector<SampleManifestRow>& rows) {
  std::string s(kManifestHeader);
  s += '\n';
  for (const auto& r : rows) {
    s += r.id + ',' + format_double(r.timestamp_s) + ',' + format_double(r.position.x()) + ',' +
         format_double(r.position.y()) + ',' + format_double(r.position.z()) + ',' + r.cloud_path + ',' +
         r.image_path + ',' + r.run_id + '\n';
  }
  return s;
}

void write_manifest(const fs::path& path, const std::vector<SampleManifestRow>& rows) {
  write_text_file(path, format_manifest(rows));
}

fs::path resolve_manifest_path(const fs::path& manifest, const std::string& entry) {
  const fs::path p(entry);
  return p.is_absolute() ? p : manifest.parent_path() / p;
}

// ---- tuples ----------------------------------------------------------------

TupleSet build_tuples(const std::vector<Eigen::Vector3d>& positions, double pos_thresh, double neg_thresh) {
  if (!(pos_thresh > 0.0 && pos_thresh < neg_thresh))
    throw Error(ErrorCode::InvalidConfig, "thresholds must satisfy 0 < pos < neg");
  TupleSet set;
  for (std::size_t a = 0; a < positions.size(); ++a) {
    TrainingTuple t;
    t.anchor = a;
    for (std::size_t j = 0; j < positions.size(); ++j) {
      if (j == a) continue;
      const double d = (positions[a] - positions[j]).norm();
      if (d < pos_thresh) t.positives.push_back(j);
      else if (d > neg_thresh) t.negatives.push_back(j);
    }
    if (t.positives.empty()) ++set.dropped_anchors;
    else set.tuples.push_back(std::move(t));
  }
  if (set.tuples.empty()) throw Error(ErrorCode::EmptyResult, "no anchor has a positive within threshold");
  return set;
}

TupleSet build_tuples(const std::vector<SampleManifestRow>& manifest, double pos_thresh, double neg_thresh) {
  std::vector<Eigen::Vector3d> positions;
  positions.reserve(manifest.size());
  for (const auto& r : manifest) positions.push_back(r.position);
  return build_tuples(positions, pos_thresh, neg_thresh);
}

// ---- VXPD ----------------------------------------------------------------

std::vector<std::uint8_t> encode_descriptors(const std::vector<DescriptorRecord>& records, std::uint32_t dim) {
  ByteWriter w;
  w.raw("VXPD");
  w.u16(kDescriptorFileVersion);
  w.u32(dim);
  w.u32(static_cast<std::uint32_t>(records.size()));
  for (const auto& r : records) {
    if (r.values.size() != dim)
      throw Error(ErrorCode::DimMismatch, "descriptor " + std::to_string(r.id) + " has " +
                                              std::to_string(r.values.size()) + " values, file dim " +
                                              std::to_string(dim));
    w.u64(r.id);
    for (double v : r.values) w.f32(static_cast<float>(v));
  }
  return w.take();
}

std::vector<DescriptorRecord> decode_descriptors(const std::vector<std::uint8_t>& bytes, std::uint32_t* dim_out) {
  ByteReader r(bytes, "VXPD");
  require_magic(r, "VXPD", "VXPD");
  const std::uint16_t version = r.u16();
  if (version != kDescriptorFileVersion)
    throw Error(ErrorCode::VersionUnsupported, "VXPD version " + std::to_string(version));
  const std::uint32_t dim = r.u32();
  const std::uint32_t count = r.u32();
  const std::size_t record_bytes = 8 + 4 * static_cast<std::size_t>(dim);
  if (r.remaining() < record_bytes * count)
    throw Error(ErrorCode::TruncatedFile, "VXPD: " + std::to_string(count) + " records need " +
                                              std::to_string(record_bytes * count) + " bytes, found " +
                                              std::to_string(r.remaining()));
  if (r.remaining() > record_bytes * count)
    throw Error(ErrorCode::MalformedFile, "VXPD: trailing bytes after " + std::to_string(count) + " records");
  std::vector<DescriptorRecord> out(count);
  for (auto& rec : out) {
    rec.id = r.u64();
    rec.values.resize(dim);
    for (auto& v : rec.values) v = r.f32();
  }
  if (dim_out) *dim_out = dim;
  return out;
}

void write_descriptors(const fs::path& path, const std::vector<DescriptorRecord>& records, std::uint32_t dim) {
  write_file_bytes(path, encode_descriptors(records, dim));
}

std::vector<DescriptorRecord> read_descriptors(const fs::path& path, std::uint32_t* dim) {
  return decode_descriptors(read_file_bytes(path), dim);
}

// ---- VXPC ----------------------------------------------------------------

bool Checkpoint::contains(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return true;
  return false;
}

const ad::Tensor& Checkpoint::at(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return t;
  throw Error(ErrorCode::MissingKey, "checkpoint has no tensor '" + name + "'");
}

void Checkpoint::put(const std::string& name, const ad::Tensor& t) {
  for (auto& [n, existing] : tensors)
    if (n == name) {
      existing = t;
      return;
    }
  tensors.emplace_back(name, t);
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  ByteWriter w;
  w.raw("VXPC");
  w.u16(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, t] : ckpt.tensors) {
    if (name.size() > 0xFFFF) throw Error(ErrorCode::InvalidConfig, "tensor name too long");
    if (t.rank() > 0xFF) throw Error(ErrorCode::InvalidConfig, "tensor rank too large");
    w.u16(static_cast<std::uint16_t>(name.size()));
    w.raw(name);
    w.u8(static_cast<std::uint8_t>(t.rank()));
    for (std::size_t e : t.shape()) w.u32(static_cast<std::uint32_t>(e));
    for (double v : t.values()) w.f64(v);
  }
  return w.take();
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  ByteReader r(bytes, "VXPC");
  require_magic(r, "VXPC", "VXPC");
  const std::uint16_t version = r.u16();
  if (version != kCheckpointVersion) throw Error(ErrorCode::VersionUnsupported, "VXPC version " + std::to_string(version));
  const std::uint32_t count = r.u32();
  Checkpoint ckpt;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint16_t len = r.u16();
    std::string name = r.raw(len);
    const std::uint8_t rank = r.u8();
    ad::Shape shape(rank);
    for (auto& e : shape) e = r.u32();
    const std::size_t n = ad::numel(shape);
    if (r.remaining() < n * 8)
      throw Error(ErrorCode::TruncatedFile, "VXPC: tensor '" + name + "' needs " + std::to_string(n * 8) + " bytes");
    std::vector<double> values(n);
    for (auto& v : values) v = r.f64();
    ckpt.tensors.emplace_back(std::move(name), ad::Tensor::from(std::move(shape), std::move(values)));
  }
  if (r.remaining() != 0) throw Error(ErrorCode::MalformedFile, "VXPC: trailing bytes after tensor table");
  return ckpt;
}

void write_checkpoint(const fs::path& path, const Checkpoint& ckpt) { write_file_bytes(path, encode_checkpoint(ckpt)); }

Checkpoint read_checkpoint(const fs::path& path) { return decode_checkpoint(read_file_bytes(path)); }

}  // namespace vxp
