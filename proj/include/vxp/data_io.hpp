#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "vxp/constants.hpp"
#include "vxp/geometry.hpp"
#include "vxp/heads.hpp"
#include "vxp/tensor.hpp"

namespace vxp {

namespace fs = std::filesystem;

// ---- point clouds (KITTI .bin: little-endian f32 x, y, z, intensity) -------

PointCloud load_point_cloud_bin(const fs::path& path);
/// Writes intensity 0. Coordinates are narrowed to f32.
void write_point_cloud_bin(const fs::path& path, const PointCloud& cloud);

// ---- raw images: u32 width, u32 height, then width*height f32 (1 channel) ---

Image load_image_f32(const fs::path& path);
void write_image_f32(const fs::path& path, const Image& image);

// ---- calibration -------------------------------------------------------------

/// Reads "P2:" (3x4 projection) and "Tr:" (3x4 LiDAR->camera) from a KITTI
/// calib file. Intrinsics are normalized by the image size; P2's translation
/// column is ignored.
ProjectionModel parse_kitti_calib(const fs::path& path, int image_width, int image_height);
ProjectionModel parse_kitti_calib_text(const std::string& text, int image_width, int image_height);

/// VXP-CAL v1: line 1 "fx_n fy_n cx_n cy_n"; lines 2-4 the top three
/// extrinsic rows (4 values each).
ProjectionModel read_calibration(const fs::path& path);
ProjectionModel parse_calibration_text(const std::string& text);
void write_calibration(const fs::path& path, const ProjectionModel& proj);
std::string format_calibration(const ProjectionModel& proj);

// ---- manifest ----------------------------------------------------------------

inline constexpr std::string_view kManifestHeader =
    "id,timestamp_s,x_m,y_m,z_m,cloud_path,image_path,run_id";

struct SampleManifestRow {
  std::string id;
  double timestamp_s = 0.0;
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  std::string cloud_path;
  std::string image_path;
  std::string run_id;
};

std::vector<SampleManifestRow> parse_manifest(const fs::path& path);
std::vector<SampleManifestRow> parse_manifest_text(const std::string& text);
void write_manifest(const fs::path& path, const std::vector<SampleManifestRow>& rows);
std::string format_manifest(const std::vector<SampleManifestRow>& rows);

/// Resolves a manifest path relative to the manifest's directory.
fs::path resolve_manifest_path(const fs::path& manifest, const std::string& entry);

// ---- tuples --------------------------------------------------------------------

struct TrainingTuple {
  std::size_t anchor = 0;  // manifest row index
  std::vector<std::size_t> positives;
  std::vector<std::size_t> negatives;
};

struct TupleSet {
  std::vector<TrainingTuple> tuples;
  std::size_t dropped_anchors = 0;  // anchors without any positive
};

TupleSet build_tuples(const std::vector<Eigen::Vector3d>& positions,
                      double pos_thresh = constants::kPositiveThresholdM,
                      double neg_thresh = constants::kNegativeThresholdM);
TupleSet build_tuples(const std::vector<SampleManifestRow>& manifest,
                      double pos_thresh = constants::kPositiveThresholdM,
                      double neg_thresh = constants::kNegativeThresholdM);

// ---- VXPD descriptor files -------------------------------------------------

struct DescriptorRecord {
  std::uint64_t id = 0;
  std::vector<double> values;
};

inline constexpr std::uint16_t kDescriptorFileVersion = 1;
inline constexpr std::size_t kDescriptorHeaderBytes = 14;

std::vector<std::uint8_t> encode_descriptors(const std::vector<DescriptorRecord>& records,
                                             std::uint32_t dim);
std::vector<DescriptorRecord> decode_descriptors(const std::vector<std::uint8_t>& bytes,
                                                 std::uint32_t* dim = nullptr);
void write_descriptors(const fs::path& path, const std::vector<DescriptorRecord>& records,
                       std::uint32_t dim);
std::vector<DescriptorRecord> read_descriptors(const fs::path& path, std::uint32_t* dim = nullptr);

// ---- VXPC checkpoints ------------------------------------------------------

inline constexpr std::uint16_t kCheckpointVersion = 1;

struct Checkpoint {
  std::vector<std::pair<std::string, ad::Tensor>> tensors;

  bool contains(const std::string& name) const;
  /// Throws MissingKey.
  const ad::Tensor& at(const std::string& name) const;
  void put(const std::string& name, const ad::Tensor& t);
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);
void write_checkpoint(const fs::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const fs::path& path);

// ---- byte helpers ------------------------------------------------------------

std::vector<std::uint8_t> read_file_bytes(const fs::path& path);
void write_file_bytes(const fs::path& path, const std::vector<std::uint8_t>& bytes);
std::string read_text_file(const fs::path& path);
void write_text_file(const fs::path& path, const std::string& text);
/// FNV-1a over the bytes.
std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t seed = 14695981039346656037ull);

}  // namespace vxp
