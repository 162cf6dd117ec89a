#include "vxp/docs.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

#include "vxp/constants.hpp"
#include "vxp/data_io.hpp"
#include "vxp/error.hpp"
#include "vxp/geometry.hpp"
#include "vxp/losses.hpp"
#include "vxp/retrieval.hpp"
#include "vxp/sparse3d.hpp"
#include "vxp/trainer.hpp"

namespace vxp {

namespace {

std::string num(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t`");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t`\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> cells(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (std::size_t i = 1; i < line.size(); ++i) {
    if (line[i] == '|') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += line[i];
    }
  }
  return out;
}

const constants::ProtocolConstant& table_entry(std::string_view key) {
  for (const auto& c : constants::kProtocolTable)
    if (c.key == key) return c;
  throw Error(ErrorCode::DriftDetected, "no constant named '" + std::string(key) + "'");
}

void expect(std::string_view key, double code_value, const std::string& where) {
  const double table = table_entry(key).value;
  if (code_value != table)
    throw Error(ErrorCode::DriftDetected, where + " is " + num(code_value) + " but " + std::string(key) +
                                              " is " + num(table));
}

std::string render_protocols() {
  using namespace constants;
  std::ostringstream o;
  o << "# Protocols and parameters\n\n"
       "Generated by `vxp_render_docs` from `include/vxp/constants.hpp`. Do not edit by hand;\n"
       "`ctest -R docs_in_sync` fails when this file and the code disagree.\n\n"
       "## Parameters\n\n"
       "`published` values come from the method description; `chosen` values are\n"
       "decisions of this implementation.\n\n"
       "| key | value | unit | source | meaning |\n"
       "|---|---|---|---|---|\n";
  for (const auto& c : kProtocolTable)
    o << "| " << c.key << " | " << num(c.value) << " | " << c.unit << " | "
      << (c.provenance == Provenance::Published ? "published" : "chosen") << " | " << c.meaning << " |\n";

  o << "\n## Training tuples\n\n"
       "For every manifest row (the anchor), positives are the other rows with ground distance\n"
       "strictly below "
    << num(kPositiveThresholdM) << " m and negatives the rows strictly beyond " << num(kNegativeThresholdM)
    << " m.\nRows in between are neither. Anchors without a positive are dropped and counted.\n\n"
       "Batches are mined batch-hard: the farthest positive and the closest negative per anchor,\n"
       "ties to the lowest batch index, hinge margin "
    << num(kTripletMargin)
    << ". When the share of anchors with\nzero loss strictly exceeds " << num(kZeroTripletTrigger * 100)
    << "%, the next epoch's batch grows to\n`ceil(B * " << num(kBatchExpansionRate) << ")`, capped at "
    << kMaxBatchSize << ".\n\n"
       "## Plain recall\n\n"
       "A query succeeds at K when any of its K nearest database descriptors lies within\n"
    << num(kRetrievalRadiusM)
    << " m of the query position. Queries with no database entry inside that radius are\n"
       "excluded from the denominator and reported. Recall@1% uses `K = max(1, ceil(N / 100))`\n"
       "for a database of N entries. Nearest-neighbour ties resolve to the lowest id.\n\n"
       "## Oxford pairwise protocol\n\n"
       "Every ordered pair of runs (i, j), i != j, is evaluated: the queries of run i that lie\n"
       "inside the test region search the whole database of run j. The reported figure is the\n"
       "unweighted mean over pairs. Pairs in which no query has an in-radius database entry are\n"
       "skipped and counted.\n\n"
       "## KITTI revisit protocol\n\n"
       "Queries and database entries are sampled along the trajectory every "
    << num(kKittiSamplingIntervalM) << " m of\ntravelled distance, starting at " << num(kKittiSamplingOffsetM)
    << " m. A query at time t0 may only retrieve entries\nrecorded strictly before it and more than "
    << num(kRevisitMinGapS)
    << " s earlier. Each query searches only\nthe entries that pass this filter; queries without a filtered "
       "in-radius entry are\nexcluded.\n\n"
       "## Recall curve\n\n"
       "`k,recall` for K = 1.."
    << kRecallCurveMaxK << "; K beyond the database size is clamped to it.\n";
  return o.str();
}

std::string render_formats() {
  std::ostringstream o;
  o << "# File formats\n\n"
       "Generated by `vxp_render_docs`. All binary formats are little-endian.\n\n"
       "## Point clouds (`.bin`)\n\n"
       "KITTI layout: records of four f32 values `x y z intensity` in the LiDAR frame (metres).\n"
       "Writers store intensity 0. A size that is not a multiple of 16 bytes is `MalformedFile`.\n\n"
       "## Images (`.img`)\n\n"
       "`u32 width`, `u32 height`, then `width * height` f32 values in row-major order (one\n"
       "channel). A size mismatch is `MalformedFile`.\n\n"
       "## Calibration (VXP-CAL v1, text)\n\n"
       "Line 1: `fx_n fy_n cx_n cy_n`, the intrinsics divided by the image width (x) and height\n"
       "(y). Lines 2-4: the top three rows of the 4x4 LiDAR-to-camera transform, four values\n"
       "each. Exactly four non-empty lines. The KITTI importer reads `P2` and `Tr` (or\n"
       "`Tr_velo_to_cam`) from `calib.txt` and normalizes by the image size.\n\n"
       "## Manifest (CSV)\n\n"
       "Header `"
    << kManifestHeader
    << "`. Paths are relative to the manifest's directory.\n"
       "Errors name the offending line: `HeaderMismatch`, `ParseError`, `DuplicateId`.\n\n"
       "## Descriptors (VXPD)\n\n"
       "| field | type |\n|---|---|\n"
       "| magic | `VXPD` (4 bytes) |\n"
       "| version | u16 = "
    << kDescriptorFileVersion
    << " |\n| dim | u32 |\n| count | u32 |\n| records | count x (id u64, dim x f32) |\n\n"
       "The header is "
    << kDescriptorHeaderBytes
    << " bytes. Values are stored as f32, so a round trip is exact after\n"
       "32-bit rounding. Trailing bytes are `MalformedFile`; a short file is `TruncatedFile`.\n\n"
       "## Checkpoints (VXPC)\n\n"
       "| field | type |\n|---|---|\n"
       "| magic | `VXPC` |\n"
       "| version | u16 = "
    << kCheckpointVersion
    << " |\n| tensors | u32 |\n"
       "| per tensor | name length u16, UTF-8 name, rank u8, extents u32 each, f64 values |\n\n"
       "Configuration travels as tensors under `meta.`: `meta.model` (image channels, coordinate\n"
       "channels flag, D, D*, descriptor dim, conv layers, two-layer VFE flag),\n"
       "`meta.voxel_config` (range min, range max, voxel size, M) and `meta.voxel_seed`\n"
       "(low and high 32-bit halves).\n\n"
       "## Retrieval index (VXPI)\n\n"
       "| field | type |\n|---|---|\n"
       "| magic | `VXPI` |\n"
       "| version | u16 = "
    << kIndexFileVersion
    << " |\n| metric | u8 (0 = L2, 1 = L1) |\n| dim | u32 |\n| count | u32 |\n"
       "| per entry | id u64, position 3 x f64, has_timestamp u8, timestamp f64, dim x f64 |\n\n"
       "Entries are stored sorted by id.\n\n"
       "## Result files\n\n"
       "Recall: `protocol,k,recall` with k in `1`, `5`, ..., `1pct`, recall printed with six\n"
       "decimals. Curve: `k,recall` for k = 1..25. Loss history: `epoch,step,loss`.\n";
  return o.str();
}

}  // namespace

std::vector<DocFile> render_protocol_docs() {
  return {{"protocols.md", render_protocols()}, {"formats.md", render_formats()}};
}

std::vector<DocConstant> parse_doc_constants(const std::string& markdown) {
  std::vector<DocConstant> out;
  std::istringstream in(markdown);
  std::string line;
  bool in_table = false;
  while (std::getline(in, line)) {
    if (line.rfind("## ", 0) == 0) {
      in_table = line == "## Parameters";
      continue;
    }
    if (!in_table || line.empty() || line[0] != '|') continue;
    const auto c = cells(line);
    if (c.size() < 2 || c[0] == "key" || c[0].rfind("---", 0) == 0) continue;
    double v = 0.0;
    const auto res = std::from_chars(c[1].data(), c[1].data() + c[1].size(), v);
    if (res.ec != std::errc() || res.ptr != c[1].data() + c[1].size())
      throw Error(ErrorCode::ParseError, "parameter '" + c[0] + "' has non-numeric value '" + c[1] + "'");
    out.push_back({c[0], v});
  }
  return out;
}

void check_doc_constants(const std::vector<DocConstant>& documented) {
  for (const auto& c : constants::kProtocolTable) {
    const DocConstant* found = nullptr;
    for (const auto& d : documented)
      if (d.key == c.key) found = &d;
    if (!found) throw Error(ErrorCode::DriftDetected, "'" + std::string(c.key) + "' is not documented");
    if (found->value != c.value)
      throw Error(ErrorCode::DriftDetected, "'" + std::string(c.key) + "' documented as " + num(found->value) +
                                                ", code uses " + num(c.value));
  }
  for (const auto& d : documented) table_entry(d.key);
}

void check_config_defaults() {
  const TripletConfig triplet;
  expect("triplet_margin", triplet.margin, "TripletConfig::margin");
  expect("zero_triplet_trigger", triplet.zero_triplet_trigger, "TripletConfig::zero_triplet_trigger");
  expect("batch_expansion_rate", triplet.expansion_rate, "TripletConfig::expansion_rate");
  expect("max_batch_size", triplet.max_batch, "TripletConfig::max_batch");

  const StageConfig stage;
  expect("positive_threshold", stage.pos_thresh_m, "StageConfig::pos_thresh_m");
  expect("negative_threshold", stage.neg_thresh_m, "StageConfig::neg_thresh_m");
  expect("smooth_l1_beta", stage.beta, "StageConfig::beta");
  expect("lr_decay_per_epoch", stage.lr_decay, "StageConfig::lr_decay");

  const AdamState adam;
  expect("adam_beta1", adam.beta1, "AdamState::beta1");
  expect("adam_beta2", adam.beta2, "AdamState::beta2");
  expect("adam_eps", adam.eps, "AdamState::eps");

  const ModelConfig model;
  expect("vfe_channels", model.vfe_channels, "ModelConfig::vfe_channels");
  expect("local_channels", model.local_dim, "ModelConfig::local_dim");
  expect("descriptor_dim", model.descriptor_dim, "ModelConfig::descriptor_dim");
  expect("conv_layers", model.conv_layers, "ModelConfig::conv_layers");

  const VoxelGridConfig voxel = VoxelGridConfig::standard();
  expect("range_x_min", voxel.range_min.x(), "VoxelGridConfig::standard range_min.x");
  expect("range_y_min", voxel.range_min.y(), "VoxelGridConfig::standard range_min.y");
  expect("range_z_min", voxel.range_min.z(), "VoxelGridConfig::standard range_min.z");
  expect("range_x_max", voxel.range_max.x(), "VoxelGridConfig::standard range_max.x");
  expect("range_y_max", voxel.range_max.y(), "VoxelGridConfig::standard range_max.y");
  expect("range_z_max", voxel.range_max.z(), "VoxelGridConfig::standard range_max.z");
  expect("voxel_size_x", voxel.voxel_size.x(), "VoxelGridConfig::standard voxel_size.x");
  expect("voxel_size_y", voxel.voxel_size.y(), "VoxelGridConfig::standard voxel_size.y");
  expect("voxel_size_z", voxel.voxel_size.z(), "VoxelGridConfig::standard voxel_size.z");
  expect("max_points_per_voxel", voxel.max_points_per_voxel, "VoxelGridConfig::standard max_points_per_voxel");
  GridCoord dims = voxel.grid_dims();
  for (int a = 0; a < 3; ++a) expect("input_grid_dim", dims[a], "standard grid_dims");
  for (int l = 0; l < model.conv_layers; ++l) dims = conv_output_dims(dims, constants::kConvStride);
  for (int a = 0; a < 3; ++a) expect("output_grid_dim", dims[a], "output grid after the conv stack");

  const EvalProtocol eval;
  expect("retrieval_radius", eval.success_radius_m, "EvalProtocol::success_radius_m");
  expect("revisit_min_gap", eval.revisit_min_gap_s, "EvalProtocol::revisit_min_gap_s");
  expect("kitti_sampling_interval", eval.sampling_interval_m, "EvalProtocol::sampling_interval_m");
  expect("kitti_sampling_offset", eval.sampling_offset_m, "EvalProtocol::sampling_offset_m");
}

void check_docs_in_sync(const std::filesystem::path& docs_dir) {
  check_config_defaults();
  const std::string protocols = read_text_file(docs_dir / "protocols.md");
  check_doc_constants(parse_doc_constants(protocols));
  for (const auto& f : render_protocol_docs()) {
    const std::string on_disk = read_text_file(docs_dir / f.name);
    if (on_disk != f.content)
      throw Error(ErrorCode::DriftDetected, (docs_dir / f.name).string() + " differs from the rendered version");
  }
}

void write_protocol_docs(const std::filesystem::path& docs_dir) {
  std::filesystem::create_directories(docs_dir);
  for (const auto& f : render_protocol_docs()) write_text_file(docs_dir / f.name, f.content);
}

}  // namespace vxp
