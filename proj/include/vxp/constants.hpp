#pragma once

// Single source of truth for protocol and model constants. Config structs
// take their defaults from here, and the protocol docs are rendered from
// `kProtocolTable`; a test fails when either drifts.

#include <array>
#include <string_view>

namespace vxp::constants {

// Training tuples and triplet mining.
inline constexpr double kPositiveThresholdM = 10.0;
inline constexpr double kNegativeThresholdM = 25.0;
inline constexpr double kTripletMargin = 0.3;
inline constexpr double kZeroTripletTrigger = 0.30;
inline constexpr double kBatchExpansionRate = 1.4;
inline constexpr int kMaxBatchSize = 256;

// Voxelization of the LiDAR range in front of the sensor.
inline constexpr double kRangeXMin = 0.0, kRangeXMax = 44.0;
inline constexpr double kRangeYMin = -22.0, kRangeYMax = 22.0;
inline constexpr double kRangeZMin = -4.0, kRangeZMax = 18.0;
inline constexpr double kVoxelX = 0.4, kVoxelY = 0.4, kVoxelZ = 0.2;
inline constexpr int kInputGridDim = 110;
inline constexpr int kOutputGridDim = 28;
inline constexpr int kConvStride = 2;
inline constexpr int kConvLayers = 2;
inline constexpr int kMaxPointsPerVoxel = 32;

// Image branch geometry.
inline constexpr int kImageDownsample = 8;

// Losses and optimization.
inline constexpr double kSmoothL1Beta = 1.0;
inline constexpr double kGemInitP = 3.0;
inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-8;
inline constexpr double kLrDecayPerEpoch = 0.9;

// Retrieval protocols.
inline constexpr double kRetrievalRadiusM = 25.0;
inline constexpr double kRevisitMinGapS = 10.0;
inline constexpr double kKittiSamplingIntervalM = 20.0;
inline constexpr double kKittiSamplingOffsetM = 5.0;
inline constexpr int kRecallCurveMaxK = 25;

// Model sizes at desk scale.
inline constexpr int kVfeChannels = 32;       // D*
inline constexpr int kLocalChannels = 64;     // D
inline constexpr int kDescriptorDim = 256;    // D_g

enum class Provenance { Published, Chosen };

struct ProtocolConstant {
  std::string_view key;
  double value;
  std::string_view unit;
  Provenance provenance;
  std::string_view meaning;
};

inline constexpr std::array kProtocolTable = {
    ProtocolConstant{"positive_threshold", kPositiveThresholdM, "m", Provenance::Published,
                     "training positives lie within this distance"},
    ProtocolConstant{"negative_threshold", kNegativeThresholdM, "m", Provenance::Published,
                     "training negatives lie beyond this distance"},
    ProtocolConstant{"triplet_margin", kTripletMargin, "-", Provenance::Published,
                     "hinge margin of the batch-hard triplet loss"},
    ProtocolConstant{"zero_triplet_trigger", kZeroTripletTrigger, "fraction", Provenance::Published,
                     "batch grows when the zero-triplet share strictly exceeds this"},
    ProtocolConstant{"batch_expansion_rate", kBatchExpansionRate, "x", Provenance::Published,
                     "batch size multiplier on expansion"},
    ProtocolConstant{"max_batch_size", kMaxBatchSize, "samples", Provenance::Published,
                     "upper bound of the expanding batch"},
    ProtocolConstant{"range_x_min", kRangeXMin, "m", Provenance::Published, "voxel range lower x"},
    ProtocolConstant{"range_x_max", kRangeXMax, "m", Provenance::Published, "voxel range upper x"},
    ProtocolConstant{"range_y_min", kRangeYMin, "m", Provenance::Published, "voxel range lower y"},
    ProtocolConstant{"range_y_max", kRangeYMax, "m", Provenance::Published, "voxel range upper y"},
    ProtocolConstant{"range_z_min", kRangeZMin, "m", Provenance::Published, "voxel range lower z"},
    ProtocolConstant{"range_z_max", kRangeZMax, "m", Provenance::Published, "voxel range upper z"},
    ProtocolConstant{"voxel_size_x", kVoxelX, "m", Provenance::Published, "input voxel edge along x"},
    ProtocolConstant{"voxel_size_y", kVoxelY, "m", Provenance::Published, "input voxel edge along y"},
    ProtocolConstant{"voxel_size_z", kVoxelZ, "m", Provenance::Published, "input voxel edge along z"},
    ProtocolConstant{"input_grid_dim", kInputGridDim, "cells", Provenance::Published,
                     "input voxel grid cells per axis"},
    ProtocolConstant{"output_grid_dim", kOutputGridDim, "cells", Provenance::Published,
                     "sparse feature map cells per axis"},
    ProtocolConstant{"conv_stride", kConvStride, "-", Provenance::Chosen,
                     "stride of each sparse convolution layer"},
    ProtocolConstant{"conv_layers", kConvLayers, "-", Provenance::Chosen,
                     "number of strided sparse convolution layers"},
    ProtocolConstant{"max_points_per_voxel", kMaxPointsPerVoxel, "points", Provenance::Chosen,
                     "per-voxel point cap M"},
    ProtocolConstant{"image_downsample", kImageDownsample, "x", Provenance::Published,
                     "image feature map is (H//8, W//8)"},
    ProtocolConstant{"smooth_l1_beta", kSmoothL1Beta, "-", Provenance::Chosen,
                     "smooth-L1 transition point"},
    ProtocolConstant{"gem_init_p", kGemInitP, "-", Provenance::Chosen, "initial GeM exponent"},
    ProtocolConstant{"adam_beta1", kAdamBeta1, "-", Provenance::Chosen, "Adam first-moment decay"},
    ProtocolConstant{"adam_beta2", kAdamBeta2, "-", Provenance::Chosen, "Adam second-moment decay"},
    ProtocolConstant{"adam_eps", kAdamEps, "-", Provenance::Chosen, "Adam denominator epsilon"},
    ProtocolConstant{"lr_decay_per_epoch", kLrDecayPerEpoch, "x", Provenance::Chosen,
                     "default per-epoch learning-rate multiplier base"},
    ProtocolConstant{"retrieval_radius", kRetrievalRadiusM, "m", Provenance::Chosen,
                     "a retrieval counts as correct within this distance"},
    ProtocolConstant{"revisit_min_gap", kRevisitMinGapS, "s", Provenance::Published,
                     "KITTI positives must be strictly older than this"},
    ProtocolConstant{"kitti_sampling_interval", kKittiSamplingIntervalM, "m", Provenance::Published,
                     "KITTI query/database sampling step"},
    ProtocolConstant{"kitti_sampling_offset", kKittiSamplingOffsetM, "m", Provenance::Published,
                     "KITTI sampling start offset"},
    ProtocolConstant{"recall_curve_max_k", kRecallCurveMaxK, "-", Provenance::Published,
                     "recall@K curve is emitted for K = 1..25"},
    ProtocolConstant{"vfe_channels", kVfeChannels, "-", Provenance::Chosen, "voxel encoder width D*"},
    ProtocolConstant{"local_channels", kLocalChannels, "-", Provenance::Chosen, "local feature width D"},
    ProtocolConstant{"descriptor_dim", kDescriptorDim, "-", Provenance::Chosen,
                     "global descriptor width D_g"},
};

}  // namespace vxp::constants
