#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "vxp/constants.hpp"
#include "vxp/data_io.hpp"
#include "vxp/geometry.hpp"
#include "vxp/heads.hpp"
#include "vxp/losses.hpp"
#include "vxp/tensor.hpp"

namespace vxp {

// ---- optimizer ---------------------------------------------------------------

struct AdamState {
  double beta1 = constants::kAdamBeta1;
  double beta2 = constants::kAdamBeta2;
  double eps = constants::kAdamEps;
  std::uint64_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

/// One bias-corrected Adam update of `params` (in place) from `grads`.
/// Buffers are allocated on the first call. Throws ShapeMismatch.
void adam_step(const std::vector<ad::Tensor>& params, const std::vector<std::vector<double>>& grads,
               AdamState& state, double lr);
/// Same, reading each parameter's accumulated gradient (missing = zero).
void adam_step(const std::vector<ad::Tensor>& params, AdamState& state, double lr);

/// base_lr * fn(epoch).
double lr_schedule(int epoch, double base_lr, const std::function<double(int)>& fn);
/// base_lr * decay^epoch.
double lr_schedule(int epoch, double base_lr, double decay = constants::kLrDecayPerEpoch);

// ---- configuration -------------------------------------------------------------

struct ModelConfig {
  int image_channels = 1;
  bool image_coord_channels = true;
  int local_dim = constants::kLocalChannels;  // D, shared by both branches
  int vfe_channels = constants::kVfeChannels;  // D*
  int descriptor_dim = constants::kDescriptorDim;
  int conv_layers = constants::kConvLayers;
  bool two_layer_vfe = false;
  VoxelGridConfig voxel = VoxelGridConfig::standard();
  std::uint64_t voxel_seed = 0;

  void validate() const;
};

enum class Stage : std::uint8_t { Image = 1, Local = 2, Global = 3 };
enum class ProjectionKind : std::uint8_t { Perspective = 0, Orthographic = 1 };

struct StageConfig {
  Stage stage = Stage::Image;
  int epochs = 5;
  double base_lr = 1e-3;
  double lr_decay = constants::kLrDecayPerEpoch;
  int batch_size = 16;
  std::uint64_t seed = 0;
  double beta = constants::kSmoothL1Beta;
  LocalLossMode local_mode = LocalLossMode::DepthScaled;
  ProjectionKind projection = ProjectionKind::Perspective;
  /// Stage 3: learning-rate factor for the fine-tuned backbone relative to
  /// the freshly initialized head.
  double backbone_lr_scale = 1.0;
  TripletConfig triplet;
  double pos_thresh_m = constants::kPositiveThresholdM;
  double neg_thresh_m = constants::kNegativeThresholdM;

  void validate() const;
};

// ---- data ----------------------------------------------------------------------

struct PairedSample {
  std::string id;
  Image image;
  PointCloud cloud;
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  double timestamp_s = 0.0;
  std::string run_id;
};

struct TrainingData {
  std::vector<PairedSample> samples;
  ProjectionModel camera;
};

/// Loads every manifest row's image and cloud; relative paths resolve
/// against the manifest directory.
TrainingData load_training_data(const fs::path& manifest, const fs::path& calibration);

struct LossRecord {
  int epoch = 0;
  int step = 0;
  double loss = 0.0;
};

/// CSV with header `epoch,step,loss`.
std::string format_loss_history(const std::vector<LossRecord>& history);
void write_loss_history(const fs::path& path, const std::vector<LossRecord>& history);

// ---- stages --------------------------------------------------------------------

struct ImageStageResult {
  ImageNetwork net;
  /// Per step, the triplet loss averaged over the batch's anchors.
  std::vector<LossRecord> history;
  std::vector<double> epoch_mean_loss;
  std::vector<int> epoch_batch_size;
};

/// Triplet loss with batch-hard mining. Batches are built from (anchor, positive)
/// pairs drawn in a seeded order. When some batch of an epoch exceeds the
/// zero-triplet trigger, the next epoch uses the expanded batch size.
/// Throws DegenerateDataset when no valid batch can be formed.
ImageStageResult train_stage_image(const TrainingData& data, const ModelConfig& model, const StageConfig& cfg,
                                   const ImageNetwork* init = nullptr);

struct PointStageResult {
  PointNetwork net;
  std::vector<LossRecord> history;  // per step, loss averaged over the batch's pairs
  std::vector<double> epoch_mean_loss;
  double initial_loss = 0.0;  // mean per-pair loss over the usable pairs before training
  double final_loss = 0.0;    // same, after training
  std::size_t skipped_pairs = 0;
};

/// Local loss between the point backbone's sparse map and the frozen image
/// features. Pairs without correspondences are skipped; more than half
/// skipped throws DegenerateDataset. Only point parameters change.
PointStageResult train_stage_local(const TrainingData& data, const ImageNetwork& frozen_image,
                                   const ModelConfig& model, const StageConfig& cfg,
                                   const PointNetwork* init = nullptr);

/// Global loss: fine-tunes a copy of the stage-2 backbone and trains a fresh GeM/FC
/// head. Throws MissingPrerequisite when `stage2` has no backbone.
PointStageResult train_stage_global(const TrainingData& data, const ImageNetwork& frozen_image,
                                    const PointNetwork& stage2, const ModelConfig& model, const StageConfig& cfg);

/// Mean per-pair local loss of `net` over `data` (pairs without
/// correspondences excluded).
double mean_local_loss(const TrainingData& data, const ImageNetwork& image, const PointNetwork& net,
                       LocalLossMode mode, ProjectionKind projection, double beta);

// ---- networks and checkpoints --------------------------------------------------

ImageNetwork init_image_network(const ModelConfig& model, std::uint64_t seed);
/// Backbone only; the global head is added by stage 3.
PointNetwork init_point_network(const ModelConfig& model, std::uint64_t seed);

/// Serializes whichever networks are given plus the model configuration.
Checkpoint make_checkpoint(const ModelConfig& model, const ImageNetwork* image, const PointNetwork* point);
ModelConfig model_config_from(const Checkpoint& ckpt);
/// Throws MissingPrerequisite when the image parameters are absent.
ImageNetwork image_network_from(const Checkpoint& ckpt);
/// Throws MissingPrerequisite when the backbone (or, if `require_head`, the
/// global head) is absent.
PointNetwork point_network_from(const Checkpoint& ckpt, bool require_head);
bool has_point_backbone(const Checkpoint& ckpt);
bool has_point_head(const Checkpoint& ckpt);

/// FNV-1a over names, shapes and values.
std::uint64_t parameter_hash(const NamedTensors& params);

// ---- inference -----------------------------------------------------------------

std::vector<double> image_descriptor(const ImageNetwork& net, const Image& image);
std::vector<double> point_descriptor(const PointNetwork& net, const PointCloud& cloud);

}  // namespace vxp
