#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <cstdint>
#include <vector>

#include "vxp/constants.hpp"
#include "vxp/geometry.hpp"
#include "vxp/heads.hpp"
#include "vxp/tensor.hpp"

namespace vxp {

enum class Metric : std::uint8_t { L2 = 0, L1 = 1 };

struct TripletConfig {
  double margin = constants::kTripletMargin;
  Metric distance = Metric::L2;
  double zero_triplet_trigger = constants::kZeroTripletTrigger;
  double expansion_rate = constants::kBatchExpansionRate;
  int max_batch = constants::kMaxBatchSize;

  void validate() const;
};

/// Descriptors of one minibatch plus the geographic masks used for mining.
struct TrainingBatch {
  ad::Tensor descriptors;  // [B x D_g]
  std::vector<Eigen::Vector3d> positions;
  std::vector<std::uint8_t> positive_mask;  // B x B, row-major, diagonal 0
  std::vector<std::uint8_t> negative_mask;

  std::size_t size() const noexcept { return positions.size(); }
  bool is_positive(std::size_t a, std::size_t b) const { return positive_mask[a * size() + b] != 0; }
  bool is_negative(std::size_t a, std::size_t b) const { return negative_mask[a * size() + b] != 0; }
};

/// Positives strictly within `pos_thresh`, negatives strictly beyond `neg_thresh`.
TrainingBatch make_training_batch(ad::Tensor descriptors, std::vector<Eigen::Vector3d> positions,
                                  double pos_thresh = constants::kPositiveThresholdM,
                                  double neg_thresh = constants::kNegativeThresholdM);

double descriptor_distance(const double* a, const double* b, std::size_t dim, Metric metric);

struct MinedTriplet {
  std::size_t anchor;
  std::size_t positive;
  std::size_t negative;
};

/// Anchors that have at least one positive and one negative in the batch.
std::vector<std::size_t> minable_anchors(const TrainingBatch& batch);

/// Hardest (farthest) positive and hardest (closest) negative per anchor,
/// ties to the lowest index. Throws NoPositive / NoNegative.
std::vector<MinedTriplet> mine_hardest(const TrainingBatch& batch, const std::vector<std::size_t>& anchors,
                                       Metric metric = Metric::L2);
/// All rows as anchors.
std::vector<MinedTriplet> mine_hardest(const TrainingBatch& batch, Metric metric = Metric::L2);

struct TripletLossResult {
  ad::Tensor loss;  // scalar
  std::vector<MinedTriplet> triplets;
  std::size_t zero_triplets = 0;
};

/// Sum over minable anchors of [d(a,p*) - d(a,n*) + m]_+.
TripletLossResult triplet_loss_batch_hard(const TrainingBatch& batch, const TripletConfig& cfg);

/// Grows the batch by `expansion_rate` (ceil, capped) when the zero-triplet
/// share strictly exceeds the trigger.
int zero_triplet_expansion(int zero_count, int batch_size, const TripletConfig& cfg);

/// Elementwise smooth-L1 summed to a scalar.
double smooth_l1_value(const std::vector<double>& x, double beta);

enum class LocalLossMode : std::uint8_t {
  /// sum_i smooth_l1(d_i * f_voxel(i) - f_image(u_i, v_i))
  DepthScaled = 0,
  /// sum_i w_i * smooth_l1(f_voxel(i) - f_image(u_i, v_i)), w_i = d_i / sum_{pixel} d_j
  CollisionNormalized = 1,
};

/// Per-entry weights used by the collision-normalized mode.
std::vector<double> collision_weights(const ProjectedFeatureMap& projected);

ad::Tensor local_descriptor_loss(const ProjectedFeatureMap& projected, const ad::Tensor& voxel_feats,
                                 const ImageFeatureMap& image, LocalLossMode mode,
                                 double beta = constants::kSmoothL1Beta);

/// smooth-L1 of (image - point) summed over all entries; accepts a single
/// descriptor or a stacked batch of equal shape.
ad::Tensor global_descriptor_loss(const ad::Tensor& image_desc, const ad::Tensor& point_desc,
                                  double beta = constants::kSmoothL1Beta);

}  // namespace vxp
