#include "vxp/losses.hpp"

#include <cmath>

#include "vxp/error.hpp"

namespace vxp {

void TripletConfig::validate() const {
  if (!(margin > 0.0)) throw Error(ErrorCode::InvalidConfig, "triplet margin must be > 0");
  if (!(zero_triplet_trigger > 0.0 && zero_triplet_trigger < 1.0))
    throw Error(ErrorCode::InvalidConfig, "zero-triplet trigger must lie in (0, 1)");
  if (!(expansion_rate > 1.0)) throw Error(ErrorCode::InvalidConfig, "expansion rate must be > 1");
  if (max_batch < 1) throw Error(ErrorCode::InvalidConfig, "max batch must be >= 1");
}

TrainingBatch make_training_batch(ad::Tensor descriptors, std::vector<Eigen::Vector3d> positions,
                                  double pos_thresh, double neg_thresh) {
  if (!(pos_thresh > 0.0 && pos_thresh < neg_thresh))
    throw Error(ErrorCode::InvalidConfig, "thresholds must satisfy 0 < pos < neg");
  if (descriptors.rank() != 2 || descriptors.dim(0) != positions.size())
    throw Error(ErrorCode::ShapeMismatch, "descriptor rows must match positions");
  TrainingBatch batch;
  const std::size_t b = positions.size();
  batch.descriptors = std::move(descriptors);
  batch.positive_mask.assign(b * b, 0);
  batch.negative_mask.assign(b * b, 0);
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < b; ++j) {
      if (i == j) continue;
      const double d = (positions[i] - positions[j]).norm();
      batch.positive_mask[i * b + j] = d < pos_thresh;
      batch.negative_mask[i * b + j] = d > neg_thresh;
    }
  batch.positions = std::move(positions);
  return batch;
}

double descriptor_distance(const double* a, const double* b, std::size_t dim, Metric metric) {
  double s = 0.0;
  if (metric == Metric::L2) {
    for (std::size_t i = 0; i < dim; ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
  }
  for (std::size_t i = 0; i < dim; ++i) s += std::fabs(a[i] - b[i]);
  return s;
}

std::vector<std::size_t> minable_anchors(const TrainingBatch& batch) {
  std::vector<std::size_t> out;
  const std::size_t b = batch.size();
  for (std::size_t a = 0; a < b; ++a) {
    bool pos = false, neg = false;
    for (std::size_t j = 0; j < b; ++j) {
      pos = pos || batch.is_positive(a, j);
      neg = neg || batch.is_negative(a, j);
    }
    if (pos && neg) out.push_back(a);
  }
  return out;
}

std::vector<MinedTriplet> mine_hardest(const TrainingBatch& batch, const std::vector<std::size_t>& anchors,
                                       Metric metric) {
  const std::size_t b = batch.size();
  const std::size_t dim = batch.descriptors.dim(1);
  const double* x = batch.descriptors.values().data();
  std::vector<MinedTriplet> out;
  out.reserve(anchors.size());
  for (std::size_t a : anchors) {
    std::size_t best_pos = b, best_neg = b;
    double pos_d = 0.0, neg_d = 0.0;
    for (std::size_t j = 0; j < b; ++j) {
      if (!batch.is_positive(a, j) && !batch.is_negative(a, j)) continue;
      const double d = descriptor_distance(x + a * dim, x + j * dim, dim, metric);
      if (batch.is_positive(a, j) && (best_pos == b || d > pos_d)) {
        best_pos = j;
        pos_d = d;
      }
      if (batch.is_negative(a, j) && (best_neg == b || d < neg_d)) {
        best_neg = j;
        neg_d = d;
      }
    }
    if (best_pos == b) throw Error(ErrorCode::NoPositive, "anchor " + std::to_string(a) + " has no positive");
    if (best_neg == b) throw Error(ErrorCode::NoNegative, "anchor " + std::to_string(a) + " has no negative");
    out.push_back({a, best_pos, best_neg});
  }
  return out;
}

std::vector<MinedTriplet> mine_hardest(const TrainingBatch& batch, Metric metric) {
  std::vector<std::size_t> all(batch.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return mine_hardest(batch, all, metric);
}

namespace {

ad::Tensor row_distances(const ad::Tensor& x, const std::vector<std::size_t>& lhs,
                         const std::vector<std::size_t>& rhs, Metric metric) {
  const ad::Tensor diff = ad::sub(ad::gather_rows(x, lhs), ad::gather_rows(x, rhs));
  return metric == Metric::L2 ? ad::norm_rows(diff) : ad::sum_cols(ad::abs(diff));
}

}  // namespace

TripletLossResult triplet_loss_batch_hard(const TrainingBatch& batch, const TripletConfig& cfg) {
  cfg.validate();
  const auto anchors = minable_anchors(batch);
  if (anchors.empty()) {
    bool any_pos = false;
    for (auto m : batch.positive_mask) any_pos = any_pos || m;
    throw Error(any_pos ? ErrorCode::NoNegative : ErrorCode::NoPositive,
                "no anchor in the batch of " + std::to_string(batch.size()) + " can be mined");
  }
  TripletLossResult result;
  result.triplets = mine_hardest(batch, anchors, cfg.distance);
  std::vector<std::size_t> a, p, n;
  for (const auto& t : result.triplets) {
    a.push_back(t.anchor);
    p.push_back(t.positive);
    n.push_back(t.negative);
  }
  const ad::Tensor d_ap = row_distances(batch.descriptors, a, p, cfg.distance);
  const ad::Tensor d_an = row_distances(batch.descriptors, a, n, cfg.distance);
  const ad::Tensor hinge = ad::relu(ad::add_scalar(ad::sub(d_ap, d_an), cfg.margin));
  for (double h : hinge.values()) result.zero_triplets += h == 0.0;
  result.loss = ad::sum(hinge);
  return result;
}

int zero_triplet_expansion(int zero_count, int batch_size, const TripletConfig& cfg) {
  if (batch_size < 1 || zero_count < 0 || zero_count > batch_size)
    throw Error(ErrorCode::InvalidConfig, "zero-triplet count must lie in [0, batch size]");
  const double share = static_cast<double>(zero_count) / static_cast<double>(batch_size);
  if (!(share > cfg.zero_triplet_trigger)) return batch_size;
  // 5 * 1.4 evaluates to 7.000000000000001; keep ceil from rounding that up.
  const auto grown = static_cast<int>(std::ceil(batch_size * cfg.expansion_rate - 1e-9));
  return std::max(batch_size, std::min(grown, cfg.max_batch));
}

double smooth_l1_value(const std::vector<double>& x, double beta) {
  if (!(beta > 0.0)) throw Error(ErrorCode::NonPositiveBeta, "smooth_l1 beta must be > 0");
  double s = 0.0;
  for (double v : x) {
    const double a = std::fabs(v);
    s += a < beta ? 0.5 * v * v / beta : a - 0.5 * beta;
  }
  return s;
}

std::vector<double> collision_weights(const ProjectedFeatureMap& projected) {
  std::vector<double> w(projected.entries.size(), 0.0);
  for (const auto& set : projected.collision_sets) {
    double total = 0.0;
    for (std::size_t e : set) total += projected.entries[e].inverse_depth;
    for (std::size_t e : set) w[e] = projected.entries[e].inverse_depth / total;
  }
  return w;
}

ad::Tensor local_descriptor_loss(const ProjectedFeatureMap& projected, const ad::Tensor& voxel_feats,
                                 const ImageFeatureMap& image, LocalLossMode mode, double beta) {
  if (projected.entries.empty())
    throw Error(ErrorCode::NoCorrespondences, "no projected voxel-pixel correspondences");
  if (projected.width != image.width || projected.height != image.height)
    throw Error(ErrorCode::ShapeMismatch, "projected grid " + std::to_string(projected.width) + "x" +
                                              std::to_string(projected.height) + " vs image features " +
                                              std::to_string(image.width) + "x" +
                                              std::to_string(image.height));
  if (voxel_feats.dim(1) != image.channels())
    throw Error(ErrorCode::ChannelMismatch, "voxel and image feature widths differ");
  std::vector<std::size_t> voxel_rows, pixel_rows;
  std::vector<double> inv_depth;
  for (const auto& e : projected.entries) {
    voxel_rows.push_back(e.voxel);
    pixel_rows.push_back(projected.pixel_index(e));
    inv_depth.push_back(e.inverse_depth);
  }
  const ad::Tensor voxel = ad::gather_rows(voxel_feats, std::move(voxel_rows));
  const ad::Tensor pixel = ad::gather_rows(image.values, std::move(pixel_rows));
  if (mode == LocalLossMode::DepthScaled)
    return ad::smooth_l1(ad::sub(ad::scale_rows(voxel, std::move(inv_depth)), pixel), beta);
  const ad::Tensor per_entry = ad::smooth_l1_rows(ad::sub(voxel, pixel), beta);
  const auto w = collision_weights(projected);
  return ad::sum(ad::mul(per_entry, ad::Tensor::from({w.size()}, w)));
}

ad::Tensor global_descriptor_loss(const ad::Tensor& image_desc, const ad::Tensor& point_desc, double beta) {
  if (image_desc.shape() != point_desc.shape())
    throw Error(ErrorCode::ShapeMismatch, "descriptor shapes " + ad::shape_str(image_desc.shape()) +
                                              " and " + ad::shape_str(point_desc.shape()) + " differ");
  return ad::smooth_l1(ad::sub(image_desc, point_desc), beta);
}

}  // namespace vxp
