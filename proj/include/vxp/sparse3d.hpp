#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "vxp/geometry.hpp"
#include "vxp/tensor.hpp"

namespace vxp {

using NamedTensors = std::vector<std::pair<std::string, ad::Tensor>>;

/// Sparse 3D tensor: one D-dim feature row per occupied cell.
struct SparseFeatureMap {
  std::vector<GridCoord> coords;
  ad::Tensor feats;  // [T x D]
  GridCoord grid_dims{};
  Eigen::Vector3d effective_voxel_size = Eigen::Vector3d::Ones();
  Eigen::Vector3d range_min = Eigen::Vector3d::Zero();

  std::size_t size() const noexcept { return coords.size(); }
  std::size_t channels() const { return feats.dim(1); }
};

/// Per-point encoder: linear(3 -> D*) + ReLU + max over the voxel's valid
/// points. With `two_layer`, each point feature is concatenated with the
/// voxel max and passed through linear(2D* -> D*) + ReLU + max again.
struct VFEParams {
  ad::Tensor w1;  // [3 x D*]
  ad::Tensor b1;  // [D*]
  bool two_layer = false;
  ad::Tensor w2;  // [2D* x D*]
  ad::Tensor b2;  // [D*]

  static VFEParams init(int channels, bool two_layer, std::mt19937_64& rng);
  int channels() const { return static_cast<int>(w1.dim(1)); }
  NamedTensors named(const std::string& prefix) const;
};

struct SparseConvLayer {
  ad::Tensor kernel;  // [k^3 x C_in x C_out], offset index (dx * k + dy) * k + dz
  ad::Tensor bias;    // [C_out]
  int kernel_size = 3;
  int stride = 1;

  static SparseConvLayer init(int c_in, int c_out, int kernel_size, int stride, std::mt19937_64& rng);
  int in_channels() const { return static_cast<int>(kernel.dim(1)); }
  int out_channels() const { return static_cast<int>(kernel.dim(2)); }
  NamedTensors named(const std::string& prefix) const;
};

struct PointBackbone {
  VFEParams vfe;
  std::vector<SparseConvLayer> convs;  // ReLU follows each layer

  /// D* -> D -> ... -> D, kernel 3, stride 2 per layer.
  static PointBackbone init(int vfe_channels, int out_channels, int layers, bool two_layer_vfe,
                            std::uint64_t seed);
  int out_channels() const;
  NamedTensors named(const std::string& prefix) const;
};

SparseFeatureMap vfe_encode(const VoxelGrid& grid, const VFEParams& params);

/// Output cells of a (non-submanifold) sparse convolution with padding k/2:
/// o is active when some active input i = stride * o + delta, |delta| <= k/2.
std::vector<GridCoord> sparse_conv_output_coords(const std::vector<GridCoord>& in_coords,
                                                 const GridCoord& in_dims, int kernel_size, int stride);
GridCoord conv_output_dims(const GridCoord& in_dims, int stride);

/// Convolution plus bias (no activation). Throws ChannelMismatch.
SparseFeatureMap sparse_conv3d(const SparseFeatureMap& input, const SparseConvLayer& layer);

/// Returns a [X x Y x Z x D] dense copy. Throws TooLarge above `max_elements`.
ad::Tensor sparse_to_dense(const SparseFeatureMap& map, std::size_t max_elements = 64u << 20);
/// Keeps every cell whose feature vector is not all zeros.
SparseFeatureMap dense_to_sparse(const ad::Tensor& dense, const Eigen::Vector3d& voxel_size,
                                 const Eigen::Vector3d& range_min);

SparseFeatureMap point_cloud_backbone(const VoxelGrid& grid, const PointBackbone& backbone);

}  // namespace vxp
