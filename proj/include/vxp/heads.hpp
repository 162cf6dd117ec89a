#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <utility>
#include <vector>

#include "vxp/geometry.hpp"
#include "vxp/sparse3d.hpp"
#include "vxp/tensor.hpp"

namespace vxp {

/// Row-major H x W x C image of doubles.
struct Image {
  int height = 0;
  int width = 0;
  int channels = 1;
  std::vector<double> data;
};

struct ImageFeatureMap {
  int height = 0;  // H // 8
  int width = 0;   // W // 8
  ad::Tensor values;  // [H* W* x D], row index = v * width + u

  std::size_t channels() const { return values.dim(1); }
};

enum class Modality : std::uint8_t { Image = 0, PointCloud = 1 };

struct GlobalDescriptor {
  ad::Tensor vector;  // [D_g]
  Modality modality = Modality::Image;
  std::uint64_t id = 0;
};

/// Three stride-2 convolution blocks (kernel 2, no padding, ReLU). Each block
/// maps n -> n // 2, so the output is exactly (H // 8, W // 8, D) and every
/// output cell sees exactly its own 8 x 8 patch, like a patch embedding. With
/// `coord_channels`, two extra input channels carry the normalized pixel
/// position ((u + 0.5) / W, (v + 0.5) / H), standing in for the positional
/// embedding of a transformer encoder.
struct ImageEncoderParams {
  struct Block {
    ad::Tensor weight;  // [k*k x C_in x C_out]
    ad::Tensor bias;    // [C_out]
  };
  std::array<Block, 3> blocks;
  bool coord_channels = false;

  static ImageEncoderParams init(int in_channels, int out_channels, std::mt19937_64& rng,
                                 bool coord_channels = false);
  int out_channels() const { return static_cast<int>(blocks[2].bias.numel()); }
  NamedTensors named(const std::string& prefix) const;
};

struct GemFcnParams {
  ad::Tensor p;     // [1], learnable GeM exponent
  ad::Tensor fc_w;  // [D x D_g]
  ad::Tensor fc_b;  // [D_g]

  static GemFcnParams init(int in_dim, int out_dim, std::mt19937_64& rng);
  NamedTensors named(const std::string& prefix) const;
};

inline constexpr int kEncoderKernel = 2;
inline constexpr int kEncoderStride = 2;
inline constexpr int kEncoderPad = 0;

/// Dense strided 2D convolution of a [H W x C_in] map via a rulebook.
ad::Tensor conv2d(const ad::Tensor& input, int height, int width, const ad::Tensor& weight,
                  const ad::Tensor& bias, int kernel, int stride, int pad, int* out_height,
                  int* out_width);

ImageFeatureMap image_encode(const Image& image, const ImageEncoderParams& params);

/// Generalized mean over rows: ((1/N) sum x^p)^(1/p) per column.
ad::Tensor gem_pool(const ad::Tensor& features, const ad::Tensor& p);

/// Affine map to D_g. No normalization.
ad::Tensor fcn_project(const ad::Tensor& pooled, const GemFcnParams& params);

struct ImageNetwork {
  ImageEncoderParams encoder;
  GemFcnParams head;

  static ImageNetwork init(int in_channels, int local_dim, int descriptor_dim, std::uint64_t seed,
                           bool coord_channels = false);
  NamedTensors named() const;
  ad::Tensor describe(const ImageFeatureMap& features) const;
  GlobalDescriptor describe(const Image& image, std::uint64_t id = 0) const;
};

struct PointNetwork {
  VoxelGridConfig voxel_config = VoxelGridConfig::standard();
  std::uint64_t voxel_seed = 0;
  PointBackbone backbone;
  GemFcnParams head;

  NamedTensors named() const;
};

struct PointEncoding {
  SparseFeatureMap local;
  GlobalDescriptor global;
};

/// voxelize -> backbone -> GeM over the T* local descriptors -> FC.
PointEncoding point_cloud_encode(const PointCloud& cloud, const PointNetwork& net, std::uint64_t id = 0);

}  // namespace vxp
