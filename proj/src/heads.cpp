#include "vxp/heads.hpp"

#include <cmath>
#include <map>
#include <tuple>

#include "vxp/constants.hpp"
#include "vxp/error.hpp"
#include "vxp/init.hpp"

namespace vxp {

namespace {

std::shared_ptr<const ad::Rulebook> dense_rulebook(int height, int width, int kernel, int stride, int pad,
                                                   int out_h, int out_w) {
  using Key = std::tuple<int, int, int, int, int>;
  thread_local std::map<Key, std::shared_ptr<const ad::Rulebook>> cache;
  const Key key{height, width, kernel, stride, pad};
  if (auto it = cache.find(key); it != cache.end()) return it->second;
  auto rb = std::make_shared<ad::Rulebook>();
  rb->n_in = static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
  rb->n_out = static_cast<std::size_t>(out_h) * static_cast<std::size_t>(out_w);
  rb->pairs.resize(static_cast<std::size_t>(kernel * kernel));
  for (int oy = 0; oy < out_h; ++oy)
    for (int ox = 0; ox < out_w; ++ox)
      for (int ky = 0; ky < kernel; ++ky)
        for (int kx = 0; kx < kernel; ++kx) {
          const int iy = oy * stride + ky - pad;
          const int ix = ox * stride + kx - pad;
          if (iy < 0 || ix < 0 || iy >= height || ix >= width) continue;
          rb->pairs[static_cast<std::size_t>(ky * kernel + kx)].emplace_back(
              static_cast<std::uint32_t>(iy * width + ix), static_cast<std::uint32_t>(oy * out_w + ox));
        }
  cache.emplace(key, rb);
  return rb;
}

}  // namespace

ImageEncoderParams ImageEncoderParams::init(int in_channels, int out_channels, std::mt19937_64& rng,
                                            bool coord_channels) {
  ImageEncoderParams p;
  p.coord_channels = coord_channels;
  const std::array<int, 4> widths{in_channels + (coord_channels ? 2 : 0), 16, 32, out_channels};
  const auto taps = static_cast<std::size_t>(kEncoderKernel * kEncoderKernel);
  for (std::size_t b = 0; b < 3; ++b) {
    const auto cin = static_cast<std::size_t>(widths[b]);
    const auto cout = static_cast<std::size_t>(widths[b + 1]);
    p.blocks[b].weight = random_normal({taps, cin, cout}, std::sqrt(2.0 / (taps * cin)), rng);
    p.blocks[b].bias = filled({cout}, 0.01);
  }
  return p;
}

NamedTensors ImageEncoderParams::named(const std::string& prefix) const {
  NamedTensors out;
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    out.emplace_back(prefix + "block" + std::to_string(b) + ".weight", blocks[b].weight);
    out.emplace_back(prefix + "block" + std::to_string(b) + ".bias", blocks[b].bias);
  }
  return out;
}

GemFcnParams GemFcnParams::init(int in_dim, int out_dim, std::mt19937_64& rng) {
  GemFcnParams p;
  p.p = filled({1}, constants::kGemInitP);
  p.fc_w = random_normal({static_cast<std::size_t>(in_dim), static_cast<std::size_t>(out_dim)},
                         std::sqrt(1.0 / in_dim), rng);
  p.fc_b = filled({static_cast<std::size_t>(out_dim)}, 0.0);
  return p;
}

NamedTensors GemFcnParams::named(const std::string& prefix) const {
  return {{prefix + "p", p}, {prefix + "fc_w", fc_w}, {prefix + "fc_b", fc_b}};
}

ad::Tensor conv2d(const ad::Tensor& input, int height, int width, const ad::Tensor& weight,
                  const ad::Tensor& bias, int kernel, int stride, int pad, int* out_height,
                  int* out_width) {
  const int oh = (height + 2 * pad - kernel) / stride + 1;
  const int ow = (width + 2 * pad - kernel) / stride + 1;
  if (oh < 1 || ow < 1) throw Error(ErrorCode::TooSmall, "input too small for the convolution");
  auto rb = dense_rulebook(height, width, kernel, stride, pad, oh, ow);
  if (out_height) *out_height = oh;
  if (out_width) *out_width = ow;
  return ad::add_row_bias(ad::rulebook_conv(input, weight, std::move(rb)), bias);
}

ImageFeatureMap image_encode(const Image& image, const ImageEncoderParams& params) {
  if (image.height < constants::kImageDownsample || image.width < constants::kImageDownsample)
    throw Error(ErrorCode::TooSmall, "image " + std::to_string(image.height) + "x" +
                                         std::to_string(image.width) + " is smaller than 8x8");
  if (image.data.size() != static_cast<std::size_t>(image.height * image.width * image.channels))
    throw Error(ErrorCode::ShapeMismatch, "image buffer does not match its dimensions");
  const int extra = params.coord_channels ? 2 : 0;
  const int cin = image.channels + extra;
  if (params.blocks[0].weight.dim(1) != static_cast<std::size_t>(cin))
    throw Error(ErrorCode::ChannelMismatch, "encoder expects " + std::to_string(params.blocks[0].weight.dim(1)) +
                                                " input channels, image provides " + std::to_string(cin));
  std::vector<double> input;
  if (extra == 0) {
    input = image.data;
  } else {
    input.reserve(static_cast<std::size_t>(image.height * image.width * cin));
    for (int v = 0; v < image.height; ++v)
      for (int u = 0; u < image.width; ++u) {
        const auto px = static_cast<std::size_t>((v * image.width + u) * image.channels);
        input.insert(input.end(), image.data.begin() + static_cast<std::ptrdiff_t>(px),
                     image.data.begin() + static_cast<std::ptrdiff_t>(px + static_cast<std::size_t>(image.channels)));
        input.push_back((u + 0.5) / image.width);
        input.push_back((v + 0.5) / image.height);
      }
  }
  ad::Tensor x = ad::Tensor::from(
      {static_cast<std::size_t>(image.height * image.width), static_cast<std::size_t>(cin)}, std::move(input));
  int h = image.height, w = image.width;
  for (const auto& block : params.blocks) {
    int oh = 0, ow = 0;
    x = ad::relu(conv2d(x, h, w, block.weight, block.bias, kEncoderKernel, kEncoderStride, kEncoderPad,
                        &oh, &ow));
    h = oh;
    w = ow;
  }
  return {h, w, std::move(x)};
}

ad::Tensor gem_pool(const ad::Tensor& features, const ad::Tensor& p) {
  if (features.rank() != 2 || features.dim(0) == 0)
    throw Error(ErrorCode::EmptyInput, "GeM needs a non-empty [N x D] feature set");
  if (!(p.item() > 0.0)) throw Error(ErrorCode::NonPositiveP, "GeM exponent must be > 0");
  return ad::pow(ad::mean_rows(ad::pow(features, p)), ad::pow(p, -1.0));
}

ad::Tensor fcn_project(const ad::Tensor& pooled, const GemFcnParams& params) {
  const std::size_t d = params.fc_w.dim(0);
  if (pooled.numel() != d)
    throw Error(ErrorCode::ShapeMismatch, "pooled vector has " + std::to_string(pooled.numel()) +
                                              " entries, FC expects " + std::to_string(d));
  const ad::Tensor row = ad::reshape(pooled, {1, d});
  return ad::reshape(ad::add_row_bias(ad::matmul(row, params.fc_w), params.fc_b), {params.fc_w.dim(1)});
}

ImageNetwork ImageNetwork::init(int in_channels, int local_dim, int descriptor_dim, std::uint64_t seed,
                                bool coord_channels) {
  std::mt19937_64 rng(seed);
  ImageNetwork net;
  net.encoder = ImageEncoderParams::init(in_channels, local_dim, rng, coord_channels);
  net.head = GemFcnParams::init(local_dim, descriptor_dim, rng);
  return net;
}

NamedTensors ImageNetwork::named() const {
  NamedTensors out = encoder.named("image.encoder.");
  auto head_params = head.named("image.head.");
  out.insert(out.end(), head_params.begin(), head_params.end());
  return out;
}

ad::Tensor ImageNetwork::describe(const ImageFeatureMap& features) const {
  return fcn_project(gem_pool(features.values, head.p), head);
}

GlobalDescriptor ImageNetwork::describe(const Image& image, std::uint64_t id) const {
  return {describe(image_encode(image, encoder)), Modality::Image, id};
}

NamedTensors PointNetwork::named() const {
  NamedTensors out = backbone.named("point.backbone.");
  if (head.p.defined()) {
    auto head_params = head.named("point.head.");
    out.insert(out.end(), head_params.begin(), head_params.end());
  }
  return out;
}

PointEncoding point_cloud_encode(const PointCloud& cloud, const PointNetwork& net, std::uint64_t id) {
  if (!net.head.p.defined())
    throw Error(ErrorCode::MissingPrerequisite, "point network has no global head");
  const VoxelGrid grid = voxelize(cloud, net.voxel_config, net.voxel_seed);
  SparseFeatureMap local = point_cloud_backbone(grid, net.backbone);
  ad::Tensor global = fcn_project(gem_pool(local.feats, net.head.p), net.head);
  return {std::move(local), {std::move(global), Modality::PointCloud, id}};
}

}  // namespace vxp
