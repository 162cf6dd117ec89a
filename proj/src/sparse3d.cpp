#include "vxp/sparse3d.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "vxp/error.hpp"
#include "vxp/init.hpp"

namespace vxp {

namespace {

std::uint64_t pack(const GridCoord& c) {
  return (static_cast<std::uint64_t>(c[0]) << 42) | (static_cast<std::uint64_t>(c[1]) << 21) |
         static_cast<std::uint64_t>(c[2]);
}

ad::Tensor linear(const ad::Tensor& x, const ad::Tensor& w, const ad::Tensor& b) {
  return ad::add_row_bias(ad::matmul(x, w), b);
}

}  // namespace

VFEParams VFEParams::init(int channels, bool two_layer, std::mt19937_64& rng) {
  VFEParams p;
  // Inputs are raw coordinates of order 10 m.
  p.w1 = random_normal({3, static_cast<std::size_t>(channels)}, 0.05, rng);
  p.b1 = filled({static_cast<std::size_t>(channels)}, 0.1);
  p.two_layer = two_layer;
  if (two_layer) {
    p.w2 = random_normal({2 * static_cast<std::size_t>(channels), static_cast<std::size_t>(channels)},
                         std::sqrt(1.0 / (2.0 * channels)), rng);
    p.b2 = filled({static_cast<std::size_t>(channels)}, 0.1);
  }
  return p;
}

NamedTensors VFEParams::named(const std::string& prefix) const {
  NamedTensors out{{prefix + "w1", w1}, {prefix + "b1", b1}};
  if (two_layer) {
    out.emplace_back(prefix + "w2", w2);
    out.emplace_back(prefix + "b2", b2);
  }
  return out;
}

SparseConvLayer SparseConvLayer::init(int c_in, int c_out, int kernel_size, int stride,
                                      std::mt19937_64& rng) {
  if (kernel_size < 1 || kernel_size % 2 == 0)
    throw Error(ErrorCode::InvalidConfig, "sparse conv kernel size must be odd");
  if (stride < 1) throw Error(ErrorCode::InvalidConfig, "sparse conv stride must be >= 1");
  SparseConvLayer layer;
  const auto k3 = static_cast<std::size_t>(kernel_size * kernel_size * kernel_size);
  // Roughly four active neighbours per output on surface-like occupancy.
  layer.kernel = random_normal({k3, static_cast<std::size_t>(c_in), static_cast<std::size_t>(c_out)},
                               std::sqrt(2.0 / (4.0 * c_in)), rng);
  layer.bias = filled({static_cast<std::size_t>(c_out)}, 0.05);
  layer.kernel_size = kernel_size;
  layer.stride = stride;
  return layer;
}

NamedTensors SparseConvLayer::named(const std::string& prefix) const {
  return {{prefix + "kernel", kernel}, {prefix + "bias", bias}};
}

PointBackbone PointBackbone::init(int vfe_channels, int out_channels, int layers, bool two_layer_vfe,
                                  std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  PointBackbone b;
  b.vfe = VFEParams::init(vfe_channels, two_layer_vfe, rng);
  int c_in = vfe_channels;
  for (int l = 0; l < layers; ++l) {
    b.convs.push_back(SparseConvLayer::init(c_in, out_channels, 3, 2, rng));
    c_in = out_channels;
  }
  return b;
}

int PointBackbone::out_channels() const {
  return convs.empty() ? vfe.channels() : convs.back().out_channels();
}

NamedTensors PointBackbone::named(const std::string& prefix) const {
  NamedTensors out = vfe.named(prefix + "vfe.");
  for (std::size_t l = 0; l < convs.size(); ++l) {
    auto layer = convs[l].named(prefix + "conv" + std::to_string(l) + ".");
    out.insert(out.end(), layer.begin(), layer.end());
  }
  return out;
}

SparseFeatureMap vfe_encode(const VoxelGrid& grid, const VFEParams& params) {
  if (grid.size() == 0) throw Error(ErrorCode::EmptyGrid, "voxel grid has no voxels");
  std::vector<double> pts;
  std::vector<std::size_t> offsets{0};
  std::vector<std::size_t> segment_of_row;
  for (std::size_t v = 0; v < grid.size(); ++v) {
    const int n = grid.valid_counts()[v];
    if (n < 1) throw Error(ErrorCode::EmptyGrid, "voxel " + std::to_string(v) + " has no valid point");
    const double* block = grid.voxel_points(v);
    pts.insert(pts.end(), block, block + static_cast<std::size_t>(n) * 3);
    offsets.push_back(offsets.back() + static_cast<std::size_t>(n));
    segment_of_row.insert(segment_of_row.end(), static_cast<std::size_t>(n), v);
  }
  const auto input = ad::Tensor::from({offsets.back(), 3}, std::move(pts));
  const ad::Tensor h1 = ad::relu(linear(input, params.w1, params.b1));
  ad::MaxResult pooled = ad::segment_max_rows(h1, offsets);
  if (params.two_layer) {
    const ad::Tensor expanded = ad::gather_rows(pooled.values, segment_of_row);
    const ad::Tensor h2 = ad::relu(linear(ad::concat_cols(h1, expanded), params.w2, params.b2));
    pooled = ad::segment_max_rows(h2, offsets);
  }
  SparseFeatureMap out;
  out.coords = grid.coords();
  out.feats = pooled.values;
  out.grid_dims = grid.config().grid_dims();
  out.effective_voxel_size = grid.config().voxel_size;
  out.range_min = grid.config().range_min;
  return out;
}

GridCoord conv_output_dims(const GridCoord& in_dims, int stride) {
  GridCoord out{};
  for (int a = 0; a < 3; ++a) out[a] = (in_dims[a] + stride - 1) / stride;
  return out;
}

std::vector<GridCoord> sparse_conv_output_coords(const std::vector<GridCoord>& in_coords,
                                                 const GridCoord& in_dims, int kernel_size, int stride) {
  const GridCoord out_dims = conv_output_dims(in_dims, stride);
  const int half = kernel_size / 2;
  std::vector<GridCoord> out;
  out.reserve(in_coords.size() * 4);
  for (const auto& c : in_coords) {
    std::array<std::vector<int>, 3> axis;
    for (int a = 0; a < 3; ++a) {
      for (int d = -half; d <= half; ++d) {
        const int num = c[a] - d;
        if (num < 0 || num % stride != 0) continue;
        const int o = num / stride;
        if (o < out_dims[a]) axis[a].push_back(o);
      }
    }
    for (int x : axis[0])
      for (int y : axis[1])
        for (int z : axis[2]) out.push_back({x, y, z});
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

SparseFeatureMap sparse_conv3d(const SparseFeatureMap& input, const SparseConvLayer& layer) {
  if (input.channels() != static_cast<std::size_t>(layer.in_channels()))
    throw Error(ErrorCode::ChannelMismatch, "input has " + std::to_string(input.channels()) +
                                                " channels, layer expects " +
                                                std::to_string(layer.in_channels()));
  const int k = layer.kernel_size;
  const int half = k / 2;
  std::unordered_map<std::uint64_t, std::uint32_t> lookup;
  lookup.reserve(input.coords.size() * 2);
  for (std::size_t i = 0; i < input.coords.size(); ++i)
    lookup.emplace(pack(input.coords[i]), static_cast<std::uint32_t>(i));

  SparseFeatureMap out;
  out.coords = sparse_conv_output_coords(input.coords, input.grid_dims, k, layer.stride);
  out.grid_dims = conv_output_dims(input.grid_dims, layer.stride);
  out.effective_voxel_size = input.effective_voxel_size * layer.stride;
  out.range_min = input.range_min;

  auto rb = std::make_shared<ad::Rulebook>();
  rb->n_in = input.coords.size();
  rb->n_out = out.coords.size();
  rb->pairs.resize(static_cast<std::size_t>(k * k * k));
  for (std::size_t o = 0; o < out.coords.size(); ++o) {
    const auto& oc = out.coords[o];
    for (int dx = 0; dx < k; ++dx) {
      for (int dy = 0; dy < k; ++dy) {
        for (int dz = 0; dz < k; ++dz) {
          const GridCoord ic{oc[0] * layer.stride + dx - half, oc[1] * layer.stride + dy - half,
                             oc[2] * layer.stride + dz - half};
          if (ic[0] < 0 || ic[1] < 0 || ic[2] < 0) continue;
          const auto it = lookup.find(pack(ic));
          if (it == lookup.end()) continue;
          rb->pairs[static_cast<std::size_t>((dx * k + dy) * k + dz)].emplace_back(
              it->second, static_cast<std::uint32_t>(o));
        }
      }
    }
  }
  out.feats = ad::add_row_bias(ad::rulebook_conv(input.feats, layer.kernel, std::move(rb)), layer.bias);
  return out;
}

ad::Tensor sparse_to_dense(const SparseFeatureMap& map, std::size_t max_elements) {
  const std::size_t d = map.channels();
  const auto gx = static_cast<std::size_t>(map.grid_dims[0]);
  const auto gy = static_cast<std::size_t>(map.grid_dims[1]);
  const auto gz = static_cast<std::size_t>(map.grid_dims[2]);
  const std::size_t total = gx * gy * gz * d;
  if (total > max_elements)
    throw Error(ErrorCode::TooLarge, std::to_string(total) + " dense elements exceed cap " +
                                         std::to_string(max_elements));
  std::vector<double> dense(total, 0.0);
  const auto feats = map.feats.values();
  for (std::size_t i = 0; i < map.coords.size(); ++i) {
    const auto& c = map.coords[i];
    const std::size_t cell = (static_cast<std::size_t>(c[0]) * gy + static_cast<std::size_t>(c[1])) * gz +
                             static_cast<std::size_t>(c[2]);
    std::copy_n(feats.data() + i * d, d, dense.data() + cell * d);
  }
  return ad::Tensor::from({gx, gy, gz, d}, std::move(dense));
}

SparseFeatureMap dense_to_sparse(const ad::Tensor& dense, const Eigen::Vector3d& voxel_size,
                                 const Eigen::Vector3d& range_min) {
  if (dense.rank() != 4) throw Error(ErrorCode::ShapeMismatch, "dense map must be [X x Y x Z x D]");
  const std::size_t gx = dense.dim(0), gy = dense.dim(1), gz = dense.dim(2), d = dense.dim(3);
  SparseFeatureMap out;
  out.grid_dims = {static_cast<int>(gx), static_cast<int>(gy), static_cast<int>(gz)};
  out.effective_voxel_size = voxel_size;
  out.range_min = range_min;
  std::vector<double> feats;
  const auto v = dense.values();
  for (std::size_t x = 0; x < gx; ++x)
    for (std::size_t y = 0; y < gy; ++y)
      for (std::size_t z = 0; z < gz; ++z) {
        const double* f = v.data() + ((x * gy + y) * gz + z) * d;
        if (std::all_of(f, f + d, [](double e) { return e == 0.0; })) continue;
        out.coords.push_back({static_cast<int>(x), static_cast<int>(y), static_cast<int>(z)});
        feats.insert(feats.end(), f, f + d);
      }
  out.feats = ad::Tensor::from({out.coords.size(), d}, std::move(feats));
  return out;
}

SparseFeatureMap point_cloud_backbone(const VoxelGrid& grid, const PointBackbone& backbone) {
  SparseFeatureMap map = vfe_encode(grid, backbone.vfe);
  for (const auto& layer : backbone.convs) {
    map = sparse_conv3d(map, layer);
    map.feats = ad::relu(map.feats);
  }
  return map;
}

}  // namespace vxp
