#include <algorithm>
#include <random>
#include <set>

#include "oracles.hpp"
#include "support.hpp"
#include "vxp/gradcheck.hpp"
#include "vxp/sparse3d.hpp"

using namespace vxp;
using ad::Tensor;

namespace {

VoxelGridConfig unit_config(int m) {
  VoxelGridConfig c;
  c.range_min = Eigen::Vector3d::Zero();
  c.range_max = Eigen::Vector3d::Constant(8);
  c.voxel_size = Eigen::Vector3d::Ones();
  c.max_points_per_voxel = m;
  return c;
}

// Random sparse map on `dims` with roughly `density` occupancy.
SparseFeatureMap random_map(const GridCoord& dims, int channels, double density, std::mt19937_64& rng) {
  SparseFeatureMap m;
  m.grid_dims = dims;
  std::bernoulli_distribution occupied(density);
  for (int x = 0; x < dims[0]; ++x)
    for (int y = 0; y < dims[1]; ++y)
      for (int z = 0; z < dims[2]; ++z)
        if (occupied(rng)) m.coords.push_back({x, y, z});
  if (m.coords.empty()) m.coords.push_back({0, 0, 0});
  m.feats = Tensor::from({m.coords.size(), static_cast<std::size_t>(channels)},
                         test::uniform(m.coords.size() * channels, -1, 1, rng));
  return m;
}

oracle::DenseGrid to_oracle(const SparseFeatureMap& m) {
  oracle::DenseGrid g;
  g.dims = {m.grid_dims[0], m.grid_dims[1], m.grid_dims[2]};
  g.channels = static_cast<int>(m.channels());
  g.values.assign(static_cast<std::size_t>(g.dims[0]) * g.dims[1] * g.dims[2] * g.channels, 0.0);
  g.active.assign(static_cast<std::size_t>(g.dims[0]) * g.dims[1] * g.dims[2], false);
  for (std::size_t i = 0; i < m.size(); ++i) {
    const oracle::Cell c{m.coords[i][0], m.coords[i][1], m.coords[i][2]};
    g.active[g.index(c)] = true;
    for (int ch = 0; ch < g.channels; ++ch) g.at(c, ch) = m.feats.values()[i * g.channels + ch];
  }
  return g;
}

// Max abs difference against the dense oracle; -1 when the active sets differ.
double compare_with_dense(const SparseFeatureMap& in, const SparseConvLayer& layer) {
  const auto out = sparse_conv3d(in, layer);
  const auto k = layer.kernel.values();
  const auto b = layer.bias.values();
  const auto dense = oracle::dense_conv3d(to_oracle(in), {k.begin(), k.end()}, {b.begin(), b.end()},
                                          layer.kernel_size, layer.stride, layer.out_channels());
  if (out.grid_dims != GridCoord{dense.dims[0], dense.dims[1], dense.dims[2]}) return -1;
  const auto active = static_cast<std::size_t>(std::count(dense.active.begin(), dense.active.end(), true));
  if (active != out.size()) return -1;
  double diff = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const oracle::Cell c{out.coords[i][0], out.coords[i][1], out.coords[i][2]};
    if (!dense.active[dense.index(c)]) return -1;
    for (int ch = 0; ch < layer.out_channels(); ++ch)
      diff = std::max(diff, std::fabs(out.feats.values()[i * layer.out_channels() + ch] - dense.at(c, ch)));
  }
  return diff;
}

}  // namespace

TEST_CASE("identity kernel reproduces the input") {
  std::mt19937_64 rng(1);
  const auto in = random_map({6, 6, 6}, 3, 0.2, rng);
  SparseConvLayer layer;
  layer.kernel_size = 1;
  layer.stride = 1;
  std::vector<double> eye(9, 0.0);
  for (int i = 0; i < 3; ++i) eye[i * 3 + i] = 1.0;
  layer.kernel = Tensor::from({1, 3, 3}, eye);
  layer.bias = Tensor::zeros({3});
  const auto out = sparse_conv3d(in, layer);
  CHECK(out.coords == in.coords);
  CHECK(std::equal(out.feats.values().begin(), out.feats.values().end(), in.feats.values().begin()));
}

TEST_CASE("two stride-2 layers reduce 110 to 55 to 28") {
  std::mt19937_64 rng(2);
  SparseFeatureMap in;
  in.grid_dims = {110, 110, 110};
  in.coords = {{0, 0, 0}, {109, 109, 109}, {54, 55, 56}};
  in.feats = Tensor::from({3, 2}, test::uniform(6, 0, 1, rng));
  const auto l1 = sparse_conv3d(in, SparseConvLayer::init(2, 4, 3, 2, rng));
  CHECK(l1.grid_dims == GridCoord{55, 55, 55});
  const auto l2 = sparse_conv3d(l1, SparseConvLayer::init(4, 4, 3, 2, rng));
  CHECK(l2.grid_dims == GridCoord{28, 28, 28});
  for (const auto& c : l2.coords)
    for (int a = 0; a < 3; ++a) {
      CHECK(c[a] >= 0);
      CHECK(c[a] < 28);
    }
}

TEST_CASE("random 8 cubed input matches the dense oracle") {
  std::mt19937_64 rng(3);
  const auto in = random_map({8, 8, 8}, 3, 0.15, rng);
  const auto layer = SparseConvLayer::init(3, 2, 3, 1, rng);
  const double diff = compare_with_dense(in, layer);
  CHECK(diff >= 0.0);
  CHECK(diff < 1e-6);
}

TEST_CASE("property: sparse and dense convolution agree on 50 random small grids") {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> dim(2, 16), ch(1, 4), kidx(0, 2), stride(1, 3);
  std::uniform_real_distribution<double> density(0.02, 0.3);
  for (int trial = 0; trial < 50; ++trial) {
    const GridCoord dims{dim(rng), dim(rng), dim(rng)};
    const int c_in = ch(rng), c_out = ch(rng), k = 1 + 2 * kidx(rng), s = stride(rng);
    const auto in = random_map(dims, c_in, density(rng), rng);
    const auto layer = SparseConvLayer::init(c_in, c_out, k, s, rng);
    const double diff = compare_with_dense(in, layer);
    CHECK(diff >= 0.0);
    CHECK(diff < 1e-6);
    const auto out = sparse_conv3d(in, layer);
    std::set<GridCoord> unique(out.coords.begin(), out.coords.end());
    CHECK(unique.size() == out.coords.size());
  }
}

TEST_CASE("channel mismatch is rejected") {
  std::mt19937_64 rng(5);
  const auto in = random_map({4, 4, 4}, 3, 0.3, rng);
  CHECK_VXP_ERROR(sparse_conv3d(in, SparseConvLayer::init(2, 2, 3, 1, rng)), ErrorCode::ChannelMismatch);
  CHECK_VXP_ERROR(SparseConvLayer::init(2, 2, 2, 1, rng), ErrorCode::InvalidConfig);
}

TEST_CASE("sparse to dense") {
  SparseFeatureMap m;
  m.grid_dims = {2, 2, 2};
  m.coords = {{0, 0, 0}};
  m.feats = Tensor::from({1, 1}, {1.0});
  const auto d = sparse_to_dense(m);
  CHECK(d.shape() == ad::Shape{2, 2, 2, 1});
  CHECK(std::count(d.values().begin(), d.values().end(), 0.0) == 7);
  CHECK(d.values()[0] == 1.0);
  CHECK_VXP_ERROR(sparse_to_dense(m, 4), ErrorCode::TooLarge);
}

TEST_CASE("property: dense round trip is the identity") {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    auto m = random_map({5, 7, 3}, 2, 0.3, rng);
    const auto back = dense_to_sparse(sparse_to_dense(m), m.effective_voxel_size, m.range_min);
    CHECK(back.coords == m.coords);
    CHECK(std::equal(back.feats.values().begin(), back.feats.values().end(), m.feats.values().begin()));
    CHECK(back.grid_dims == m.grid_dims);
  }
}

TEST_CASE("VFE examples") {
  const auto cfg = unit_config(4);
  VFEParams p;
  p.w1 = Tensor::from({3, 2}, {1, 0, 0, 1, 0, 0});
  p.b1 = Tensor::zeros({2});
  SUBCASE("hand-set weights") {
    VoxelGrid g(cfg, {{1, 1, 1}}, {1, 0, 0, 0, 2, 0, 0, 0, 0, 0, 0, 0}, {2});
    const auto out = vfe_encode(g, p);
    CHECK(out.feats.values()[0] == 1.0);
    CHECK(out.feats.values()[1] == 2.0);
    CHECK(out.coords == g.coords());
  }
  SUBCASE("single point equals ReLU of the linear layer") {
    p.w1 = Tensor::from({3, 2}, {0.5, -1, 2, 0.25, -0.5, 1});
    p.b1 = Tensor::from({2}, {0.1, -0.2});
    VoxelGrid g(cfg, {{0, 0, 0}}, {0.3, 0.6, 0.9, 0, 0, 0, 0, 0, 0, 0, 0, 0}, {1});
    const auto out = vfe_encode(g, p);
    CHECK(out.feats.values()[0] == doctest::Approx(std::max(0.0, 0.15 + 1.2 - 0.45 + 0.1)));
    CHECK(out.feats.values()[1] == doctest::Approx(std::max(0.0, -0.3 + 0.15 + 0.9 - 0.2)));
  }
  SUBCASE("empty grid") {
    VoxelGrid g(cfg, {}, {}, {});
    CHECK_VXP_ERROR(vfe_encode(g, p), ErrorCode::EmptyGrid);
  }
}

TEST_CASE("property: VFE ignores point order and zero padding") {
  std::mt19937_64 rng(8);
  for (bool two_layer : {false, true}) {
    const auto p = VFEParams::init(5, two_layer, rng);
    for (int trial = 0; trial < 20; ++trial) {
      const auto pts = test::uniform(3 * 3, 0, 1, rng);
      std::vector<double> padded4(pts), padded9(pts), permuted(pts);
      padded4.resize(4 * 3, 0.0);
      padded9.resize(9 * 3, 0.0);
      std::swap_ranges(permuted.begin(), permuted.begin() + 3, permuted.begin() + 6);
      permuted.resize(4 * 3, 0.0);
      const auto a = vfe_encode(VoxelGrid(unit_config(4), {{0, 0, 0}}, padded4, {3}), p);
      const auto b = vfe_encode(VoxelGrid(unit_config(9), {{0, 0, 0}}, padded9, {3}), p);
      const auto c = vfe_encode(VoxelGrid(unit_config(4), {{0, 0, 0}}, permuted, {3}), p);
      for (int i = 0; i < 5; ++i) {
        CHECK(a.feats.values()[i] == b.feats.values()[i]);
        CHECK(a.feats.values()[i] == c.feats.values()[i]);
      }
    }
  }
}

TEST_CASE("backbone on the standard grid") {
  const auto cfg = VoxelGridConfig::standard();
  const auto backbone = PointBackbone::init(8, 6, 2, false, 1);
  SUBCASE("output dims and channels") {
    PointCloud cloud;
    std::mt19937_64 rng(1);
    for (int i = 0; i < 500; ++i) {
      const auto v = test::uniform(3, 0, 1, rng);
      cloud.points.emplace_back(v[0] * 40, v[1] * 40 - 20, v[2] * 20 - 3);
    }
    const auto out = point_cloud_backbone(voxelize(cloud, cfg, 0), backbone);
    CHECK(out.grid_dims == GridCoord{28, 28, 28});
    CHECK(out.channels() == 6);
    CHECK(backbone.out_channels() == 6);
    CHECK(out.effective_voxel_size.x() == doctest::Approx(1.6));
  }
  SUBCASE("single voxel reaches at least one output cell") {
    PointCloud cloud;
    cloud.points = {{43.9, 21.9, 17.9}};
    const auto out = point_cloud_backbone(voxelize(cloud, cfg, 0), backbone);
    CHECK(out.size() >= 1);
    for (const auto& c : out.coords)
      for (int a = 0; a < 3; ++a) CHECK(c[a] < 28);
  }
}

TEST_CASE("backbone gradients match finite differences") {
  // Any single instance may sit near a ReLU kink, so sample until a few clear it.
  std::mt19937_64 rng(12);
  int smooth_instances = 0;
  for (std::uint64_t seed = 0; seed < 40 && smooth_instances < 4; ++seed) {
    const auto backbone = PointBackbone::init(4, 3, 2, true, 3 + seed);
    PointCloud cloud;
    for (int i = 0; i < 40; ++i) {
      const auto v = test::uniform(3, 0, 1, rng);
      cloud.points.emplace_back(2 + v[0] * 3, v[1] * 3, v[2] * 2);
    }
    const auto grid = voxelize(cloud, VoxelGridConfig::standard(), 0);
    const auto readout = test::uniform(4096, -1, 1, rng);
    const auto f = [&] {
      const auto out = point_cloud_backbone(grid, backbone);
      const Tensor w = Tensor::from(out.feats.shape(), {readout.begin(), readout.begin() + out.feats.numel()});
      return ad::sum(ad::mul(out.feats, w));
    };
    ad::reset_kink_margin();
    (void)f();
    if (ad::kink_margin() < 1e-4) continue;
    ++smooth_instances;
    for (const auto& [name, t] : backbone.named("")) {
      const auto r = ad::check_gradient_detail(f, t, 1e-6);
      INFO(name);
      CHECK(r.max_relative_error < 1e-4);
    }
  }
  CHECK(smooth_instances == 4);
}
