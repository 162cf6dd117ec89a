#include <cmath>
#include <random>

#include "oracles.hpp"
#include "support.hpp"
#include "vxp/gradcheck.hpp"
#include "vxp/heads.hpp"

using namespace vxp;
using ad::Tensor;

namespace {

Image random_image(int h, int w, std::mt19937_64& rng) {
  Image img;
  img.height = h;
  img.width = w;
  img.data = test::uniform(static_cast<std::size_t>(h * w), 0, 1, rng);
  return img;
}

PointCloud random_cloud(int n, std::mt19937_64& rng) {
  PointCloud c;
  for (int i = 0; i < n; ++i) {
    const auto v = test::uniform(3, 0, 1, rng);
    c.points.emplace_back(2 + 38 * v[0], -18 + 36 * v[1], -2 + 12 * v[2]);
  }
  return c;
}

PointNetwork small_point_network(std::uint64_t seed) {
  PointNetwork net;
  net.backbone = PointBackbone::init(4, 6, 2, false, seed);
  std::mt19937_64 rng(seed + 1);
  net.head = GemFcnParams::init(6, 5, rng);
  return net;
}

}  // namespace

TEST_CASE("image encoder output geometry") {
  std::mt19937_64 rng(1);
  const auto params = ImageEncoderParams::init(1, 4, rng, true);
  for (auto [h, w] : {std::pair{224, 224}, {64, 64}, {30, 30}, {8, 8}, {17, 40}, {63, 9}}) {
    const auto f = image_encode(random_image(h, w, rng), params);
    CHECK(f.height == h / 8);
    CHECK(f.width == w / 8);
    CHECK(f.channels() == 4);
    CHECK(f.values.dim(0) == static_cast<std::size_t>((h / 8) * (w / 8)));
  }
  CHECK_VXP_ERROR(image_encode(random_image(7, 30, rng), params), ErrorCode::TooSmall);
  CHECK_VXP_ERROR(image_encode(random_image(30, 7, rng), params), ErrorCode::TooSmall);
}

TEST_CASE("each output cell depends only on its own 8x8 patch") {
  std::mt19937_64 rng(2);
  const auto params = ImageEncoderParams::init(1, 3, rng, false);
  auto img = random_image(16, 16, rng);
  const auto before = image_encode(img, params);
  img.data[0] += 1.0;  // pixel (0, 0) lies in cell (0, 0)
  const auto after = image_encode(img, params);
  for (std::size_t cell = 1; cell < 4; ++cell)
    for (std::size_t c = 0; c < 3; ++c) CHECK(before.values.values()[cell * 3 + c] == after.values.values()[cell * 3 + c]);
}

TEST_CASE("GeM examples") {
  const Tensor x = Tensor::from({2, 1}, {1, 3});
  CHECK(gem_pool(x, Tensor::from({1}, {1.0})).item() == doctest::Approx(2.0));
  CHECK(gem_pool(x, Tensor::from({1}, {2.0})).item() == doctest::Approx(std::sqrt(5.0)).epsilon(1e-12));
  CHECK(std::fabs(gem_pool(x, Tensor::from({1}, {100.0})).item() - 3.0) < 0.03 * 3.0);
  CHECK_VXP_ERROR(gem_pool(Tensor::zeros({0, 2}), Tensor::from({1}, {3.0})), ErrorCode::EmptyInput);
  CHECK_VXP_ERROR(gem_pool(x, Tensor::from({1}, {0.0})), ErrorCode::NonPositiveP);
}

TEST_CASE("property: GeM matches the power mean and is bounded and monotone in p") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> pdist(1.0, 8.0);
  std::uniform_int_distribution<int> rows(1, 12);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = rows(rng);
    const auto vals = test::uniform(static_cast<std::size_t>(n) * 3, 0, 2, rng);
    const Tensor x = Tensor::from({static_cast<std::size_t>(n), 3}, vals);
    double p1 = pdist(rng), p2 = pdist(rng);
    if (p1 > p2) std::swap(p1, p2);
    const Tensor t1 = gem_pool(x, Tensor::from({1}, {p1}));
    const Tensor t2 = gem_pool(x, Tensor::from({1}, {p2}));
    const auto g1 = t1.values();
    const auto g2 = t2.values();
    for (int c = 0; c < 3; ++c) {
      std::vector<double> col;
      for (int r = 0; r < n; ++r) col.push_back(vals[r * 3 + c]);
      const double mean = oracle::power_mean(col, 1.0);
      const double max = *std::max_element(col.begin(), col.end());
      CHECK(g1[c] == doctest::Approx(oracle::power_mean(col, p1)).epsilon(1e-10));
      CHECK(g1[c] <= g2[c] + 1e-12);
      CHECK(mean <= g1[c] + 1e-12);
      CHECK(g2[c] <= max + 1e-12);
    }
  }
}

TEST_CASE("FC projection") {
  std::mt19937_64 rng(4);
  GemFcnParams p = GemFcnParams::init(3, 3, rng);
  p.fc_w = Tensor::from({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  const Tensor x = Tensor::from({3}, {0.5, -2, 7});
  Tensor out = fcn_project(x, p);
  CHECK(std::vector<double>(out.values().begin(), out.values().end()) == std::vector<double>{0.5, -2, 7});
  p.fc_w = Tensor::zeros({3, 3});
  p.fc_b = Tensor::from({3}, {1, 2, 3});
  out = fcn_project(x, p);
  CHECK(std::vector<double>(out.values().begin(), out.values().end()) == std::vector<double>{1, 2, 3});
  CHECK_VXP_ERROR(fcn_project(Tensor::from({2}, {1, 2}), p), ErrorCode::ShapeMismatch);

  const auto q = GemFcnParams::init(4, 3, rng);
  const Tensor v = Tensor::from({4}, test::uniform(4, -1, 1, rng));
  const auto f = [&] { return ad::sum(ad::pow(fcn_project(v, q), 2.0)); };
  CHECK(ad::check_gradient_detail(f, q.fc_w, 1e-6).max_relative_error < 1e-4);
  CHECK(ad::check_gradient_detail(f, q.fc_b, 1e-6).max_relative_error < 1e-4);
  CHECK(ad::check_gradient_detail(f, v, 1e-6).max_relative_error < 1e-4);
}

TEST_CASE("point cloud encoding") {
  std::mt19937_64 rng(5);
  const auto net = small_point_network(9);
  const auto cloud = random_cloud(400, rng);
  const auto a = point_cloud_encode(cloud, net);
  const auto b = point_cloud_encode(cloud, net);
  CHECK(a.global.vector.numel() == 5);
  CHECK(a.global.modality == Modality::PointCloud);
  CHECK(std::equal(a.global.vector.values().begin(), a.global.vector.values().end(), b.global.vector.values().begin()));

  // Different point counts, same descriptor width.
  CHECK(point_cloud_encode(random_cloud(50, rng), net).global.vector.numel() == 5);

  // Duplicating every point leaves the voxel set and the descriptor unchanged.
  PointCloud doubled = cloud;
  doubled.points.insert(doubled.points.end(), cloud.points.begin(), cloud.points.end());
  const auto c = point_cloud_encode(doubled, net);
  CHECK(c.local.coords == a.local.coords);
  for (std::size_t i = 0; i < 5; ++i) CHECK(c.global.vector.values()[i] == doctest::Approx(a.global.vector.values()[i]).epsilon(1e-12));

  PointNetwork headless = net;
  headless.head = GemFcnParams{};
  CHECK_VXP_ERROR(point_cloud_encode(cloud, headless), ErrorCode::MissingPrerequisite);
}

TEST_CASE("property: descriptor norm gradients pass for every parameter group") {
  std::mt19937_64 rng(6);
  int checked = 0;
  for (int trial = 0; trial < 3; ++trial) {
    const auto img_net = ImageNetwork::init(1, 4, 5, 10 + trial, true);
    const auto img = random_image(16, 24, rng);
    for (const auto& [name, t] : img_net.named()) {
      const auto r = ad::check_gradient_detail([&] { return ad::l2_norm(img_net.describe(img).vector); }, t, 1e-6);
      INFO(name);
      if (r.kink_margin < 1e-4) continue;
      ++checked;
      CHECK(r.max_relative_error < 1e-4);
    }
    const auto pt_net = small_point_network(20 + trial);
    const auto cloud = random_cloud(120, rng);
    for (const auto& [name, t] : pt_net.named()) {
      const auto r =
          ad::check_gradient_detail([&] { return ad::l2_norm(point_cloud_encode(cloud, pt_net).global.vector); }, t, 1e-6);
      INFO(name);
      if (r.kink_margin < 1e-4) continue;
      ++checked;
      CHECK(r.max_relative_error < 1e-4);
    }
  }
  CHECK(checked > 20);
}
