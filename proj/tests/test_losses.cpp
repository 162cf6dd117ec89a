#include <cmath>
#include <random>

#include "oracles.hpp"
#include "support.hpp"
#include "vxp/gradcheck.hpp"
#include "vxp/losses.hpp"

using namespace vxp;
using ad::Tensor;

namespace {

TrainingBatch batch_1d(std::vector<double> desc, std::vector<double> xs) {
  std::vector<Eigen::Vector3d> pos;
  for (double x : xs) pos.emplace_back(x, 0, 0);
  const std::size_t n = desc.size();
  return make_training_batch(Tensor::from({n, 1}, std::move(desc), true), std::move(pos));
}

// Positions on a few clusters so that most anchors have both positives and
// negatives; descriptors optionally quantized to force ties.
TrainingBatch random_batch(std::size_t n, std::size_t dim, bool quantized, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> cluster(0, 3);
  std::normal_distribution<double> jitter(0.0, 2.0);
  std::vector<Eigen::Vector3d> pos;
  for (std::size_t i = 0; i < n; ++i) pos.emplace_back(60.0 * cluster(rng) + jitter(rng), jitter(rng), 0);
  auto d = test::uniform(n * dim, -1, 1, rng);
  if (quantized)
    for (auto& v : d) v = std::round(v * 2);
  return make_training_batch(Tensor::from({n, dim}, d, true), std::move(pos));
}

ProjectedFeatureMap projected(int w, int h, std::vector<ProjectedEntry> entries) {
  ProjectedFeatureMap m;
  m.width = w;
  m.height = h;
  m.entries = std::move(entries);
  group_collisions(m);
  return m;
}

ProjectedEntry entry(int u, int v, std::size_t voxel, double depth) { return {u, v, voxel, depth, 1.0 / depth}; }

ImageFeatureMap image_map(int w, int h, std::vector<double> values, std::size_t channels) {
  ImageFeatureMap m;
  m.width = w;
  m.height = h;
  m.values = Tensor::from({static_cast<std::size_t>(w * h), channels}, values, true);
  return m;
}

}  // namespace

TEST_CASE("smooth l1") {
  CHECK(smooth_l1_value({0.5}, 1.0) == 0.125);
  CHECK(smooth_l1_value({2.0}, 1.0) == 1.5);
  CHECK(smooth_l1_value({0.0}, 1.0) == 0.0);
  CHECK(smooth_l1_value({1.0, -1.0, 1.0, 1.0}, 1.0) == 2.0);
  CHECK_VXP_ERROR(smooth_l1_value({1.0}, 0.0), ErrorCode::NonPositiveBeta);
}

TEST_CASE("mining examples") {
  // Anchor 0 at the origin; rows 1, 2 are positives, rows 3, 4 negatives.
  const auto b = batch_1d({0.0, 1.0, 2.0, 0.5, 3.0}, {0, 1, 2, 100, 200});
  const auto t = mine_hardest(b, {0});
  REQUIRE(t.size() == 1);
  CHECK(t[0].positive == 2);
  CHECK(t[0].negative == 3);
  // Ties go to the lowest index.
  const auto tie = mine_hardest(batch_1d({0.0, 1.0, 1.0, 5.0, 5.0}, {0, 1, 2, 100, 200}), {0});
  CHECK(tie[0].positive == 1);
  CHECK(tie[0].negative == 3);
}

TEST_CASE("mining errors") {
  CHECK_VXP_ERROR(mine_hardest(batch_1d({0, 1}, {0, 100})), ErrorCode::NoPositive);
  CHECK_VXP_ERROR(mine_hardest(batch_1d({0, 1}, {0, 1})), ErrorCode::NoNegative);
  CHECK_VXP_ERROR(triplet_loss_batch_hard(batch_1d({0, 1}, {0, 100}), {}), ErrorCode::NoPositive);
}

TEST_CASE("masks follow the distance thresholds") {
  const auto b = batch_1d({0, 0, 0, 0}, {0, 5, 15, 40});
  CHECK(b.is_positive(0, 1));
  CHECK_FALSE(b.is_positive(0, 2));
  CHECK_FALSE(b.is_negative(0, 2));
  CHECK(b.is_negative(0, 3));
  CHECK_FALSE(b.is_positive(0, 0));
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) {
      CHECK(b.is_positive(i, j) == b.is_positive(j, i));
      CHECK(b.is_negative(i, j) == b.is_negative(j, i));
    }
}

TEST_CASE("property: mining matches the exhaustive oracle") {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<std::size_t> size(2, 32);
  for (int trial = 0; trial < 200; ++trial) {
    const auto b = random_batch(size(rng), 4, trial % 2 == 0, rng);
    for (Metric metric : {Metric::L2, Metric::L1}) {
      const std::size_t n = b.size();
      std::vector<std::vector<double>> dist(n, std::vector<double>(n));
      std::vector<std::vector<bool>> pos(n, std::vector<bool>(n)), neg(n, std::vector<bool>(n));
      std::vector<std::vector<double>> rows(n);
      for (std::size_t i = 0; i < n; ++i)
        rows[i].assign(b.descriptors.values().begin() + i * 4, b.descriptors.values().begin() + (i + 1) * 4);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          dist[i][j] = metric == Metric::L2 ? oracle::l2(rows[i], rows[j]) : oracle::l1(rows[i], rows[j]);
          pos[i][j] = b.is_positive(i, j);
          neg[i][j] = b.is_negative(i, j);
        }
      const auto expected = oracle::mine(dist, pos, neg);
      std::vector<std::size_t> anchors;
      for (std::size_t a = 0; a < n; ++a)
        if (expected[a]) anchors.push_back(a);
      CHECK(anchors == minable_anchors(b));
      const auto got = mine_hardest(b, anchors, metric);
      REQUIRE(got.size() == anchors.size());
      for (std::size_t i = 0; i < anchors.size(); ++i) {
        CHECK(got[i].anchor == anchors[i]);
        CHECK(got[i].positive == expected[anchors[i]]->first);
        CHECK(got[i].negative == expected[anchors[i]]->second);
      }
    }
  }
}

TEST_CASE("triplet hinge examples") {
  // Row 1 has no negative (25 m is not beyond the threshold), so only
  // anchor 0 contributes.
  const TripletConfig cfg;
  const auto satisfied = triplet_loss_batch_hard(batch_1d({0.0, 1.0, 1.5}, {0, 5, 30}), cfg);
  CHECK(satisfied.triplets.size() == 1);
  CHECK(satisfied.loss.item() == 0.0);
  CHECK(satisfied.zero_triplets == 1);
  const auto violated = triplet_loss_batch_hard(batch_1d({0.0, 1.0, 1.1}, {0, 5, 30}), cfg);
  CHECK(violated.loss.item() == doctest::Approx(0.2));
  CHECK(violated.zero_triplets == 0);
}

TEST_CASE("property: per-anchor hinge is zero exactly when the margin holds") {
  std::mt19937_64 rng(2);
  const TripletConfig cfg;
  for (int trial = 0; trial < 100; ++trial) {
    const auto d = test::uniform(3, -2, 2, rng);
    const auto r = triplet_loss_batch_hard(batch_1d(d, {0, 5, 30}), cfg);
    const double dap = std::fabs(d[0] - d[1]), dan = std::fabs(d[0] - d[2]);
    CHECK(r.loss.item() >= 0.0);
    CHECK((r.loss.item() == 0.0) == (dan >= dap + cfg.margin));
  }
}

TEST_CASE("zero-triplet expansion table") {
  const TripletConfig cfg;
  const auto& table = oracle::expansion_table();
  CHECK(table.size() == 20);
  for (const auto& c : table) {
    INFO(c.zero << " of " << c.batch);
    CHECK(zero_triplet_expansion(c.zero, c.batch, cfg) == c.expected);
  }
  CHECK_VXP_ERROR(zero_triplet_expansion(5, 4, cfg), ErrorCode::InvalidConfig);
}

TEST_CASE("property: expansion never exceeds the cap and is a fixed point there") {
  const TripletConfig cfg;
  for (int b = 1; b <= 256; ++b)
    for (int z = 0; z <= b; z += std::max(1, b / 7)) {
      const int next = zero_triplet_expansion(z, b, cfg);
      CHECK(next <= 256);
      CHECK(next >= b);
    }
  for (int z = 0; z <= 256; ++z) CHECK(zero_triplet_expansion(z, 256, cfg) == 256);
}

TEST_CASE("local loss examples") {
  SUBCASE("depth-scaled mode cancels exactly") {
    const auto p = projected(1, 1, {entry(0, 0, 0, 2.0)});
    const auto loss = local_descriptor_loss(p, Tensor::from({1, 1}, {2.0}), image_map(1, 1, {1.0}, 1),
                                            LocalLossMode::DepthScaled, 1.0);
    CHECK(loss.item() == 0.0);
  }
  SUBCASE("depth-scaled mode at the branch boundary") {
    const auto p = projected(1, 1, {entry(0, 0, 0, 2.0)});
    const auto loss = local_descriptor_loss(p, Tensor::from({1, 1}, {4.0}), image_map(1, 1, {1.0}, 1),
                                            LocalLossMode::DepthScaled, 1.0);
    CHECK(loss.item() == 0.5);
  }
  SUBCASE("collision weights") {
    const auto p = projected(2, 1, {entry(0, 0, 0, 5.0), entry(0, 0, 1, 10.0), entry(1, 0, 2, 4.0)});
    const auto w = collision_weights(p);
    CHECK(w[0] == doctest::Approx(2.0 / 3.0));
    CHECK(w[1] == doctest::Approx(1.0 / 3.0));
    CHECK(w[2] == 1.0);
    // Normalized mode: sum_i w_i * smooth_l1(f_voxel - f_image).
    const auto loss = local_descriptor_loss(p, Tensor::from({3, 1}, {1.5, 0.5, 3.0}), image_map(2, 1, {1.0, 1.0}, 1),
                                            LocalLossMode::CollisionNormalized, 1.0);
    CHECK(loss.item() == doctest::Approx(2.0 / 3.0 * 0.125 + 1.0 / 3.0 * 0.125 + 1.5));
  }
  SUBCASE("errors") {
    ProjectedFeatureMap empty;
    empty.width = empty.height = 1;
    CHECK_VXP_ERROR(local_descriptor_loss(empty, Tensor::from({1, 1}, {1.0}), image_map(1, 1, {1.0}, 1),
                                          LocalLossMode::DepthScaled),
                    ErrorCode::NoCorrespondences);
    const auto p = projected(1, 1, {entry(0, 0, 0, 2.0)});
    CHECK_VXP_ERROR(local_descriptor_loss(p, Tensor::from({1, 1}, {1.0}), image_map(2, 1, {1.0, 1.0}, 1),
                                          LocalLossMode::DepthScaled),
                    ErrorCode::ShapeMismatch);
  }
}

TEST_CASE("local loss sends gradient to every colliding voxel") {
  for (auto mode : {LocalLossMode::DepthScaled, LocalLossMode::CollisionNormalized}) {
    const auto p = projected(1, 1, {entry(0, 0, 0, 5.0), entry(0, 0, 1, 10.0), entry(0, 0, 2, 20.0)});
    const Tensor feats = Tensor::from({3, 2}, {3, 1, 2, 2, 1, 3}, true);
    ad::backward(local_descriptor_loss(p, feats, image_map(1, 1, {0.1, 0.2}, 2), mode, 1.0));
    for (std::size_t v = 0; v < 3; ++v) CHECK(std::fabs(feats.grad()[2 * v]) + std::fabs(feats.grad()[2 * v + 1]) > 0.0);
  }
}

TEST_CASE("global loss") {
  const Tensor a = Tensor::from({4}, {1, 2, 3, 4});
  CHECK(global_descriptor_loss(a, a).item() == 0.0);
  CHECK(global_descriptor_loss(a, Tensor::from({4}, {0, 1, 2, 3})).item() == 2.0);
  CHECK_VXP_ERROR(global_descriptor_loss(a, Tensor::from({3}, {1, 2, 3})), ErrorCode::ShapeMismatch);
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const auto x = test::uniform(8, -3, 3, rng), y = test::uniform(8, -3, 3, rng);
    double expected = 0.0;
    for (int i = 0; i < 8; ++i) expected += oracle::huber(x[i] - y[i], 1.0);
    const double got = global_descriptor_loss(Tensor::from({8}, x), Tensor::from({8}, y)).item();
    CHECK(got == doctest::Approx(expected).epsilon(1e-12));
    CHECK(got > 0.0);
  }
}

TEST_CASE("property: loss gradients pass at random non-kink points") {
  std::mt19937_64 rng(4);
  const double step = 1e-6;
  int triplet = 0, local = 0, global = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto b = random_batch(12, 3, false, rng);
    const auto r1 = ad::check_gradient_detail(
        [&] { return triplet_loss_batch_hard(b, TripletConfig{}).loss; }, b.descriptors, step);
    if (r1.kink_margin > 1e3 * step) {
      ++triplet;
      CHECK(r1.max_relative_error < 1e-4);
    }

    std::vector<ProjectedEntry> es;
    std::uniform_int_distribution<int> px(0, 2);
    std::uniform_real_distribution<double> depth(1.0, 30.0);
    for (std::size_t v = 0; v < 10; ++v) es.push_back(entry(px(rng), px(rng), v, depth(rng)));
    const auto p = projected(3, 3, es);
    const Tensor feats = Tensor::from({10, 2}, test::uniform(20, -2, 2, rng));
    const auto img = image_map(3, 3, test::uniform(18, -2, 2, rng), 2);
    for (auto mode : {LocalLossMode::DepthScaled, LocalLossMode::CollisionNormalized}) {
      const auto f = [&] { return local_descriptor_loss(p, feats, img, mode, 1.0); };
      CHECK(ad::check_gradient_detail(f, feats, step).max_relative_error < 1e-4);
      CHECK(ad::check_gradient_detail(f, img.values, step).max_relative_error < 1e-4);
    }
    ++local;

    const Tensor x = Tensor::from({6}, test::uniform(6, -3, 3, rng)), y = Tensor::from({6}, test::uniform(6, -3, 3, rng));
    CHECK(ad::check_gradient_detail([&] { return global_descriptor_loss(x, y); }, x, step).max_relative_error < 1e-4);
    ++global;
  }
  CHECK(triplet > 50);
  CHECK(local == 100);
  CHECK(global == 100);
}
