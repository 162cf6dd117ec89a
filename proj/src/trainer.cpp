#include "vxp/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <random>

#include "vxp/error.hpp"
#include "vxp/sparse3d.hpp"

namespace vxp {

// ---- optimizer ---------------------------------------------------------------

void adam_step(const std::vector<ad::Tensor>& params, const std::vector<std::vector<double>>& grads,
               AdamState& state, double lr) {
  if (grads.size() != params.size())
    throw Error(ErrorCode::ShapeMismatch, std::to_string(grads.size()) + " gradients for " +
                                              std::to_string(params.size()) + " parameters");
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.numel(), 0.0);
      state.v.emplace_back(p.numel(), 0.0);
    }
  }
  if (state.m.size() != params.size())
    throw Error(ErrorCode::ShapeMismatch, "optimizer state tracks a different parameter count");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (state.m[i].size() != params[i].numel() ||
        (!grads[i].empty() && grads[i].size() != params[i].numel()))
      throw Error(ErrorCode::ShapeMismatch, "parameter " + std::to_string(i) + " does not match its buffers");
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    ad::Tensor p = params[i];
    auto values = p.mutable_values();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < values.size(); ++j) {
      const double g = grads[i].empty() ? 0.0 : grads[i][j];
      m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g;
      v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g * g;
      values[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + state.eps);
    }
  }
}

void adam_step(const std::vector<ad::Tensor>& params, AdamState& state, double lr) {
  std::vector<std::vector<double>> grads;
  grads.reserve(params.size());
  for (const auto& p : params) {
    const auto g = p.grad();
    grads.emplace_back(g.begin(), g.end());
  }
  adam_step(params, grads, state, lr);
}

double lr_schedule(int epoch, double base_lr, const std::function<double(int)>& fn) {
  if (epoch < 0) throw Error(ErrorCode::InvalidConfig, "epoch must be >= 0");
  return base_lr * fn(epoch);
}

double lr_schedule(int epoch, double base_lr, double decay) {
  return lr_schedule(epoch, base_lr, [decay](int e) { return std::pow(decay, e); });
}

// ---- configuration -------------------------------------------------------------

void ModelConfig::validate() const {
  if (image_channels < 1 || local_dim < 1 || vfe_channels < 1 || descriptor_dim < 1)
    throw Error(ErrorCode::InvalidConfig, "model widths must be >= 1");
  if (conv_layers < 0) throw Error(ErrorCode::InvalidConfig, "conv_layers must be >= 0");
  if (conv_layers == 0 && vfe_channels != local_dim)
    throw Error(ErrorCode::InvalidConfig, "without conv layers the VFE width must equal the local width");
  voxel.validate();
}

void StageConfig::validate() const {
  if (epochs < 1) throw Error(ErrorCode::InvalidConfig, "epochs must be >= 1");
  if (!(base_lr > 0.0)) throw Error(ErrorCode::InvalidConfig, "base_lr must be > 0");
  if (!(lr_decay > 0.0)) throw Error(ErrorCode::InvalidConfig, "lr_decay must be > 0");
  if (batch_size < 1) throw Error(ErrorCode::InvalidConfig, "batch_size must be >= 1");
  if (!(backbone_lr_scale >= 0.0)) throw Error(ErrorCode::InvalidConfig, "backbone_lr_scale must be >= 0");
  if (!(beta > 0.0)) throw Error(ErrorCode::NonPositiveBeta, "smooth_l1 beta must be > 0");
  if (!(pos_thresh_m > 0.0 && pos_thresh_m < neg_thresh_m))
    throw Error(ErrorCode::InvalidConfig, "thresholds must satisfy 0 < pos < neg");
  triplet.validate();
}

// ---- data ----------------------------------------------------------------------

TrainingData load_training_data(const fs::path& manifest, const fs::path& calibration) {
  TrainingData data;
  data.camera = read_calibration(calibration);
  for (const auto& row : parse_manifest(manifest)) {
    PairedSample s;
    s.id = row.id;
    s.image = load_image_f32(resolve_manifest_path(manifest, row.image_path));
    s.cloud = load_point_cloud_bin(resolve_manifest_path(manifest, row.cloud_path));
    s.cloud.id = row.id;
    s.cloud.timestamp = row.timestamp_s;
    s.position = row.position;
    s.timestamp_s = row.timestamp_s;
    s.run_id = row.run_id;
    data.samples.push_back(std::move(s));
  }
  return data;
}

std::string format_loss_history(const std::vector<LossRecord>& history) {
  std::string out = "epoch,step,loss\n";
  char buf[96];
  for (const auto& r : history) {
    std::snprintf(buf, sizeof(buf), "%d,%d,%.17g\n", r.epoch, r.step, r.loss);
    out += buf;
  }
  return out;
}

void write_loss_history(const fs::path& path, const std::vector<LossRecord>& history) {
  write_text_file(path, format_loss_history(history));
}

// ---- helpers -------------------------------------------------------------------

namespace {

std::vector<ad::Tensor> tensors_of(const NamedTensors& named) {
  std::vector<ad::Tensor> out;
  out.reserve(named.size());
  for (const auto& [n, t] : named) out.push_back(t);
  return out;
}

void zero_grads(const std::vector<ad::Tensor>& params) {
  for (auto p : params) p.zero_grad();
}

void check_finite(double v, const char* what, int epoch, int step) {
  if (!std::isfinite(v))
    throw Error(ErrorCode::NonFinite, std::string(what) + " loss at epoch " + std::to_string(epoch) + " step " +
                                          std::to_string(step));
}

ImageFeatureMap frozen_features(const ImageNetwork& net, const Image& image) {
  ImageFeatureMap f = image_encode(image, net.encoder);
  f.values = f.values.detach();
  f.values.set_requires_grad(false);
  return f;
}

ProjectedFeatureMap project(const SparseFeatureMap& map, const ProjectionModel& camera, ProjectionKind kind,
                            int width, int height) {
  return kind == ProjectionKind::Perspective ? project_voxels(map, camera, width, height)
                                             : orthographic_project(map, width, height);
}

// Usable pair for stages 2 and 3: cached voxel grid and frozen image outputs.
struct PointItem {
  std::size_t sample = 0;
  VoxelGrid grid;
  ImageFeatureMap features;
  ad::Tensor image_descriptor;  // stage 3 target
};

ad::Tensor local_loss_of(const PointItem& item, const PointBackbone& backbone, const ProjectionModel& camera,
                         LocalLossMode mode, ProjectionKind kind, double beta) {
  const SparseFeatureMap local = point_cloud_backbone(item.grid, backbone);
  const ProjectedFeatureMap projected = project(local, camera, kind, item.features.width, item.features.height);
  return local_descriptor_loss(projected, local.feats, item.features, mode, beta);
}

ad::Tensor point_global(const VoxelGrid& grid, const PointNetwork& net) {
  const SparseFeatureMap local = point_cloud_backbone(grid, net.backbone);
  return fcn_project(gem_pool(local.feats, net.head.p), net.head);
}

// Voxelizes every sample and keeps the ones whose backbone output projects
// onto the image feature grid.
std::vector<PointItem> prepare_items(const TrainingData& data, const ImageNetwork& image, const PointNetwork& net,
                                     ProjectionKind kind, bool with_descriptor, std::size_t* skipped) {
  std::vector<PointItem> items;
  *skipped = 0;
  for (std::size_t i = 0; i < data.samples.size(); ++i) {
    const auto& s = data.samples[i];
    try {
      PointItem item{i, voxelize(s.cloud, net.voxel_config, net.voxel_seed), frozen_features(image, s.image), {}};
      SparseFeatureMap skeleton = point_cloud_backbone(item.grid, net.backbone);
      project(skeleton, data.camera, kind, item.features.width, item.features.height);
      if (with_descriptor) {
        item.image_descriptor = image.describe(item.features).detach();
        item.image_descriptor.set_requires_grad(false);
      }
      items.push_back(std::move(item));
    } catch (const Error& e) {
      // A cloud with nothing in range has no correspondences either.
      if (e.code() != ErrorCode::EmptyCloud && e.code() != ErrorCode::AllPointsCulled &&
          e.code() != ErrorCode::NoVisibleVoxels &&
          e.code() != ErrorCode::NoCorrespondences)
        throw;
      ++*skipped;
    }
  }
  if (items.empty() || *skipped * 2 > data.samples.size())
    throw Error(ErrorCode::DegenerateDataset, std::to_string(*skipped) + " of " +
                                                  std::to_string(data.samples.size()) +
                                                  " pairs have no voxel-pixel correspondences");
  return items;
}

std::vector<std::vector<std::size_t>> shuffled_batches(std::size_t n, int batch_size, std::mt19937_64& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < n; i += static_cast<std::size_t>(batch_size))
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(n, i + static_cast<std::size_t>(batch_size))));
  return out;
}

}  // namespace

// ---- stage 1 -------------------------------------------------------------------

ImageStageResult train_stage_image(const TrainingData& data, const ModelConfig& model, const StageConfig& cfg,
                                   const ImageNetwork* init) {
  model.validate();
  cfg.validate();
  std::vector<Eigen::Vector3d> positions;
  for (const auto& s : data.samples) positions.push_back(s.position);
  TupleSet tuples;
  try {
    tuples = build_tuples(positions, cfg.pos_thresh_m, cfg.neg_thresh_m);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::EmptyResult) throw;
    throw Error(ErrorCode::DegenerateDataset, "no sample has a positive within " +
                                                  std::to_string(cfg.pos_thresh_m) + " m");
  }

  ImageStageResult result;
  result.net = init ? image_network_from(make_checkpoint(model, init, nullptr)) : init_image_network(model, cfg.seed);
  const auto params = tensors_of(result.net.named());
  AdamState adam;
  std::mt19937_64 rng(cfg.seed ^ 0x5EEDu);
  int batch_size = std::max(2, cfg.batch_size);
  int step = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_schedule(epoch, cfg.base_lr, cfg.lr_decay);
    // Pair each anchor with one unused positive; every sample joins at most
    // one pair per epoch.
    std::vector<std::size_t> order(tuples.tuples.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<char> used(data.samples.size(), 0);
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t t : order) {
      const auto& tuple = tuples.tuples[t];
      if (used[tuple.anchor]) continue;
      auto positives = tuple.positives;
      std::shuffle(positives.begin(), positives.end(), rng);
      for (std::size_t p : positives) {
        if (used[p]) continue;
        used[tuple.anchor] = used[p] = 1;
        pairs.emplace_back(tuple.anchor, p);
        break;
      }
    }
    std::vector<std::vector<std::size_t>> batches(1);
    for (const auto& [a, p] : pairs) {
      if (batches.back().size() + 2 > static_cast<std::size_t>(batch_size) && batches.back().size() >= 4)
        batches.emplace_back();
      batches.back().push_back(a);
      batches.back().push_back(p);
    }

    bool expand = false;
    double epoch_sum = 0.0;
    int epoch_steps = 0;
    for (const auto& batch_idx : batches) {
      std::vector<Eigen::Vector3d> batch_pos;
      for (std::size_t i : batch_idx) batch_pos.push_back(positions[i]);
      const auto probe = make_training_batch(ad::Tensor::zeros({batch_idx.size(), 1}), batch_pos,
                                             cfg.pos_thresh_m, cfg.neg_thresh_m);
      if (minable_anchors(probe).empty()) continue;

      std::vector<ad::Tensor> rows;
      for (std::size_t i : batch_idx) rows.push_back(result.net.describe(data.samples[i].image).vector);
      const TrainingBatch batch =
          make_training_batch(ad::stack_rows(rows), std::move(batch_pos), cfg.pos_thresh_m, cfg.neg_thresh_m);
      const TripletLossResult tl = triplet_loss_batch_hard(batch, cfg.triplet);
      const double n = static_cast<double>(tl.triplets.size());
      const double mean_loss = tl.loss.item() / n;
      check_finite(mean_loss, "triplet", epoch, step);
      zero_grads(params);
      ad::backward(tl.loss);
      adam_step(params, adam, lr);
      expand = expand || static_cast<double>(tl.zero_triplets) / n > cfg.triplet.zero_triplet_trigger;
      result.history.push_back({epoch, step++, mean_loss});
      epoch_sum += mean_loss;
      ++epoch_steps;
    }
    if (epoch_steps == 0)
      throw Error(ErrorCode::DegenerateDataset, "epoch " + std::to_string(epoch) + " formed no minable batch");
    result.epoch_mean_loss.push_back(epoch_sum / epoch_steps);
    result.epoch_batch_size.push_back(batch_size);
    // A triggered epoch counts as an all-zero batch for the expansion rule.
    if (expand) batch_size = zero_triplet_expansion(batch_size, batch_size, cfg.triplet);
  }
  zero_grads(params);
  return result;
}

// ---- stages 2 and 3 ------------------------------------------------------------

double mean_local_loss(const TrainingData& data, const ImageNetwork& image, const PointNetwork& net,
                       LocalLossMode mode, ProjectionKind projection, double beta) {
  std::size_t skipped = 0;
  const auto items = prepare_items(data, image, net, projection, false, &skipped);
  double total = 0.0;
  for (const auto& item : items)
    total += local_loss_of(item, net.backbone, data.camera, mode, projection, beta).item();
  return total / static_cast<double>(items.size());
}

PointStageResult train_stage_local(const TrainingData& data, const ImageNetwork& frozen_image,
                                   const ModelConfig& model, const StageConfig& cfg, const PointNetwork* init) {
  model.validate();
  cfg.validate();
  if (frozen_image.encoder.out_channels() != model.local_dim)
    throw Error(ErrorCode::ChannelMismatch, "image features are " +
                                                std::to_string(frozen_image.encoder.out_channels()) +
                                                " wide, the point branch " + std::to_string(model.local_dim));
  PointStageResult result;
  result.net = init ? point_network_from(make_checkpoint(model, nullptr, init), false)
                    : init_point_network(model, cfg.seed);
  const auto items = prepare_items(data, frozen_image, result.net, cfg.projection, false, &result.skipped_pairs);

  auto evaluate = [&] {
    double total = 0.0;
    for (const auto& item : items)
      total += local_loss_of(item, result.net.backbone, data.camera, cfg.local_mode, cfg.projection, cfg.beta).item();
    return total / static_cast<double>(items.size());
  };
  result.initial_loss = evaluate();

  const auto params = tensors_of(result.net.backbone.named("point.backbone."));
  AdamState adam;
  std::mt19937_64 rng(cfg.seed ^ 0x10CA1u);
  int step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_schedule(epoch, cfg.base_lr, cfg.lr_decay);
    double epoch_sum = 0.0;
    const auto batches = shuffled_batches(items.size(), cfg.batch_size, rng);
    for (const auto& batch : batches) {
      zero_grads(params);
      double batch_sum = 0.0;
      for (std::size_t i : batch) {
        const ad::Tensor loss = ad::scale(
            local_loss_of(items[i], result.net.backbone, data.camera, cfg.local_mode, cfg.projection, cfg.beta),
            1.0 / static_cast<double>(batch.size()));
        batch_sum += loss.item();
        ad::backward(loss);
      }
      check_finite(batch_sum, "local", epoch, step);
      adam_step(params, adam, lr);
      result.history.push_back({epoch, step++, batch_sum});
      epoch_sum += batch_sum * static_cast<double>(batch.size());
    }
    result.epoch_mean_loss.push_back(epoch_sum / static_cast<double>(items.size()));
  }
  zero_grads(params);
  result.final_loss = evaluate();
  return result;
}

PointStageResult train_stage_global(const TrainingData& data, const ImageNetwork& frozen_image,
                                    const PointNetwork& stage2, const ModelConfig& model, const StageConfig& cfg) {
  model.validate();
  cfg.validate();
  if (stage2.backbone.convs.size() != static_cast<std::size_t>(model.conv_layers) || !stage2.backbone.vfe.w1.defined())
    throw Error(ErrorCode::MissingPrerequisite, "stage 3 needs the stage-2 point backbone");
  PointStageResult result;
  result.net = point_network_from(make_checkpoint(model, nullptr, &stage2), false);
  std::mt19937_64 head_rng(cfg.seed ^ 0x6E0Au);
  result.net.head = GemFcnParams::init(model.local_dim, model.descriptor_dim, head_rng);
  const auto items = prepare_items(data, frozen_image, result.net, cfg.projection, true, &result.skipped_pairs);

  auto evaluate = [&] {
    double total = 0.0;
    for (const auto& item : items)
      total += global_descriptor_loss(item.image_descriptor, point_global(item.grid, result.net), cfg.beta).item();
    return total / static_cast<double>(items.size());
  };
  result.initial_loss = evaluate();

  const auto backbone = tensors_of(result.net.backbone.named("point.backbone."));
  const auto head = tensors_of(result.net.head.named("point.head."));
  auto params = backbone;
  params.insert(params.end(), head.begin(), head.end());
  AdamState adam_backbone, adam_head;
  std::mt19937_64 rng(cfg.seed ^ 0x610Bu);
  int step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_schedule(epoch, cfg.base_lr, cfg.lr_decay);
    double epoch_sum = 0.0;
    for (const auto& batch : shuffled_batches(items.size(), cfg.batch_size, rng)) {
      std::vector<ad::Tensor> img, pts;
      for (std::size_t i : batch) {
        img.push_back(items[i].image_descriptor);
        pts.push_back(point_global(items[i].grid, result.net));
      }
      const ad::Tensor loss = ad::scale(global_descriptor_loss(ad::stack_rows(img), ad::stack_rows(pts), cfg.beta),
                                        1.0 / static_cast<double>(batch.size()));
      check_finite(loss.item(), "global", epoch, step);
      zero_grads(params);
      ad::backward(loss);
      if (cfg.backbone_lr_scale > 0.0) adam_step(backbone, adam_backbone, lr * cfg.backbone_lr_scale);
      adam_step(head, adam_head, lr);
      result.history.push_back({epoch, step++, loss.item()});
      epoch_sum += loss.item() * static_cast<double>(batch.size());
    }
    result.epoch_mean_loss.push_back(epoch_sum / static_cast<double>(items.size()));
  }
  zero_grads(params);
  result.final_loss = evaluate();
  return result;
}

// ---- networks and checkpoints --------------------------------------------------

ImageNetwork init_image_network(const ModelConfig& model, std::uint64_t seed) {
  return ImageNetwork::init(model.image_channels, model.local_dim, model.descriptor_dim, seed,
                            model.image_coord_channels);
}

PointNetwork init_point_network(const ModelConfig& model, std::uint64_t seed) {
  PointNetwork net;
  net.voxel_config = model.voxel;
  net.voxel_seed = model.voxel_seed;
  net.backbone =
      PointBackbone::init(model.vfe_channels, model.local_dim, model.conv_layers, model.two_layer_vfe, seed);
  return net;
}

namespace {

constexpr const char* kMetaModel = "meta.model";
constexpr const char* kMetaVoxel = "meta.voxel_config";
constexpr const char* kMetaVoxelSeed = "meta.voxel_seed";

void put_all(Checkpoint& ckpt, const NamedTensors& named) {
  for (const auto& [name, t] : named) ckpt.put(name, ad::Tensor::from(t.shape(), {t.values().begin(), t.values().end()}));
}

void load_all(const Checkpoint& ckpt, const NamedTensors& named) {
  for (const auto& [name, t] : named) {
    const ad::Tensor& src = ckpt.at(name);
    if (src.shape() != t.shape())
      throw Error(ErrorCode::MalformedFile, "checkpoint tensor '" + name + "' has shape " + ad::shape_str(src.shape()) +
                                                ", expected " + ad::shape_str(t.shape()));
    ad::Tensor dst = t;
    std::copy(src.values().begin(), src.values().end(), dst.mutable_values().begin());
  }
}

}  // namespace

Checkpoint make_checkpoint(const ModelConfig& model, const ImageNetwork* image, const PointNetwork* point) {
  Checkpoint ckpt;
  ckpt.put(kMetaModel, ad::Tensor::from({7}, {double(model.image_channels), double(model.local_dim),
                                              double(model.vfe_channels), double(model.descriptor_dim),
                                              double(model.conv_layers), model.two_layer_vfe ? 1.0 : 0.0,
                                              model.image_coord_channels ? 1.0 : 0.0}));
  const auto& v = model.voxel;
  ckpt.put(kMetaVoxel, ad::Tensor::from({10}, {v.range_min.x(), v.range_min.y(), v.range_min.z(), v.range_max.x(),
                                               v.range_max.y(), v.range_max.z(), v.voxel_size.x(), v.voxel_size.y(),
                                               v.voxel_size.z(), double(v.max_points_per_voxel)}));
  ckpt.put(kMetaVoxelSeed, ad::Tensor::from({2}, {double(model.voxel_seed & 0xFFFFFFFFu), double(model.voxel_seed >> 32)}));
  if (image) put_all(ckpt, image->named());
  if (point) put_all(ckpt, point->named());
  return ckpt;
}

ModelConfig model_config_from(const Checkpoint& ckpt) {
  const auto m = ckpt.at(kMetaModel).values();
  const auto v = ckpt.at(kMetaVoxel).values();
  const auto s = ckpt.at(kMetaVoxelSeed).values();
  if (m.size() != 7 || v.size() != 10 || s.size() != 2)
    throw Error(ErrorCode::MalformedFile, "checkpoint metadata has unexpected sizes");
  ModelConfig model;
  model.image_channels = static_cast<int>(m[0]);
  model.local_dim = static_cast<int>(m[1]);
  model.vfe_channels = static_cast<int>(m[2]);
  model.descriptor_dim = static_cast<int>(m[3]);
  model.conv_layers = static_cast<int>(m[4]);
  model.two_layer_vfe = m[5] != 0.0;
  model.image_coord_channels = m[6] != 0.0;
  model.voxel.range_min = Eigen::Vector3d(v[0], v[1], v[2]);
  model.voxel.range_max = Eigen::Vector3d(v[3], v[4], v[5]);
  model.voxel.voxel_size = Eigen::Vector3d(v[6], v[7], v[8]);
  model.voxel.max_points_per_voxel = static_cast<int>(v[9]);
  model.voxel_seed = static_cast<std::uint64_t>(s[0]) | (static_cast<std::uint64_t>(s[1]) << 32);
  model.validate();
  return model;
}

ImageNetwork image_network_from(const Checkpoint& ckpt) {
  if (!ckpt.contains("image.encoder.block0.weight"))
    throw Error(ErrorCode::MissingPrerequisite, "checkpoint holds no image network (run the image stage first)");
  ImageNetwork net = init_image_network(model_config_from(ckpt), 0);
  load_all(ckpt, net.named());
  return net;
}

bool has_point_backbone(const Checkpoint& ckpt) { return ckpt.contains("point.backbone.vfe.w1"); }
bool has_point_head(const Checkpoint& ckpt) { return ckpt.contains("point.head.p"); }

PointNetwork point_network_from(const Checkpoint& ckpt, bool require_head) {
  if (!has_point_backbone(ckpt))
    throw Error(ErrorCode::MissingPrerequisite, "checkpoint holds no point backbone (run the local stage first)");
  if (require_head && !has_point_head(ckpt))
    throw Error(ErrorCode::MissingPrerequisite, "checkpoint holds no point head (run the global stage first)");
  const ModelConfig model = model_config_from(ckpt);
  PointNetwork net = init_point_network(model, 0);
  if (has_point_head(ckpt)) {
    std::mt19937_64 rng(0);
    net.head = GemFcnParams::init(model.local_dim, model.descriptor_dim, rng);
  }
  load_all(ckpt, net.named());
  return net;
}

std::uint64_t parameter_hash(const NamedTensors& params) {
  std::uint64_t h = fnv1a(nullptr, 0);
  for (const auto& [name, t] : params) {
    h = fnv1a(name.data(), name.size(), h);
    for (std::size_t e : t.shape()) {
      const auto e64 = static_cast<std::uint64_t>(e);
      h = fnv1a(&e64, sizeof(e64), h);
    }
    h = fnv1a(t.values().data(), t.values().size() * sizeof(double), h);
  }
  return h;
}

// ---- inference -----------------------------------------------------------------

std::vector<double> image_descriptor(const ImageNetwork& net, const Image& image) {
  const ad::Tensor d = net.describe(image).vector;
  return {d.values().begin(), d.values().end()};
}

std::vector<double> point_descriptor(const PointNetwork& net, const PointCloud& cloud) {
  const ad::Tensor d = point_cloud_encode(cloud, net).global.vector;
  return {d.values().begin(), d.values().end()};
}

}  // namespace vxp
