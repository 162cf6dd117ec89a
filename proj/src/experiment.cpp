#include "vxp/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ostream>

#include "vxp/error.hpp"
#include "vxp/losses.hpp"

namespace vxp {

ExperimentConfig ExperimentConfig::acceptance() {
  ExperimentConfig c;
  c.synth.seed = 1;
  c.model.local_dim = 64;
  c.model.vfe_channels = 32;
  c.model.descriptor_dim = 256;

  c.image.stage = Stage::Image;
  c.image.epochs = 60;
  c.image.lr_decay = 0.95;
  c.image.batch_size = 16;
  c.image.seed = 11;

  c.local.stage = Stage::Local;
  c.local.epochs = 10;
  c.local.batch_size = 8;
  c.local.seed = 12;
  c.local.local_mode = LocalLossMode::CollisionNormalized;

  c.global.stage = Stage::Global;
  c.global.epochs = 10;
  c.global.batch_size = 8;
  c.global.seed = 13;
  return c;
}

ExperimentConfig ExperimentConfig::tiny() {
  ExperimentConfig c;
  c.scenes = 12;
  c.heldout_scenes = 4;
  c.synth.seed = 3;
  c.synth.points_per_cloud = 512;
  c.synth.image_width = c.synth.image_height = 32;
  c.model.local_dim = 8;
  c.model.vfe_channels = 4;
  c.model.descriptor_dim = 16;
  c.image.stage = Stage::Image;
  c.image.epochs = 2;
  c.image.batch_size = 8;
  c.image.seed = 21;
  c.local.stage = Stage::Local;
  c.local.epochs = 2;
  c.local.batch_size = 4;
  c.local.seed = 22;
  c.global.stage = Stage::Global;
  c.global.epochs = 2;
  c.global.batch_size = 4;
  c.global.seed = 23;
  return c;
}

bool ExperimentResult::histories_finite() const {
  auto finite = [](const std::vector<LossRecord>& h) {
    return std::all_of(h.begin(), h.end(), [](const LossRecord& r) { return std::isfinite(r.loss); });
  };
  return finite(image.history) && finite(perspective.local.history) && finite(perspective.global.history) &&
         finite(orthographic.local.history) && finite(orthographic.global.history);
}

namespace {

PairedSample paired(const SyntheticSample& s) {
  PairedSample p;
  p.id = s.id;
  p.image = s.data.image;
  p.cloud = s.data.cloud;
  p.position = s.data.position;
  p.timestamp_s = s.timestamp_s;
  p.run_id = "t" + std::to_string(s.traversal);
  return p;
}

struct Split {
  TrainingData train;
  std::vector<PairedSample> query;     // held-out, traversal 1
  std::vector<PairedSample> database;  // held-out, traversal 0
};

std::vector<Query> image_queries(const ImageNetwork& net, const std::vector<PairedSample>& samples) {
  std::vector<Query> out;
  for (std::size_t i = 0; i < samples.size(); ++i)
    out.push_back({i, image_descriptor(net, samples[i].image), samples[i].position, samples[i].timestamp_s});
  return out;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

BranchOutcome train_branch(const Split& split, const ImageNetwork& image, const std::vector<Query>& queries,
                           const ExperimentConfig& cfg, ProjectionKind projection, std::ostream* log) {
  BranchOutcome out;
  StageConfig local = cfg.local, global = cfg.global;
  local.projection = global.projection = projection;
  const char* name = projection == ProjectionKind::Perspective ? "perspective" : "orthographic";
  out.local = train_stage_local(split.train, image, cfg.model, local);
  if (log)
    *log << "[" << name << "] stage 2: loss " << out.local.initial_loss << " -> " << out.local.final_loss
         << " (skipped " << out.local.skipped_pairs << ")\n";
  out.global = train_stage_global(split.train, image, out.local.net, cfg.model, global);
  if (log)
    *log << "[" << name << "] stage 3: loss " << out.global.initial_loss << " -> " << out.global.final_loss << "\n";

  std::vector<IndexEntry> entries;
  for (std::size_t i = 0; i < split.database.size(); ++i)
    entries.push_back({i, point_descriptor(out.global.net, split.database[i].cloud), split.database[i].position,
                       split.database[i].timestamp_s});
  const EvalProtocol protocol;
  std::vector<double> unmatched;
  double matched = 0.0;
  for (const auto& q : queries)
    for (const auto& e : entries) {
      const double d = descriptor_distance(q.descriptor.data(), e.descriptor.data(), q.descriptor.size(), Metric::L2);
      if (q.id == e.id)
        matched += d;
      else
        unmatched.push_back(d);
    }
  out.matched_distance = matched / static_cast<double>(queries.size());
  out.unmatched_median = median(std::move(unmatched));
  const auto index = RetrievalIndex::build(std::move(entries));
  out.recall_at_1 = recall_at_k(queries, index, protocol, 1).recall;
  out.recall_at_1pct = recall_at_one_percent(queries, index, protocol).recall;
  if (log)
    *log << "[" << name << "] 2D->3D recall@1 " << out.recall_at_1 << ", recall@1% " << out.recall_at_1pct
         << ", matched distance " << out.matched_distance << ", median unmatched " << out.unmatched_median << "\n";
  return out;
}

}  // namespace

ExperimentResult run_synthetic_experiment(const ExperimentConfig& cfg, std::ostream* log) {
  if (cfg.heldout_scenes < 1 || cfg.heldout_scenes >= cfg.scenes)
    throw Error(ErrorCode::InvalidConfig, "held-out scenes must be in [1, scenes)");
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentResult result;

  Split split;
  split.train.camera = synthetic_camera();
  const int first_heldout = cfg.scenes - cfg.heldout_scenes;
  for (const auto& s : build_synthetic_dataset(cfg.synth, cfg.scenes, 2)) {
    if (static_cast<int>(s.scene) < first_heldout)
      split.train.samples.push_back(paired(s));
    else
      (s.traversal == 0 ? split.database : split.query).push_back(paired(s));
  }
  if (log) *log << "generated " << split.train.samples.size() << " training and " << 2 * cfg.heldout_scenes << " held-out samples\n";

  result.image = train_stage_image(split.train, cfg.model, cfg.image);
  result.image_hash_after_stage1 = parameter_hash(result.image.net.named());
  if (log)
    *log << "stage 1: epoch loss " << result.image.epoch_mean_loss.front() << " -> "
         << result.image.epoch_mean_loss.back() << ", final batch " << result.image.epoch_batch_size.back() << "\n";

  const auto queries = image_queries(result.image.net, split.query);
  const EvalProtocol protocol;
  {
    std::vector<IndexEntry> entries;
    for (std::size_t i = 0; i < split.database.size(); ++i)
      entries.push_back({i, image_descriptor(result.image.net, split.database[i].image), split.database[i].position,
                         split.database[i].timestamp_s});
    result.image_recall_at_1 = recall_at_k(queries, RetrievalIndex::build(std::move(entries)), protocol, 1).recall;
  }
  result.random_baseline = 1.0 / cfg.heldout_scenes;
  if (log) *log << "2D->2D recall@1 " << result.image_recall_at_1 << "\n";

  result.perspective = train_branch(split, result.image.net, queries, cfg, ProjectionKind::Perspective, log);
  if (cfg.orthographic_ablation)
    result.orthographic = train_branch(split, result.image.net, queries, cfg, ProjectionKind::Orthographic, log);
  result.image_hash_after_stage3 = parameter_hash(result.image.net.named());
  result.checkpoint = make_checkpoint(cfg.model, &result.image.net, &result.perspective.global.net);

  result.eval_rows = {{"plain", "1", result.perspective.recall_at_1},
                      {"plain", "1pct", result.perspective.recall_at_1pct},
                      {"image-image", "1", result.image_recall_at_1},
                      {"perspective", "1pct", result.perspective.recall_at_1pct}};
  if (cfg.orthographic_ablation) result.eval_rows.push_back({"orthographic", "1pct", result.orthographic.recall_at_1pct});
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

}  // namespace vxp
