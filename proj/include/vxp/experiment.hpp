#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "vxp/data_io.hpp"
#include "vxp/retrieval.hpp"
#include "vxp/synthetic.hpp"
#include "vxp/trainer.hpp"

namespace vxp {

/// End-to-end synthetic run: generate scenes, train stages 1 -> 2 -> 3 on the
/// training scenes, then evaluate on the held-out scenes with traversal-1
/// queries against a traversal-0 database.
struct ExperimentConfig {
  int scenes = 128;
  int heldout_scenes = 32;
  SyntheticSceneParams synth;
  ModelConfig model;
  StageConfig image;
  StageConfig local;
  StageConfig global;
  /// Also trains stages 2 and 3 with the orthographic projection.
  bool orthographic_ablation = true;

  /// The configuration of the acceptance experiment.
  static ExperimentConfig acceptance();
  /// A small configuration for smoke and determinism tests.
  static ExperimentConfig tiny();
};

struct BranchOutcome {
  PointStageResult local;
  PointStageResult global;
  double recall_at_1 = 0.0;          // 2D query -> 3D database
  double recall_at_1pct = 0.0;
  double matched_distance = 0.0;     // mean ||f(I) - g(P)|| of matching held-out pairs
  double unmatched_median = 0.0;     // median over non-matching pairs
};

struct ExperimentResult {
  ImageStageResult image;
  BranchOutcome perspective;
  BranchOutcome orthographic;  // empty unless the ablation ran
  double image_recall_at_1 = 0.0;  // 2D -> 2D
  double random_baseline = 0.0;    // 1 / held-out scenes
  std::uint64_t image_hash_after_stage1 = 0;
  std::uint64_t image_hash_after_stage3 = 0;
  double seconds = 0.0;
  Checkpoint checkpoint;  // image + perspective point network
  std::vector<RecallRow> eval_rows;

  double stage2_drop() const { return 1.0 - perspective.local.final_loss / perspective.local.initial_loss; }
  bool histories_finite() const;
};

ExperimentResult run_synthetic_experiment(const ExperimentConfig& cfg, std::ostream* log = nullptr);

}  // namespace vxp
