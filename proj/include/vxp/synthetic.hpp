#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vxp/geometry.hpp"
#include "vxp/heads.hpp"

namespace vxp {

/// Desk-scale scene generator: axis-aligned boxes in front of the sensor,
/// surface-sampled into a LiDAR cloud and rendered into a one-channel
/// inverse-depth image through the scene camera.
struct SyntheticSceneParams {
  int min_boxes = 5;
  int max_boxes = 15;
  int points_per_cloud = 2048;
  int image_width = 64;
  int image_height = 64;
  double pose_jitter_m = 0.5;    // per-traversal sensor offset (x, y)
  double yaw_jitter_rad = 0.02;  // per-traversal heading offset
  double noise_m = 0.02;         // per-point Gaussian noise
  double scene_spacing_m = 100.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SyntheticScene {
  PointCloud cloud;        // LiDAR frame
  Image image;             // inverse depth, 0 where empty
  Eigen::Vector3d position = Eigen::Vector3d::Zero();  // sensor position, world frame
  ProjectionModel camera;
};

/// Camera shared by every synthetic scene: normalized focal 0.5 (90 degree
/// field of view), principal point at the center, sensor-aligned axes.
ProjectionModel synthetic_camera();

/// Traversal 0 and 1 of one scene share the box layout; sampling, noise and
/// pose jitter are drawn from a traversal-specific stream. Coordinates and
/// pixel values are rounded to f32 so that file round-trips are exact.
SyntheticScene generate_synthetic_scene(const SyntheticSceneParams& params, std::uint64_t scene_index,
                                        int traversal = 0);

struct SyntheticSample {
  std::string id;
  std::uint64_t scene = 0;
  int traversal = 0;
  double timestamp_s = 0.0;
  SyntheticScene data;
};

/// Scenes [0, scenes) times traversals, ordered by traversal then scene.
std::vector<SyntheticSample> build_synthetic_dataset(const SyntheticSceneParams& params, int scenes,
                                                     int traversals);

struct SyntheticWriteOptions {
  /// Scenes with index >= scenes - heldout_scenes go to heldout.csv, the rest
  /// to train.csv. Zero writes only manifest.csv.
  int heldout_scenes = 0;
};

/// Writes clouds/<id>.bin, images/<id>.img, manifest.csv and calib.txt.
void write_synthetic_dataset(const std::filesystem::path& dir, const std::vector<SyntheticSample>& samples,
                             const SyntheticWriteOptions& options = {});

}  // namespace vxp
