#pragma once

#include <Eigen/Core>

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace vxp {

using GridCoord = std::array<int, 3>;

struct VoxelGridConfig {
  Eigen::Vector3d range_min;
  Eigen::Vector3d range_max;
  Eigen::Vector3d voxel_size;
  int max_points_per_voxel = 0;

  /// x:[0,44) y:[-22,22) z:[-4,18) with 0.4 x 0.4 x 0.2 m voxels.
  static VoxelGridConfig standard();

  GridCoord grid_dims() const;
  /// Throws InvalidConfig.
  void validate() const;
};

struct PointCloud {
  std::vector<Eigen::Vector3d> points;  // LiDAR frame, meters
  std::optional<double> timestamp;
  std::string id;
};

/// Non-empty voxels with their (zero-padded) member points.
class VoxelGrid {
 public:
  VoxelGrid(VoxelGridConfig config, std::vector<GridCoord> coords, std::vector<double> points,
            std::vector<int> valid_counts);

  const VoxelGridConfig& config() const noexcept { return config_; }
  std::size_t size() const noexcept { return coords_.size(); }
  int max_points() const noexcept { return config_.max_points_per_voxel; }
  const std::vector<GridCoord>& coords() const noexcept { return coords_; }
  const std::vector<int>& valid_counts() const noexcept { return valid_counts_; }
  /// M x 3 row-major block of voxel `i`; rows at or beyond valid_count are zero.
  const double* voxel_points(std::size_t i) const { return points_.data() + i * max_points() * 3; }
  const std::vector<double>& raw_points() const noexcept { return points_; }

 private:
  VoxelGridConfig config_;
  std::vector<GridCoord> coords_;
  std::vector<double> points_;
  std::vector<int> valid_counts_;
};

/// Assigns points in [min, max) to cells floor((p - min) / size). Cells with
/// more than M points keep a seeded uniform subsample. Voxels are ordered by
/// grid coordinate.
VoxelGrid voxelize(const PointCloud& cloud, const VoxelGridConfig& config, std::uint64_t seed);

/// Cell index of a point, or nullopt when it lies outside the range.
std::optional<GridCoord> point_to_cell(const Eigen::Vector3d& p, const VoxelGridConfig& config);

/// diag(v) * c + v / 2 + min.
Eigen::Vector3d voxel_center_to_lidar(const GridCoord& c, const Eigen::Vector3d& voxel_size,
                                      const Eigen::Vector3d& range_min);

/// Pinhole camera with intrinsics expressed as fractions of the image size,
/// plus the LiDAR -> camera rigid transform.
struct ProjectionModel {
  double fx_n = 0.5;
  double fy_n = 0.5;
  double cx_n = 0.5;
  double cy_n = 0.5;
  Eigen::Matrix4d extrinsic = Eigen::Matrix4d::Identity();

  /// LiDAR (x fwd, y left, z up) to camera (x right, y down, z fwd), no offset.
  static Eigen::Matrix4d lidar_to_camera_axes();

  /// Throws InvalidConfig when intrinsics are non-positive or the rotation
  /// block is not orthonormal within 1e-6.
  void validate() const;
};

struct ContinuousPixel {
  double u;
  double v;
  double depth;
};

/// Projects a LiDAR-frame point onto a width x height grid. Returns nullopt
/// when the point is behind the camera or falls outside the grid.
std::optional<ContinuousPixel> project_point(const ProjectionModel& proj, const Eigen::Vector3d& p,
                                             int width, int height);

struct ProjectedEntry {
  int u = 0;
  int v = 0;
  std::size_t voxel = 0;
  double depth = 0.0;
  double inverse_depth = 0.0;
};

struct ProjectedFeatureMap {
  int width = 0;
  int height = 0;
  std::vector<ProjectedEntry> entries;  // ordered by voxel index
  /// Entry indices grouped by pixel, pixels in row-major order.
  std::vector<std::vector<std::size_t>> collision_sets;

  std::size_t pixel_index(const ProjectedEntry& e) const {
    return static_cast<std::size_t>(e.v) * static_cast<std::size_t>(width) +
           static_cast<std::size_t>(e.u);
  }
};

struct SparseFeatureMap;

/// Perspective voxel -> pixel projection of the map's occupied cells. All
/// colliding entries are kept. Throws NoVisibleVoxels when nothing survives.
ProjectedFeatureMap project_voxels(const SparseFeatureMap& map, const ProjectionModel& proj,
                                   int width, int height);

/// Orthographic variant: the forward grid axis is dropped and the lateral /
/// vertical grid coordinates are rescaled onto the feature grid.
ProjectedFeatureMap orthographic_project(const SparseFeatureMap& map, int width, int height);

/// Groups entries by pixel into `collision_sets`.
void group_collisions(ProjectedFeatureMap& map);

}  // namespace vxp
