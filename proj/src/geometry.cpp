#include "vxp/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

#include "vxp/constants.hpp"
#include "vxp/error.hpp"
#include "vxp/sparse3d.hpp"

namespace vxp {

VoxelGridConfig VoxelGridConfig::standard() {
  namespace c = constants;
  VoxelGridConfig cfg;
  cfg.range_min = {c::kRangeXMin, c::kRangeYMin, c::kRangeZMin};
  cfg.range_max = {c::kRangeXMax, c::kRangeYMax, c::kRangeZMax};
  cfg.voxel_size = {c::kVoxelX, c::kVoxelY, c::kVoxelZ};
  cfg.max_points_per_voxel = c::kMaxPointsPerVoxel;
  return cfg;
}

GridCoord VoxelGridConfig::grid_dims() const {
  GridCoord dims{};
  for (int a = 0; a < 3; ++a)
    dims[a] = static_cast<int>(std::ceil((range_max[a] - range_min[a]) / voxel_size[a]));
  return dims;
}

void VoxelGridConfig::validate() const {
  for (int a = 0; a < 3; ++a) {
    if (!(range_max[a] > range_min[a]))
      throw Error(ErrorCode::InvalidConfig, "range_max must exceed range_min on axis " + std::to_string(a));
    if (!(voxel_size[a] > 0.0))
      throw Error(ErrorCode::InvalidConfig, "voxel size must be > 0 on axis " + std::to_string(a));
  }
  if (max_points_per_voxel < 1) throw Error(ErrorCode::InvalidConfig, "max_points_per_voxel must be >= 1");
}

VoxelGrid::VoxelGrid(VoxelGridConfig config, std::vector<GridCoord> coords, std::vector<double> points,
                     std::vector<int> valid_counts)
    : config_(std::move(config)),
      coords_(std::move(coords)),
      points_(std::move(points)),
      valid_counts_(std::move(valid_counts)) {}

std::optional<GridCoord> point_to_cell(const Eigen::Vector3d& p, const VoxelGridConfig& config) {
  const GridCoord dims = config.grid_dims();
  GridCoord c{};
  for (int a = 0; a < 3; ++a) {
    if (!(p[a] >= config.range_min[a] && p[a] < config.range_max[a])) return std::nullopt;
    const int idx = static_cast<int>(std::floor((p[a] - config.range_min[a]) / config.voxel_size[a]));
    c[a] = std::clamp(idx, 0, dims[a] - 1);
  }
  return c;
}

VoxelGrid voxelize(const PointCloud& cloud, const VoxelGridConfig& config, std::uint64_t seed) {
  config.validate();
  if (cloud.points.empty()) throw Error(ErrorCode::EmptyCloud, "cloud '" + cloud.id + "' has no points");

  std::map<GridCoord, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    const auto& p = cloud.points[i];
    if (!p.allFinite()) throw Error(ErrorCode::InvalidConfig, "non-finite point " + std::to_string(i));
    if (auto c = point_to_cell(p, config)) members[*c].push_back(i);
  }
  if (members.empty())
    throw Error(ErrorCode::AllPointsCulled, "no point of '" + cloud.id + "' lies inside the range");

  const int m = config.max_points_per_voxel;
  std::mt19937_64 rng(seed);
  std::vector<GridCoord> coords;
  std::vector<int> counts;
  std::vector<double> points(members.size() * static_cast<std::size_t>(m) * 3, 0.0);
  coords.reserve(members.size());
  counts.reserve(members.size());
  std::size_t v = 0;
  for (auto& [coord, idx] : members) {
    if (idx.size() > static_cast<std::size_t>(m)) {
      // Partial Fisher-Yates, then restore acquisition order of the kept subset.
      for (std::size_t i = 0; i < static_cast<std::size_t>(m); ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
        std::swap(idx[i], idx[pick(rng)]);
      }
      idx.resize(static_cast<std::size_t>(m));
      std::sort(idx.begin(), idx.end());
    }
    double* dst = points.data() + v * static_cast<std::size_t>(m) * 3;
    for (std::size_t r = 0; r < idx.size(); ++r)
      for (int a = 0; a < 3; ++a) dst[r * 3 + a] = cloud.points[idx[r]][a];
    coords.push_back(coord);
    counts.push_back(static_cast<int>(idx.size()));
    ++v;
  }
  return VoxelGrid(config, std::move(coords), std::move(points), std::move(counts));
}

Eigen::Vector3d voxel_center_to_lidar(const GridCoord& c, const Eigen::Vector3d& voxel_size,
                                      const Eigen::Vector3d& range_min) {
  Eigen::Vector3d out;
  for (int a = 0; a < 3; ++a) out[a] = voxel_size[a] * c[a] + (voxel_size[a] / 2.0 + range_min[a]);
  return out;
}

Eigen::Matrix4d ProjectionModel::lidar_to_camera_axes() {
  Eigen::Matrix4d e = Eigen::Matrix4d::Zero();
  e(0, 1) = -1.0;  // camera x (right) = -lidar y
  e(1, 2) = -1.0;  // camera y (down)  = -lidar z
  e(2, 0) = 1.0;   // camera z (fwd)   =  lidar x
  e(3, 3) = 1.0;
  return e;
}

void ProjectionModel::validate() const {
  if (!(fx_n > 0.0 && fy_n > 0.0))
    throw Error(ErrorCode::InvalidConfig, "normalized focal lengths must be > 0");
  if (!extrinsic.allFinite()) throw Error(ErrorCode::InvalidConfig, "extrinsic has non-finite entries");
  const Eigen::Matrix3d r = extrinsic.topLeftCorner<3, 3>();
  const double dev = (r * r.transpose() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
  if (dev > 1e-6) throw Error(ErrorCode::InvalidConfig, "extrinsic rotation is not orthonormal");
}

std::optional<ContinuousPixel> project_point(const ProjectionModel& proj, const Eigen::Vector3d& p,
                                             int width, int height) {
  const Eigen::Matrix4d& e = proj.extrinsic;
  const double xc = e(0, 0) * p[0] + e(0, 1) * p[1] + e(0, 2) * p[2] + e(0, 3);
  const double yc = e(1, 0) * p[0] + e(1, 1) * p[1] + e(1, 2) * p[2] + e(1, 3);
  const double zc = e(2, 0) * p[0] + e(2, 1) * p[1] + e(2, 2) * p[2] + e(2, 3);
  if (!(zc > 0.0)) return std::nullopt;
  const double fx = proj.fx_n * width, cx = proj.cx_n * width;
  const double fy = proj.fy_n * height, cy = proj.cy_n * height;
  const double u = fx * xc / zc + cx;
  const double v = fy * yc / zc + cy;
  if (!(u >= 0.0 && u < width && v >= 0.0 && v < height)) return std::nullopt;
  return ContinuousPixel{u, v, zc};
}

void group_collisions(ProjectedFeatureMap& map) {
  std::vector<std::size_t> order(map.entries.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return map.pixel_index(map.entries[a]) < map.pixel_index(map.entries[b]);
  });
  map.collision_sets.clear();
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (i == 0 || map.pixel_index(map.entries[order[i]]) != map.pixel_index(map.entries[order[i - 1]]))
      map.collision_sets.emplace_back();
    map.collision_sets.back().push_back(order[i]);
  }
}

ProjectedFeatureMap project_voxels(const SparseFeatureMap& map, const ProjectionModel& proj,
                                   int width, int height) {
  if (width < 1 || height < 1) throw Error(ErrorCode::InvalidConfig, "feature dims must be >= 1");
  ProjectedFeatureMap out;
  out.width = width;
  out.height = height;
  for (std::size_t i = 0; i < map.coords.size(); ++i) {
    const Eigen::Vector3d center =
        voxel_center_to_lidar(map.coords[i], map.effective_voxel_size, map.range_min);
    const auto px = project_point(proj, center, width, height);
    if (!px) continue;
    out.entries.push_back({static_cast<int>(std::floor(px->u)), static_cast<int>(std::floor(px->v)), i,
                           px->depth, 1.0 / px->depth});
  }
  if (out.entries.empty())
    throw Error(ErrorCode::NoVisibleVoxels, "all " + std::to_string(map.coords.size()) + " voxels culled");
  group_collisions(out);
  return out;
}

ProjectedFeatureMap orthographic_project(const SparseFeatureMap& map, int width, int height) {
  if (width < 1 || height < 1) throw Error(ErrorCode::InvalidConfig, "feature dims must be >= 1");
  if (map.coords.empty()) throw Error(ErrorCode::NoVisibleVoxels, "empty feature map");
  ProjectedFeatureMap out;
  out.width = width;
  out.height = height;
  out.entries.reserve(map.coords.size());
  for (std::size_t i = 0; i < map.coords.size(); ++i) {
    const auto& c = map.coords[i];
    const int u = static_cast<int>(static_cast<long long>(c[1]) * width / map.grid_dims[1]);
    const int v = static_cast<int>(static_cast<long long>(c[2]) * height / map.grid_dims[2]);
    // Depth measured from the grid's near face along the dropped axis.
    const double depth = (c[0] + 0.5) * map.effective_voxel_size[0];
    out.entries.push_back({u, v, i, depth, 1.0 / depth});
  }
  group_collisions(out);
  return out;
}

}  // namespace vxp
