#include "vxp/synthetic.hpp"

#include <Eigen/Geometry>

#include <array>
#include <cmath>
#include <cstdio>
#include <random>

#include "vxp/data_io.hpp"
#include "vxp/error.hpp"

namespace vxp {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

struct Box {
  Eigen::Vector3d lo;
  Eigen::Vector3d hi;
};

// Side and top faces of a box as (origin, edge a, edge b).
std::array<std::array<Eigen::Vector3d, 3>, 5> box_faces(const Box& b) {
  const Eigen::Vector3d d = b.hi - b.lo;
  const Eigen::Vector3d ex(d.x(), 0, 0), ey(0, d.y(), 0), ez(0, 0, d.z());
  return {{{b.lo, ex, ez},
           {Eigen::Vector3d(b.lo.x(), b.hi.y(), b.lo.z()), ex, ez},
           {b.lo, ey, ez},
           {Eigen::Vector3d(b.hi.x(), b.lo.y(), b.lo.z()), ey, ez},
           {Eigen::Vector3d(b.lo.x(), b.lo.y(), b.hi.z()), ex, ey}}};
}

double round_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

}  // namespace

void SyntheticSceneParams::validate() const {
  if (min_boxes < 1 || max_boxes < min_boxes) throw Error(ErrorCode::InvalidConfig, "box count range invalid");
  if (points_per_cloud < 1) throw Error(ErrorCode::InvalidConfig, "points_per_cloud must be >= 1");
  if (image_width < 8 || image_height < 8) throw Error(ErrorCode::InvalidConfig, "image must be at least 8x8");
  if (pose_jitter_m < 0 || yaw_jitter_rad < 0 || noise_m < 0)
    throw Error(ErrorCode::InvalidConfig, "jitter and noise must be non-negative");
  if (!(scene_spacing_m > 0)) throw Error(ErrorCode::InvalidConfig, "scene spacing must be > 0");
}

ProjectionModel synthetic_camera() {
  ProjectionModel proj;
  proj.fx_n = proj.fy_n = 0.5;
  proj.cx_n = proj.cy_n = 0.5;
  proj.extrinsic = ProjectionModel::lidar_to_camera_axes();
  return proj;
}

SyntheticScene generate_synthetic_scene(const SyntheticSceneParams& params, std::uint64_t scene_index,
                                        int traversal) {
  params.validate();
  if (traversal < 0) throw Error(ErrorCode::InvalidConfig, "traversal must be >= 0");
  const std::uint64_t layout_seed = splitmix(splitmix(params.seed) ^ scene_index);
  const Eigen::Vector3d origin(params.scene_spacing_m * static_cast<double>(scene_index), 0.0, 0.0);

  std::mt19937_64 layout_rng(layout_seed);
  std::uniform_int_distribution<int> count_dist(params.min_boxes, params.max_boxes);
  std::uniform_real_distribution<double> ux(6.0, 38.0), uy(-14.0, 14.0), usize(1.0, 4.0), uh(1.5, 8.0);
  std::vector<Box> boxes(static_cast<std::size_t>(count_dist(layout_rng)));
  for (auto& b : boxes) {
    const double cx = ux(layout_rng), cy = uy(layout_rng);
    const double sx = usize(layout_rng), sy = usize(layout_rng), h = uh(layout_rng);
    b.lo = origin + Eigen::Vector3d(cx - sx / 2, cy - sy / 2, -1.7);
    b.hi = origin + Eigen::Vector3d(cx + sx / 2, cy + sy / 2, -1.7 + h);
  }

  std::vector<std::array<Eigen::Vector3d, 3>> faces;
  std::vector<double> areas;
  for (const auto& b : boxes)
    for (const auto& f : box_faces(b)) {
      faces.push_back(f);
      areas.push_back(f[1].norm() * f[2].norm());
    }

  std::mt19937_64 rng(splitmix(layout_seed + static_cast<std::uint64_t>(traversal) + 1));
  std::normal_distribution<double> jitter(0.0, 1.0);
  const Eigen::Vector3d pose =
      origin + Eigen::Vector3d(params.pose_jitter_m * jitter(rng), params.pose_jitter_m * jitter(rng), 0.0);
  const double yaw = params.yaw_jitter_rad * jitter(rng);
  const Eigen::Matrix3d world_to_sensor = Eigen::AngleAxisd(-yaw, Eigen::Vector3d::UnitZ()).toRotationMatrix();

  SyntheticScene scene;
  scene.camera = synthetic_camera();
  scene.position = Eigen::Vector3d(round_f32(pose.x()), round_f32(pose.y()), round_f32(pose.z()));
  scene.cloud.id = "s" + std::to_string(scene_index) + "_t" + std::to_string(traversal);
  scene.cloud.points.reserve(static_cast<std::size_t>(params.points_per_cloud));
  std::discrete_distribution<std::size_t> pick(areas.begin(), areas.end());
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int i = 0; i < params.points_per_cloud; ++i) {
    const auto& f = faces[pick(rng)];
    const Eigen::Vector3d world = f[0] + unit(rng) * f[1] + unit(rng) * f[2];
    Eigen::Vector3d p = world_to_sensor * (world - pose);
    for (int a = 0; a < 3; ++a) p[a] = round_f32(p[a] + params.noise_m * jitter(rng));
    scene.cloud.points.push_back(p);
  }

  Image& img = scene.image;
  img.width = params.image_width;
  img.height = params.image_height;
  img.channels = 1;
  img.data.assign(static_cast<std::size_t>(img.width * img.height), 0.0);
  for (const auto& p : scene.cloud.points) {
    const auto px = project_point(scene.camera, p, img.width, img.height);
    if (!px) continue;
    const auto idx = static_cast<std::size_t>(static_cast<int>(std::floor(px->v)) * img.width +
                                              static_cast<int>(std::floor(px->u)));
    img.data[idx] = std::max(img.data[idx], round_f32(1.0 / px->depth));
  }
  return scene;
}

std::vector<SyntheticSample> build_synthetic_dataset(const SyntheticSceneParams& params, int scenes,
                                                     int traversals) {
  if (scenes < 1 || traversals < 1) throw Error(ErrorCode::InvalidConfig, "scenes and traversals must be >= 1");
  std::vector<SyntheticSample> out;
  out.reserve(static_cast<std::size_t>(scenes * traversals));
  for (int t = 0; t < traversals; ++t)
    for (int s = 0; s < scenes; ++s) {
      SyntheticSample sample;
      char id[32];
      std::snprintf(id, sizeof(id), "s%04d_t%d", s, t);
      sample.id = id;
      sample.scene = static_cast<std::uint64_t>(s);
      sample.traversal = t;
      sample.timestamp_s = 1000.0 * t + 10.0 * s;
      sample.data = generate_synthetic_scene(params, sample.scene, t);
      out.push_back(std::move(sample));
    }
  return out;
}

void write_synthetic_dataset(const std::filesystem::path& dir, const std::vector<SyntheticSample>& samples,
                             const SyntheticWriteOptions& options) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir / "clouds", ec);
  fs::create_directories(dir / "images", ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create " + dir.string() + ": " + ec.message());
  std::uint64_t scene_count = 0;
  for (const auto& s : samples) scene_count = std::max(scene_count, s.scene + 1);
  const auto heldout_from = scene_count - std::min<std::uint64_t>(scene_count, static_cast<std::uint64_t>(
                                                                                  std::max(0, options.heldout_scenes)));
  std::vector<SampleManifestRow> all, train, heldout;
  for (const auto& s : samples) {
    SampleManifestRow row;
    row.id = s.id;
    row.timestamp_s = s.timestamp_s;
    row.position = s.data.position;
    row.cloud_path = "clouds/" + s.id + ".bin";
    row.image_path = "images/" + s.id + ".img";
    row.run_id = "t" + std::to_string(s.traversal);
    write_point_cloud_bin(dir / row.cloud_path, s.data.cloud);
    write_image_f32(dir / row.image_path, s.data.image);
    (s.scene >= heldout_from ? heldout : train).push_back(row);
    all.push_back(std::move(row));
  }
  write_manifest(dir / "manifest.csv", all);
  if (options.heldout_scenes > 0) {
    write_manifest(dir / "train.csv", train);
    write_manifest(dir / "heldout.csv", heldout);
  }
  write_calibration(dir / "calib.txt", samples.empty() ? synthetic_camera() : samples.front().data.camera);
}

}  // namespace vxp
