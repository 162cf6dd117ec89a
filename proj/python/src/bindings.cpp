#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "vxp/cli.hpp"
#include "vxp/data_io.hpp"
#include "vxp/error.hpp"
#include "vxp/geometry.hpp"
#include "vxp/losses.hpp"
#include "vxp/retrieval.hpp"
#include "vxp/synthetic.hpp"

namespace py = pybind11;

namespace {

vxp::PointCloud to_cloud(const std::vector<std::array<double, 3>>& points) {
  vxp::PointCloud c;
  for (const auto& p : points) c.points.emplace_back(p[0], p[1], p[2]);
  return c;
}

std::vector<std::array<double, 3>> from_cloud(const vxp::PointCloud& c) {
  std::vector<std::array<double, 3>> out;
  for (const auto& p : c.points) out.push_back({p.x(), p.y(), p.z()});
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Bindings for the voxel-pixel place recognition core";

  static py::exception<vxp::Error> vxp_error(m, "VxpError", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const vxp::Error& e) {
      py::object code = py::str(std::string(vxp::to_string(e.code())));
      PyErr_SetObject(vxp_error.ptr(), py::make_tuple(py::str(e.what()), code).ptr());
    }
  });

  m.def("grid_dims", [] { return vxp::VoxelGridConfig::standard().grid_dims(); },
        "Input voxel grid dimensions of the standard configuration.");

  m.def(
      "voxelize",
      [](const std::vector<std::array<double, 3>>& points, std::uint64_t seed) {
        const auto grid = vxp::voxelize(to_cloud(points), vxp::VoxelGridConfig::standard(), seed);
        return py::make_tuple(grid.coords(), grid.valid_counts());
      },
      py::arg("points"), py::arg("seed") = 0, "Returns (coords, valid_counts) of the non-empty voxels.");

  m.def(
      "project_point",
      [](std::array<double, 4> intrinsics, const std::array<std::array<double, 4>, 4>& extrinsic,
         const std::array<double, 3>& p, int width, int height) -> py::object {
        vxp::ProjectionModel proj;
        proj.fx_n = intrinsics[0];
        proj.fy_n = intrinsics[1];
        proj.cx_n = intrinsics[2];
        proj.cy_n = intrinsics[3];
        for (int r = 0; r < 4; ++r)
          for (int c = 0; c < 4; ++c) proj.extrinsic(r, c) = extrinsic[r][c];
        proj.validate();
        const auto px = vxp::project_point(proj, Eigen::Vector3d(p[0], p[1], p[2]), width, height);
        if (!px) return py::none();
        return py::make_tuple(px->u, px->v, px->depth);
      },
      py::arg("intrinsics"), py::arg("extrinsic"), py::arg("point"), py::arg("width"), py::arg("height"),
      "Continuous (u, v, depth) or None when culled.");

  m.def("smooth_l1", &vxp::smooth_l1_value, py::arg("x"), py::arg("beta") = 1.0, "Elementwise smooth-L1, summed.");
  m.def(
      "zero_triplet_expansion",
      [](int zero_count, int batch_size) { return vxp::zero_triplet_expansion(zero_count, batch_size, {}); },
      py::arg("zero_count"), py::arg("batch_size"));
  m.def("one_percent_k", &vxp::one_percent_k);

  m.def(
      "knn",
      [](const std::vector<std::vector<double>>& db, const std::vector<double>& query, std::size_t k,
         const std::string& metric) {
        std::vector<vxp::IndexEntry> entries;
        for (std::size_t i = 0; i < db.size(); ++i) entries.push_back({i, db[i], Eigen::Vector3d::Zero(), {}});
        const auto index = vxp::RetrievalIndex::build(std::move(entries), metric == "l1" ? vxp::Metric::L1 : vxp::Metric::L2);
        std::vector<std::pair<std::uint64_t, double>> out;
        for (const auto& n : vxp::query_knn(index, query, k)) out.emplace_back(n.id, n.distance);
        return out;
      },
      py::arg("database"), py::arg("query"), py::arg("k"), py::arg("metric") = "l2",
      "Exact k nearest neighbours as (row, distance) pairs.");

  m.def(
      "read_descriptors",
      [](const std::filesystem::path& path) {
        std::vector<std::pair<std::uint64_t, std::vector<double>>> out;
        for (auto& r : vxp::read_descriptors(path)) out.emplace_back(r.id, std::move(r.values));
        return out;
      },
      py::arg("path"));
  m.def(
      "write_descriptors",
      [](const std::filesystem::path& path, const std::vector<std::pair<std::uint64_t, std::vector<double>>>& recs,
         std::uint32_t dim) {
        std::vector<vxp::DescriptorRecord> records;
        for (const auto& [id, v] : recs) records.push_back({id, v});
        vxp::write_descriptors(path, records, dim);
      },
      py::arg("path"), py::arg("records"), py::arg("dim"));

  m.def("load_point_cloud_bin", [](const std::filesystem::path& p) { return from_cloud(vxp::load_point_cloud_bin(p)); });
  m.def("write_point_cloud_bin", [](const std::filesystem::path& p, const std::vector<std::array<double, 3>>& pts) {
    vxp::write_point_cloud_bin(p, to_cloud(pts));
  });

  m.def(
      "synthetic_cloud",
      [](std::uint64_t seed, std::uint64_t scene, int traversal, int points) {
        vxp::SyntheticSceneParams params;
        params.seed = seed;
        params.points_per_cloud = points;
        return from_cloud(vxp::generate_synthetic_scene(params, scene, traversal).cloud);
      },
      py::arg("seed"), py::arg("scene"), py::arg("traversal") = 0, py::arg("points") = 2048);

  m.def(
      "cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        const int code = vxp::cli_main(args, out, err);
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs the vxp tool in-process; returns (exit code, stdout, stderr).");
}
