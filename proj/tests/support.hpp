#pragma once

#include <doctest.h>

#include <Eigen/Core>

#include <atomic>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "vxp/error.hpp"

namespace test {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("vxp_" + tag + "_" + std::to_string(rd()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::vector<double> uniform(std::size_t n, double lo, double hi, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> out(n);
  for (auto& v : out) v = d(rng);
  return out;
}

}  // namespace test

/// Checks that `expr` throws vxp::Error with the given code.
#define CHECK_VXP_ERROR(expr, error_code)                                       \
  do {                                                                          \
    bool vxp_thrown_ = false;                                                   \
    try {                                                                       \
      (void)(expr);                                                             \
    } catch (const vxp::Error& vxp_e_) {                                        \
      vxp_thrown_ = true;                                                       \
      CHECK_MESSAGE(vxp_e_.code() == (error_code), std::string(vxp_e_.what()));            \
    }                                                                           \
    CHECK_MESSAGE(vxp_thrown_, "expected vxp::Error from " #expr);              \
  } while (0)
