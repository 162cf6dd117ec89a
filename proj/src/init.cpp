#include "vxp/init.hpp"

namespace vxp {

ad::Tensor random_normal(ad::Shape shape, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<double> v(ad::numel(shape));
  for (double& x : v) x = dist(rng);
  return ad::Tensor::from(std::move(shape), std::move(v), true);
}

ad::Tensor filled(ad::Shape shape, double value) {
  const std::size_t n = ad::numel(shape);
  return ad::Tensor::from(std::move(shape), std::vector<double>(n, value), true);
}

}  // namespace vxp
