#pragma once

#include <random>

#include "vxp/tensor.hpp"

namespace vxp {

/// Learnable leaf with i.i.d. N(0, stddev^2) entries.
ad::Tensor random_normal(ad::Shape shape, double stddev, std::mt19937_64& rng);
/// Learnable leaf filled with `value`.
ad::Tensor filled(ad::Shape shape, double value);

}  // namespace vxp
