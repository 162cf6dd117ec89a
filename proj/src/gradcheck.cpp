#include "vxp/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "vxp/error.hpp"

namespace vxp::ad {

namespace {

double eval_scalar(const std::function<Tensor()>& f) {
  const Tensor y = f();
  if (y.numel() != 1) throw Error(ErrorCode::NotScalar, "gradient check needs a scalar function");
  const double v = y.item();
  if (!std::isfinite(v)) throw Error(ErrorCode::NonFinite, "function value is NaN/Inf near x");
  return v;
}

}  // namespace

GradCheckResult check_gradient_detail(const std::function<Tensor()>& f, Tensor param,
                                      double step, std::size_t max_checks) {
  if (!(step > 0.0)) throw Error(ErrorCode::InvalidConfig, "finite-difference step must be > 0");
  const bool had_flag = param.requires_grad();
  param.set_requires_grad(true);
  param.zero_grad();

  reset_kink_margin();
  const Tensor y = f();
  if (y.numel() != 1) throw Error(ErrorCode::NotScalar, "gradient check needs a scalar function");
  if (!std::isfinite(y.item())) throw Error(ErrorCode::NonFinite, "function value is NaN/Inf at x");
  backward(y);
  std::vector<double> analytic(param.numel(), 0.0);
  if (param.has_grad()) std::copy(param.grad().begin(), param.grad().end(), analytic.begin());

  const std::size_t n = param.numel();
  const std::size_t stride = (max_checks == 0 || max_checks >= n) ? 1 : n / max_checks;
  auto values = param.mutable_values();
  GradCheckResult result;
  for (std::size_t i = 0; i < n; i += stride) {
    const double saved = values[i];
    values[i] = saved + step;
    const double plus = eval_scalar(f);
    values[i] = saved - step;
    const double minus = eval_scalar(f);
    values[i] = saved;
    const double fd = (plus - minus) / (2.0 * step);
    const double err = std::fabs(analytic[i] - fd) / std::max(1.0, std::fabs(fd));
    result.max_relative_error = std::max(result.max_relative_error, err);
    ++result.checked;
  }
  result.kink_margin = kink_margin();
  param.zero_grad();
  param.set_requires_grad(had_flag);
  return result;
}

double check_gradient(const std::function<Tensor(const Tensor&)>& f, Tensor x, double step) {
  return check_gradient_detail([&] { return f(x); }, x, step).max_relative_error;
}

}  // namespace vxp::ad
