#include "vxp/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "vxp/error.hpp"

namespace vxp::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

std::atomic<std::uint64_t> g_next_id{1};
thread_local double t_kink_margin = std::numeric_limits<double>::infinity();

void note_kink(double distance) {
  if (distance < t_kink_margin) t_kink_margin = distance;
}

[[noreturn]] void shape_error(const char* op, const std::string& detail) {
  throw Error(ErrorCode::ShapeMismatch, std::string(op) + ": " + detail);
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    shape_error(op, shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

void require_rank2(const char* op, const Tensor& x) {
  if (x.rank() != 2) shape_error(op, "expected rank 2, got " + shape_str(x.shape()));
}

std::vector<double>& parent_grad(Node& self, std::size_t i) {
  return self.parents[i]->grad_buffer();
}

bool needs(const Node& self, std::size_t i) { return self.parents[i]->requires_grad; }

void check_finite([[maybe_unused]] const char* op, [[maybe_unused]] const std::vector<double>& v) {
#ifndef NDEBUG
  for (double x : v)
    if (!std::isfinite(x)) throw Error(ErrorCode::NonFinite, std::string(op) + " produced NaN/Inf");
#endif
}

}  // namespace

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

std::vector<double>& Node::grad_buffer() {
  if (grad.empty()) grad.assign(value.size(), 0.0);
  return grad;
}

// ---- Tensor ---------------------------------------------------------------

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const std::size_t n = ad::numel(shape);
  return from(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  if (ad::numel(shape) != values.size())
    shape_error("Tensor::from", shape_str(shape) + " holds " + std::to_string(ad::numel(shape)) +
                                    " values, got " + std::to_string(values.size()));
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  node->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from({1}, {value}, requires_grad);
}

const Shape& Tensor::shape() const { return node_->shape; }
std::size_t Tensor::numel() const { return node_->value.size(); }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= rank()) shape_error("Tensor::dim", "axis out of range for " + shape_str(shape()));
  return shape()[axis];
}

std::span<const double> Tensor::values() const { return node_->value; }
std::span<double> Tensor::mutable_values() { return node_->value; }

double Tensor::item() const {
  if (numel() != 1) throw Error(ErrorCode::NotScalar, "item() on " + shape_str(shape()));
  return node_->value[0];
}

bool Tensor::requires_grad() const { return node_->requires_grad; }
void Tensor::set_requires_grad(bool flag) { node_->requires_grad = flag; }
bool Tensor::has_grad() const { return !node_->grad.empty(); }
std::span<const double> Tensor::grad() const { return node_->grad; }
void Tensor::zero_grad() { node_->grad.clear(); }

Tensor Tensor::detach() const { return from(shape(), node_->value, false); }

Tensor make_result(Shape shape, std::vector<double> value, std::vector<Tensor> inputs,
                   std::function<void(Node&)> backward) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
  const bool any = std::any_of(inputs.begin(), inputs.end(),
                               [](const Tensor& t) { return t.requires_grad(); });
  if (any) {
    node->requires_grad = true;
    node->parents.reserve(inputs.size());
    for (const auto& t : inputs) node->parents.push_back(t.node_ptr());
    node->backward_fn = std::move(backward);
  }
  return Tensor(std::move(node));
}

// ---- Tape / backward ------------------------------------------------------

Tape Tape::record(const Tensor& loss) {
  Tape tape;
  if (!loss.requires_grad()) return tape;
  std::unordered_set<Node*> seen;
  std::vector<Node*> stack{loss.node()};
  seen.insert(loss.node());
  while (!stack.empty()) {
    Node* n = stack.back();
    stack.pop_back();
    tape.nodes_.push_back(n);
    for (const auto& p : n->parents) {
      if (p->requires_grad && seen.insert(p.get()).second) stack.push_back(p.get());
    }
  }
  std::sort(tape.nodes_.begin(), tape.nodes_.end(),
            [](const Node* a, const Node* b) { return a->id < b->id; });
  return tape;
}

std::size_t Tape::op_count() const {
  return static_cast<std::size_t>(
      std::count_if(nodes_.begin(), nodes_.end(), [](const Node* n) { return !n->parents.empty(); }));
}

bool Tape::is_topological() const {
  std::unordered_set<const Node*> before;
  for (const Node* n : nodes_) {
    for (const auto& p : n->parents)
      if (p->requires_grad && !before.count(p.get())) return false;
    before.insert(n);
  }
  return true;
}

void backward(const Tensor& loss) {
  if (loss.numel() != 1)
    throw Error(ErrorCode::NotScalar, "backward() on " + shape_str(loss.shape()));
  const Tape tape = Tape::record(loss);
  for (Node* n : tape.nodes())
    if (!n->parents.empty()) n->grad.assign(n->value.size(), 0.0);
  loss.node()->grad_buffer()[0] += 1.0;
  const auto& order = tape.nodes();
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn) n->backward_fn(*n);
  }
}

// ---- elementwise ----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + b.values()[i];
  check_finite("add", out);
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (!needs(self, k)) continue;
      auto& g = parent_grad(self, k);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] - b.values()[i];
  check_finite("sub", out);
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    if (needs(self, 0)) {
      auto& g = parent_grad(self, 0);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (needs(self, 1)) {
      auto& g = parent_grad(self, 1);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * b.values()[i];
  check_finite("mul", out);
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    const auto& av = self.parents[0]->value;
    const auto& bv = self.parents[1]->value;
    if (needs(self, 0)) {
      auto& g = parent_grad(self, 0);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * bv[i];
    }
    if (needs(self, 1)) {
      auto& g = parent_grad(self, 1);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * av[i];
    }
  });
}

Tensor scale(const Tensor& a, double s) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * s;
  check_finite("scale", out);
  return make_result(a.shape(), std::move(out), {a}, [s](Node& self) {
    auto& g = parent_grad(self, 0);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * s;
  });
}

Tensor add_scalar(const Tensor& a, double s) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + s;
  check_finite("add_scalar", out);
  return make_result(a.shape(), std::move(out), {a}, [](Node& self) {
    auto& g = parent_grad(self, 0);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor relu(const Tensor& a) {
  std::vector<double> out(a.numel());
  double margin = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x = a.values()[i];
    out[i] = x > 0.0 ? x : 0.0;
    margin = std::min(margin, std::fabs(x));
  }
  note_kink(margin);
  return make_result(a.shape(), std::move(out), {a}, [](Node& self) {
    const auto& av = self.parents[0]->value;
    auto& g = parent_grad(self, 0);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (av[i] > 0.0) g[i] += self.grad[i];
  });
}

Tensor abs(const Tensor& a) {
  std::vector<double> out(a.numel());
  double margin = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::fabs(a.values()[i]);
    margin = std::min(margin, out[i]);
  }
  note_kink(margin);
  return make_result(a.shape(), std::move(out), {a}, [](Node& self) {
    const auto& av = self.parents[0]->value;
    auto& g = parent_grad(self, 0);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (av[i] > 0.0) g[i] += self.grad[i];
      else if (av[i] < 0.0) g[i] -= self.grad[i];
    }
  });
}

Tensor pow(const Tensor& a, double exponent) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x = a.values()[i];
    out[i] = x == 0.0 ? 0.0 : std::pow(x, exponent);
  }
  check_finite("pow", out);
  return make_result(a.shape(), std::move(out), {a}, [exponent](Node& self) {
    const auto& av = self.parents[0]->value;
    auto& g = parent_grad(self, 0);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (av[i] != 0.0) g[i] += self.grad[i] * exponent * std::pow(av[i], exponent - 1.0);
  });
}

Tensor pow(const Tensor& a, const Tensor& exponent) {
  if (exponent.numel() != 1) shape_error("pow", "exponent must be a scalar tensor");
  const double p = exponent.item();
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x = a.values()[i];
    out[i] = x == 0.0 ? 0.0 : std::pow(x, p);
  }
  check_finite("pow", out);
  return make_result(a.shape(), std::move(out), {a, exponent}, [](Node& self) {
    const auto& av = self.parents[0]->value;
    const double pv = self.parents[1]->value[0];
    if (needs(self, 0)) {
      auto& g = parent_grad(self, 0);
      for (std::size_t i = 0; i < g.size(); ++i)
        if (av[i] != 0.0) g[i] += self.grad[i] * pv * std::pow(av[i], pv - 1.0);
    }
    if (needs(self, 1)) {
      double acc = 0.0;
      for (std::size_t i = 0; i < av.size(); ++i)
        if (av[i] > 0.0) acc += self.grad[i] * self.value[i] * std::log(av[i]);
      parent_grad(self, 1)[0] += acc;
    }
  });
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double x : a.values()) s += x;
  return make_result({1}, {s}, {a}, [](Node& self) {
    auto& g = parent_grad(self, 0);
    for (double& gi : g) gi += self.grad[0];
  });
}

Tensor mean(const Tensor& a) {
  if (a.numel() == 0) shape_error("mean", "empty tensor");
  const double n = static_cast<double>(a.numel());
  double s = 0.0;
  for (double x : a.values()) s += x;
  return make_result({1}, {s / n}, {a}, [n](Node& self) {
    auto& g = parent_grad(self, 0);
    for (double& gi : g) gi += self.grad[0] / n;
  });
}

Tensor l2_norm(const Tensor& a) {
  double s = 0.0;
  for (double x : a.values()) s += x * x;
  const double nrm = std::sqrt(s);
  note_kink(nrm);
  return make_result({1}, {nrm}, {a}, [](Node& self) {
    const double nv = self.value[0];
    if (nv == 0.0) return;
    const auto& av = self.parents[0]->value;
    auto& g = parent_grad(self, 0);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[0] * av[i] / nv;
  });
}

// ---- matrix ops -----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2("matmul", a);
  require_rank2("matmul", b);
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) shape_error("matmul", shape_str(a.shape()) + " * " + shape_str(b.shape()));
  std::vector<double> out(m * n);
  MapMat(out.data(), m, n).noalias() =
      CMapMat(a.values().data(), m, k) * CMapMat(b.values().data(), k, n);
  check_finite("matmul", out);
  return make_result({m, n}, std::move(out), {a, b}, [m, k, n](Node& self) {
    CMapMat go(self.grad.data(), m, n);
    if (needs(self, 0)) {
      MapMat(parent_grad(self, 0).data(), m, k).noalias() +=
          go * CMapMat(self.parents[1]->value.data(), k, n).transpose();
    }
    if (needs(self, 1)) {
      MapMat(parent_grad(self, 1).data(), k, n).noalias() +=
          CMapMat(self.parents[0]->value.data(), m, k).transpose() * go;
    }
  });
}

Tensor add_row_bias(const Tensor& x, const Tensor& bias) {
  require_rank2("add_row_bias", x);
  const std::size_t n = x.dim(0), d = x.dim(1);
  if (bias.numel() != d) shape_error("add_row_bias", "bias has " + std::to_string(bias.numel()) +
                                                         " entries for " + std::to_string(d) + " columns");
  std::vector<double> out(x.values().begin(), x.values().end());
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c) out[r * d + c] += bias.values()[c];
  check_finite("add_row_bias", out);
  return make_result(x.shape(), std::move(out), {x, bias}, [n, d](Node& self) {
    if (needs(self, 0)) {
      auto& g = parent_grad(self, 0);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (needs(self, 1)) {
      auto& g = parent_grad(self, 1);
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < d; ++c) g[c] += self.grad[r * d + c];
    }
  });
}

Tensor mean_rows(const Tensor& x) {
  require_rank2("mean_rows", x);
  const std::size_t n = x.dim(0), d = x.dim(1);
  if (n == 0) shape_error("mean_rows", "no rows");
  std::vector<double> out(d, 0.0);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c) out[c] += x.values()[r * d + c];
  for (double& v : out) v /= static_cast<double>(n);
  return make_result({d}, std::move(out), {x}, [n, d](Node& self) {
    auto& g = parent_grad(self, 0);
    const double inv = 1.0 / static_cast<double>(n);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < d; ++c) g[r * d + c] += self.grad[c] * inv;
  });
}

Tensor sum_cols(const Tensor& x) {
  require_rank2("sum_cols", x);
  const std::size_t n = x.dim(0), d = x.dim(1);
  std::vector<double> out(n, 0.0);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c) out[r] += x.values()[r * d + c];
  return make_result({n}, std::move(out), {x}, [n, d](Node& self) {
    auto& g = parent_grad(self, 0);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < d; ++c) g[r * d + c] += self.grad[r];
  });
}

Tensor norm_rows(const Tensor& x) {
  require_rank2("norm_rows", x);
  const std::size_t n = x.dim(0), d = x.dim(1);
  std::vector<double> out(n, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < d; ++c) s += x.values()[r * d + c] * x.values()[r * d + c];
    out[r] = std::sqrt(s);
    note_kink(out[r]);
  }
  return make_result({n}, std::move(out), {x}, [n, d](Node& self) {
    const auto& xv = self.parents[0]->value;
    auto& g = parent_grad(self, 0);
    for (std::size_t r = 0; r < n; ++r) {
      if (self.value[r] == 0.0) continue;
      const double f = self.grad[r] / self.value[r];
      for (std::size_t c = 0; c < d; ++c) g[r * d + c] += f * xv[r * d + c];
    }
  });
}

Tensor gather_rows(const Tensor& x, std::vector<std::size_t> index) {
  require_rank2("gather_rows", x);
  const std::size_t n = x.dim(0), d = x.dim(1), m = index.size();
  std::vector<double> out(m * d);
  for (std::size_t i = 0; i < m; ++i) {
    if (index[i] >= n) shape_error("gather_rows", "row " + std::to_string(index[i]) + " out of " + std::to_string(n));
    std::copy_n(x.values().data() + index[i] * d, d, out.data() + i * d);
  }
  return make_result({m, d}, std::move(out), {x}, [idx = std::move(index), d](Node& self) {
    auto& g = parent_grad(self, 0);
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t c = 0; c < d; ++c) g[idx[i] * d + c] += self.grad[i * d + c];
  });
}

Tensor scale_rows(const Tensor& x, std::vector<double> weights) {
  require_rank2("scale_rows", x);
  const std::size_t n = x.dim(0), d = x.dim(1);
  if (weights.size() != n) shape_error("scale_rows", "weight count != rows");
  std::vector<double> out(n * d);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c) out[r * d + c] = x.values()[r * d + c] * weights[r];
  check_finite("scale_rows", out);
  return make_result(x.shape(), std::move(out), {x}, [w = std::move(weights), d](Node& self) {
    auto& g = parent_grad(self, 0);
    for (std::size_t r = 0; r < w.size(); ++r)
      for (std::size_t c = 0; c < d; ++c) g[r * d + c] += self.grad[r * d + c] * w[r];
  });
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  require_rank2("concat_cols", a);
  require_rank2("concat_cols", b);
  const std::size_t n = a.dim(0), da = a.dim(1), db = b.dim(1);
  if (b.dim(0) != n) shape_error("concat_cols", "row counts differ");
  const std::size_t d = da + db;
  std::vector<double> out(n * d);
  for (std::size_t r = 0; r < n; ++r) {
    std::copy_n(a.values().data() + r * da, da, out.data() + r * d);
    std::copy_n(b.values().data() + r * db, db, out.data() + r * d + da);
  }
  return make_result({n, d}, std::move(out), {a, b}, [n, da, db, d](Node& self) {
    if (needs(self, 0)) {
      auto& g = parent_grad(self, 0);
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < da; ++c) g[r * da + c] += self.grad[r * d + c];
    }
    if (needs(self, 1)) {
      auto& g = parent_grad(self, 1);
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < db; ++c) g[r * db + c] += self.grad[r * d + da + c];
    }
  });
}

Tensor stack_rows(const std::vector<Tensor>& rows) {
  if (rows.empty()) shape_error("stack_rows", "no rows");
  const std::size_t d = rows.front().numel();
  std::vector<double> out;
  out.reserve(rows.size() * d);
  for (const auto& r : rows) {
    if (r.numel() != d) shape_error("stack_rows", "row sizes differ");
    out.insert(out.end(), r.values().begin(), r.values().end());
  }
  return make_result({rows.size(), d}, std::move(out), rows, [d](Node& self) {
    for (std::size_t k = 0; k < self.parents.size(); ++k) {
      if (!needs(self, k)) continue;
      auto& g = parent_grad(self, k);
      for (std::size_t c = 0; c < d; ++c) g[c] += self.grad[k * d + c];
    }
  });
}

Tensor gather(const Tensor& x, std::vector<std::size_t> flat_index) {
  const std::size_t m = flat_index.size();
  std::vector<double> out(m);
  for (std::size_t i = 0; i < m; ++i) {
    if (flat_index[i] >= x.numel()) shape_error("gather", "index out of range");
    out[i] = x.values()[flat_index[i]];
  }
  return make_result({m}, std::move(out), {x}, [idx = std::move(flat_index)](Node& self) {
    auto& g = parent_grad(self, 0);
    for (std::size_t i = 0; i < idx.size(); ++i) g[idx[i]] += self.grad[i];
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (ad::numel(shape) != x.numel())
    shape_error("reshape", shape_str(x.shape()) + " -> " + shape_str(shape));
  std::vector<double> out(x.values().begin(), x.values().end());
  return make_result(std::move(shape), std::move(out), {x}, [](Node& self) {
    auto& g = parent_grad(self, 0);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor smooth_l1_rows(const Tensor& x, double beta) {
  if (!(beta > 0.0)) throw Error(ErrorCode::NonPositiveBeta, "smooth_l1 beta must be > 0");
  const std::size_t n = x.rank() == 2 ? x.dim(0) : 1;
  const std::size_t d = x.numel() / std::max<std::size_t>(n, 1);
  std::vector<double> out(n, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < d; ++c) {
      const double v = x.values()[r * d + c];
      const double a = std::fabs(v);
      out[r] += a < beta ? 0.5 * v * v / beta : a - 0.5 * beta;
    }
  }
  return make_result({n}, std::move(out), {x}, [n, d, beta](Node& self) {
    const auto& xv = self.parents[0]->value;
    auto& g = parent_grad(self, 0);
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t c = 0; c < d; ++c) {
        const double v = xv[r * d + c];
        const double dv = std::fabs(v) < beta ? v / beta : (v > 0.0 ? 1.0 : -1.0);
        g[r * d + c] += self.grad[r] * dv;
      }
    }
  });
}

Tensor smooth_l1(const Tensor& x, double beta) {
  return sum(smooth_l1_rows(x.rank() == 2 ? x : reshape(x, {1, x.numel()}), beta));
}

MaxResult segment_max_rows(const Tensor& x, std::vector<std::size_t> segment_offsets) {
  require_rank2("segment_max_rows", x);
  const std::size_t n = x.dim(0), d = x.dim(1);
  if (segment_offsets.size() < 2 || segment_offsets.front() != 0 || segment_offsets.back() != n)
    shape_error("segment_max_rows", "offsets must span [0, rows]");
  const std::size_t s_count = segment_offsets.size() - 1;
  std::vector<double> out(s_count * d);
  std::vector<std::size_t> arg(s_count * d);
  const auto& xv = x.values();
  for (std::size_t s = 0; s < s_count; ++s) {
    const std::size_t lo = segment_offsets[s], hi = segment_offsets[s + 1];
    if (hi <= lo) shape_error("segment_max_rows", "empty segment " + std::to_string(s));
    for (std::size_t c = 0; c < d; ++c) {
      std::size_t best = lo;
      double top = xv[lo * d + c];
      double second = -std::numeric_limits<double>::infinity();
      for (std::size_t r = lo + 1; r < hi; ++r) {
        const double v = xv[r * d + c];
        if (v > top) {
          second = top;
          top = v;
          best = r;
        } else if (v > second) {
          second = v;
        }
      }
      // Ties among exact zeros (inactive ReLUs) stay tied under perturbation.
      if (hi - lo > 1 && !(top == 0.0 && second == 0.0)) note_kink(top - second);
      out[s * d + c] = top;
      arg[s * d + c] = best;
    }
  }
  Tensor values = make_result({s_count, d}, std::move(out), {x}, [arg, d](Node& self) {
    auto& g = parent_grad(self, 0);
    for (std::size_t i = 0; i < arg.size(); ++i) g[arg[i] * d + (i % d)] += self.grad[i];
  });
  return {std::move(values), std::move(arg)};
}

MaxResult max_rows(const Tensor& x) {
  require_rank2("max_rows", x);
  MaxResult r = segment_max_rows(x, {0, x.dim(0)});
  r.values = reshape(r.values, {x.dim(1)});
  return r;
}

Tensor rulebook_conv(const Tensor& input, const Tensor& weight,
                     std::shared_ptr<const Rulebook> rulebook) {
  require_rank2("rulebook_conv", input);
  if (weight.rank() != 3) shape_error("rulebook_conv", "weight must be [K x Cin x Cout]");
  const std::size_t kvol = weight.dim(0), cin = weight.dim(1), cout = weight.dim(2);
  if (input.dim(1) != cin)
    throw Error(ErrorCode::ChannelMismatch, "input has " + std::to_string(input.dim(1)) +
                                                " channels, kernel expects " + std::to_string(cin));
  if (rulebook->pairs.size() != kvol || rulebook->n_in != input.dim(0))
    shape_error("rulebook_conv", "rulebook does not match input/kernel");
  const std::size_t n_out = rulebook->n_out;
  std::vector<double> out(n_out * cout, 0.0);
  MapMat out_m(out.data(), n_out, cout);
  CMapMat in_m(input.values().data(), input.dim(0), cin);
  RowMat gathered, prod;
  for (std::size_t k = 0; k < kvol; ++k) {
    const auto& pairs = rulebook->pairs[k];
    if (pairs.empty()) continue;
    gathered.resize(static_cast<Eigen::Index>(pairs.size()), static_cast<Eigen::Index>(cin));
    for (std::size_t i = 0; i < pairs.size(); ++i) gathered.row(i) = in_m.row(pairs[i].first);
    prod.noalias() = gathered * CMapMat(weight.values().data() + k * cin * cout, cin, cout);
    for (std::size_t i = 0; i < pairs.size(); ++i) out_m.row(pairs[i].second) += prod.row(i);
  }
  check_finite("rulebook_conv", out);
  return make_result({n_out, cout}, std::move(out), {input, weight},
                     [rb = std::move(rulebook), kvol, cin, cout](Node& self) {
    const std::size_t n_in = rb->n_in;
    CMapMat go(self.grad.data(), rb->n_out, cout);
    CMapMat in_v(self.parents[0]->value.data(), n_in, cin);
    const double* w = self.parents[1]->value.data();
    double* gin = needs(self, 0) ? parent_grad(self, 0).data() : nullptr;
    double* gw = needs(self, 1) ? parent_grad(self, 1).data() : nullptr;
    RowMat g_out, g_in, x_in;
    for (std::size_t k = 0; k < kvol; ++k) {
      const auto& pairs = rb->pairs[k];
      if (pairs.empty()) continue;
      const auto m = static_cast<Eigen::Index>(pairs.size());
      g_out.resize(m, static_cast<Eigen::Index>(cout));
      for (std::size_t i = 0; i < pairs.size(); ++i) g_out.row(i) = go.row(pairs[i].second);
      if (gw) {
        x_in.resize(m, static_cast<Eigen::Index>(cin));
        for (std::size_t i = 0; i < pairs.size(); ++i) x_in.row(i) = in_v.row(pairs[i].first);
        MapMat(gw + k * cin * cout, cin, cout).noalias() += x_in.transpose() * g_out;
      }
      if (gin) {
        g_in.noalias() = g_out * CMapMat(w + k * cin * cout, cin, cout).transpose();
        MapMat gin_m(gin, n_in, cin);
        for (std::size_t i = 0; i < pairs.size(); ++i) gin_m.row(pairs[i].first) += g_in.row(i);
      }
    }
  });
}

void reset_kink_margin() { t_kink_margin = std::numeric_limits<double>::infinity(); }
double kink_margin() { return t_kink_margin; }

}  // namespace vxp::ad
