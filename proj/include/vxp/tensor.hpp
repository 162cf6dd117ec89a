#pragma once

// Dense 64-bit tensors with reverse-mode automatic differentiation.
//
// Graphs are built define-by-run: every primitive whose inputs require
// gradients records a backward closure and references to its inputs.
// `backward()` orders the reachable nodes into a tape (reverse creation
// order, which is a valid reverse topological order because inputs are
// always created before the ops that consume them) and replays it.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace vxp::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct Node;

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t numel() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;

  std::span<const double> values() const;
  /// Direct write access, for initialization and optimizer updates on leaves.
  std::span<double> mutable_values();
  double item() const;

  bool requires_grad() const;
  void set_requires_grad(bool flag);
  bool has_grad() const;
  /// Gradient buffer; empty span when no gradient has been accumulated.
  std::span<const double> grad() const;
  void zero_grad();

  /// A fresh leaf holding a copy of the values (no graph history).
  Tensor detach() const;

  Node* node() const noexcept { return node_.get(); }
  const std::shared_ptr<Node>& node_ptr() const noexcept { return node_; }

 private:
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}
  friend Tensor make_result(Shape, std::vector<double>, std::vector<Tensor>,
                            std::function<void(Node&)>);
  std::shared_ptr<Node> node_;
};

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::uint64_t id = 0;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  std::vector<double>& grad_buffer();  // allocates zeros on first use
};

/// Builds an op result. When any input requires a gradient, the result keeps
/// the inputs alive and registers `backward` (which reads `self.grad` and
/// accumulates into the parents' buffers).
Tensor make_result(Shape shape, std::vector<double> value, std::vector<Tensor> inputs,
                   std::function<void(Node&)> backward);

/// Ordered record of the ops reachable from a loss, in topological order.
class Tape {
 public:
  static Tape record(const Tensor& loss);

  const std::vector<Node*>& nodes() const noexcept { return nodes_; }
  std::size_t op_count() const;
  /// True when every op's inputs appear earlier in the order.
  bool is_topological() const;

 private:
  std::vector<Node*> nodes_;
};

/// Populates `grad` of every requires-grad tensor reachable from `loss`.
/// Leaf gradients accumulate across calls; interior buffers are reset.
void backward(const Tensor& loss);

// ---- primitives -----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor relu(const Tensor& a);
Tensor abs(const Tensor& a);
/// Elementwise a^e. Zero bases yield value 0 and gradient 0.
Tensor pow(const Tensor& a, double exponent);
/// Elementwise a^p for a learnable scalar exponent p.
Tensor pow(const Tensor& a, const Tensor& exponent);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// Full L2 norm, returned as a scalar.
Tensor l2_norm(const Tensor& a);

// Row-structured ops on rank-2 tensors [rows x cols].
Tensor add_row_bias(const Tensor& x, const Tensor& bias);
Tensor mean_rows(const Tensor& x);  // [n x d] -> [d]
Tensor sum_cols(const Tensor& x);   // [n x d] -> [n]
Tensor norm_rows(const Tensor& x);  // [n x d] -> [n], L2 per row
Tensor gather_rows(const Tensor& x, std::vector<std::size_t> index);
Tensor scale_rows(const Tensor& x, std::vector<double> weights);
Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor stack_rows(const std::vector<Tensor>& rows);
Tensor gather(const Tensor& x, std::vector<std::size_t> flat_index);
Tensor reshape(const Tensor& x, Shape shape);
Tensor smooth_l1_rows(const Tensor& x, double beta);  // [n x d] -> [n]
Tensor smooth_l1(const Tensor& x, double beta);       // summed scalar

struct MaxResult {
  Tensor values;
  std::vector<std::size_t> argmax;  // source row per output element
};

/// Column-wise max over consecutive row segments. `segment_offsets` has
/// (segments + 1) entries; segment s covers rows [off[s], off[s+1]).
/// Ties resolve to the lowest row index.
MaxResult segment_max_rows(const Tensor& x, std::vector<std::size_t> segment_offsets);
/// Column-wise max over all rows.
MaxResult max_rows(const Tensor& x);

/// Gather-GEMM-scatter convolution: for each kernel offset k and each pair
/// (in, out) of `pairs[k]`, out_row += in_row * W[k]. Serves both the sparse
/// 3D convolution and the dense strided image convolution.
struct Rulebook {
  std::size_t n_in = 0;
  std::size_t n_out = 0;
  std::vector<std::vector<std::pair<std::uint32_t, std::uint32_t>>> pairs;
};
Tensor rulebook_conv(const Tensor& input, const Tensor& weight,
                     std::shared_ptr<const Rulebook> rulebook);

// ---- kink monitor ---------------------------------------------------------
// Non-smooth ops record their distance to the nearest kink (ReLU/abs input
// magnitude, max top-2 gap, norm magnitude). Gradient checks use it to
// reject evaluation points that straddle a kink.

void reset_kink_margin();
double kink_margin();

}  // namespace vxp::ad
