#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace stas::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct TensorImpl;
using NodePtr = std::shared_ptr<TensorImpl>;

// Storage and graph node behind a Tensor handle. Gradient buffers are empty
// until something is accumulated into them.
struct TensorImpl {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<NodePtr> parents;
  // Reads `grad` of the node it belongs to and accumulates into parents.
  std::function<void(TensorImpl&)> backward_fn;

  bool is_leaf() const { return parents.empty(); }
  std::vector<double>& grad_buffer();
};

// Handle to a dense row-major array of doubles. Copies share storage; the
// graph is built implicitly by the functions in ops.hpp.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value);
  // Trainable leaf with populated gradient tracking.
  static Tensor parameter(Shape shape, std::vector<double> values);

  // Used by ops to create a graph node.
  static Tensor make_node(Shape shape, std::vector<double> values, const char* op,
                          std::vector<NodePtr> parents,
                          std::function<void(TensorImpl&)> backward_fn);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;
  std::size_t dim(std::size_t axis) const;
  // Row/column counts of a matrix; a vector counts as a single row.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> values() const;
  std::span<double> mutable_values();
  double item() const;
  double at(std::size_t i) const { return values()[i]; }
  double at(std::size_t r, std::size_t c) const { return values()[r * cols() + c]; }

  bool requires_grad() const;
  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  const char* op() const;
  bool is_leaf() const;

  // Same values, no graph history.
  Tensor detach() const;

  const NodePtr& node() const { return impl_; }

 private:
  explicit Tensor(NodePtr impl) : impl_(std::move(impl)) {}
  NodePtr impl_;
};

// While alive on a thread, ops on that thread record no graph history.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

bool grad_enabled();

// Reverse topological view of everything reachable from a scalar root.
class Graph {
 public:
  explicit Graph(const Tensor& root);

  // Parents precede children; the root is last.
  const std::vector<NodePtr>& nodes() const { return order_; }
  const Tensor& root() const { return root_; }

  // Seeds d(root)=1 and propagates. Leaf gradients accumulate across calls,
  // interior gradients are recomputed from scratch each time.
  void backward();

 private:
  Tensor root_;
  std::vector<NodePtr> order_;
};

void backward(const Tensor& loss);

namespace debug {
// Scales the upstream gradient seen by every node with this op tag. Only
// the gradient-check harness uses this, to prove that a broken backward is
// detected and attributed to the right op.
void inject_backward_fault(const std::string& op, double factor = 1.5);
void clear_backward_faults();
}  // namespace debug

}  // namespace stas::ad
