#include "stas/ad/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <map>
#include <mutex>
#include <unordered_set>
#include <utility>

#include <fmt/format.h>

#include "stas/errors.hpp"

namespace stas::ad {

namespace {

thread_local int no_grad_depth = 0;

std::mutex fault_mutex;
std::map<std::string, double, std::less<>> fault_table;
std::atomic<bool> faults_active{false};

double fault_factor(const char* op) {
  if (!faults_active.load(std::memory_order_relaxed)) return 1.0;
  std::lock_guard lock(fault_mutex);
  auto it = fault_table.find(std::string_view(op));
  return it == fault_table.end() ? 1.0 : it->second;
}

const TensorImpl& checked(const NodePtr& impl) {
  if (!impl) throw ContractError("use of an undefined tensor");
  return *impl;
}

}  // namespace

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

std::vector<double>& TensorImpl::grad_buffer() {
  if (grad.empty()) grad.assign(value.size(), 0.0);
  return grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const auto n = ad::numel(shape);
  return from(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape.empty()) shape = {1};
  for (auto d : shape) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_str(shape));
  }
  if (ad::numel(shape) != values.size()) {
    throw DimensionError(fmt::format("shape {} needs {} values, got {}", shape_str(shape),
                                     ad::numel(shape), values.size()));
  }
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->value = std::move(values);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value) { return from({1}, {value}); }

Tensor Tensor::parameter(Shape shape, std::vector<double> values) {
  return from(std::move(shape), std::move(values), true);
}

Tensor Tensor::make_node(Shape shape, std::vector<double> values, const char* op,
                         std::vector<NodePtr> parents,
                         std::function<void(TensorImpl&)> backward_fn) {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->value = std::move(values);
  impl->op = op;
  if (grad_enabled()) {
    const bool any = std::any_of(parents.begin(), parents.end(),
                                 [](const NodePtr& p) { return p->requires_grad; });
    if (any) {
      impl->requires_grad = true;
      impl->parents = std::move(parents);
      impl->backward_fn = std::move(backward_fn);
    }
  }
  return Tensor(std::move(impl));
}

const Shape& Tensor::shape() const { return checked(impl_).shape; }

std::size_t Tensor::numel() const { return checked(impl_).value.size(); }

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) {
    throw IndexError(fmt::format("axis {} out of range for shape {}", axis, shape_str(s)));
  }
  return s[axis];
}

std::size_t Tensor::rows() const {
  const auto& s = shape();
  return s.size() == 1 ? 1 : s[0];
}

std::size_t Tensor::cols() const { return shape().back(); }

std::span<const double> Tensor::values() const { return checked(impl_).value; }

std::span<double> Tensor::mutable_values() {
  checked(impl_);
  return impl_->value;
}

double Tensor::item() const {
  if (numel() != 1) {
    throw ContractError("item() on a tensor of shape " + shape_str(shape()));
  }
  return impl_->value[0];
}

bool Tensor::requires_grad() const { return checked(impl_).requires_grad; }

bool Tensor::has_grad() const { return !checked(impl_).grad.empty(); }

std::span<const double> Tensor::grad() const { return checked(impl_).grad; }

std::span<double> Tensor::mutable_grad() {
  checked(impl_);
  return impl_->grad_buffer();
}

void Tensor::zero_grad() {
  checked(impl_);
  std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

const char* Tensor::op() const { return checked(impl_).op; }

bool Tensor::is_leaf() const { return checked(impl_).is_leaf(); }

Tensor Tensor::detach() const {
  const auto& impl = checked(impl_);
  return from(impl.shape, impl.value, false);
}

NoGradGuard::NoGradGuard() { ++no_grad_depth; }
NoGradGuard::~NoGradGuard() { --no_grad_depth; }

bool grad_enabled() { return no_grad_depth == 0; }

Graph::Graph(const Tensor& root) : root_(root) {
  if (!root.defined()) throw ContractError("graph root is undefined");
  if (!root.node()->requires_grad) return;

  // Iterative post-order DFS; parents are emitted before their children.
  std::unordered_set<const TensorImpl*> visited{root.node().get()};
  std::vector<std::pair<NodePtr, std::size_t>> stack;
  stack.emplace_back(root.node(), 0);
  while (!stack.empty()) {
    auto& [node, next_parent] = stack.back();
    if (next_parent < node->parents.size()) {
      const NodePtr& parent = node->parents[next_parent++];
      if (parent->requires_grad && visited.insert(parent.get()).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      order_.push_back(std::move(node));
      stack.pop_back();
    }
  }
}

void Graph::backward() {
  if (root_.numel() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " + shape_str(root_.shape()));
  }
  if (order_.empty()) return;  // nothing requires grad

  for (auto& node : order_) {
    if (!node->is_leaf()) node->grad.assign(node->value.size(), 0.0);
  }
  auto& root = *order_.back();
  root.grad_buffer()[0] += 1.0;

  for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
    TensorImpl& node = **it;
    if (node.is_leaf() || !node.backward_fn) continue;
    const double factor = fault_factor(node.op);
    if (factor != 1.0) {
      for (auto& g : node.grad) g *= factor;
    }
    node.backward_fn(node);
    // Interior gradients are scratch space.
    std::vector<double>().swap(node.grad);
  }
}

void backward(const Tensor& loss) { Graph(loss).backward(); }

namespace debug {

void inject_backward_fault(const std::string& op, double factor) {
  std::lock_guard lock(fault_mutex);
  fault_table[op] = factor;
  faults_active = true;
}

void clear_backward_faults() {
  std::lock_guard lock(fault_mutex);
  fault_table.clear();
  faults_active = false;
}

}  // namespace debug

}  // namespace stas::ad
