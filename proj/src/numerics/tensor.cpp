#include "clarifid/numerics/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

#include "clarifid/errors.hpp"

namespace clarifid::numerics {

namespace {
thread_local bool g_grad_enabled = true;

std::shared_ptr<detail::TensorImpl> new_impl(Shape shape, Buffer values,
                                             bool requires_grad) {
  for (auto d : shape) {
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_string(shape));
  }
  if (shape_size(shape) != values.size()) {
    throw ShapeError("shape " + shape_string(shape) + " does not match " +
                     std::to_string(values.size()) + " values");
  }
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(values);
  impl->requires_grad = requires_grad;
  return impl;
}
}  // namespace

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const auto n = shape_size(shape);
  return Tensor(new_impl(std::move(shape), Buffer(n, 0.0), requires_grad));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const auto n = shape_size(shape);
  return Tensor(new_impl(std::move(shape), Buffer(n, value), requires_grad));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  return Tensor(new_impl(std::move(shape), Buffer(values.begin(), values.end()), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(new_impl({1}, {value}, requires_grad));
}

const Shape& Tensor::shape() const { return impl_->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= impl_->shape.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " + shape_string(shape()));
  }
  return impl_->shape[axis];
}

std::size_t Tensor::size() const { return impl_->data.size(); }

std::span<const double> Tensor::data() const { return impl_->data; }
std::span<double> Tensor::mutable_data() { return impl_->data; }
std::span<const double> Tensor::grad() const { return impl_->grad; }
bool Tensor::has_grad() const { return !impl_->grad.empty(); }

void Tensor::zero_grad() {
  if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

bool Tensor::requires_grad() const { return impl_->requires_grad; }
void Tensor::set_requires_grad(bool flag) { impl_->requires_grad = flag; }

double Tensor::item() const {
  if (size() != 1) throw RankError("item() needs a single-element tensor, got " + shape_string(shape()));
  return impl_->data[0];
}

double Tensor::at(std::size_t i) const { return impl_->data.at(i); }

double Tensor::at(std::size_t row, std::size_t col) const {
  if (rank() != 2) throw RankError("at(row, col) needs a rank-2 tensor");
  return impl_->data.at(row * impl_->shape[1] + col);
}

Tensor Tensor::detach() const { return Tensor(new_impl(impl_->shape, impl_->data, false)); }

Tensor Tensor::clone() const {
  return Tensor(new_impl(impl_->shape, impl_->data, impl_->requires_grad));
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Tensor make_result(Shape shape, Buffer values, const std::vector<Tensor>& inputs,
                   detail::BackwardFn backward, const char* op) {
  auto impl = new_impl(std::move(shape), std::move(values), false);
  if (!g_grad_enabled) return Tensor(std::move(impl));
  const bool any = std::any_of(inputs.begin(), inputs.end(),
                               [](const Tensor& t) { return t.requires_grad(); });
  if (!any) return Tensor(std::move(impl));
  auto node = std::make_shared<detail::Node>();
  node->inputs.reserve(inputs.size());
  for (const auto& t : inputs) node->inputs.push_back(t.impl());
  node->backward = std::move(backward);
  node->op = op;
  impl->requires_grad = true;
  impl->node = std::move(node);
  return Tensor(std::move(impl));
}

Tensor make_result(Shape shape, Buffer values, std::initializer_list<Tensor> inputs,
                   detail::BackwardFn backward, const char* op) {
  return make_result(std::move(shape), std::move(values), std::vector<Tensor>(inputs),
                     std::move(backward), op);
}

ComputationTape record_tape(const Tensor& root) {
  ComputationTape tape;
  if (!root.requires_grad()) return tape;
  std::unordered_set<const detail::TensorImpl*> visited;
  // Iterative post-order DFS: (tensor, next input index).
  std::vector<std::pair<detail::TensorImpl*, std::size_t>> stack;
  stack.emplace_back(root.impl().get(), 0);
  visited.insert(root.impl().get());
  while (!stack.empty()) {
    auto& [impl, next] = stack.back();
    const auto* node = impl->node.get();
    if (node && next < node->inputs.size()) {
      const auto& child = node->inputs[next++];
      if (child->requires_grad && visited.insert(child.get()).second) {
        stack.emplace_back(child.get(), 0);
      }
      continue;
    }
    // Aliasing pointer: the root owns the whole graph, so sharing its
    // ownership keeps every recorded tensor alive for the tape's lifetime.
    tape.order.emplace_back(root.impl(), impl);
    stack.pop_back();
  }
  return tape;
}

void replay(const ComputationTape& tape) {
  if (tape.order.empty()) return;
  for (const auto& impl : tape.order) impl->grad.assign(impl->data.size(), 0.0);
  auto& root = *tape.order.back();
  std::fill(root.grad.begin(), root.grad.end(), 1.0);
  for (auto it = tape.order.rbegin(); it != tape.order.rend(); ++it) {
    auto& impl = **it;
    if (impl.node) impl.node->backward(impl);
  }
}

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw RankError("backward needs a scalar loss, got " +
                    (loss.defined() ? shape_string(loss.shape()) : std::string("undefined")));
  }
  if (!loss.requires_grad()) {
    throw RankError("backward on a loss that is not connected to any requires_grad tensor");
  }
  replay(record_tape(loss));
}

}  // namespace clarifid::numerics
