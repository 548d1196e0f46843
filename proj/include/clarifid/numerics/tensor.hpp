#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace clarifid::numerics {

using Shape = std::vector<std::size_t>;

/// Cache-line aligned allocator. Eigen peels unaligned heads off vectorized
/// loops, so the summation order of a kernel would otherwise depend on where
/// the heap happened to place a buffer.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }

  template <typename U>
  friend bool operator==(const AlignedAllocator&, const AlignedAllocator<U>&) noexcept {
    return true;
  }
};

using Buffer = std::vector<double, AlignedAllocator<double>>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

namespace detail {

struct TensorImpl;

// Accumulates d(loss)/d(input) into each input's grad given the output's grad.
using BackwardFn = std::function<void(TensorImpl& out)>;

struct Node {
  std::vector<std::shared_ptr<TensorImpl>> inputs;
  BackwardFn backward;
  const char* op = "";
};

struct TensorImpl {
  Shape shape;
  Buffer data;
  Buffer grad;  // empty until a backward pass reaches this tensor
  bool requires_grad = false;
  std::shared_ptr<Node> node;  // null for leaves and for results built without grad
};

}  // namespace detail

/// Dense row-major float64 array participating in reverse-mode differentiation.
///
/// A Tensor is a handle: copies share storage and graph position. Use clone()
/// for an independent copy and detach() for a graph-free view of the values.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const;

  std::span<const double> data() const;
  std::span<double> mutable_data();
  std::span<const double> grad() const;
  bool has_grad() const;
  void zero_grad();

  bool requires_grad() const;
  void set_requires_grad(bool flag);

  /// Value of a single-element tensor.
  double item() const;
  double at(std::size_t i) const;
  double at(std::size_t row, std::size_t col) const;

  /// Same values, no graph history, no grad requirement.
  Tensor detach() const;
  /// Deep copy of values; keeps the requires_grad flag but no graph history.
  Tensor clone() const;

  const std::shared_ptr<detail::TensorImpl>& impl() const { return impl_; }
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}

 private:
  std::shared_ptr<detail::TensorImpl> impl_;
};

/// True when ops record gradient history on the calling thread.
bool grad_enabled();

/// Disables history recording on this thread for the guard's lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Builds the result of a primitive. When history is enabled and some input
/// requires grad, the result records `backward` against `inputs`.
Tensor make_result(Shape shape, Buffer values, std::initializer_list<Tensor> inputs,
                   detail::BackwardFn backward, const char* op);
Tensor make_result(Shape shape, Buffer values, const std::vector<Tensor>& inputs,
                   detail::BackwardFn backward, const char* op);

/// Ordered record of the primitive applications reachable from a root,
/// inputs before outputs.
struct ComputationTape {
  std::vector<std::shared_ptr<detail::TensorImpl>> order;
};

ComputationTape record_tape(const Tensor& root);

/// Zeroes every grad on the tape, seeds the root with 1 and runs the recorded
/// gradient rules in reverse order.
void replay(const ComputationTape& tape);

/// Populates grads of every requires_grad tensor reachable from a scalar loss.
void backward(const Tensor& loss);

}  // namespace clarifid::numerics
