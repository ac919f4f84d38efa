#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "adt/errors.hpp"

namespace adt {

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major tensor with an attached gradient buffer. Handle type:
/// copies share the same storage, which is what lets the tape refer back to
/// op inputs. Gradients are allocated lazily on first accumulation.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor from(Shape shape, std::vector<double> values);
  static Tensor scalar(double value);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::int64_t numel() const { return static_cast<std::int64_t>(impl_->values.size()); }
  std::int64_t dim(std::size_t i) const { return impl_->shape.at(i); }
  std::size_t ndim() const { return impl_->shape.size(); }

  std::span<double> values() { return impl_->values; }
  std::span<const double> values() const { return impl_->values; }
  double item() const;

  Tensor& set_requires_grad(bool v) {
    impl_->requires_grad = v;
    return *this;
  }
  bool requires_grad() const { return impl_->requires_grad; }

  /// True until this tensor is produced as the output of a recorded op.
  /// Leaf gradients persist across backward calls; non-leaf gradients are
  /// scratch space reset by each backward pass.
  bool is_leaf() const { return impl_->is_leaf; }

  bool has_grad() const { return !impl_->grad.empty(); }
  /// Gradient buffer, allocated (zero-filled) on first access.
  std::span<double> grad();
  std::span<const double> grad() const;
  void zero_grad();

  /// Identity of the underlying storage; used for parameter bookkeeping.
  const void* id() const { return impl_.get(); }

  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  struct Impl {
    Shape shape;
    std::vector<double> values;
    std::vector<double> grad;  // empty until first accumulation
    bool requires_grad = false;
    bool is_leaf = true;
  };

  std::shared_ptr<Impl> impl_;

  explicit Tensor(std::shared_ptr<Impl> impl) : impl_(std::move(impl)) {}

  friend class Tape;
};

/// Ordered record of executed ops. backward() walks the records once, in
/// strict reverse execution order, accumulating gradients. Construct with
/// enabled=false for inference-only forwards (nothing is recorded).
class Tape {
 public:
  explicit Tape(bool enabled = true) : enabled_(enabled) {}

  bool enabled() const { return enabled_; }
  std::size_t size() const { return records_.size(); }
  void clear() { records_.clear(); }

  /// Record an op: `output` was produced from `inputs` and `backward_fn`
  /// propagates output.grad into the inputs' grads. Only called when at
  /// least one input requires grad.
  void record(const Tensor& output, std::function<void()> backward_fn);

  /// Seed d(loss)/d(loss) = 1 and run all records in reverse. Repeated calls
  /// accumulate into leaf gradients (two calls double them); non-leaf
  /// gradients are reset at the start of every call.
  void backward(const Tensor& loss);

 private:
  struct Record {
    std::shared_ptr<Tensor::Impl> output;
    std::function<void()> fn;
  };

  bool enabled_ = true;
  std::vector<Record> records_;
};

/// True when the op consuming these inputs should be recorded on the tape.
inline bool needs_record(const Tape& tape, std::initializer_list<const Tensor*> inputs) {
  if (!tape.enabled()) return false;
  for (const Tensor* t : inputs)
    if ((*t).requires_grad()) return true;
  return false;
}

void accumulate_grad(Tensor& t, std::span<const double> contribution);

void check_finite(const Tensor& t, const char* what);

}  // namespace adt
