#include "adt/tensor.hpp"

#include <cmath>
#include <sstream>

namespace adt {

std::int64_t shape_numel(const Shape& shape) {
  std::int64_t n = 1;
  for (std::int64_t d : shape) {
    if (d <= 0) throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
    n *= d;
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

Tensor Tensor::zeros(Shape shape) {
  auto impl = std::make_shared<Impl>();
  std::int64_t n = shape_numel(shape);
  impl->shape = std::move(shape);
  impl->values.assign(static_cast<std::size_t>(n), 0.0);
  return Tensor(std::move(impl));
}

Tensor Tensor::full(Shape shape, double value) {
  Tensor t = zeros(std::move(shape));
  for (double& v : t.values()) v = value;
  return t;
}

Tensor Tensor::from(Shape shape, std::vector<double> values) {
  std::int64_t n = shape_numel(shape);
  if (n != static_cast<std::int64_t>(values.size()))
    throw DimensionError("value count " + std::to_string(values.size()) +
                         " does not match shape " + shape_str(shape));
  auto impl = std::make_shared<Impl>();
  impl->shape = std::move(shape);
  impl->values = std::move(values);
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value) { return from({1}, {value}); }

double Tensor::item() const {
  if (numel() != 1) throw DimensionError("item() requires a scalar tensor, got " + shape_str(shape()));
  return impl_->values[0];
}

std::span<double> Tensor::grad() {
  if (impl_->grad.empty()) impl_->grad.assign(impl_->values.size(), 0.0);
  return impl_->grad;
}

std::span<const double> Tensor::grad() const {
  if (impl_->grad.empty()) impl_->grad.assign(impl_->values.size(), 0.0);
  return impl_->grad;
}

void Tensor::zero_grad() {
  if (!impl_->grad.empty()) impl_->grad.assign(impl_->values.size(), 0.0);
}

void Tape::record(const Tensor& output, std::function<void()> backward_fn) {
  output.impl_->is_leaf = false;
  output.impl_->requires_grad = true;
  records_.push_back(Record{output.impl_, std::move(backward_fn)});
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1)
    throw DimensionError("backward() requires a scalar loss");
  if (loss.is_leaf())
    throw ConfigError("backward() loss is not on the tape");
  // Non-leaf grads are scratch: reset them so repeated backward calls
  // accumulate only into leaves.
  for (Record& r : records_)
    if (!r.output->grad.empty()) r.output->grad.assign(r.output->values.size(), 0.0);
  loss.impl_->grad.assign(1, 1.0);
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
    if (it->output->grad.empty()) continue;  // no downstream path reached it
    it->fn();
  }
}

void accumulate_grad(Tensor& t, std::span<const double> contribution) {
  if (!t.requires_grad()) return;
  auto g = t.grad();
  if (g.size() != contribution.size())
    throw DimensionError("gradient contribution shape mismatch");
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += contribution[i];
}

void check_finite(const Tensor& t, const char* what) {
  for (double v : t.values())
    if (!std::isfinite(v)) throw NumericError(std::string(what) + ": non-finite value");
}

}  // namespace adt
