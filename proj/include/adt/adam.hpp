#pragma once

#include <unordered_map>
#include <vector>

#include "adt/tensor.hpp"

namespace adt {

/// Per-parameter Adam moments plus the shared step counter.
struct AdamState {
  std::vector<double> m;  // first moment
  std::vector<double> v;  // second moment
};

/// Adam with bias correction. One state entry per parameter tensor, keyed by
/// storage identity; step() applies one update to every listed parameter and
/// advances the counter.
class Adam {
 public:
  explicit Adam(double lr = 0.01, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8);

  void step(const std::vector<Tensor>& params);
  static void zero_grad(const std::vector<Tensor>& params);

  double lr() const { return lr_; }
  std::int64_t step_count() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
  std::unordered_map<const void*, AdamState> states_;
};

}  // namespace adt
