#include "adt/adam.hpp"

#include <cmath>

namespace adt {

Adam::Adam(double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  if (lr <= 0.0) throw ConfigError("Adam: lr must be positive");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
    throw ConfigError("Adam: betas must be in [0,1)");
}

void Adam::step(const std::vector<Tensor>& params) {
  ++t_;
  double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (const Tensor& p : params) {
    Tensor param = p;
    auto it = states_.find(param.id());
    if (it == states_.end()) {
      AdamState st;
      st.m.assign(static_cast<std::size_t>(param.numel()), 0.0);
      st.v.assign(static_cast<std::size_t>(param.numel()), 0.0);
      it = states_.emplace(param.id(), std::move(st)).first;
    }
    AdamState& st = it->second;
    auto g = param.grad();
    auto w = param.values();
    for (std::size_t i = 0; i < w.size(); ++i) {
      st.m[i] = beta1_ * st.m[i] + (1.0 - beta1_) * g[i];
      st.v[i] = beta2_ * st.v[i] + (1.0 - beta2_) * g[i] * g[i];
      double mhat = st.m[i] / bc1;
      double vhat = st.v[i] / bc2;
      w[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

void Adam::zero_grad(const std::vector<Tensor>& params) {
  for (const Tensor& p : params) {
    Tensor param = p;
    param.zero_grad();
  }
}

}  // namespace adt
