#pragma once

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "adt/tensor.hpp"

namespace adt::testing {

/// Central finite-difference gradient oracle. `f` rebuilds the forward graph
/// on the given tape and returns a scalar loss; it must be a pure function
/// of the params' current values (fix any RNG inside the closure). Each
/// param's reverse-mode gradient is compared against
/// (f(p+eps) - f(p-eps)) / (2 eps), elementwise, with relative error
/// measured against max(1, |fd|, |ad|).
inline void check_gradients(const std::function<Tensor(Tape&)>& f,
                            const std::vector<Tensor>& params, double tol = 1e-4,
                            double eps = 1e-5) {
  for (const Tensor& p : params) {
    Tensor q = p;  // handle copy; leaf grads persist across tapes otherwise
    q.zero_grad();
  }
  Tape tape;
  Tensor loss = f(tape);
  tape.backward(loss);
  std::vector<std::vector<double>> ad;
  for (const Tensor& p : params) {
    auto g = p.grad();
    ad.emplace_back(g.begin(), g.end());
  }

  Tape off(false);
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor p = params[pi];  // handle copy: shares storage with the original
    for (std::int64_t i = 0; i < p.numel(); ++i) {
      double saved = p.values()[i];
      p.values()[i] = saved + eps;
      double up = f(off).item();
      p.values()[i] = saved - eps;
      double down = f(off).item();
      p.values()[i] = saved;
      double fd = (up - down) / (2.0 * eps);
      double got = ad[pi][static_cast<std::size_t>(i)];
      double denom = std::max({1.0, std::abs(fd), std::abs(got)});
      INFO("param ", pi, " index ", i, ": fd=", fd, " autodiff=", got);
      CHECK_LT(std::abs(fd - got) / denom, tol);
    }
  }
}

}  // namespace adt::testing
