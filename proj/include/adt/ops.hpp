#pragma once

#include "adt/rng.hpp"
#include "adt/tensor.hpp"

namespace adt {

/// Running batch-norm statistics, one entry per channel. Updated as a side
/// effect of train-mode forwards; read by eval-mode forwards.
struct BnStats {
  std::vector<double> mean;
  std::vector<double> var;

  explicit BnStats(std::int64_t channels = 0)
      : mean(static_cast<std::size_t>(channels), 0.0),
        var(static_cast<std::size_t>(channels), 1.0) {}
};

// ---- elementwise -----------------------------------------------------------

Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor scale(Tape& tape, const Tensor& a, double c);

/// max(x, slope*x); the subgradient at exactly 0 is taken as slope.
Tensor leaky_relu(Tape& tape, const Tensor& x, double slope);
Tensor relu(Tape& tape, const Tensor& x);

/// Numerically stable logistic function.
Tensor sigmoid(Tape& tape, const Tensor& x);

Tensor log(Tape& tape, const Tensor& x);

/// Clamp to [lo, hi]; gradient passes through where lo <= x <= hi.
Tensor clamp(Tape& tape, const Tensor& x, double lo, double hi);

// ---- linear algebra --------------------------------------------------------

/// [m x k] . [k x n] -> [m x n]
Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);

/// Adds b to every row (x: [N,F], b: [F]) or every channel plane
/// (x: [N,C,H,W], b: [C]).
Tensor add_bias(Tape& tape, const Tensor& x, const Tensor& b);

// ---- convolution -----------------------------------------------------------

/// input [N,C,H,W], kernel [Co,C,k,k]; output spatial extent
/// floor((H + 2*padding - k)/stride) + 1, which must be >= 1.
Tensor conv2d(Tape& tape, const Tensor& input, const Tensor& kernel,
              std::int64_t stride, std::int64_t padding);

/// Transposed convolution: input [N,C1,H,W], kernel [C1,C2,k,k]; output
/// extent (H-1)*stride - 2*padding + k + output_padding. Its forward map is
/// the backward-input map of conv2d with the same geometry, so
/// <conv2d(x,K), y> == <x, deconv2d(y,K)> whenever the extents line up.
Tensor deconv2d(Tape& tape, const Tensor& input, const Tensor& kernel,
                std::int64_t stride, std::int64_t padding,
                std::int64_t output_padding);

// ---- shape -----------------------------------------------------------------

Tensor reshape(Tape& tape, const Tensor& x, Shape new_shape);

/// [N, ...] -> [N, prod(...)]
Tensor flatten(Tape& tape, const Tensor& x);

// ---- regularization / normalization ---------------------------------------

/// Train mode normalizes per channel with batch statistics (batch >= 2) and
/// updates `stats`; eval mode normalizes with `stats`. x is [N,F] (per
/// feature) or [N,C,H,W] (per channel over N,H,W).
Tensor batch_norm(Tape& tape, const Tensor& x, const Tensor& gamma,
                  const Tensor& beta, BnStats& stats, bool train,
                  double momentum = 0.1, double eps = 1e-5);

/// Train mode zeroes each element with probability p and scales survivors by
/// 1/(1-p), mask drawn from `rng`; eval mode is the identity.
Tensor dropout(Tape& tape, const Tensor& x, double p, bool train, Rng& rng);

// ---- losses / reductions ---------------------------------------------------

/// Per-sample mean over features of (recon - input)^2; [N,...] -> [N].
Tensor mse_per_sample(Tape& tape, const Tensor& recon, const Tensor& input);

Tensor mean_all(Tape& tape, const Tensor& x);
Tensor sum_all(Tape& tape, const Tensor& x);

// ---- gradient reversal -----------------------------------------------------

/// Identity in the forward pass; multiplies the incoming gradient by
/// -coefficient in the backward pass.
Tensor grl(Tape& tape, const Tensor& x, double coefficient);

}  // namespace adt
