#pragma once

#include <memory>
#include <string>
#include <vector>

#include "adt/ops.hpp"
#include "adt/rng.hpp"
#include "adt/tensor.hpp"

namespace adt {

enum class LayerKind {
  Dense,
  Conv,
  Deconv,
  BatchNorm,
  LeakyRelu,
  SigmoidOut,
  Dropout,
  Flatten,
};

/// Declarative layer description. Stacks are specified as LayerSpec lists and
/// instantiated by build_stack, which propagates shapes and rejects
/// geometries that do not compose.
struct LayerSpec {
  LayerKind kind;
  std::int64_t in = 0;   // input width / channels (dense, conv, deconv)
  std::int64_t out = 0;  // output width / channels
  std::int64_t k = 0;
  std::int64_t stride = 1;
  std::int64_t padding = 0;
  std::int64_t output_padding = 0;
  double slope = 0.2;  // leaky_relu
  double prob = 0.5;   // dropout

  static LayerSpec dense(std::int64_t in, std::int64_t out);
  static LayerSpec conv(std::int64_t in, std::int64_t out, std::int64_t k, std::int64_t stride,
                        std::int64_t padding);
  static LayerSpec deconv(std::int64_t in, std::int64_t out, std::int64_t k, std::int64_t stride,
                          std::int64_t padding, std::int64_t output_padding);
  static LayerSpec batch_norm();
  static LayerSpec leaky_relu(double slope);
  static LayerSpec sigmoid_out();
  static LayerSpec dropout(double prob);
  static LayerSpec flatten();
};

/// Forward-pass context: the tape to record on, train/eval mode, and the
/// run's RNG (needed by dropout in train mode).
struct Context {
  Tape& tape;
  bool train = false;
  Rng* rng = nullptr;
};

struct NamedArray {
  std::string name;
  std::span<double> data;
};

class Layer {
 public:
  virtual ~Layer() = default;
  virtual Tensor forward(Context& ctx, const Tensor& x) = 0;
  virtual std::vector<Tensor> params() { return {}; }
  /// All persistent arrays (parameters plus running statistics), named for
  /// checkpointing. Order is deterministic.
  virtual void state(const std::string&, std::vector<NamedArray>&) {}
  virtual Shape out_shape(const Shape& in) const = 0;
};

/// Ordered layer pipeline with its own parameters.
class Stack {
 public:
  Stack() = default;

  Tensor forward(Context& ctx, const Tensor& x) const;
  std::vector<Tensor> params() const;
  void state(const std::string& prefix, std::vector<NamedArray>& out) const;
  /// Sample shape (no batch dim) this stack produces for the given input.
  Shape out_shape(const Shape& in) const;
  const std::vector<LayerSpec>& spec() const { return spec_; }
  std::size_t size() const { return layers_.size(); }

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
  std::vector<LayerSpec> spec_;

  friend Stack build_stack(const std::vector<LayerSpec>& specs, const Shape& input_shape,
                           Rng& init_rng);
};

/// Instantiate a stack, initializing parameters from `init_rng` (fan-in
/// scaled uniform weights, zero biases, gamma 1 / beta 0). `input_shape` is
/// the per-sample shape; composition is validated against it.
Stack build_stack(const std::vector<LayerSpec>& specs, const Shape& input_shape, Rng& init_rng);

}  // namespace adt
