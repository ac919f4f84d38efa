#include "adt/layers.hpp"

#include <cmath>

namespace adt {

LayerSpec LayerSpec::dense(std::int64_t in, std::int64_t out) {
  LayerSpec s;
  s.kind = LayerKind::Dense;
  s.in = in;
  s.out = out;
  return s;
}

LayerSpec LayerSpec::conv(std::int64_t in, std::int64_t out, std::int64_t k, std::int64_t stride,
                          std::int64_t padding) {
  LayerSpec s;
  s.kind = LayerKind::Conv;
  s.in = in;
  s.out = out;
  s.k = k;
  s.stride = stride;
  s.padding = padding;
  return s;
}

LayerSpec LayerSpec::deconv(std::int64_t in, std::int64_t out, std::int64_t k, std::int64_t stride,
                            std::int64_t padding, std::int64_t output_padding) {
  LayerSpec s;
  s.kind = LayerKind::Deconv;
  s.in = in;
  s.out = out;
  s.k = k;
  s.stride = stride;
  s.padding = padding;
  s.output_padding = output_padding;
  return s;
}

LayerSpec LayerSpec::batch_norm() {
  LayerSpec s;
  s.kind = LayerKind::BatchNorm;
  return s;
}

LayerSpec LayerSpec::leaky_relu(double slope) {
  LayerSpec s;
  s.kind = LayerKind::LeakyRelu;
  s.slope = slope;
  return s;
}

LayerSpec LayerSpec::sigmoid_out() {
  LayerSpec s;
  s.kind = LayerKind::SigmoidOut;
  return s;
}

LayerSpec LayerSpec::dropout(double prob) {
  LayerSpec s;
  s.kind = LayerKind::Dropout;
  s.prob = prob;
  return s;
}

LayerSpec LayerSpec::flatten() {
  LayerSpec s;
  s.kind = LayerKind::Flatten;
  return s;
}

namespace {

Tensor uniform_init(Shape shape, double bound, Rng& rng) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.values()) v = rng.uniform(-bound, bound);
  t.set_requires_grad(true);
  return t;
}

Tensor zeros_param(Shape shape) {
  Tensor t = Tensor::zeros(std::move(shape));
  t.set_requires_grad(true);
  return t;
}

class DenseLayer final : public Layer {
 public:
  DenseLayer(std::int64_t in, std::int64_t out, Rng& rng)
      : w_(uniform_init({in, out}, 1.0 / std::sqrt(static_cast<double>(in)), rng)),
        b_(zeros_param({out})) {}

  Tensor forward(Context& ctx, const Tensor& x) override {
    return add_bias(ctx.tape, matmul(ctx.tape, x, w_), b_);
  }
  std::vector<Tensor> params() override { return {w_, b_}; }
  void state(const std::string& prefix, std::vector<NamedArray>& out) override {
    out.push_back({prefix + ".W", w_.values()});
    out.push_back({prefix + ".b", b_.values()});
  }
  Shape out_shape(const Shape& in) const override {
    if (in.size() != 1 || in[0] != w_.dim(0))
      throw DimensionError("dense layer expects width " + std::to_string(w_.dim(0)) +
                           ", got " + shape_str(in));
    return {w_.dim(1)};
  }

 private:
  Tensor w_, b_;
};

class ConvLayer final : public Layer {
 public:
  ConvLayer(const LayerSpec& s, Rng& rng)
      : spec_(s),
        k_(uniform_init({s.out, s.in, s.k, s.k},
                        1.0 / std::sqrt(static_cast<double>(s.in * s.k * s.k)), rng)),
        b_(zeros_param({s.out})) {}

  Tensor forward(Context& ctx, const Tensor& x) override {
    return add_bias(ctx.tape, conv2d(ctx.tape, x, k_, spec_.stride, spec_.padding), b_);
  }
  std::vector<Tensor> params() override { return {k_, b_}; }
  void state(const std::string& prefix, std::vector<NamedArray>& out) override {
    out.push_back({prefix + ".K", k_.values()});
    out.push_back({prefix + ".b", b_.values()});
  }
  Shape out_shape(const Shape& in) const override {
    if (in.size() != 3 || in[0] != spec_.in)
      throw DimensionError("conv layer expects [C,H,W] with C=" + std::to_string(spec_.in) +
                           ", got " + shape_str(in));
    std::int64_t oh = (in[1] + 2 * spec_.padding - spec_.k) / spec_.stride + 1;
    std::int64_t ow = (in[2] + 2 * spec_.padding - spec_.k) / spec_.stride + 1;
    if (in[1] + 2 * spec_.padding < spec_.k || in[2] + 2 * spec_.padding < spec_.k || oh < 1 ||
        ow < 1)
      throw DimensionError("conv layer output extent < 1 for input " + shape_str(in));
    return {spec_.out, oh, ow};
  }

 private:
  LayerSpec spec_;
  Tensor k_, b_;
};

class DeconvLayer final : public Layer {
 public:
  DeconvLayer(const LayerSpec& s, Rng& rng)
      : spec_(s),
        k_(uniform_init({s.in, s.out, s.k, s.k},
                        1.0 / std::sqrt(static_cast<double>(s.in * s.k * s.k)), rng)),
        b_(zeros_param({s.out})) {}

  Tensor forward(Context& ctx, const Tensor& x) override {
    return add_bias(ctx.tape,
                    deconv2d(ctx.tape, x, k_, spec_.stride, spec_.padding, spec_.output_padding),
                    b_);
  }
  std::vector<Tensor> params() override { return {k_, b_}; }
  void state(const std::string& prefix, std::vector<NamedArray>& out) override {
    out.push_back({prefix + ".K", k_.values()});
    out.push_back({prefix + ".b", b_.values()});
  }
  Shape out_shape(const Shape& in) const override {
    if (in.size() != 3 || in[0] != spec_.in)
      throw DimensionError("deconv layer expects [C,H,W] with C=" + std::to_string(spec_.in) +
                           ", got " + shape_str(in));
    std::int64_t oh = (in[1] - 1) * spec_.stride - 2 * spec_.padding + spec_.k + spec_.output_padding;
    std::int64_t ow = (in[2] - 1) * spec_.stride - 2 * spec_.padding + spec_.k + spec_.output_padding;
    if (oh < 1 || ow < 1)
      throw DimensionError("deconv layer output extent < 1 for input " + shape_str(in));
    return {spec_.out, oh, ow};
  }

 private:
  LayerSpec spec_;
  Tensor k_, b_;
};

class BatchNormLayer final : public Layer {
 public:
  explicit BatchNormLayer(std::int64_t channels)
      : gamma_(zeros_param({channels})), beta_(zeros_param({channels})), stats_(channels) {
    for (double& v : gamma_.values()) v = 1.0;
  }

  Tensor forward(Context& ctx, const Tensor& x) override {
    return batch_norm(ctx.tape, x, gamma_, beta_, stats_, ctx.train);
  }
  std::vector<Tensor> params() override { return {gamma_, beta_}; }
  void state(const std::string& prefix, std::vector<NamedArray>& out) override {
    out.push_back({prefix + ".gamma", gamma_.values()});
    out.push_back({prefix + ".beta", beta_.values()});
    out.push_back({prefix + ".running_mean", stats_.mean});
    out.push_back({prefix + ".running_var", stats_.var});
  }
  Shape out_shape(const Shape& in) const override { return in; }

 private:
  Tensor gamma_, beta_;
  BnStats stats_;
};

class LeakyReluLayer final : public Layer {
 public:
  explicit LeakyReluLayer(double slope) : slope_(slope) {}
  Tensor forward(Context& ctx, const Tensor& x) override {
    return leaky_relu(ctx.tape, x, slope_);
  }
  Shape out_shape(const Shape& in) const override { return in; }

 private:
  double slope_;
};

class SigmoidLayer final : public Layer {
 public:
  Tensor forward(Context& ctx, const Tensor& x) override { return sigmoid(ctx.tape, x); }
  Shape out_shape(const Shape& in) const override { return in; }
};

class DropoutLayer final : public Layer {
 public:
  explicit DropoutLayer(double p) : p_(p) {}
  Tensor forward(Context& ctx, const Tensor& x) override {
    if (ctx.train && p_ > 0.0 && ctx.rng == nullptr)
      throw ConfigError("dropout in train mode needs a context RNG");
    static Rng unused(0);
    return dropout(ctx.tape, x, p_, ctx.train, ctx.rng ? *ctx.rng : unused);
  }
  Shape out_shape(const Shape& in) const override { return in; }

 private:
  double p_;
};

class FlattenLayer final : public Layer {
 public:
  Tensor forward(Context& ctx, const Tensor& x) override { return flatten(ctx.tape, x); }
  Shape out_shape(const Shape& in) const override {
    std::int64_t n = 1;
    for (std::int64_t d : in) n *= d;
    return {n};
  }
};

}  // namespace

Tensor Stack::forward(Context& ctx, const Tensor& x) const {
  Tensor cur = x;
  for (const auto& layer : layers_) cur = layer->forward(ctx, cur);
  return cur;
}

std::vector<Tensor> Stack::params() const {
  std::vector<Tensor> out;
  for (const auto& layer : layers_)
    for (Tensor& t : layer->params()) out.push_back(t);
  return out;
}

void Stack::state(const std::string& prefix, std::vector<NamedArray>& out) const {
  for (std::size_t i = 0; i < layers_.size(); ++i)
    layers_[i]->state(prefix + "." + std::to_string(i), out);
}

Shape Stack::out_shape(const Shape& in) const {
  Shape cur = in;
  for (const auto& layer : layers_) cur = layer->out_shape(cur);
  return cur;
}

Stack build_stack(const std::vector<LayerSpec>& specs, const Shape& input_shape, Rng& init_rng) {
  Stack stack;
  Shape cur = input_shape;
  for (const LayerSpec& s : specs) {
    std::unique_ptr<Layer> layer;
    switch (s.kind) {
      case LayerKind::Dense:
        layer = std::make_unique<DenseLayer>(s.in, s.out, init_rng);
        break;
      case LayerKind::Conv:
        layer = std::make_unique<ConvLayer>(s, init_rng);
        break;
      case LayerKind::Deconv:
        layer = std::make_unique<DeconvLayer>(s, init_rng);
        break;
      case LayerKind::BatchNorm: {
        if (cur.empty()) throw DimensionError("batch_norm needs a shaped input");
        layer = std::make_unique<BatchNormLayer>(cur[0]);
        break;
      }
      case LayerKind::LeakyRelu:
        layer = std::make_unique<LeakyReluLayer>(s.slope);
        break;
      case LayerKind::SigmoidOut:
        layer = std::make_unique<SigmoidLayer>();
        break;
      case LayerKind::Dropout:
        layer = std::make_unique<DropoutLayer>(s.prob);
        break;
      case LayerKind::Flatten:
        layer = std::make_unique<FlattenLayer>();
        break;
    }
    cur = layer->out_shape(cur);  // validates composition
    stack.layers_.push_back(std::move(layer));
    stack.spec_.push_back(s);
  }
  return stack;
}

}  // namespace adt
