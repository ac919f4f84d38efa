#pragma once

#include <string>
#include <utility>
#include <vector>

#include "adt/layers.hpp"

namespace adt {

enum class Arch { Mlp, Conv };

Arch arch_from_string(const std::string& s);
std::string arch_to_string(Arch arch);

/// Architecture + hyperparameters needed to rebuild a model skeleton.
/// grl_coefficient carries the adversarial loss weight: the domain
/// classifier is trained on the plain objective, and the reversal layer
/// scales (and negates) only the gradient flowing back into the encoder.
struct ModelConfig {
  Arch arch = Arch::Mlp;
  Shape input_shape;  // per-sample: {D} for mlp, {C,H,W} for conv
  double leaky_slope = 0.2;
  double dropout_p = 0.5;
  double grl_coefficient = 1.0;
};

/// Encoder F, decoder D, and domain classifier C with their parameters.
/// Owned by one training run at a time.
struct ModelBundle {
  ModelConfig config;
  Stack encoder;
  Stack decoder;
  Stack classifier;
  Shape feature_shape;         // per-sample encoder output shape
  std::int64_t feature_width;  // flattened feature size (classifier input)

  std::vector<Tensor> ae_params() const;          // encoder + decoder
  std::vector<Tensor> classifier_params() const;  // classifier only
  std::vector<Tensor> all_params() const;

  /// Every persistent array (parameters + BN running stats), in a
  /// deterministic order with F./D./C. name prefixes.
  std::vector<NamedArray> state();
};

std::vector<LayerSpec> encoder_spec(Arch arch, const Shape& input_shape, double slope);
/// Mirrors the encoder back to `input_shape`; for the conv arch the
/// transposed-conv output paddings are solved from the encoder's extent
/// chain (DimensionError when no valid padding exists).
std::vector<LayerSpec> decoder_spec(Arch arch, const Shape& input_shape, double slope);
std::vector<LayerSpec> classifier_spec(std::int64_t feature_width, double dropout_p);

/// Build all three stacks, drawing initial parameters from `init_rng`
/// (encoder first, then decoder, then classifier).
ModelBundle build_model(const ModelConfig& config, Rng& init_rng);

/// x: [N, ...input_shape]. Returns (features, reconstruction);
/// reconstruction has x's shape.
std::pair<Tensor, Tensor> forward_autoencode(ModelBundle& bundle, Context& ctx, const Tensor& x);

/// Flatten -> gradient reversal (bundle's coefficient) -> classifier.
/// Output [N, 1] in (0,1): probability the sample is from the target
/// domain (source = 0, target = 1).
Tensor forward_domain(ModelBundle& bundle, Context& ctx, const Tensor& features);

/// Binary checkpoint: magic, JSON header (config + RNG state + tensor
/// manifest), then raw little-endian doubles. Round trip is bit-exact.
void save_checkpoint(const std::string& path, ModelBundle& bundle, const Rng& rng);

/// Rebuilds the bundle from the stored config and restores `rng` to the
/// stored state. FormatError (with byte offset) on malformed files.
ModelBundle load_checkpoint(const std::string& path, Rng& rng);

}  // namespace adt
