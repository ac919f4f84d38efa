#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "adt/errors.hpp"

namespace adt {

/// Shape/position of the loss -> weight sigmoid: raw weight is
/// sigmoid(eta * loss + beta) with eta < 0 (larger loss, smaller weight)
/// and beta > 0 (zero-loss samples weigh more than 0.5).
struct WeightConfig {
  double eta;
  double beta;
  bool auto_calibrate;
  bool normalize;

  explicit WeightConfig(double eta_ = -1.0, double beta_ = 1.0, bool auto_calibrate_ = true,
                        bool normalize_ = true)
      : eta(eta_), beta(beta_), auto_calibrate(auto_calibrate_), normalize(normalize_) {
    if (!(eta < 0.0)) throw ConfigError("weight eta must be < 0");
    if (!(beta > 0.0)) throw ConfigError("weight beta must be > 0");
  }
};

/// Per-target-sample importance weights. `raw` is the sigmoid output in
/// (0,1); `normalized` is raw scaled to batch mean 1 (or a copy of raw when
/// normalization is off).
struct SampleWeights {
  std::vector<double> raw;
  std::vector<double> normalized;
};

/// sigmoid(eta * L_i + beta) per sample. Pure, deterministic, and outside
/// the autodiff graph: no gradient ever flows through a weight.
std::vector<double> raw_weight(const std::vector<double>& losses, const WeightConfig& cfg);

/// Divide by the batch mean so weights average to 1. Empty input or an
/// all-zero batch cannot be normalized.
std::vector<double> normalize_weights(const std::vector<double>& raw);

/// Pick (eta, beta) from pretraining losses so the median-loss sample gets
/// raw weight exactly 0.5: eta = -1/median, beta = -eta * median. Scale-free
/// in the loss units; all-zero losses fall back to (-1, 1).
std::pair<double, double> calibrate(const std::vector<double>& pretrain_losses);

SampleWeights compute_weights(const std::vector<double>& losses, const WeightConfig& cfg);

/// CSV dump, one row per sample: sample_id,recon_loss,raw_weight,normalized_weight
void write_weight_csv(const std::string& path, const std::vector<std::int64_t>& sample_ids,
                      const std::vector<double>& losses, const SampleWeights& weights);

}  // namespace adt
