#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "adt/adam.hpp"
#include "adt/datasets.hpp"
#include "adt/model.hpp"
#include "adt/weighting.hpp"

namespace adt {

/// RNG stream tags used by training runs. Distinct from the dataset
/// generators' tags so a run seeded like its dataset still draws
/// independent streams.
inline constexpr std::uint64_t kInitStream = 0xA11;
inline constexpr std::uint64_t kDropoutStream = 0xA12;

/// Hyperparameters for the two-stage run: joint autoencoder pretraining
/// (stage 1), then importance-weighted reconstruction plus adversarial
/// feature alignment (stage 2).
struct TrainConfig {
  double lambda = 0.5;    // target-domain reconstruction weight, in [0, 1]
  double w_adloss = 1.0;  // adversarial gradient scale fed to the reversal layer
  double lr = 0.01;
  std::int64_t batch_size = 64;
  std::int64_t pretrain_epochs = 20;
  std::int64_t adversarial_epochs = 60;
  std::uint64_t seed = 0;
  Arch arch = Arch::Mlp;
  double leaky_slope = 0.2;
  double dropout_p = 0.5;
  WeightConfig weight_cfg{};
  std::int64_t recalibrate_every = 0;  // 0: calibrate only at the stage boundary
  std::int64_t checkpoint_every = 0;   // 0: no periodic checkpoints
  std::int64_t histogram_every = 0;    // 0: no per-epoch histogram dumps
  std::string out_dir{};               // artifact directory for cadence outputs

  void validate() const;  // ConfigError on out-of-range values
};

/// One epoch of probes, all measured in eval mode on the held-out halves.
/// Fields that need target labels (or stage 2) are NaN when unavailable.
struct EpochRow {
  std::int64_t epoch = 0;  // global index: stage-1 rows first
  int stage = 1;
  double source_recon = 0;
  double target_recon = 0;
  double target_normal_recon = std::numeric_limits<double>::quiet_NaN();
  double target_anomaly_recon = std::numeric_limits<double>::quiet_NaN();
  double separation_gap = std::numeric_limits<double>::quiet_NaN();
  double adversarial_loss = std::numeric_limits<double>::quiet_NaN();
  double classifier_accuracy = std::numeric_limits<double>::quiet_NaN();
};

struct LossReport {
  std::vector<EpochRow> rows;
  // Held-out accuracy of a freshly trained throwaway domain classifier on
  // frozen features: how separable the domains still are. Filled by
  // run_pipeline at the stage boundary and after the final epoch.
  double probe_accuracy_after_pretrain = std::numeric_limits<double>::quiet_NaN();
  double probe_accuracy_final = std::numeric_limits<double>::quiet_NaN();
  double calibrated_eta = 0;
  double calibrated_beta = 0;
};

/// The adversarial term as one differentiable scalar. `objective` is what
/// the shared optimizer step minimizes; through it the classifier descends
/// the weighted domain cross-entropy while the reversal layer hands the
/// encoder the negated, scaled gradient.
struct AdversarialLoss {
  Tensor objective;                  // scalar: -(mean_t[w*log C] + mean_s[log(1-C)])
  double lw = 0;                     // the maximized quantity: -objective
  std::vector<double> target_terms;  // per-sample w*log C(F(x)), clamped
  std::vector<double> source_terms;  // per-sample log(1 - C(F(x))), clamped
};

/// Mean per-sample reconstruction MSE of a batch, recorded on the tape.
Tensor recon_loss_mean(Tape& tape, ModelBundle& bundle, const Tensor& batch, bool train,
                       Rng* dropout_rng);

/// Weighted domain-adversarial objective over one source/target batch pair.
/// `weights` must match the target batch length (DimensionError otherwise);
/// probabilities are clamped to [1e-7, 1-1e-7] before the log.
AdversarialLoss weighted_adversarial_loss(Tape& tape, ModelBundle& bundle, const Tensor& src_batch,
                                          const Tensor& tgt_batch,
                                          const std::vector<double>& weights, bool train,
                                          Rng* dropout_rng);

/// Per-sample reconstruction losses in eval mode (dropout off, batch-norm
/// running statistics), computed in chunks without touching the tape.
std::vector<double> eval_recon_losses(ModelBundle& bundle, const Matrix& rows);

/// Held-out accuracy of the bundle's own domain classifier on the eval
/// halves (threshold 0.5; source counts as correct below it).
double classifier_holdout_accuracy(ModelBundle& bundle, const DomainDataset& data);

/// One row per epoch:
/// epoch,stage,source_recon,target_recon,target_normal_recon,
/// target_anomaly_recon,separation_gap,adversarial_loss,classifier_accuracy
void write_loss_report_csv(const std::string& path, const LossReport& report);

/// Owns one training run: model, optimizers, per-epoch report. The two
/// stages can be driven separately so callers may interleave measurements.
class Trainer {
 public:
  Trainer(const TrainConfig& cfg, const DomainDataset& data);

  ModelBundle& bundle() { return bundle_; }
  const TrainConfig& config() const { return cfg_; }
  LossReport& report() { return report_; }
  /// Weight parameters in force during stage 2 (after calibration).
  const WeightConfig& active_weights() const { return weights_; }

  /// One pass over paired minibatches minimizing the joint reconstruction
  /// loss w.r.t. encoder and decoder only; appends and returns a probe row.
  EpochRow pretrain_epoch(std::int64_t epoch);
  /// One stage-2 pass: per minibatch the sample weights are refreshed from
  /// an eval-mode forward, then one combined backward of the weighted
  /// reconstruction and adversarial objectives feeds a single Adam step.
  EpochRow adversarial_epoch(std::int64_t epoch);

  /// `on_epoch`, when given, runs after each epoch with the global epoch
  /// index (for artifact emission by the caller).
  void pretrain_stage(const std::function<void(std::int64_t)>& on_epoch = {});
  /// Calibrates the weight function on current target-train losses, then
  /// runs the adversarial epochs (recalibrating on the configured cadence).
  void adversarial_stage(const std::function<void(std::int64_t)>& on_epoch = {});

  /// Calibrate eta/beta from the current model's target-train losses.
  void calibrate_weights();

 private:
  EpochRow probe(std::int64_t epoch, int stage);

  TrainConfig cfg_;
  const DomainDataset& data_;
  Matrix train_source_, train_target_;
  Matrix eval_source_, eval_target_;
  std::vector<int> eval_labels_;
  ModelBundle bundle_;
  Rng dropout_rng_;
  Adam ae_opt_;
  Adam joint_opt_;
  WeightConfig weights_;
  LossReport report_;
};

}  // namespace adt
