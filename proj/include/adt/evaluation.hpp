#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "adt/trainer.hpp"

namespace adt {

struct RocPoint {
  double fpr = 0;
  double tpr = 0;
};

/// Final-model evaluation on the held-out target split. `auc`, `roc_points`,
/// and the gap fields stay empty/NaN when the mixture is unlabeled.
struct EvalReport {
  std::vector<double> scores;  // per held-out target sample
  std::vector<int> labels;     // aligned; empty when unlabeled
  double auc = std::numeric_limits<double>::quiet_NaN();
  std::vector<RocPoint> roc_points;  // (0,0) .. (1,1), nondecreasing
  double separation_gap = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> gap_trajectory;  // one entry per training epoch
  double probe_accuracy = std::numeric_limits<double>::quiet_NaN();
};

/// Anomaly score = per-sample reconstruction MSE in eval mode. Higher means
/// more likely anomalous.
std::vector<double> anomaly_scores(ModelBundle& bundle, const Matrix& samples);

/// Threshold-sweep ROC with trapezoidal area. Tied scores contribute half
/// credit per pair (the Mann-Whitney convention). Positives are label 1.
/// ConfigError when only one class is present; DimensionError on length
/// mismatch.
std::pair<double, std::vector<RocPoint>> roc_auc(const std::vector<double>& scores,
                                                 const std::vector<int>& labels);

/// Per-population score histograms over one shared equal-width bin range.
/// Populations come from the held-out halves; an unlabeled target counts
/// entirely in the normal column.
struct Histogram {
  std::vector<double> edges;  // bins + 1 shared edges
  std::vector<std::int64_t> src, tgt_normal, tgt_anomaly;
};
Histogram loss_histogram(ModelBundle& bundle, const DomainDataset& data, std::int64_t bins);

/// CSV: bin_lo,bin_hi,src,tgt_normal,tgt_anomaly
void write_histogram_csv(const std::string& path, const Histogram& hist);

/// mean(anomaly scores) - mean(normal scores); ConfigError on an empty set.
double separation_gap(const std::vector<double>& normal_scores,
                      const std::vector<double>& anomaly_scores);

/// How separable the two domains are in the bundle's frozen feature space:
/// a small throwaway classifier is trained from scratch on the train-half
/// features and its accuracy measured on the eval halves. Never touches the
/// bundle's parameters.
double domain_probe_accuracy(ModelBundle& bundle, const DomainDataset& data, std::uint64_t seed);

/// Score the held-out target split: anomaly scores, AUC + ROC when labels
/// exist, and the final separation gap.
EvalReport evaluate(ModelBundle& bundle, const DomainDataset& data);

struct PipelineResult {
  ModelBundle bundle;
  LossReport losses;
  EvalReport eval;
};

/// The full two-stage run plus evaluation: pretraining, weight calibration,
/// adversarial training, domain probes at the stage boundary and the end,
/// and cadence artifacts (checkpoints / histogram CSVs) into cfg.out_dir.
PipelineResult run_pipeline(const TrainConfig& cfg, const DomainDataset& data);

/// Transfer baseline: the same autoencoder trained on source only, then
/// fine-tuned on all target training rows with no weighting and no
/// adversarial term. pretrain_epochs/adversarial_epochs count the two
/// phases.
EvalReport baseline_finetune(const TrainConfig& cfg, const DomainDataset& data);

enum class SweepAxis { AnomalyRate, WAdloss };

/// Builds the dataset for one grid value and repeat seed.
using DatasetFactory = std::function<DomainDataset(double value, std::uint64_t seed)>;

struct SweepPoint {
  double value = 0;
  std::vector<double> aucs;           // proposed method, one per repeat
  std::vector<double> baseline_aucs;  // fine-tune baseline (optional)
  double median_auc = std::numeric_limits<double>::quiet_NaN();
  double spread = std::numeric_limits<double>::quiet_NaN();  // max - min
  double baseline_median = std::numeric_limits<double>::quiet_NaN();
};

/// Full pipeline per (grid value, repeat). Repeat r runs at seed
/// base.seed + r for every grid value, pairing the comparisons.
std::vector<SweepPoint> sweep(const TrainConfig& base, SweepAxis axis,
                              const std::vector<double>& grid, int repeats,
                              const DatasetFactory& factory, bool with_baseline);

/// CSV: axis,median_auc,spread,auc_r1..auc_rR[,baseline_median,baseline_r1..]
void write_sweep_csv(const std::string& path, const std::string& axis_name,
                     const std::vector<SweepPoint>& points, int repeats, bool with_baseline);

double median_of(std::vector<double> v);

void write_roc_csv(const std::string& path, const std::vector<RocPoint>& points);

/// metrics.json: auc, gap, probe accuracies, gap trajectory, config echo.
/// Deterministic bytes: sorted keys, no timestamps.
void write_metrics_json(const std::string& path, const EvalReport& eval, const LossReport& losses,
                        const TrainConfig& cfg);

}  // namespace adt
