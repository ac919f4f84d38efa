#include "adt/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>

#include "adt/errors.hpp"
#include "adt/ops.hpp"

namespace adt {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();
constexpr std::int64_t kEvalChunk = 256;

void ensure_finite(double v, int stage, std::int64_t epoch, std::int64_t batch) {
  if (std::isfinite(v)) return;
  throw NumericError("non-finite training loss (stage " + std::to_string(stage) + ", epoch " +
                     std::to_string(epoch) + ", batch " + std::to_string(batch) + ")");
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return kNan;
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

std::vector<std::int64_t> chunk_indices(std::int64_t from, std::int64_t to) {
  std::vector<std::int64_t> idx;
  idx.reserve(static_cast<std::size_t>(to - from));
  for (std::int64_t i = from; i < to; ++i) idx.push_back(i);
  return idx;
}

/// Eval-mode per-sample reconstruction losses of one already-gathered batch.
std::vector<double> batch_recon_losses_eval(ModelBundle& bundle, const Tensor& batch) {
  Tape off(false);
  Context ctx{off, false, nullptr};
  auto [feats, recon] = forward_autoencode(bundle, ctx, batch);
  (void)feats;
  Tensor per = mse_per_sample(off, recon, batch);
  return {per.values().begin(), per.values().end()};
}

/// The adversarial objective built on top of already-encoded features, so a
/// caller sharing the encoder forward with the reconstruction path records
/// each activation once.
AdversarialLoss adversarial_from_features(Tape& tape, ModelBundle& bundle, const Tensor& feats_s,
                                          const Tensor& feats_t,
                                          const std::vector<double>& weights, Context& ctx) {
  const std::int64_t bt = feats_t.dim(0);
  if (static_cast<std::int64_t>(weights.size()) != bt)
    throw DimensionError("weight vector length " + std::to_string(weights.size()) +
                         " does not match target batch size " + std::to_string(bt));
  const double eps = 1e-7;
  Tensor p_t = forward_domain(bundle, ctx, feats_t);  // [Bt, 1]
  Tensor p_s = forward_domain(bundle, ctx, feats_s);  // [Bs, 1]
  Tensor log_t = log(tape, clamp(tape, p_t, eps, 1.0 - eps));
  Tensor w = Tensor::from(p_t.shape(), weights);
  Tensor weighted_t = mul(tape, log_t, w);
  Tensor ones = Tensor::full(p_s.shape(), 1.0);
  Tensor log_s = log(tape, clamp(tape, sub(tape, ones, p_s), eps, 1.0 - eps));
  Tensor lw = add(tape, mean_all(tape, weighted_t), mean_all(tape, log_s));

  AdversarialLoss out;
  out.objective = scale(tape, lw, -1.0);
  out.lw = lw.item();
  out.target_terms.assign(weighted_t.values().begin(), weighted_t.values().end());
  out.source_terms.assign(log_s.values().begin(), log_s.values().end());
  return out;
}

/// Eval-mode accuracy of the bundle's classifier: source rows count as
/// correct below probability 0.5, target rows at or above it.
double domain_accuracy_on(ModelBundle& bundle, const Matrix& src, const Matrix& tgt) {
  if (src.rows + tgt.rows == 0) return kNan;
  std::int64_t correct = 0;
  auto tally = [&](const Matrix& m, bool is_target) {
    for (std::int64_t at = 0; at < m.rows; at += kEvalChunk) {
      Tape off(false);
      Context ctx{off, false, nullptr};
      Tensor x = m.gather(chunk_indices(at, std::min(m.rows, at + kEvalChunk)));
      Tensor p = forward_domain(bundle, ctx, bundle.encoder.forward(ctx, x));
      for (double v : p.values())
        if (is_target == (v >= 0.5)) ++correct;
    }
  };
  tally(src, false);
  tally(tgt, true);
  return static_cast<double>(correct) / static_cast<double>(src.rows + tgt.rows);
}

}  // namespace

void TrainConfig::validate() const {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("lambda must be in [0, 1]");
  if (!(w_adloss >= 0.0)) throw ConfigError("w_adloss must be >= 0");
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (batch_size <= 0) throw ConfigError("batch_size must be positive");
  if (pretrain_epochs < 0) throw ConfigError("pretrain_epochs must be >= 0");
  if (adversarial_epochs < 0) throw ConfigError("adversarial_epochs must be >= 0");
  if (recalibrate_every < 0 || checkpoint_every < 0 || histogram_every < 0)
    throw ConfigError("emission cadences must be >= 0");
}

Tensor recon_loss_mean(Tape& tape, ModelBundle& bundle, const Tensor& batch, bool train,
                       Rng* dropout_rng) {
  Context ctx{tape, train, dropout_rng};
  auto [feats, recon] = forward_autoencode(bundle, ctx, batch);
  (void)feats;
  return mean_all(tape, mse_per_sample(tape, recon, batch));
}

AdversarialLoss weighted_adversarial_loss(Tape& tape, ModelBundle& bundle, const Tensor& src_batch,
                                          const Tensor& tgt_batch,
                                          const std::vector<double>& weights, bool train,
                                          Rng* dropout_rng) {
  Context ctx{tape, train, dropout_rng};
  Tensor feats_s = bundle.encoder.forward(ctx, src_batch);
  Tensor feats_t = bundle.encoder.forward(ctx, tgt_batch);
  return adversarial_from_features(tape, bundle, feats_s, feats_t, weights, ctx);
}

std::vector<double> eval_recon_losses(ModelBundle& bundle, const Matrix& rows) {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(rows.rows));
  for (std::int64_t at = 0; at < rows.rows; at += kEvalChunk) {
    Tensor batch = rows.gather(chunk_indices(at, std::min(rows.rows, at + kEvalChunk)));
    std::vector<double> losses = batch_recon_losses_eval(bundle, batch);
    out.insert(out.end(), losses.begin(), losses.end());
  }
  return out;
}

double classifier_holdout_accuracy(ModelBundle& bundle, const DomainDataset& data) {
  Matrix src = data.source_eval();
  Matrix tgt = data.target_eval();
  return domain_accuracy_on(bundle, src, tgt);
}

Trainer::Trainer(const TrainConfig& cfg, const DomainDataset& data)
    : cfg_(cfg),
      data_(data),
      train_source_(data.source_train()),
      train_target_(data.target_train()),
      eval_source_(data.source_eval()),
      eval_target_(data.target_eval()),
      eval_labels_(data.target_eval_labels()),
      dropout_rng_(0),
      ae_opt_(1.0),
      joint_opt_(1.0),
      weights_(cfg.weight_cfg) {
  cfg_.validate();
  ae_opt_ = Adam(cfg_.lr);
  joint_opt_ = Adam(cfg_.lr);
  if (train_source_.rows == 0 || train_target_.rows == 0)
    throw ConfigError("training requires nonempty source and target train splits");
  if (std::max(train_source_.rows, train_target_.rows) < cfg_.batch_size)
    throw ConfigError("batch_size " + std::to_string(cfg_.batch_size) +
                      " exceeds the larger train split (" +
                      std::to_string(std::max(train_source_.rows, train_target_.rows)) + " rows)");
  Rng root(cfg_.seed);
  Rng init = root.fork(kInitStream);
  ModelConfig mc;
  mc.arch = cfg_.arch;
  mc.input_shape = data.source.sample_shape;
  mc.leaky_slope = cfg_.leaky_slope;
  mc.dropout_p = cfg_.dropout_p;
  mc.grl_coefficient = cfg_.w_adloss;
  bundle_ = build_model(mc, init);
  dropout_rng_ = root.fork(kDropoutStream);
}

EpochRow Trainer::probe(std::int64_t epoch, int stage) {
  EpochRow row;
  row.epoch = epoch;
  row.stage = stage;
  row.source_recon = mean_of(eval_recon_losses(bundle_, eval_source_));
  std::vector<double> tgt_losses = eval_recon_losses(bundle_, eval_target_);
  row.target_recon = mean_of(tgt_losses);
  if (!eval_labels_.empty() && eval_labels_.size() == tgt_losses.size()) {
    double sum_n = 0, sum_a = 0;
    std::int64_t n_n = 0, n_a = 0;
    for (std::size_t i = 0; i < tgt_losses.size(); ++i) {
      if (eval_labels_[i] == 1) {
        sum_a += tgt_losses[i];
        ++n_a;
      } else {
        sum_n += tgt_losses[i];
        ++n_n;
      }
    }
    if (n_n > 0) row.target_normal_recon = sum_n / static_cast<double>(n_n);
    if (n_a > 0) row.target_anomaly_recon = sum_a / static_cast<double>(n_a);
    if (n_n > 0 && n_a > 0) row.separation_gap = row.target_anomaly_recon - row.target_normal_recon;
  }
  row.classifier_accuracy = domain_accuracy_on(bundle_, eval_source_, eval_target_);
  return row;
}

EpochRow Trainer::pretrain_epoch(std::int64_t epoch) {
  MinibatchIter iter(train_source_, train_target_, cfg_.batch_size, cfg_.seed, epoch);
  std::vector<Tensor> params = bundle_.ae_params();
  Tensor src, tgt;
  std::int64_t batch = 0;
  while (iter.next(src, tgt)) {
    Tape tape(true);
    Tensor total = recon_loss_mean(tape, bundle_, src, true, &dropout_rng_);
    if (cfg_.lambda > 0.0) {
      Tensor tgt_loss = recon_loss_mean(tape, bundle_, tgt, true, &dropout_rng_);
      total = add(tape, total, scale(tape, tgt_loss, cfg_.lambda));
    }
    ensure_finite(total.item(), 1, epoch, batch);
    Adam::zero_grad(params);
    tape.backward(total);
    ae_opt_.step(params);
    ++batch;
  }
  EpochRow row = probe(epoch, 1);
  report_.rows.push_back(row);
  return row;
}

EpochRow Trainer::adversarial_epoch(std::int64_t epoch) {
  MinibatchIter iter(train_source_, train_target_, cfg_.batch_size, cfg_.seed, epoch);
  std::vector<Tensor> params = bundle_.all_params();
  Tensor src, tgt;
  std::int64_t batch = 0;
  double lw_sum = 0;
  while (iter.next(src, tgt)) {
    // weights come from a measurement pass: eval mode, outside the graph
    SampleWeights w = compute_weights(batch_recon_losses_eval(bundle_, tgt), weights_);

    Tape tape(true);
    Context ctx{tape, true, &dropout_rng_};
    Tensor feats_s = bundle_.encoder.forward(ctx, src);
    Tensor recon_s = bundle_.decoder.forward(ctx, feats_s);
    Tensor total = mean_all(tape, mse_per_sample(tape, recon_s, src));
    Tensor feats_t = bundle_.encoder.forward(ctx, tgt);
    if (cfg_.lambda > 0.0) {
      Tensor recon_t = bundle_.decoder.forward(ctx, feats_t);
      Tensor per_t = mse_per_sample(tape, recon_t, tgt);
      Tensor wt = Tensor::from(per_t.shape(), w.normalized);
      total = add(tape, total, scale(tape, mean_all(tape, mul(tape, per_t, wt)), cfg_.lambda));
    }
    AdversarialLoss adv = adversarial_from_features(tape, bundle_, feats_s, feats_t, w.normalized, ctx);
    total = add(tape, total, adv.objective);
    ensure_finite(total.item(), 2, epoch, batch);
    Adam::zero_grad(params);
    tape.backward(total);
    joint_opt_.step(params);
    lw_sum += adv.lw;
    ++batch;
  }
  EpochRow row = probe(epoch, 2);
  if (batch > 0) row.adversarial_loss = lw_sum / static_cast<double>(batch);
  report_.rows.push_back(row);
  return row;
}

void Trainer::calibrate_weights() {
  if (!cfg_.weight_cfg.auto_calibrate) {
    weights_ = cfg_.weight_cfg;
  } else {
    auto [eta, beta] = calibrate(eval_recon_losses(bundle_, train_target_));
    weights_ = WeightConfig(eta, beta, true, cfg_.weight_cfg.normalize);
  }
  report_.calibrated_eta = weights_.eta;
  report_.calibrated_beta = weights_.beta;
}

void Trainer::pretrain_stage(const std::function<void(std::int64_t)>& on_epoch) {
  for (std::int64_t e = 0; e < cfg_.pretrain_epochs; ++e) {
    pretrain_epoch(e);
    if (on_epoch) on_epoch(e);
  }
}

void Trainer::adversarial_stage(const std::function<void(std::int64_t)>& on_epoch) {
  calibrate_weights();
  for (std::int64_t k = 0; k < cfg_.adversarial_epochs; ++k) {
    if (cfg_.recalibrate_every > 0 && k > 0 && k % cfg_.recalibrate_every == 0) calibrate_weights();
    adversarial_epoch(cfg_.pretrain_epochs + k);
    if (on_epoch) on_epoch(cfg_.pretrain_epochs + k);
  }
}

void write_loss_report_csv(const std::string& path, const LossReport& report) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw IoError("cannot open " + path + " for writing");
  std::fputs(
      "epoch,stage,source_recon,target_recon,target_normal_recon,"
      "target_anomaly_recon,separation_gap,adversarial_loss,classifier_accuracy\n",
      f);
  for (const EpochRow& r : report.rows)
    std::fprintf(f, "%lld,%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                 static_cast<long long>(r.epoch), r.stage, r.source_recon, r.target_recon,
                 r.target_normal_recon, r.target_anomaly_recon, r.separation_gap,
                 r.adversarial_loss, r.classifier_accuracy);
  std::fclose(f);
}

}  // namespace adt
