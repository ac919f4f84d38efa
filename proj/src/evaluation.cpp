#include "adt/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <json.hpp>
#include <string>

#include "adt/errors.hpp"
#include "adt/ops.hpp"

namespace adt {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();
constexpr std::int64_t kChunk = 256;

// probe hyperparameters: a deliberately small classifier trained to
// convergence on frozen features; a measurement device, not part of the model
constexpr std::int64_t kProbeHidden = 32;
constexpr std::int64_t kProbeSteps = 250;
constexpr double kProbeLr = 0.02;

std::vector<std::int64_t> chunk_indices(std::int64_t from, std::int64_t to) {
  std::vector<std::int64_t> idx;
  idx.reserve(static_cast<std::size_t>(to - from));
  for (std::int64_t i = from; i < to; ++i) idx.push_back(i);
  return idx;
}

/// Eval-mode encoder features of every row, flattened to [rows, width].
Matrix encode_to_matrix(ModelBundle& bundle, const Matrix& m) {
  Matrix out;
  out.sample_shape = {bundle.feature_width};
  out.rows = m.rows;
  out.data.reserve(static_cast<std::size_t>(m.rows * bundle.feature_width));
  for (std::int64_t at = 0; at < m.rows; at += kChunk) {
    Tape off(false);
    Context ctx{off, false, nullptr};
    Tensor f = bundle.encoder.forward(ctx, m.gather(chunk_indices(at, std::min(m.rows, at + kChunk))));
    out.data.insert(out.data.end(), f.values().begin(), f.values().end());
  }
  return out;
}

Tensor balanced_bce(Tape& tape, Stack& probe, Context& ctx, const Tensor& src_feats,
                    const Tensor& tgt_feats) {
  const double eps = 1e-7;
  Tensor p_s = probe.forward(ctx, src_feats);
  Tensor p_t = probe.forward(ctx, tgt_feats);
  Tensor ones = Tensor::full(p_s.shape(), 1.0);
  Tensor src_term = mean_all(tape, log(tape, clamp(tape, sub(tape, ones, p_s), eps, 1.0 - eps)));
  Tensor tgt_term = mean_all(tape, log(tape, clamp(tape, p_t, eps, 1.0 - eps)));
  return scale(tape, add(tape, src_term, tgt_term), -0.5);
}

void tally_correct(Stack& probe, const Matrix& feats, bool is_target, std::int64_t& correct) {
  for (std::int64_t at = 0; at < feats.rows; at += kChunk) {
    Tape off(false);
    Context ctx{off, false, nullptr};
    Tensor p = probe.forward(ctx, feats.gather(chunk_indices(at, std::min(feats.rows, at + kChunk))));
    for (double v : p.values())
      if (is_target == (v >= 0.5)) ++correct;
  }
}

}  // namespace

std::vector<double> anomaly_scores(ModelBundle& bundle, const Matrix& samples) {
  return eval_recon_losses(bundle, samples);
}

std::pair<double, std::vector<RocPoint>> roc_auc(const std::vector<double>& scores,
                                                 const std::vector<int>& labels) {
  if (scores.size() != labels.size())
    throw DimensionError("roc_auc: " + std::to_string(scores.size()) + " scores vs " +
                         std::to_string(labels.size()) + " labels");
  std::int64_t pos = 0, neg = 0;
  for (int l : labels) (l == 1 ? pos : neg)++;
  if (pos == 0 || neg == 0)
    throw ConfigError("roc_auc needs both classes present (got " + std::to_string(pos) +
                      " positives, " + std::to_string(neg) + " negatives)");
  for (double s : scores)
    if (!std::isfinite(s)) throw NumericError("roc_auc: non-finite score");

  std::vector<std::size_t> order(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b];  // descending: most anomalous first
  });

  std::vector<RocPoint> points{{0.0, 0.0}};
  double auc = 0;
  std::int64_t tp = 0, fp = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    // advance over one group of tied scores so ties earn half credit
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    std::int64_t dtp = 0, dfp = 0;
    for (std::size_t k = i; k < j; ++k) (labels[order[k]] == 1 ? dtp : dfp)++;
    double tpr_prev = static_cast<double>(tp) / static_cast<double>(pos);
    tp += dtp;
    fp += dfp;
    double tpr = static_cast<double>(tp) / static_cast<double>(pos);
    double dfpr = static_cast<double>(dfp) / static_cast<double>(neg);
    auc += dfpr * 0.5 * (tpr_prev + tpr);
    points.push_back({static_cast<double>(fp) / static_cast<double>(neg), tpr});
    i = j;
  }
  return {auc, points};
}

Histogram loss_histogram(ModelBundle& bundle, const DomainDataset& data, std::int64_t bins) {
  if (bins <= 0) throw ConfigError("histogram needs a positive bin count");
  Matrix src = data.source_eval();
  Matrix tgt = data.target_eval();
  std::vector<double> src_scores = anomaly_scores(bundle, src);
  std::vector<double> tgt_scores = anomaly_scores(bundle, tgt);
  std::vector<int> labels = data.target_eval_labels();

  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (double s : src_scores) {
    lo = std::min(lo, s);
    hi = std::max(hi, s);
  }
  for (double s : tgt_scores) {
    lo = std::min(lo, s);
    hi = std::max(hi, s);
  }
  if (src_scores.empty() && tgt_scores.empty()) {
    lo = 0;
    hi = 1;
  }
  if (hi <= lo) hi = lo + 1.0;  // degenerate range: everything lands in bin 0

  Histogram h;
  h.edges.resize(static_cast<std::size_t>(bins) + 1);
  for (std::int64_t b = 0; b <= bins; ++b)
    h.edges[static_cast<std::size_t>(b)] =
        lo + (hi - lo) * static_cast<double>(b) / static_cast<double>(bins);
  h.src.assign(static_cast<std::size_t>(bins), 0);
  h.tgt_normal.assign(static_cast<std::size_t>(bins), 0);
  h.tgt_anomaly.assign(static_cast<std::size_t>(bins), 0);

  auto bin_of = [&](double s) {
    auto b = static_cast<std::int64_t>((s - lo) / (hi - lo) * static_cast<double>(bins));
    return std::clamp<std::int64_t>(b, 0, bins - 1);  // top edge joins the last bin
  };
  for (double s : src_scores) ++h.src[static_cast<std::size_t>(bin_of(s))];
  for (std::size_t i = 0; i < tgt_scores.size(); ++i) {
    bool anomaly = !labels.empty() && labels[i] == 1;
    ++(anomaly ? h.tgt_anomaly : h.tgt_normal)[static_cast<std::size_t>(bin_of(tgt_scores[i]))];
  }
  return h;
}

void write_histogram_csv(const std::string& path, const Histogram& hist) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw IoError("cannot open " + path + " for writing");
  std::fputs("bin_lo,bin_hi,src,tgt_normal,tgt_anomaly\n", f);
  for (std::size_t b = 0; b + 1 < hist.edges.size(); ++b)
    std::fprintf(f, "%.17g,%.17g,%lld,%lld,%lld\n", hist.edges[b], hist.edges[b + 1],
                 static_cast<long long>(hist.src[b]), static_cast<long long>(hist.tgt_normal[b]),
                 static_cast<long long>(hist.tgt_anomaly[b]));
  std::fclose(f);
}

double separation_gap(const std::vector<double>& normal_scores,
                      const std::vector<double>& anomaly_scores) {
  if (normal_scores.empty() || anomaly_scores.empty())
    throw ConfigError("separation_gap needs nonempty normal and anomaly score sets");
  double sn = 0, sa = 0;
  for (double s : normal_scores) sn += s;
  for (double s : anomaly_scores) sa += s;
  return sa / static_cast<double>(anomaly_scores.size()) -
         sn / static_cast<double>(normal_scores.size());
}

double domain_probe_accuracy(ModelBundle& bundle, const DomainDataset& data, std::uint64_t seed) {
  Matrix src_train = encode_to_matrix(bundle, data.source_train());
  Matrix tgt_train = encode_to_matrix(bundle, data.target_train());
  Matrix src_eval = encode_to_matrix(bundle, data.source_eval());
  Matrix tgt_eval = encode_to_matrix(bundle, data.target_eval());
  if (src_train.rows == 0 || tgt_train.rows == 0 || src_eval.rows + tgt_eval.rows == 0)
    throw ConfigError("domain probe needs nonempty train and eval splits");

  Rng rng(seed);
  std::vector<LayerSpec> spec{LayerSpec::dense(bundle.feature_width, kProbeHidden),
                              LayerSpec::leaky_relu(0.2), LayerSpec::dense(kProbeHidden, 1),
                              LayerSpec::sigmoid_out()};
  Stack probe = build_stack(spec, {bundle.feature_width}, rng);
  std::vector<Tensor> params = probe.params();
  Adam opt(kProbeLr);
  Tensor src_all = src_train.all();
  Tensor tgt_all = tgt_train.all();
  for (std::int64_t step = 0; step < kProbeSteps; ++step) {
    Tape tape(true);
    Context ctx{tape, true, nullptr};
    Tensor loss = balanced_bce(tape, probe, ctx, src_all, tgt_all);
    if (!std::isfinite(loss.item()))
      throw NumericError("domain probe diverged at step " + std::to_string(step));
    Adam::zero_grad(params);
    tape.backward(loss);
    opt.step(params);
  }

  std::int64_t correct = 0;
  tally_correct(probe, src_eval, false, correct);
  tally_correct(probe, tgt_eval, true, correct);
  return static_cast<double>(correct) / static_cast<double>(src_eval.rows + tgt_eval.rows);
}

EvalReport evaluate(ModelBundle& bundle, const DomainDataset& data) {
  EvalReport r;
  Matrix tgt = data.target_eval();
  r.scores = anomaly_scores(bundle, tgt);
  r.labels = data.target_eval_labels();
  if (!r.labels.empty()) {
    std::vector<double> normals, anomalies;
    for (std::size_t i = 0; i < r.scores.size(); ++i)
      (r.labels[i] == 1 ? anomalies : normals).push_back(r.scores[i]);
    if (!normals.empty() && !anomalies.empty()) {
      auto [auc, points] = roc_auc(r.scores, r.labels);
      r.auc = auc;
      r.roc_points = std::move(points);
      r.separation_gap = separation_gap(normals, anomalies);
    }
  }
  return r;
}

PipelineResult run_pipeline(const TrainConfig& cfg, const DomainDataset& data) {
  cfg.validate();
  if ((cfg.checkpoint_every > 0 || cfg.histogram_every > 0) && cfg.out_dir.empty())
    throw ConfigError("emission cadence set but out_dir is empty");

  Trainer trainer(cfg, data);
  auto emit = [&](std::int64_t epoch) {
    char name[48];
    if (cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0) {
      std::snprintf(name, sizeof name, "/ckpt_epoch%03lld.ckpt", static_cast<long long>(epoch));
      Rng snapshot_rng(cfg.seed);
      save_checkpoint(cfg.out_dir + name, trainer.bundle(), snapshot_rng);
    }
    if (cfg.histogram_every > 0 && (epoch + 1) % cfg.histogram_every == 0) {
      std::snprintf(name, sizeof name, "/hist_epoch%03lld.csv", static_cast<long long>(epoch));
      write_histogram_csv(cfg.out_dir + name, loss_histogram(trainer.bundle(), data, 40));
    }
  };

  trainer.pretrain_stage(emit);
  trainer.report().probe_accuracy_after_pretrain =
      domain_probe_accuracy(trainer.bundle(), data, cfg.seed + 0x9001);
  trainer.adversarial_stage(emit);
  trainer.report().probe_accuracy_final =
      domain_probe_accuracy(trainer.bundle(), data, cfg.seed + 0x9002);

  PipelineResult res;
  res.eval = evaluate(trainer.bundle(), data);
  res.eval.probe_accuracy = trainer.report().probe_accuracy_final;
  for (const EpochRow& row : trainer.report().rows)
    res.eval.gap_trajectory.push_back(row.separation_gap);
  res.losses = trainer.report();
  res.bundle = std::move(trainer.bundle());
  return res;
}

EvalReport baseline_finetune(const TrainConfig& cfg, const DomainDataset& data) {
  cfg.validate();
  Matrix src_train = data.source_train();
  Matrix tgt_train = data.target_train();
  if (src_train.rows == 0 || tgt_train.rows == 0)
    throw ConfigError("baseline requires nonempty source and target train splits");
  if (std::max(src_train.rows, tgt_train.rows) < cfg.batch_size)
    throw ConfigError("batch_size exceeds the larger train split");
  if (cfg.adversarial_epochs > 0 && tgt_train.rows < cfg.batch_size)
    throw ConfigError("batch_size exceeds the target train split; no fine-tune batch would run");

  Rng root(cfg.seed);
  Rng init = root.fork(kInitStream);
  ModelConfig mc;
  mc.arch = cfg.arch;
  mc.input_shape = data.source.sample_shape;
  mc.leaky_slope = cfg.leaky_slope;
  mc.dropout_p = cfg.dropout_p;
  mc.grl_coefficient = cfg.w_adloss;
  ModelBundle bundle = build_model(mc, init);
  std::vector<Tensor> params = bundle.ae_params();

  auto run_phase = [&](const Matrix& rows, const Matrix& pair, std::int64_t epochs,
                       std::int64_t epoch_base, int phase) {
    Adam opt(cfg.lr);
    for (std::int64_t e = 0; e < epochs; ++e) {
      MinibatchIter iter(rows, pair, cfg.batch_size, cfg.seed, epoch_base + e);
      Tensor s, t;
      std::int64_t batch = 0;
      while (iter.next(s, t)) {
        Tape tape(true);
        Tensor loss = recon_loss_mean(tape, bundle, s, true, nullptr);
        if (!std::isfinite(loss.item()))
          throw NumericError("baseline: non-finite loss (phase " + std::to_string(phase) +
                             ", epoch " + std::to_string(epoch_base + e) + ", batch " +
                             std::to_string(batch) + ")");
        Adam::zero_grad(params);
        tape.backward(loss);
        opt.step(params);
        ++batch;
      }
    }
  };
  // phase 1: source only, batched exactly like stage-1 training
  run_phase(src_train, tgt_train, cfg.pretrain_epochs, 0, 1);
  // phase 2: plain unweighted fine-tuning on every target training row
  run_phase(tgt_train, tgt_train, cfg.adversarial_epochs, cfg.pretrain_epochs, 2);
  return evaluate(bundle, data);
}

double median_of(std::vector<double> v) {
  if (v.empty()) return kNan;
  std::sort(v.begin(), v.end());
  std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::vector<SweepPoint> sweep(const TrainConfig& base, SweepAxis axis,
                              const std::vector<double>& grid, int repeats,
                              const DatasetFactory& factory, bool with_baseline) {
  base.validate();
  if (grid.empty()) throw ConfigError("sweep grid is empty");
  if (repeats <= 0) throw ConfigError("sweep repeats must be positive");

  std::vector<SweepPoint> points;
  for (double value : grid) {
    SweepPoint p;
    p.value = value;
    for (int r = 0; r < repeats; ++r) {
      TrainConfig cfg = base;
      cfg.seed = base.seed + static_cast<std::uint64_t>(r);
      cfg.checkpoint_every = 0;
      cfg.histogram_every = 0;
      cfg.out_dir.clear();
      if (axis == SweepAxis::WAdloss) cfg.w_adloss = value;
      DomainDataset ds = factory(value, cfg.seed);
      PipelineResult res = run_pipeline(cfg, ds);
      p.aucs.push_back(res.eval.auc);
      if (with_baseline) p.baseline_aucs.push_back(baseline_finetune(cfg, ds).auc);
    }
    p.median_auc = median_of(p.aucs);
    auto [mn, mx] = std::minmax_element(p.aucs.begin(), p.aucs.end());
    p.spread = *mx - *mn;
    if (with_baseline) p.baseline_median = median_of(p.baseline_aucs);
    points.push_back(std::move(p));
  }
  return points;
}

void write_sweep_csv(const std::string& path, const std::string& axis_name,
                     const std::vector<SweepPoint>& points, int repeats, bool with_baseline) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw IoError("cannot open " + path + " for writing");
  std::fprintf(f, "%s,median_auc,spread", axis_name.c_str());
  for (int r = 1; r <= repeats; ++r) std::fprintf(f, ",auc_r%d", r);
  if (with_baseline) {
    std::fprintf(f, ",baseline_median");
    for (int r = 1; r <= repeats; ++r) std::fprintf(f, ",baseline_r%d", r);
  }
  std::fputc('\n', f);
  for (const SweepPoint& p : points) {
    std::fprintf(f, "%.17g,%.17g,%.17g", p.value, p.median_auc, p.spread);
    for (double a : p.aucs) std::fprintf(f, ",%.17g", a);
    if (with_baseline) {
      std::fprintf(f, ",%.17g", p.baseline_median);
      for (double a : p.baseline_aucs) std::fprintf(f, ",%.17g", a);
    }
    std::fputc('\n', f);
  }
  std::fclose(f);
}

void write_roc_csv(const std::string& path, const std::vector<RocPoint>& points) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw IoError("cannot open " + path + " for writing");
  std::fputs("fpr,tpr\n", f);
  for (const RocPoint& p : points) std::fprintf(f, "%.17g,%.17g\n", p.fpr, p.tpr);
  std::fclose(f);
}

void write_metrics_json(const std::string& path, const EvalReport& eval, const LossReport& losses,
                        const TrainConfig& cfg) {
  nlohmann::json j;
  j["auc"] = eval.auc;
  j["separation_gap"] = eval.separation_gap;
  j["n_scores"] = eval.scores.size();
  j["probe_accuracy_after_pretrain"] = losses.probe_accuracy_after_pretrain;
  j["probe_accuracy_final"] = losses.probe_accuracy_final;
  j["calibrated_eta"] = losses.calibrated_eta;
  j["calibrated_beta"] = losses.calibrated_beta;
  j["gap_trajectory"] = eval.gap_trajectory;
  j["config"] = {{"lambda", cfg.lambda},
                 {"w_adloss", cfg.w_adloss},
                 {"lr", cfg.lr},
                 {"batch_size", cfg.batch_size},
                 {"pretrain_epochs", cfg.pretrain_epochs},
                 {"adversarial_epochs", cfg.adversarial_epochs},
                 {"seed", std::to_string(cfg.seed)},
                 {"arch", arch_to_string(cfg.arch)},
                 {"leaky_slope", cfg.leaky_slope},
                 {"dropout", cfg.dropout_p},
                 {"eta", cfg.weight_cfg.eta},
                 {"beta", cfg.weight_cfg.beta},
                 {"auto_calibrate", cfg.weight_cfg.auto_calibrate},
                 {"normalize_weights", cfg.weight_cfg.normalize},
                 {"recalibrate_every", cfg.recalibrate_every}};
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw IoError("cannot open " + path + " for writing");
  std::string text = j.dump(2);
  text.push_back('\n');
  std::fwrite(text.data(), 1, text.size(), f);
  std::fclose(f);
}

}  // namespace adt
