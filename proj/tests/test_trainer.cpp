#include <doctest.h>

#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <vector>

#include "adt/datasets.hpp"
#include "adt/errors.hpp"
#include "adt/ops.hpp"
#include "adt/trainer.hpp"

using namespace adt;

namespace {

DomainDataset toy_dataset(std::uint64_t seed, std::int64_t n = 160) {
  SynthConfig cfg;
  cfg.n_source = n;
  cfg.n_target = n;
  return synth_domain_pair(cfg, seed);
}

TrainConfig toy_config() {
  TrainConfig cfg;
  cfg.arch = Arch::Mlp;
  cfg.batch_size = 32;
  cfg.pretrain_epochs = 2;
  cfg.adversarial_epochs = 2;
  cfg.seed = 17;
  return cfg;
}

std::vector<std::vector<double>> snapshot(ModelBundle& bundle) {
  std::vector<std::vector<double>> out;
  for (const NamedArray& a : bundle.state()) out.emplace_back(a.data.begin(), a.data.end());
  return out;
}

bool same_doubles(double a, double b) {
  return std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b);
}

bool rows_identical(const EpochRow& a, const EpochRow& b) {
  return a.epoch == b.epoch && a.stage == b.stage && same_doubles(a.source_recon, b.source_recon) &&
         same_doubles(a.target_recon, b.target_recon) &&
         same_doubles(a.target_normal_recon, b.target_normal_recon) &&
         same_doubles(a.target_anomaly_recon, b.target_anomaly_recon) &&
         same_doubles(a.separation_gap, b.separation_gap) &&
         same_doubles(a.adversarial_loss, b.adversarial_loss) &&
         same_doubles(a.classifier_accuracy, b.classifier_accuracy);
}

ModelBundle make_mlp_bundle(std::int64_t dim, double grl_coeff, std::uint64_t seed = 3) {
  ModelConfig mc;
  mc.arch = Arch::Mlp;
  mc.input_shape = {dim};
  mc.grl_coefficient = grl_coeff;
  Rng rng(seed);
  return build_model(mc, rng);
}

void zero_classifier(ModelBundle& bundle) {
  for (Tensor p : bundle.classifier_params())
    for (double& v : p.values()) v = 0.0;
}

Tensor random_batch(std::int64_t n, std::int64_t dim, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> vals;
  for (std::int64_t i = 0; i < n * dim; ++i) vals.push_back(rng.normal());
  return Tensor::from({n, dim}, vals);
}

}  // namespace

TEST_CASE("train config rejects out-of-range values") {
  TrainConfig cfg = toy_config();
  cfg.lambda = -0.1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.lambda = 1.1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = toy_config();
  cfg.w_adloss = -1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = toy_config();
  cfg.lr = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = toy_config();
  cfg.batch_size = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = toy_config();
  cfg.pretrain_epochs = -1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);

  DomainDataset ds = toy_dataset(1);
  cfg = toy_config();
  cfg.batch_size = 1000;  // larger than either train split
  CHECK_THROWS_AS(Trainer(cfg, ds), ConfigError);
}

TEST_CASE("lambda zero makes pretraining ignore the target domain") {
  DomainDataset a = toy_dataset(4);
  DomainDataset b = toy_dataset(4);
  for (double& v : b.target.data) v += 100.0;  // wildly different target rows

  TrainConfig cfg = toy_config();
  cfg.lambda = 0.0;
  Trainer ta(cfg, a), tb(cfg, b);
  ta.pretrain_epoch(0);
  tb.pretrain_epoch(0);
  CHECK(snapshot(ta.bundle()) == snapshot(tb.bundle()));
}

TEST_CASE("lambda one on an identical batch doubles the plain loss") {
  ModelBundle bundle = make_mlp_bundle(2, 1.0);
  Tensor x = random_batch(8, 2, 5);
  Tape tape(true);
  Tensor single = recon_loss_mean(tape, bundle, x, false, nullptr);
  Tensor again = recon_loss_mean(tape, bundle, x, false, nullptr);
  Tensor joint = add(tape, single, scale(tape, again, 1.0));
  CHECK(joint.item() == doctest::Approx(2.0 * single.item()).epsilon(1e-15));
}

TEST_CASE("classifier parameters are untouched by stage one") {
  DomainDataset ds = toy_dataset(6);
  TrainConfig cfg = toy_config();
  Trainer t(cfg, ds);
  std::vector<std::vector<double>> before;
  for (Tensor p : t.bundle().classifier_params())
    before.emplace_back(p.values().begin(), p.values().end());
  t.pretrain_stage();
  std::vector<std::vector<double>> after;
  for (Tensor p : t.bundle().classifier_params())
    after.emplace_back(p.values().begin(), p.values().end());
  CHECK(before == after);

  // while the autoencoder genuinely moved
  Rng fresh_rng(cfg.seed);
  Rng init = fresh_rng.fork(kInitStream);
  ModelConfig mc;
  mc.arch = cfg.arch;
  mc.input_shape = ds.source.sample_shape;
  mc.grl_coefficient = cfg.w_adloss;
  ModelBundle fresh = build_model(mc, init);
  bool ae_moved = false;
  auto trained = t.bundle().ae_params();
  auto initial = fresh.ae_params();
  REQUIRE(trained.size() == initial.size());
  for (std::size_t i = 0; i < trained.size(); ++i)
    for (std::size_t j = 0; j < trained[i].values().size(); ++j)
      if (trained[i].values()[j] != initial[i].values()[j]) ae_moved = true;
  CHECK(ae_moved);
}

TEST_CASE("adversarial loss evaluates to its closed forms") {
  ModelBundle bundle = make_mlp_bundle(3, 1.0);
  zero_classifier(bundle);  // all-zero classifier outputs exactly 0.5
  Tensor src = random_batch(4, 3, 11);
  Tensor tgt = random_batch(3, 3, 12);

  Tape tape(true);
  AdversarialLoss adv =
      weighted_adversarial_loss(tape, bundle, src, tgt, {1.0, 1.0, 1.0}, false, nullptr);
  CHECK(adv.lw == doctest::Approx(2.0 * std::log(0.5)).epsilon(1e-12));
  CHECK(adv.objective.item() == doctest::Approx(-adv.lw).epsilon(1e-12));
  CHECK(adv.target_terms.size() == 3);
  CHECK(adv.source_terms.size() == 4);
  for (double t : adv.target_terms) CHECK(t == doctest::Approx(std::log(0.5)));
  for (double s : adv.source_terms) CHECK(s == doctest::Approx(std::log(0.5)));

  // zero weights leave only the source term
  Tape t2(true);
  AdversarialLoss zero_w =
      weighted_adversarial_loss(t2, bundle, src, tgt, {0.0, 0.0, 0.0}, false, nullptr);
  CHECK(zero_w.lw == doctest::Approx(std::log(0.5)).epsilon(1e-12));

  // doubling every weight doubles the target term exactly
  Tape t3(true);
  AdversarialLoss doubled =
      weighted_adversarial_loss(t3, bundle, src, tgt, {2.0, 2.0, 2.0}, false, nullptr);
  double source_term = std::log(0.5);
  CHECK(doubled.lw - source_term ==
        doctest::Approx(2.0 * (adv.lw - source_term)).epsilon(1e-12));

  Tape t4(true);
  CHECK_THROWS_AS(weighted_adversarial_loss(t4, bundle, src, tgt, {1.0, 1.0}, false, nullptr),
                  DimensionError);
}

TEST_CASE("reversal scaling shapes encoder but not classifier gradients") {
  // identical parameters, two reversal coefficients: encoder gradients from
  // the adversarial objective scale linearly, classifier gradients match
  ModelBundle low = make_mlp_bundle(2, 0.4, 9);
  ModelBundle high = make_mlp_bundle(2, 0.8, 9);
  Tensor src = random_batch(6, 2, 21);
  Tensor tgt = random_batch(5, 2, 22);
  std::vector<double> weights(5, 1.0);

  auto grads = [&](ModelBundle& bundle) {
    Tape tape(true);
    AdversarialLoss adv = weighted_adversarial_loss(tape, bundle, src, tgt, weights, false, nullptr);
    Adam::zero_grad(bundle.all_params());
    tape.backward(adv.objective);
    std::vector<std::vector<double>> enc, cls;
    for (Tensor p : bundle.encoder.params()) enc.emplace_back(p.grad().begin(), p.grad().end());
    for (Tensor p : bundle.classifier_params()) cls.emplace_back(p.grad().begin(), p.grad().end());
    return std::pair(enc, cls);
  };
  auto [enc_low, cls_low] = grads(low);
  auto [enc_high, cls_high] = grads(high);

  double max_rel = 0;
  for (std::size_t i = 0; i < enc_low.size(); ++i)
    for (std::size_t j = 0; j < enc_low[i].size(); ++j) {
      double want = 2.0 * enc_low[i][j];
      double got = enc_high[i][j];
      max_rel = std::max(max_rel,
                         std::abs(got - want) / std::max({1e-12, std::abs(got), std::abs(want)}));
    }
  CHECK(max_rel < 1e-9);
  for (std::size_t i = 0; i < cls_low.size(); ++i)
    for (std::size_t j = 0; j < cls_low[i].size(); ++j)
      CHECK(cls_high[i][j] == doctest::Approx(cls_low[i][j]).epsilon(1e-12));
}

TEST_CASE("source reconstruction improves over five pretrain epochs") {
  // plain 2-D Gaussian toy set: no domain shift, no anomalies
  SynthConfig synth;
  synth.n_source = 200;
  synth.n_target = 200;
  synth.shift = 0.0;
  synth.rotation_deg = 0.0;
  synth.anomaly_rate = 0.0;
  DomainDataset ds = synth_domain_pair(synth, 0);
  TrainConfig cfg = toy_config();
  cfg.seed = 0;
  cfg.pretrain_epochs = 5;
  Trainer t(cfg, ds);
  t.pretrain_stage();
  const auto& rows = t.report().rows;
  REQUIRE(rows.size() == 5);
  int violations = 0;
  for (std::size_t i = 1; i < rows.size(); ++i)
    if (rows[i].source_recon >= rows[i - 1].source_recon) ++violations;
  CHECK(violations <= 1);
  CHECK(rows.back().source_recon < rows.front().source_recon);
}

TEST_CASE("stage two moves every parameter group and reports the adversarial loss") {
  DomainDataset ds = toy_dataset(8);
  TrainConfig cfg = toy_config();
  Trainer t(cfg, ds);
  t.pretrain_stage();
  std::vector<std::vector<double>> cls_before;
  for (Tensor p : t.bundle().classifier_params())
    cls_before.emplace_back(p.values().begin(), p.values().end());
  auto ae_before = snapshot(t.bundle());
  t.adversarial_stage();
  std::vector<std::vector<double>> cls_after;
  for (Tensor p : t.bundle().classifier_params())
    cls_after.emplace_back(p.values().begin(), p.values().end());
  CHECK(cls_before != cls_after);
  CHECK(ae_before != snapshot(t.bundle()));

  const auto& rows = t.report().rows;
  REQUIRE(rows.size() == 4);  // 2 pretrain + 2 adversarial
  CHECK(rows[0].stage == 1);
  CHECK(rows[3].stage == 2);
  CHECK(std::isnan(rows[0].adversarial_loss));
  // mean of clamped log-probability terms is necessarily nonpositive
  CHECK(rows[3].adversarial_loss <= 0.0);
  CHECK(std::isfinite(rows[3].adversarial_loss));
  CHECK(rows[3].epoch == 3);

  // calibration happened at the stage boundary: eta/beta now reflect the
  // measured losses, and the median-loss sample maps to weight one half
  CHECK(t.active_weights().eta < 0.0);
  CHECK(t.active_weights().beta > 0.0);
  CHECK(t.report().calibrated_eta == t.active_weights().eta);
  double median_loss = -t.active_weights().beta / t.active_weights().eta;
  std::vector<double> w =
      raw_weight({median_loss}, WeightConfig(t.active_weights().eta, t.active_weights().beta));
  CHECK(w[0] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("zero adversarial epochs leave the pretrained model unchanged") {
  DomainDataset ds = toy_dataset(10);
  TrainConfig cfg = toy_config();
  cfg.adversarial_epochs = 0;
  Trainer t(cfg, ds);
  t.pretrain_stage();
  auto before = snapshot(t.bundle());
  t.adversarial_stage();  // calibrates, then runs nothing
  CHECK(before == snapshot(t.bundle()));
  CHECK(t.report().rows.size() == 2);
}

TEST_CASE("nan parameters abort training with stage and batch context") {
  DomainDataset ds = toy_dataset(12);
  TrainConfig cfg = toy_config();
  Trainer t(cfg, ds);
  t.bundle().ae_params()[0].values()[0] = std::numeric_limits<double>::quiet_NaN();
  try {
    t.pretrain_epoch(0);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    std::string msg = e.what();
    CHECK(msg.find("stage 1") != std::string::npos);
    CHECK(msg.find("epoch 0") != std::string::npos);
    CHECK(msg.find("batch 0") != std::string::npos);
  }
}

TEST_CASE("two runs with one config produce bit-identical models and reports") {
  DomainDataset ds = toy_dataset(14);
  TrainConfig cfg = toy_config();
  cfg.adversarial_epochs = 3;
  Trainer a(cfg, ds), b(cfg, ds);
  a.pretrain_stage();
  a.adversarial_stage();
  b.pretrain_stage();
  b.adversarial_stage();
  CHECK(snapshot(a.bundle()) == snapshot(b.bundle()));
  REQUIRE(a.report().rows.size() == b.report().rows.size());
  for (std::size_t i = 0; i < a.report().rows.size(); ++i)
    CHECK(rows_identical(a.report().rows[i], b.report().rows[i]));
  CHECK(same_doubles(a.report().calibrated_eta, b.report().calibrated_eta));
}

TEST_CASE("eval-mode losses drive the weights and ignore dropout") {
  DomainDataset ds = toy_dataset(16);
  TrainConfig cfg = toy_config();
  Trainer t(cfg, ds);
  Matrix tgt = ds.target_train();
  std::vector<double> a = eval_recon_losses(t.bundle(), tgt);
  std::vector<double> b = eval_recon_losses(t.bundle(), tgt);
  CHECK(a == b);  // repeated eval calls are identical
  CHECK(a.size() == static_cast<std::size_t>(tgt.rows));
  for (double v : a) CHECK(v >= 0.0);
}

TEST_CASE("loss report csv lists one row per epoch") {
  DomainDataset ds = toy_dataset(18);
  TrainConfig cfg = toy_config();
  cfg.pretrain_epochs = 1;
  cfg.adversarial_epochs = 1;
  Trainer t(cfg, ds);
  t.pretrain_stage();
  t.adversarial_stage();
  std::string path = (std::filesystem::temp_directory_path() / "adt_loss_report.csv").string();
  write_loss_report_csv(path, t.report());
  std::ifstream is(path);
  std::string line;
  std::getline(is, line);
  CHECK(line ==
        "epoch,stage,source_recon,target_recon,target_normal_recon,"
        "target_anomaly_recon,separation_gap,adversarial_loss,classifier_accuracy");
  int rows = 0;
  while (std::getline(is, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 2);
  is.close();
  std::filesystem::remove(path);
}
