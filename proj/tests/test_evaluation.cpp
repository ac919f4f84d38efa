#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "adt/errors.hpp"
#include "adt/evaluation.hpp"

using namespace adt;

namespace {

std::string temp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

double pairwise_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  double num = 0;
  std::int64_t pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      ++pairs;
      if (scores[i] > scores[j])
        num += 1.0;
      else if (scores[i] == scores[j])
        num += 0.5;
    }
  }
  return num / static_cast<double>(pairs);
}

DomainDataset quick_dataset(std::uint64_t seed, std::int64_t n = 160) {
  SynthConfig cfg;
  cfg.n_source = n;
  cfg.n_target = n;
  return synth_domain_pair(cfg, seed);
}

TrainConfig quick_config() {
  TrainConfig cfg;
  cfg.arch = Arch::Mlp;
  cfg.batch_size = 32;
  cfg.pretrain_epochs = 2;
  cfg.adversarial_epochs = 2;
  cfg.seed = 33;
  return cfg;
}

ModelBundle small_bundle(std::uint64_t seed = 3) {
  ModelConfig mc;
  mc.arch = Arch::Mlp;
  mc.input_shape = {2};
  Rng rng(seed);
  return build_model(mc, rng);
}

std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("roc auc reproduces the worked example") {
  auto [auc, points] = roc_auc({0.1, 0.4, 0.35, 0.8}, {0, 0, 1, 1});
  CHECK(auc == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(points.front().fpr == 0.0);
  CHECK(points.front().tpr == 0.0);
  CHECK(points.back().fpr == 1.0);
  CHECK(points.back().tpr == 1.0);
}

TEST_CASE("roc auc endpoints and degenerate inputs") {
  auto [perfect, p1] = roc_auc({1.0, 2.0, 10.0, 11.0}, {0, 0, 1, 1});
  CHECK(perfect == 1.0);
  auto [inverted, p2] = roc_auc({10.0, 11.0, 1.0, 2.0}, {0, 0, 1, 1});
  CHECK(inverted == 0.0);
  auto [ties, p3] = roc_auc({5.0, 5.0, 5.0, 5.0}, {0, 1, 0, 1});
  CHECK(ties == doctest::Approx(0.5).epsilon(1e-12));
  CHECK_THROWS_AS(roc_auc({1.0, 2.0}, {1, 1}), ConfigError);
  CHECK_THROWS_AS(roc_auc({1.0, 2.0}, {0, 0}), ConfigError);
  CHECK_THROWS_AS(roc_auc({1.0, 2.0, 3.0}, {0, 1}), DimensionError);
  CHECK_THROWS_AS(roc_auc({1.0, std::nan("")}, {0, 1}), NumericError);
}

TEST_CASE("roc auc equals the pairwise oracle on randomized instances") {
  Rng rng(77);
  for (int trial = 0; trial < 100; ++trial) {
    auto n = static_cast<std::int64_t>(rng.uniform(2.0, 200.0));
    std::vector<double> scores;
    std::vector<int> labels;
    for (std::int64_t i = 0; i < n; ++i) {
      // half the scores land on a coarse grid so ties are common
      double s = rng.uniform(0.0, 1.0);
      if (rng.uniform(0.0, 1.0) < 0.5) s = std::floor(s * 8.0) / 8.0;
      scores.push_back(s);
      labels.push_back(rng.uniform(0.0, 1.0) < 0.4 ? 1 : 0);
    }
    labels[0] = 0;  // force both classes
    labels[static_cast<std::size_t>(n - 1)] = 1;
    auto [auc, points] = roc_auc(scores, labels);
    CHECK(std::abs(auc - pairwise_auc(scores, labels)) < 1e-12);

    // the curve walks monotonically from (0,0) to (1,1)
    for (std::size_t i = 1; i < points.size(); ++i) {
      CHECK(points[i].fpr >= points[i - 1].fpr);
      CHECK(points[i].tpr >= points[i - 1].tpr);
    }
    CHECK(points.back().fpr == doctest::Approx(1.0));
    CHECK(points.back().tpr == doctest::Approx(1.0));
  }
}

TEST_CASE("auc is invariant under strictly monotone score transforms") {
  Rng rng(5);
  std::vector<double> scores;
  std::vector<int> labels;
  for (int i = 0; i < 60; ++i) {
    double s = std::floor(rng.uniform(0.0, 1.0) * 16.0) / 16.0;
    scores.push_back(s);
    labels.push_back(i % 3 == 0 ? 1 : 0);
  }
  std::vector<double> transformed;
  for (double s : scores) transformed.push_back(std::exp(2.0 * s) + s * s * s);
  CHECK(roc_auc(scores, labels).first == roc_auc(transformed, labels).first);
}

TEST_CASE("anomaly scores are deterministic, nonnegative, and row-aligned") {
  ModelBundle bundle = small_bundle();
  DomainDataset ds = quick_dataset(21);
  Matrix rows = ds.target_eval();
  std::vector<double> a = anomaly_scores(bundle, rows);
  std::vector<double> b = anomaly_scores(bundle, rows);
  CHECK(a == b);
  CHECK(a.size() == static_cast<std::size_t>(rows.rows));
  for (double s : a) CHECK(s >= 0.0);

  // permuting the rows permutes the scores
  std::vector<std::int64_t> perm;
  for (std::int64_t i = rows.rows - 1; i >= 0; --i) perm.push_back(i);
  std::vector<double> rev = anomaly_scores(bundle, rows.select(perm));
  for (std::size_t i = 0; i < a.size(); ++i)
    CHECK(rev[i] == doctest::Approx(a[a.size() - 1 - i]).epsilon(1e-12));
}

TEST_CASE("loss histogram bins every sample once on shared edges") {
  ModelBundle bundle = small_bundle();
  DomainDataset ds = quick_dataset(23);
  Histogram h = loss_histogram(bundle, ds, 12);
  REQUIRE(h.edges.size() == 13);
  for (std::size_t i = 1; i < h.edges.size(); ++i) CHECK(h.edges[i] > h.edges[i - 1]);
  std::int64_t src_total = 0, normal_total = 0, anomaly_total = 0;
  for (std::size_t b = 0; b < 12; ++b) {
    src_total += h.src[b];
    normal_total += h.tgt_normal[b];
    anomaly_total += h.tgt_anomaly[b];
  }
  CHECK(src_total == ds.source_eval().rows);
  std::int64_t anomalies_expected = 0;
  for (int l : ds.target_eval_labels()) anomalies_expected += l;
  CHECK(anomaly_total == anomalies_expected);
  CHECK(normal_total + anomaly_total == ds.target_eval().rows);

  // an anomaly-free mixture fills only the normal column
  SynthConfig clean;
  clean.n_source = 60;
  clean.n_target = 60;
  clean.anomaly_rate = 0.0;
  DomainDataset pure = synth_domain_pair(clean, 9);
  Histogram h2 = loss_histogram(bundle, pure, 6);
  for (std::int64_t c : h2.tgt_anomaly) CHECK(c == 0);

  CHECK_THROWS_AS(loss_histogram(bundle, ds, 0), ConfigError);

  std::string path = temp_path("adt_hist.csv");
  write_histogram_csv(path, h);
  std::string text = read_file(path);
  CHECK(text.find("bin_lo,bin_hi,src,tgt_normal,tgt_anomaly") == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 13);
  std::filesystem::remove(path);
}

TEST_CASE("separation gap is the difference of population means") {
  CHECK(separation_gap({1.0, 2.0, 3.0}, {1.0, 2.0, 3.0}) == 0.0);
  double base = separation_gap({0.5, 1.5}, {2.0, 4.0});
  CHECK(base == doctest::Approx(2.0));
  // shifting every anomaly score up by c raises the gap by exactly c
  double shifted = separation_gap({0.5, 1.5}, {2.7, 4.7});
  CHECK(shifted - base == doctest::Approx(0.7).epsilon(1e-12));
  CHECK_THROWS_AS(separation_gap({}, {1.0}), ConfigError);
  CHECK_THROWS_AS(separation_gap({1.0}, {}), ConfigError);
}

TEST_CASE("domain probe separates shifted domains but not identical ones") {
  // untrained encoders preserve the raw separation (or its absence):
  // the probe measures the feature space, not the training history
  SynthConfig shifted;
  shifted.n_source = 240;
  shifted.n_target = 240;
  DomainDataset far = synth_domain_pair(shifted, 31);
  ModelBundle bundle = small_bundle(4);
  double acc_far = domain_probe_accuracy(bundle, far, 100);
  CHECK(acc_far > 0.8);

  SynthConfig same;
  same.n_source = 240;
  same.n_target = 240;
  same.shift = 0.0;
  same.rotation_deg = 0.0;
  same.anomaly_rate = 0.0;
  DomainDataset near = synth_domain_pair(same, 32);
  double acc_near = domain_probe_accuracy(bundle, near, 100);
  CHECK(acc_near > 0.35);
  CHECK(acc_near < 0.65);

  // deterministic given the seed
  CHECK(domain_probe_accuracy(bundle, far, 100) == acc_far);
}

TEST_CASE("pipeline returns aligned reports and is reproducible") {
  DomainDataset ds = quick_dataset(41);
  TrainConfig cfg = quick_config();
  PipelineResult a = run_pipeline(cfg, ds);
  PipelineResult b = run_pipeline(cfg, ds);

  REQUIRE(a.losses.rows.size() == 4);
  CHECK(a.eval.gap_trajectory.size() == 4);
  CHECK(a.eval.scores.size() == static_cast<std::size_t>(ds.target_eval().rows));
  CHECK(a.eval.auc >= 0.0);
  CHECK(a.eval.auc <= 1.0);
  CHECK(std::isfinite(a.eval.separation_gap));
  CHECK(a.losses.probe_accuracy_after_pretrain >= 0.0);
  CHECK(a.losses.probe_accuracy_final >= 0.0);

  CHECK(a.eval.scores == b.eval.scores);
  CHECK(a.eval.auc == b.eval.auc);
  CHECK(a.losses.probe_accuracy_after_pretrain == b.losses.probe_accuracy_after_pretrain);
  CHECK(a.losses.calibrated_eta == b.losses.calibrated_eta);
}

TEST_CASE("pipeline cadence emits loadable checkpoints and histograms") {
  DomainDataset ds = quick_dataset(43);
  TrainConfig cfg = quick_config();
  cfg.pretrain_epochs = 1;
  cfg.adversarial_epochs = 2;
  cfg.checkpoint_every = 3;  // epochs 0,1,2 -> fires at global epoch 2
  cfg.histogram_every = 2;
  std::string dir = temp_path("adt_pipeline_out");
  std::filesystem::create_directories(dir);
  cfg.out_dir = dir;
  run_pipeline(cfg, ds);
  CHECK(std::filesystem::exists(dir + "/ckpt_epoch002.ckpt"));
  CHECK(std::filesystem::exists(dir + "/hist_epoch001.csv"));
  Rng rng(0);
  ModelBundle restored = load_checkpoint(dir + "/ckpt_epoch002.ckpt", rng);
  CHECK(restored.config.arch == Arch::Mlp);
  std::filesystem::remove_all(dir);

  cfg.out_dir.clear();
  CHECK_THROWS_AS(run_pipeline(cfg, ds), ConfigError);
}

TEST_CASE("baseline with zero fine-tune epochs equals source-only training") {
  DomainDataset ds = quick_dataset(45);
  TrainConfig cfg = quick_config();
  cfg.adversarial_epochs = 0;
  EvalReport base = baseline_finetune(cfg, ds);

  TrainConfig src_only = cfg;
  src_only.lambda = 0.0;  // stage 1 with lambda 0 is source-only training
  Trainer t(src_only, ds);
  t.pretrain_stage();
  std::vector<double> scores = anomaly_scores(t.bundle(), ds.target_eval());
  REQUIRE(base.scores.size() == scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) CHECK(base.scores[i] == scores[i]);

  // reproducible, and fine-tuning changes the outcome
  cfg.adversarial_epochs = 2;
  EvalReport f1 = baseline_finetune(cfg, ds);
  EvalReport f2 = baseline_finetune(cfg, ds);
  CHECK(f1.scores == f2.scores);
  CHECK(f1.scores != base.scores);
  CHECK(f1.auc >= 0.0);
  CHECK(f1.auc <= 1.0);
}

TEST_CASE("a one-point sweep reduces to the pipeline it wraps") {
  TrainConfig cfg = quick_config();
  cfg.pretrain_epochs = 1;
  cfg.adversarial_epochs = 1;
  auto factory = [](double rate, std::uint64_t seed) {
    SynthConfig synth;
    synth.n_source = 120;
    synth.n_target = 120;
    synth.anomaly_rate = rate;
    return synth_domain_pair(synth, seed);
  };
  std::vector<SweepPoint> points = sweep(cfg, SweepAxis::AnomalyRate, {0.25}, 2, factory, true);
  REQUIRE(points.size() == 1);
  REQUIRE(points[0].aucs.size() == 2);
  REQUIRE(points[0].baseline_aucs.size() == 2);

  TrainConfig direct = cfg;
  direct.seed = cfg.seed;  // repeat 0 runs at the base seed
  PipelineResult res = run_pipeline(direct, factory(0.25, direct.seed));
  CHECK(points[0].aucs[0] == res.eval.auc);
  CHECK(points[0].median_auc == doctest::Approx(0.5 * (points[0].aucs[0] + points[0].aucs[1])));
  CHECK(points[0].spread ==
        doctest::Approx(std::abs(points[0].aucs[0] - points[0].aucs[1])).epsilon(1e-12));

  CHECK_THROWS_AS(sweep(cfg, SweepAxis::AnomalyRate, {}, 2, factory, false), ConfigError);
  CHECK_THROWS_AS(sweep(cfg, SweepAxis::AnomalyRate, {0.25}, 0, factory, false), ConfigError);
}

TEST_CASE("sweep csv carries one auc column per repeat") {
  std::vector<SweepPoint> points(2);
  points[0] = {0.05, {0.9, 0.92, 0.91}, {0.8, 0.81, 0.82}, 0.91, 0.02, 0.81};
  points[1] = {0.45, {0.85, 0.88, 0.86}, {0.6, 0.62, 0.61}, 0.86, 0.03, 0.61};
  std::string path = temp_path("adt_sweep.csv");
  write_sweep_csv(path, "anomaly_rate", points, 3, true);
  std::string text = read_file(path);
  CHECK(text.find("anomaly_rate,median_auc,spread,auc_r1,auc_r2,auc_r3,"
                  "baseline_median,baseline_r1,baseline_r2,baseline_r3") == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 3);
  std::filesystem::remove(path);

  write_sweep_csv(path, "w_adloss", {points[0]}, 3, false);
  std::string no_baseline = read_file(path);
  CHECK(no_baseline.find("baseline") == std::string::npos);
  std::filesystem::remove(path);
}

TEST_CASE("metrics json is deterministic and echoes the config") {
  DomainDataset ds = quick_dataset(47);
  TrainConfig cfg = quick_config();
  cfg.pretrain_epochs = 1;
  cfg.adversarial_epochs = 1;
  PipelineResult res = run_pipeline(cfg, ds);
  std::string p1 = temp_path("adt_metrics_1.json");
  std::string p2 = temp_path("adt_metrics_2.json");
  write_metrics_json(p1, res.eval, res.losses, cfg);
  write_metrics_json(p2, res.eval, res.losses, cfg);
  std::string a = read_file(p1);
  CHECK(a == read_file(p2));
  CHECK(a.find("\"auc\"") != std::string::npos);
  CHECK(a.find("\"seed\": \"33\"") != std::string::npos);
  CHECK(a.find("\"arch\": \"mlp\"") != std::string::npos);
  CHECK(a.find("\"gap_trajectory\"") != std::string::npos);

  std::string rp = temp_path("adt_roc.csv");
  write_roc_csv(rp, res.eval.roc_points);
  std::string roc = read_file(rp);
  CHECK(roc.find("fpr,tpr") == 0);
  CHECK(std::count(roc.begin(), roc.end(), '\n') ==
        static_cast<std::int64_t>(res.eval.roc_points.size()) + 1);
  std::filesystem::remove(p1);
  std::filesystem::remove(p2);
  std::filesystem::remove(rp);
}

TEST_CASE("median helper handles odd, even, and empty inputs") {
  CHECK(median_of({3.0, 1.0, 2.0}) == 2.0);
  CHECK(median_of({4.0, 1.0, 2.0, 3.0}) == 2.5);
  CHECK(std::isnan(median_of({})));
}
