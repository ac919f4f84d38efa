#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "adt/rng.hpp"
#include "adt/weighting.hpp"

using namespace adt;

TEST_CASE("weight config enforces the sign constraints") {
  CHECK_NOTHROW(WeightConfig(-1.0, 1.0));
  CHECK_THROWS_AS(WeightConfig(0.0, 1.0), ConfigError);
  CHECK_THROWS_AS(WeightConfig(1.0, 1.0), ConfigError);
  CHECK_THROWS_AS(WeightConfig(-1.0, 0.0), ConfigError);
  CHECK_THROWS_AS(WeightConfig(-1.0, -2.0), ConfigError);
}

TEST_CASE("raw weights follow the loss sigmoid") {
  WeightConfig cfg(-1.0, 1.0);
  auto w = raw_weight({1.0, 0.0}, cfg);
  CHECK(w[0] == 0.5);  // argument cancels exactly
  CHECK(w[1] == doctest::Approx(0.7310585786300049).epsilon(1e-12));
  CHECK_THROWS_AS(raw_weight({-0.1}, cfg), ConfigError);
}

TEST_CASE("larger loss always means smaller raw weight") {
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    WeightConfig cfg(-std::exp(rng.normal()), std::exp(rng.normal()));
    std::vector<double> losses;
    for (int i = 0; i < 32; ++i) losses.push_back(std::abs(rng.normal()) * 3.0);
    auto w = raw_weight(losses, cfg);
    for (std::size_t i = 0; i < losses.size(); ++i) {
      CHECK(w[i] > 0.0);
      CHECK(w[i] < 1.0);
      for (std::size_t j = 0; j < losses.size(); ++j)
        if (losses[i] < losses[j]) CHECK(w[i] > w[j]);
    }
  }
}

TEST_CASE("raw weights are permutation-equivariant and pure") {
  WeightConfig cfg(-2.0, 0.5);
  std::vector<double> losses{0.1, 0.9, 0.4, 0.0};
  auto w1 = raw_weight(losses, cfg);
  auto w2 = raw_weight(losses, cfg);
  CHECK(w1 == w2);
  std::vector<double> rev(losses.rbegin(), losses.rend());
  auto wr = raw_weight(rev, cfg);
  for (std::size_t i = 0; i < losses.size(); ++i) CHECK(w1[i] == wr[losses.size() - 1 - i]);
}

TEST_CASE("normalization scales the batch mean to one") {
  auto one = normalize_weights({0.5, 0.5});
  CHECK(one[0] == 1.0);
  CHECK(one[1] == 1.0);

  auto two = normalize_weights({0.2, 0.6});
  CHECK(two[0] == doctest::Approx(0.5));
  CHECK(two[1] == doctest::Approx(1.5));

  Rng rng(2);
  std::vector<double> raw;
  for (int i = 0; i < 101; ++i) raw.push_back(0.05 + 0.9 * rng.uniform());
  auto norm = normalize_weights(raw);
  double mean = 0;
  for (double w : norm) mean += w;
  mean /= static_cast<double>(norm.size());
  CHECK(std::abs(mean - 1.0) < 1e-9);

  // argsort unchanged
  for (std::size_t i = 0; i < raw.size(); ++i)
    for (std::size_t j = 0; j < raw.size(); ++j)
      if (raw[i] < raw[j]) CHECK(norm[i] < norm[j]);

  CHECK_THROWS_AS(normalize_weights({}), ConfigError);
}

TEST_CASE("calibration puts the median sample at weight one half") {
  auto [eta, beta] = calibrate({2.0, 2.0, 2.0});
  CHECK(eta < 0.0);
  CHECK(beta > 0.0);
  WeightConfig cfg(eta, beta);
  for (double w : raw_weight({2.0, 2.0, 2.0}, cfg)) CHECK(w == 0.5);

  // even-length vector: median is the midpoint of the central pair
  auto [eta2, beta2] = calibrate({1.0, 3.0});
  auto w2 = raw_weight({2.0}, WeightConfig(eta2, beta2));
  CHECK(w2[0] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("calibration is scale-free in the loss units") {
  std::vector<double> losses{0.1, 0.25, 0.4, 0.8, 1.6};
  auto [eta1, beta1] = calibrate(losses);
  std::vector<double> doubled;
  for (double l : losses) doubled.push_back(2.0 * l);
  auto [eta2, beta2] = calibrate(doubled);
  auto w1 = raw_weight(losses, WeightConfig(eta1, beta1));
  auto w2 = raw_weight(doubled, WeightConfig(eta2, beta2));
  for (std::size_t i = 0; i < w1.size(); ++i)
    CHECK(w1[i] == doctest::Approx(w2[i]).epsilon(1e-12));
}

TEST_CASE("calibration falls back on degenerate losses") {
  auto [eta, beta] = calibrate({0.0, 0.0, 0.0});
  CHECK(eta == -1.0);
  CHECK(beta == 1.0);
  CHECK_THROWS_AS(calibrate({}), ConfigError);
}

TEST_CASE("anomalous-looking losses get suppressed after calibration") {
  // target mixture: many small normal losses, a few large anomalous ones
  std::vector<double> losses;
  Rng rng(3);
  for (int i = 0; i < 90; ++i) losses.push_back(0.05 + 0.02 * rng.uniform());
  for (int i = 0; i < 10; ++i) losses.push_back(1.5 + 0.5 * rng.uniform());
  auto [eta, beta] = calibrate(losses);
  SampleWeights w = compute_weights(losses, WeightConfig(eta, beta));
  double normal_mean = 0, anomaly_mean = 0;
  for (int i = 0; i < 90; ++i) normal_mean += w.normalized[i];
  for (int i = 90; i < 100; ++i) anomaly_mean += w.normalized[i];
  normal_mean /= 90;
  anomaly_mean /= 10;
  CHECK(anomaly_mean < 0.1 * normal_mean);

  double mean = 0;
  for (double v : w.normalized) mean += v;
  CHECK(std::abs(mean / 100.0 - 1.0) < 1e-9);
}

TEST_CASE("weight dump round-trips through CSV") {
  std::string path =
      (std::filesystem::temp_directory_path() / "adt_weights_test.csv").string();
  std::vector<std::int64_t> ids{7, 8, 9};
  std::vector<double> losses{0.125, 0.5, 2.0};
  SampleWeights w = compute_weights(losses, WeightConfig(-1.0, 1.0));
  write_weight_csv(path, ids, losses, w);

  std::ifstream is(path);
  std::string header;
  std::getline(is, header);
  CHECK(header == "sample_id,recon_loss,raw_weight,normalized_weight");
  for (std::size_t i = 0; i < ids.size(); ++i) {
    std::string line;
    REQUIRE(std::getline(is, line));
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream row(line);
    long long id;
    double loss, raw, norm;
    row >> id >> loss >> raw >> norm;
    CHECK(id == ids[i]);
    CHECK(loss == losses[i]);  // %.17g preserves doubles exactly
    CHECK(raw == w.raw[i]);
    CHECK(norm == w.normalized[i]);
  }
  std::filesystem::remove(path);

  CHECK_THROWS_AS(write_weight_csv(path, {1}, losses, w), DimensionError);
}
