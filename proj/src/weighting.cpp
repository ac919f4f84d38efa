#include "adt/weighting.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace adt {

namespace {

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

std::vector<double> raw_weight(const std::vector<double>& losses, const WeightConfig& cfg) {
  std::vector<double> out;
  out.reserve(losses.size());
  for (double l : losses) {
    if (l < 0.0) throw ConfigError("raw_weight: reconstruction losses must be >= 0");
    out.push_back(stable_sigmoid(cfg.eta * l + cfg.beta));
  }
  return out;
}

std::vector<double> normalize_weights(const std::vector<double>& raw) {
  if (raw.empty()) throw ConfigError("normalize_weights: empty batch");
  double mean = 0.0;
  for (double w : raw) mean += w;
  mean /= static_cast<double>(raw.size());
  if (mean <= 0.0) throw NumericError("normalize_weights: batch mean is not positive");
  std::vector<double> out;
  out.reserve(raw.size());
  for (double w : raw) out.push_back(w / mean);
  return out;
}

std::pair<double, double> calibrate(const std::vector<double>& pretrain_losses) {
  if (pretrain_losses.empty()) throw ConfigError("calibrate: empty loss vector");
  double med = median_of(pretrain_losses);
  if (med < 1e-12) return {-1.0, 1.0};  // degenerate: everything reconstructs perfectly
  double eta = -1.0 / med;
  double beta = -eta * med;  // the median sample's sigmoid argument cancels exactly
  return {eta, beta};
}

SampleWeights compute_weights(const std::vector<double>& losses, const WeightConfig& cfg) {
  SampleWeights w;
  w.raw = raw_weight(losses, cfg);
  w.normalized = cfg.normalize ? normalize_weights(w.raw) : w.raw;
  return w;
}

void write_weight_csv(const std::string& path, const std::vector<std::int64_t>& sample_ids,
                      const std::vector<double>& losses, const SampleWeights& weights) {
  if (sample_ids.size() != losses.size() || losses.size() != weights.raw.size() ||
      weights.raw.size() != weights.normalized.size())
    throw DimensionError("write_weight_csv: column lengths disagree");
  std::ofstream os(path);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  os << "sample_id,recon_loss,raw_weight,normalized_weight\n";
  char buf[96];
  for (std::size_t i = 0; i < sample_ids.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%lld,%.17g,%.17g,%.17g\n",
                  static_cast<long long>(sample_ids[i]), losses[i], weights.raw[i],
                  weights.normalized[i]);
    os << buf;
  }
  if (!os) throw IoError("write failed for '" + path + "'");
}

}  // namespace adt
