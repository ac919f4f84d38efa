#include "adt/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "adt/errors.hpp"

namespace adt {

// ---- Matrix ----------------------------------------------------------------

std::span<const double> Matrix::row(std::int64_t i) const {
  if (i < 0 || i >= rows) throw DimensionError("matrix row " + std::to_string(i) + " out of range");
  std::int64_t f = features();
  return {data.data() + i * f, static_cast<std::size_t>(f)};
}

Tensor Matrix::gather(const std::vector<std::int64_t>& idx) const {
  if (idx.empty()) throw DimensionError("gather: empty row selection");
  Shape shape{static_cast<std::int64_t>(idx.size())};
  shape.insert(shape.end(), sample_shape.begin(), sample_shape.end());
  Tensor out = Tensor::zeros(std::move(shape));
  std::int64_t f = features();
  double* dst = out.values().data();
  for (std::size_t b = 0; b < idx.size(); ++b) {
    std::span<const double> r = row(idx[b]);
    std::memcpy(dst + static_cast<std::int64_t>(b) * f, r.data(), sizeof(double) * r.size());
  }
  return out;
}

Tensor Matrix::all() const {
  std::vector<std::int64_t> idx(static_cast<std::size_t>(rows));
  for (std::int64_t i = 0; i < rows; ++i) idx[static_cast<std::size_t>(i)] = i;
  return gather(idx);
}

Matrix Matrix::select(const std::vector<std::int64_t>& idx) const {
  Matrix out;
  out.sample_shape = sample_shape;
  out.rows = static_cast<std::int64_t>(idx.size());
  std::int64_t f = features();
  out.data.resize(idx.size() * static_cast<std::size_t>(f));
  for (std::size_t b = 0; b < idx.size(); ++b) {
    std::span<const double> r = row(idx[b]);
    std::memcpy(out.data.data() + static_cast<std::int64_t>(b) * f, r.data(),
                sizeof(double) * r.size());
  }
  return out;
}

// ---- DomainDataset ---------------------------------------------------------

TrainView DomainDataset::train_view() const {
  return {source_train(), target_train(), target_train_idx};
}

namespace {

std::vector<int> labels_at(const std::vector<int>& labels, const std::vector<std::int64_t>& idx) {
  if (labels.empty()) return {};
  std::vector<int> out;
  out.reserve(idx.size());
  for (std::int64_t i : idx) out.push_back(labels.at(static_cast<std::size_t>(i)));
  return out;
}

}  // namespace

std::vector<int> DomainDataset::target_eval_labels() const {
  return labels_at(target_labels, target_eval_idx);
}

std::vector<int> DomainDataset::target_train_labels() const {
  return labels_at(target_labels, target_train_idx);
}

void assign_splits(DomainDataset& ds, std::uint64_t seed) {
  Rng base(seed);
  auto halve = [](std::vector<std::int64_t> order, std::vector<std::int64_t>& train,
                  std::vector<std::int64_t>& eval_half) {
    std::size_t cut = order.size() / 2;
    train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(cut));
    eval_half.assign(order.begin() + static_cast<std::ptrdiff_t>(cut), order.end());
  };
  Rng sr = base.fork(101);
  Rng tr = base.fork(102);
  halve(permutation(ds.source.rows, sr), ds.source_train_idx, ds.source_eval_idx);
  halve(permutation(ds.target.rows, tr), ds.target_train_idx, ds.target_eval_idx);
}

// ---- IDX -------------------------------------------------------------------

namespace {

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

std::vector<std::uint8_t> slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)),
                                  std::istreambuf_iterator<char>());
  return bytes;
}

std::uint32_t read_u32be(const std::vector<std::uint8_t>& b, std::size_t at,
                         const std::string& path, const char* what) {
  if (at + 4 > b.size())
    throw FormatError("'" + path + "': truncated " + what + " at byte offset " +
                      std::to_string(b.size()));
  return (static_cast<std::uint32_t>(b[at]) << 24) | (static_cast<std::uint32_t>(b[at + 1]) << 16) |
         (static_cast<std::uint32_t>(b[at + 2]) << 8) | static_cast<std::uint32_t>(b[at + 3]);
}

void put_u32be(std::ostream& os, std::uint32_t v) {
  unsigned char buf[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
  os.write(reinterpret_cast<const char*>(buf), 4);
}

}  // namespace

IdxImages parse_idx_images(const std::string& path) {
  std::vector<std::uint8_t> b = slurp(path);
  std::uint32_t magic = read_u32be(b, 0, path, "magic");
  if (magic != kIdxImagesMagic) {
    char hex[16];
    std::snprintf(hex, sizeof hex, "0x%08x", magic);
    throw FormatError("'" + path + "': bad image magic " + hex + " at byte offset 0");
  }
  IdxImages out;
  out.count = read_u32be(b, 4, path, "image count");
  out.height = read_u32be(b, 8, path, "image height");
  out.width = read_u32be(b, 12, path, "image width");
  std::size_t need = static_cast<std::size_t>(out.count) * static_cast<std::size_t>(out.height) *
                     static_cast<std::size_t>(out.width);
  if (b.size() < 16 + need)
    throw FormatError("'" + path + "': truncated pixel payload at byte offset " +
                      std::to_string(b.size()) + " (need " + std::to_string(16 + need) + " bytes)");
  if (b.size() > 16 + need)
    throw FormatError("'" + path + "': trailing bytes at byte offset " + std::to_string(16 + need));
  out.bytes.assign(b.begin() + 16, b.end());
  return out;
}

std::vector<int> parse_idx_labels(const std::string& path) {
  std::vector<std::uint8_t> b = slurp(path);
  std::uint32_t magic = read_u32be(b, 0, path, "magic");
  if (magic != kIdxLabelsMagic) {
    char hex[16];
    std::snprintf(hex, sizeof hex, "0x%08x", magic);
    throw FormatError("'" + path + "': bad label magic " + hex + " at byte offset 0");
  }
  std::size_t count = read_u32be(b, 4, path, "label count");
  if (b.size() < 8 + count)
    throw FormatError("'" + path + "': truncated label payload at byte offset " +
                      std::to_string(b.size()) + " (need " + std::to_string(8 + count) + " bytes)");
  if (b.size() > 8 + count)
    throw FormatError("'" + path + "': trailing bytes at byte offset " + std::to_string(8 + count));
  std::vector<int> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(b[8 + i]);
  return out;
}

void write_idx_images(const std::string& path, const IdxImages& images) {
  std::size_t need = static_cast<std::size_t>(images.count) *
                     static_cast<std::size_t>(images.height) *
                     static_cast<std::size_t>(images.width);
  if (images.bytes.size() != need)
    throw DimensionError("write_idx_images: byte count " + std::to_string(images.bytes.size()) +
                         " does not match dims (need " + std::to_string(need) + ")");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  put_u32be(os, kIdxImagesMagic);
  put_u32be(os, static_cast<std::uint32_t>(images.count));
  put_u32be(os, static_cast<std::uint32_t>(images.height));
  put_u32be(os, static_cast<std::uint32_t>(images.width));
  os.write(reinterpret_cast<const char*>(images.bytes.data()),
           static_cast<std::streamsize>(images.bytes.size()));
  if (!os) throw IoError("write failed for '" + path + "'");
}

void write_idx_labels(const std::string& path, const std::vector<int>& labels) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  put_u32be(os, kIdxLabelsMagic);
  put_u32be(os, static_cast<std::uint32_t>(labels.size()));
  for (int l : labels) {
    if (l < 0 || l > 255) throw ConfigError("write_idx_labels: label out of byte range");
    unsigned char c = static_cast<unsigned char>(l);
    os.write(reinterpret_cast<const char*>(&c), 1);
  }
  if (!os) throw IoError("write failed for '" + path + "'");
}

std::pair<IdxImages, std::vector<int>> load_idx_pair(const std::string& images_path,
                                                     const std::string& labels_path) {
  IdxImages images = parse_idx_images(images_path);
  std::vector<int> labels = parse_idx_labels(labels_path);
  if (static_cast<std::size_t>(images.count) != labels.size())
    throw FormatError("'" + images_path + "' has " + std::to_string(images.count) +
                      " images but '" + labels_path + "' has " + std::to_string(labels.size()) +
                      " labels");
  return {std::move(images), std::move(labels)};
}

std::vector<double> bilinear_resize(std::span<const double> src, std::int64_t h, std::int64_t w,
                                    std::int64_t oh, std::int64_t ow) {
  if (h < 1 || w < 1 || oh < 1 || ow < 1) throw DimensionError("bilinear_resize: extents must be >= 1");
  if (static_cast<std::int64_t>(src.size()) != h * w)
    throw DimensionError("bilinear_resize: plane size mismatch");
  std::vector<double> out(static_cast<std::size_t>(oh * ow));
  for (std::int64_t y = 0; y < oh; ++y) {
    double sy = (oh > 1 && h > 1) ? static_cast<double>(y) * (h - 1) / (oh - 1) : 0.0;
    std::int64_t y0 = static_cast<std::int64_t>(sy);
    std::int64_t y1 = std::min(y0 + 1, h - 1);
    double fy = sy - static_cast<double>(y0);
    for (std::int64_t x = 0; x < ow; ++x) {
      double sx = (ow > 1 && w > 1) ? static_cast<double>(x) * (w - 1) / (ow - 1) : 0.0;
      std::int64_t x0 = static_cast<std::int64_t>(sx);
      std::int64_t x1 = std::min(x0 + 1, w - 1);
      double fx = sx - static_cast<double>(x0);
      double top = (1.0 - fx) * src[y0 * w + x0] + fx * src[y0 * w + x1];
      double bot = (1.0 - fx) * src[y1 * w + x0] + fx * src[y1 * w + x1];
      out[static_cast<std::size_t>(y * ow + x)] = (1.0 - fy) * top + fy * bot;
    }
  }
  return out;
}

Matrix images_to_matrix(const IdxImages& images, std::int64_t out_channels, std::int64_t out_hw) {
  if (out_channels < 1 || out_hw < 1)
    throw ConfigError("images_to_matrix: channels and extent must be >= 1");
  Matrix m;
  m.sample_shape = {out_channels, out_hw, out_hw};
  m.rows = images.count;
  std::int64_t plane_in = images.height * images.width;
  std::int64_t plane_out = out_hw * out_hw;
  m.data.resize(static_cast<std::size_t>(images.count * out_channels * plane_out));
  std::vector<double> unit(static_cast<std::size_t>(plane_in));
  for (std::int64_t i = 0; i < images.count; ++i) {
    for (std::int64_t p = 0; p < plane_in; ++p)
      unit[static_cast<std::size_t>(p)] = images.bytes[static_cast<std::size_t>(i * plane_in + p)] / 255.0;
    std::vector<double> plane = (images.height == out_hw && images.width == out_hw)
                                    ? unit
                                    : bilinear_resize(unit, images.height, images.width, out_hw, out_hw);
    for (std::int64_t c = 0; c < out_channels; ++c)
      std::memcpy(m.data.data() + (i * out_channels + c) * plane_out, plane.data(),
                  sizeof(double) * static_cast<std::size_t>(plane_out));
  }
  return m;
}

// ---- task construction -----------------------------------------------------

namespace {

std::vector<std::int64_t> indices_with(const std::vector<int>& labels, std::int64_t cls,
                                       bool equal) {
  std::vector<std::int64_t> out;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if ((labels[i] == cls) == equal) out.push_back(static_cast<std::int64_t>(i));
  return out;
}

std::vector<std::int64_t> draw_without_replacement(std::vector<std::int64_t> pool,
                                                   std::int64_t want, Rng rng, const char* what) {
  if (static_cast<std::int64_t>(pool.size()) < want)
    throw ConfigError(std::string(what) + ": need " + std::to_string(want) + " samples but only " +
                      std::to_string(pool.size()) + " available (short by " +
                      std::to_string(want - static_cast<std::int64_t>(pool.size())) + ")");
  rng.shuffle(pool);
  pool.resize(static_cast<std::size_t>(want));
  return pool;
}

}  // namespace

DomainDataset build_anomaly_task(const Matrix& source_images, const std::vector<int>& source_labels,
                                 const Matrix& target_images, const std::vector<int>& target_labels,
                                 const AnomalyTaskSpec& spec) {
  if (spec.anomaly_rate < 0.0 || spec.anomaly_rate >= 1.0)
    throw ConfigError("anomaly_rate must be in [0,1)");
  if (spec.n_source < 1 || spec.n_target < 1)
    throw ConfigError("n_source and n_target must be positive");
  if (source_images.rows != static_cast<std::int64_t>(source_labels.size()))
    throw DimensionError("source image/label counts disagree");
  if (target_images.rows != static_cast<std::int64_t>(target_labels.size()))
    throw DimensionError("target image/label counts disagree");
  if (source_images.sample_shape != target_images.sample_shape)
    throw DimensionError("source and target sample shapes disagree: " +
                         shape_str(source_images.sample_shape) + " vs " +
                         shape_str(target_images.sample_shape));

  Rng base(spec.seed);
  std::int64_t n_anom = std::llround(spec.anomaly_rate * static_cast<double>(spec.n_target));
  std::int64_t n_tnorm = spec.n_target - n_anom;

  auto src_rows = draw_without_replacement(indices_with(source_labels, spec.normal_class, true),
                                           spec.n_source, base.fork(1), "source normal pool");
  auto tgt_norm = draw_without_replacement(indices_with(target_labels, spec.normal_class, true),
                                           n_tnorm, base.fork(2), "target normal pool");
  auto tgt_anom = draw_without_replacement(indices_with(target_labels, spec.normal_class, false),
                                           n_anom, base.fork(3), "target anomaly pool");

  DomainDataset ds;
  ds.source = source_images.select(src_rows);

  std::vector<std::int64_t> tgt_rows = tgt_norm;
  tgt_rows.insert(tgt_rows.end(), tgt_anom.begin(), tgt_anom.end());
  std::vector<int> mix_labels(static_cast<std::size_t>(n_tnorm), 0);
  mix_labels.insert(mix_labels.end(), static_cast<std::size_t>(n_anom), 1);
  // shuffle rows and labels with one permutation so anomalies are interleaved
  Rng mix_rng = base.fork(4);
  std::vector<std::int64_t> order = permutation(spec.n_target, mix_rng);
  std::vector<std::int64_t> shuffled_rows(order.size());
  std::vector<int> shuffled_labels(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    shuffled_rows[i] = tgt_rows[static_cast<std::size_t>(order[i])];
    shuffled_labels[i] = mix_labels[static_cast<std::size_t>(order[i])];
  }
  ds.target = target_images.select(shuffled_rows);
  ds.target_labels = std::move(shuffled_labels);

  ds.meta.generator = "class-task";
  ds.meta.seed = spec.seed;
  ds.meta.anomaly_rate = spec.anomaly_rate;
  ds.meta.realized_rate = static_cast<double>(n_anom) / static_cast<double>(spec.n_target);
  ds.meta.normal_class = spec.normal_class;
  assign_splits(ds, spec.seed);
  return ds;
}

// ---- synthetic generator ---------------------------------------------------

DomainDataset synth_domain_pair(const SynthConfig& cfg, std::uint64_t seed) {
  if (cfg.dim < 1) throw ConfigError("synth: dim must be >= 1");
  if (cfg.n_source < 1 || cfg.n_target < 1) throw ConfigError("synth: counts must be positive");
  if (cfg.cluster_sigma <= 0.0) throw ConfigError("synth: cluster_sigma must be positive");
  if (cfg.anomaly_rate < 0.0 || cfg.anomaly_rate >= 1.0)
    throw ConfigError("synth: anomaly_rate must be in [0,1)");
  if (!cfg.dim_sigmas.empty()) {
    if (std::ssize(cfg.dim_sigmas) != cfg.dim)
      throw ConfigError("synth: dim_sigmas must have one entry per dimension");
    for (double sig : cfg.dim_sigmas)
      if (!(sig > 0.0)) throw ConfigError("synth: dim_sigmas entries must be positive");
  }

  Rng base(seed);
  std::int64_t d = cfg.dim;
  auto sigma_at = [&](std::int64_t j) {
    return cfg.dim_sigmas.empty() ? cfg.cluster_sigma
                                  : cfg.dim_sigmas[static_cast<std::size_t>(j)];
  };
  double theta = cfg.rotation_deg * std::acos(-1.0) / 180.0;
  double c = std::cos(theta), s = std::sin(theta);

  // fixed affine pushforward: rotate the first two coordinates, then
  // translate along the first axis
  auto push_target = [&](std::vector<double>& row) {
    if (d >= 2) {
      double x0 = row[0], x1 = row[1];
      row[0] = c * x0 - s * x1;
      row[1] = s * x0 + c * x1;
    }
    row[0] += cfg.shift;
  };

  auto draw_cluster = [&](Rng& rng, std::int64_t n, bool target_affine, double center0) {
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(n * d));
    std::vector<double> row(static_cast<std::size_t>(d));
    for (std::int64_t i = 0; i < n; ++i) {
      for (std::int64_t j = 0; j < d; ++j)
        row[static_cast<std::size_t>(j)] = sigma_at(j) * rng.normal();
      if (target_affine) push_target(row);
      row[0] += center0;
      out.insert(out.end(), row.begin(), row.end());
    }
    return out;
  };

  DomainDataset ds;
  ds.source.sample_shape = {d};
  ds.source.rows = cfg.n_source;
  Rng src_rng = base.fork(1);
  ds.source.data = draw_cluster(src_rng, cfg.n_source, false, 0.0);

  std::int64_t n_anom = std::llround(cfg.anomaly_rate * static_cast<double>(cfg.n_target));
  std::int64_t n_tnorm = cfg.n_target - n_anom;
  Rng tn_rng = base.fork(2);
  std::vector<double> tnorm = draw_cluster(tn_rng, n_tnorm, true, 0.0);
  // anomaly cluster: same spread, centered anomaly_distance_sigmas away from
  // the target-normal mean. The offset sits on the last axis, orthogonal to
  // the domain shift (first axis) whenever dim >= 2, so that closing the
  // domain gap and separating anomalies remain independent directions; 1-D
  // data falls back to the shift axis.
  Rng an_rng = base.fork(3);
  double anomaly_offset = cfg.anomaly_distance_sigmas * cfg.cluster_sigma;
  std::size_t anomaly_axis = static_cast<std::size_t>(d - 1);
  std::vector<double> tanom;
  if (n_anom > 0) {
    tanom.reserve(static_cast<std::size_t>(n_anom * d));
    std::vector<double> row(static_cast<std::size_t>(d));
    for (std::int64_t i = 0; i < n_anom; ++i) {
      for (std::int64_t j = 0; j < d; ++j)
        row[static_cast<std::size_t>(j)] = sigma_at(j) * an_rng.normal();
      row[0] += cfg.shift;
      row[anomaly_axis] += anomaly_offset;
      tanom.insert(tanom.end(), row.begin(), row.end());
    }
  }

  std::vector<int> labels(static_cast<std::size_t>(n_tnorm), 0);
  labels.insert(labels.end(), static_cast<std::size_t>(n_anom), 1);
  std::vector<double> mixture = std::move(tnorm);
  mixture.insert(mixture.end(), tanom.begin(), tanom.end());

  Rng mix_rng = base.fork(4);
  std::vector<std::int64_t> order = permutation(cfg.n_target, mix_rng);
  ds.target.sample_shape = {d};
  ds.target.rows = cfg.n_target;
  ds.target.data.resize(mixture.size());
  ds.target_labels.resize(labels.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    std::memcpy(ds.target.data.data() + static_cast<std::int64_t>(i) * d,
                mixture.data() + order[i] * d, sizeof(double) * static_cast<std::size_t>(d));
    ds.target_labels[i] = labels[static_cast<std::size_t>(order[i])];
  }

  ds.meta.generator = "synthetic";
  ds.meta.seed = seed;
  ds.meta.anomaly_rate = cfg.anomaly_rate;
  ds.meta.realized_rate = static_cast<double>(n_anom) / static_cast<double>(cfg.n_target);
  assign_splits(ds, seed);
  return ds;
}

// ---- minibatching ----------------------------------------------------------

MinibatchIter::MinibatchIter(const Matrix& source, const Matrix& target, std::int64_t batch_size,
                             std::uint64_t seed, std::int64_t epoch)
    : src_(source), tgt_(target), batch_size_(batch_size) {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (source.rows < 1 || target.rows < 1) throw ConfigError("minibatch domains must be nonempty");
  if (epoch < 0) throw ConfigError("epoch must be >= 0");
  batches_ = std::max(source.rows, target.rows) / batch_size;
  Rng base(seed);
  Rng sr = base.fork(0xB000u + 2 * static_cast<std::uint64_t>(epoch));
  Rng tr = base.fork(0xB000u + 2 * static_cast<std::uint64_t>(epoch) + 1);
  src_order_ = permutation(source.rows, sr);
  tgt_order_ = permutation(target.rows, tr);
}

bool MinibatchIter::next(Tensor& src_batch, Tensor& tgt_batch) {
  if (at_ >= batches_) return false;
  last_src_rows_.clear();
  last_tgt_rows_.clear();
  for (std::int64_t j = 0; j < batch_size_; ++j) {
    std::int64_t pos = at_ * batch_size_ + j;
    // the shorter domain recycles its shuffled order
    last_src_rows_.push_back(src_order_[static_cast<std::size_t>(pos % src_.rows)]);
    last_tgt_rows_.push_back(tgt_order_[static_cast<std::size_t>(pos % tgt_.rows)]);
  }
  src_batch = src_.gather(last_src_rows_);
  tgt_batch = tgt_.gather(last_tgt_rows_);
  ++at_;
  return true;
}

// ---- CSV / manifest --------------------------------------------------------

void write_csv_dataset(const std::string& path, const Matrix& x, const std::vector<int>& labels) {
  if (x.rows != static_cast<std::int64_t>(labels.size()))
    throw DimensionError("write_csv_dataset: row/label counts disagree");
  std::ofstream os(path);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  std::int64_t f = x.features();
  os << "label";
  for (std::int64_t j = 0; j < f; ++j) os << ",px" << j;
  os << "\n";
  char buf[32];
  for (std::int64_t i = 0; i < x.rows; ++i) {
    os << labels[static_cast<std::size_t>(i)];
    for (double v : x.row(i)) {
      std::snprintf(buf, sizeof buf, ",%.17g", v);
      os << buf;
    }
    os << "\n";
  }
  if (!os) throw IoError("write failed for '" + path + "'");
}

std::pair<Matrix, std::vector<int>> read_csv_dataset(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open '" + path + "'");
  std::string line;
  std::size_t offset = 0;
  std::int64_t lineno = 0;
  auto fail = [&](const std::string& why) -> FormatError {
    return FormatError("'" + path + "': " + why + " at line " + std::to_string(lineno) +
                       " (byte offset " + std::to_string(offset) + ")");
  };
  if (!std::getline(is, line)) throw fail("missing header");
  ++lineno;
  if (line.rfind("label", 0) != 0) throw fail("header must start with 'label'");
  offset += line.size() + 1;

  Matrix m;
  std::vector<int> labels;
  std::int64_t width = -1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) {
      offset += 1;
      continue;
    }
    std::vector<double> vals;
    const char* p = line.c_str();
    char* end = nullptr;
    long lab = std::strtol(p, &end, 10);
    if (end == p) throw fail("unparseable label");
    p = end;
    while (*p == ',') {
      ++p;
      double v = std::strtod(p, &end);
      if (end == p) throw fail("unparseable value");
      vals.push_back(v);
      p = end;
    }
    if (*p != '\0' && *p != '\r') throw fail("unexpected trailing characters");
    if (width == -1) {
      width = static_cast<std::int64_t>(vals.size());
      if (width == 0) throw fail("row has no feature columns");
    } else if (static_cast<std::int64_t>(vals.size()) != width) {
      throw fail("row width " + std::to_string(vals.size()) + " does not match " +
                 std::to_string(width));
    }
    labels.push_back(static_cast<int>(lab));
    m.data.insert(m.data.end(), vals.begin(), vals.end());
    offset += line.size() + 1;
  }
  m.rows = static_cast<std::int64_t>(labels.size());
  m.sample_shape = {width == -1 ? 0 : width};
  if (m.rows == 0) throw FormatError("'" + path + "': no data rows");
  return {std::move(m), std::move(labels)};
}

void write_dataset_manifest(const std::string& path, const DomainDataset& ds) {
  nlohmann::json j;
  j["generator"] = ds.meta.generator;
  j["source_files"] = ds.meta.source_files;
  j["seed"] = std::to_string(ds.meta.seed);
  j["anomaly_rate"] = ds.meta.anomaly_rate;
  j["realized_rate"] = ds.meta.realized_rate;
  j["normal_class"] = ds.meta.normal_class;
  j["n_source"] = ds.source.rows;
  j["n_target"] = ds.target.rows;
  j["sample_shape"] = ds.source.sample_shape;
  j["target_labeled"] = ds.has_labels();
  j["split"] = {{"source_train", ds.source_train_idx.size()},
                {"source_eval", ds.source_eval_idx.size()},
                {"target_train", ds.target_train_idx.size()},
                {"target_eval", ds.target_eval_idx.size()}};
  std::ofstream os(path);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  os << j.dump(2) << "\n";
  if (!os) throw IoError("write failed for '" + path + "'");
}

}  // namespace adt
