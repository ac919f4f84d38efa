#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "adt/rng.hpp"
#include "adt/tensor.hpp"

namespace adt {

/// Row-major sample matrix: `rows` samples, each of shape `sample_shape`
/// ({D} for flat data, {C,H,W} for images). Immutable after construction.
struct Matrix {
  Shape sample_shape;
  std::int64_t rows = 0;
  std::vector<double> data;

  std::int64_t features() const { return shape_numel(sample_shape); }
  std::span<const double> row(std::int64_t i) const;
  /// Gather the given rows into a [B, ...sample_shape] tensor.
  Tensor gather(const std::vector<std::int64_t>& idx) const;
  Tensor all() const;
  /// New matrix holding the given rows, in order.
  Matrix select(const std::vector<std::int64_t>& idx) const;
};

/// Provenance recorded with every constructed dataset.
struct DatasetMeta {
  std::string generator;  // "synthetic" | "idx" | "csv"
  std::vector<std::string> source_files;
  std::uint64_t seed = 0;
  double anomaly_rate = 0.0;      // requested
  double realized_rate = 0.0;     // actual anomaly fraction in the target
  std::int64_t normal_class = -1; // -1 when not class-based
};

/// What the gradient-updating training paths are allowed to see: sample
/// rows only. No label member exists on this type, which is the API-level
/// guarantee that training cannot condition on anomaly labels.
/// `target_ids` are row indices into the originating target matrix, kept so
/// diagnostic dumps can name samples; they carry no label information.
struct TrainView {
  Matrix source;
  Matrix target;
  std::vector<std::int64_t> target_ids;
};

/// A transfer task: source samples (all normal), a target normal/anomaly
/// mixture, per-target-row labels used only by evaluation, and a
/// deterministic 50/50 train/eval split of each domain.
struct DomainDataset {
  Matrix source;                  // all normal
  Matrix target;                  // unlabeled mixture (labels held separately)
  std::vector<int> target_labels; // aligned with target rows: 0 normal, 1 anomaly; may be empty
  DatasetMeta meta;

  std::vector<std::int64_t> source_train_idx, source_eval_idx;
  std::vector<std::int64_t> target_train_idx, target_eval_idx;

  TrainView train_view() const;
  Matrix source_eval() const { return source.select(source_eval_idx); }
  Matrix target_eval() const { return target.select(target_eval_idx); }
  Matrix source_train() const { return source.select(source_train_idx); }
  Matrix target_train() const { return target.select(target_train_idx); }
  bool has_labels() const { return !target_labels.empty(); }
  /// Labels aligned with target_eval() rows; empty when the mixture is
  /// unlabeled.
  std::vector<int> target_eval_labels() const;
  /// Labels aligned with target_train() rows (evaluation diagnostics only).
  std::vector<int> target_train_labels() const;
};

/// Fill the four split index lists with a seeded shuffle-and-halve of each
/// domain (first half trains, second half evaluates).
void assign_splits(DomainDataset& ds, std::uint64_t seed);

// ---- IDX ingestion ---------------------------------------------------------

/// Raw u8 image stack from an IDX file (the classic big-endian digit
/// format). Bytes are kept unscaled so write/parse round trips are exact.
struct IdxImages {
  std::int64_t count = 0, height = 0, width = 0;
  std::vector<std::uint8_t> bytes;  // count*height*width, row-major
};

IdxImages parse_idx_images(const std::string& path);
std::vector<int> parse_idx_labels(const std::string& path);
void write_idx_images(const std::string& path, const IdxImages& images);
void write_idx_labels(const std::string& path, const std::vector<int>& labels);

/// Images + labels with the count-consistency check between the two files.
std::pair<IdxImages, std::vector<int>> load_idx_pair(const std::string& images_path,
                                                     const std::string& labels_path);

/// Scale pixels to [0,1], bilinearly resize to out_hw x out_hw when needed,
/// and replicate grayscale to `out_channels` channels. Sample shape becomes
/// {out_channels, out_hw, out_hw}.
Matrix images_to_matrix(const IdxImages& images, std::int64_t out_channels, std::int64_t out_hw);

/// Bilinear interpolation of one H x W plane to oh x ow (corner-aligned).
std::vector<double> bilinear_resize(std::span<const double> src, std::int64_t h, std::int64_t w,
                                    std::int64_t oh, std::int64_t ow);

// ---- task construction -----------------------------------------------------

struct AnomalyTaskSpec {
  std::int64_t normal_class = 0;
  double anomaly_rate = 0.25;  // fraction of the target that is not normal_class
  std::int64_t n_source = 0;
  std::int64_t n_target = 0;
  std::uint64_t seed = 0;
};

/// Class-based transfer task: the source half draws only normal_class
/// samples from the source corpus; the target half mixes normal_class with
/// other-class samples at the requested rate (within one sample), both
/// without replacement. Throws with the shortfall when a corpus is too
/// small.
DomainDataset build_anomaly_task(const Matrix& source_images, const std::vector<int>& source_labels,
                                 const Matrix& target_images, const std::vector<int>& target_labels,
                                 const AnomalyTaskSpec& spec);

// ---- synthetic generator ---------------------------------------------------

/// Two Gaussian domains: target normals are the source cluster pushed
/// through a fixed rotation + translation; target anomalies sit in a
/// distant cluster offset along the last coordinate, orthogonal to the
/// domain shift (which acts on the first coordinate) whenever dim >= 2.
struct SynthConfig {
  std::int64_t dim = 2;
  std::int64_t n_source = 400;
  std::int64_t n_target = 400;
  double cluster_sigma = 0.5;
  double shift = 1.5;          // translation magnitude between domains
  double rotation_deg = 15.0;  // applied in the first two coordinates
  double anomaly_rate = 0.25;
  double anomaly_distance_sigmas = 6.0;  // from the target-normal mean
  /// Optional per-dimension standard deviations. Empty means isotropic
  /// clusters at cluster_sigma. When set, the size must equal dim and
  /// every entry must be positive; cluster_sigma still fixes the anomaly
  /// offset scale. Uneven profiles create capacity pressure when the
  /// data dimension exceeds the model's latent width.
  std::vector<double> dim_sigmas;
};

DomainDataset synth_domain_pair(const SynthConfig& cfg, std::uint64_t seed);

// ---- minibatching ----------------------------------------------------------

/// Paired equal-size minibatches over two domains. Each domain is shuffled
/// independently, keyed by (seed, epoch); the epoch length is set by the
/// larger domain, the smaller one recycles its shuffled order, and the
/// final partial batch is dropped.
class MinibatchIter {
 public:
  MinibatchIter(const Matrix& source, const Matrix& target, std::int64_t batch_size,
                std::uint64_t seed, std::int64_t epoch);

  std::int64_t batches() const { return batches_; }
  /// False when the epoch is exhausted.
  bool next(Tensor& src_batch, Tensor& tgt_batch);
  /// Row indices (into the target matrix) of the batch last returned.
  const std::vector<std::int64_t>& last_target_rows() const { return last_tgt_rows_; }
  const std::vector<std::int64_t>& last_source_rows() const { return last_src_rows_; }

 private:
  const Matrix& src_;
  const Matrix& tgt_;
  std::int64_t batch_size_, batches_, at_ = 0;
  std::vector<std::int64_t> src_order_, tgt_order_;
  std::vector<std::int64_t> last_src_rows_, last_tgt_rows_;
};

// ---- CSV / manifest --------------------------------------------------------

/// Labeled flat dataset CSV: header `label,px0,...,pxk`, one sample per row.
void write_csv_dataset(const std::string& path, const Matrix& x, const std::vector<int>& labels);
std::pair<Matrix, std::vector<int>> read_csv_dataset(const std::string& path);

/// Provenance manifest (JSON). Contains no wall-clock fields: generating
/// the same dataset twice writes identical bytes.
void write_dataset_manifest(const std::string& path, const DomainDataset& ds);

}  // namespace adt
