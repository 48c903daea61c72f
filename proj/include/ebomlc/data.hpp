#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "ebomlc/error.hpp"
#include "ebomlc/param_set.hpp"
#include "ebomlc/rng.hpp"
#include "ebomlc/tensor.hpp"

namespace ebomlc {

using Labels = std::vector<std::size_t>;

struct LabeledDataset {
  Tensor features;  // (n, d)
  Labels labels;
  std::size_t classes = 0;

  std::size_t size() const { return labels.size(); }
  std::size_t dim() const { return features.dim(1); }

  void validate() const {
    if (labels.empty()) throw ConfigError("LabeledDataset: empty");
    if (features.rank() != 2 || features.dim(0) != labels.size()) {
      throw DimensionError("LabeledDataset: features " + shape_str(features.shape()) + " vs " +
                           std::to_string(labels.size()) + " labels");
    }
    for (std::size_t y : labels) {
      if (y >= classes) throw DomainError("LabeledDataset: label out of range");
    }
  }
};

enum class Split : std::uint8_t { kClean, kNoisy };

inline const char* split_name(Split s) { return s == Split::kClean ? "clean" : "noisy"; }

/// Ground truth plus the labels actually observed during training. The clean
/// side always observes its ground-truth label.
struct CorruptedDataset {
  LabeledDataset base;
  Labels corrupted_labels;
  std::vector<bool> mask;  // corrupted_labels[i] != base.labels[i]
  std::vector<Split> split;

  std::size_t size() const { return base.size(); }

  std::vector<std::size_t> indices(Split side) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < split.size(); ++i) {
      if (split[i] == side) out.push_back(i);
    }
    return out;
  }
};

struct Corruption {
  Labels labels;
  std::vector<bool> mask;

  std::size_t corrupted_count() const { return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true)); }
};

// ---------------------------------------------------------------------------
// Synthetic blobs
// ---------------------------------------------------------------------------

/// Isotropic Gaussian clusters around seeded N(0, I) centers.
class BlobGenerator {
 public:
  BlobGenerator(std::size_t classes, std::size_t dim, double spread, std::uint64_t seed)
      : centers_(Shape{classes, dim}), spread_(spread) {
    if (classes == 0) throw ConfigError("generate_blobs: need at least one class");
    if (dim < 2) throw ConfigError("generate_blobs: dimension must be >= 2");
    if (!(spread >= 0.0)) throw ConfigError("generate_blobs: spread must be non-negative");
    Rng rng(derive_seed(seed, {kStreamCenters}));
    std::normal_distribution<double> normal(0.0, 1.0);
    for (double& v : centers_.data()) v = normal(rng);
  }

  const Tensor& centers() const { return centers_; }
  std::size_t classes() const { return centers_.dim(0); }

  /// Balanced labels (i mod C) with per-sample Gaussian offsets.
  LabeledDataset sample(std::size_t n, std::uint64_t seed) const {
    if (n < classes()) throw ConfigError("generate_blobs: n < C");
    const std::size_t d = centers_.dim(1);
    LabeledDataset ds{Tensor(Shape{n, d}), Labels(n), classes()};
    Rng rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t c = i % classes();
      ds.labels[i] = c;
      for (std::size_t j = 0; j < d; ++j) ds.features.at(i, j) = centers_.at(c, j) + spread_ * normal(rng);
    }
    return ds;
  }

 private:
  Tensor centers_;
  double spread_;
};

inline LabeledDataset generate_blobs(std::size_t n, std::size_t classes, std::size_t dim, double spread,
                                     std::uint64_t seed) {
  if (n < classes) throw ConfigError("generate_blobs: n < C");
  return BlobGenerator(classes, dim, spread, seed).sample(n, derive_seed(seed, {kStreamSamples}));
}

// ---------------------------------------------------------------------------
// Label corruption
// ---------------------------------------------------------------------------

namespace detail {
// First k entries of a uniformly random permutation of [0, n).
inline std::vector<std::size_t> choose_without_replacement(std::size_t n, std::size_t k, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(k);
  return idx;
}

inline std::size_t exact_count(double rate, std::size_t n) {
  return static_cast<std::size_t>(std::llround(rate * static_cast<double>(n)));
}
}  // namespace detail

/// Exactly round(p n) labels, chosen without replacement, each replaced by a
/// uniform draw over the other C - 1 classes.
inline Corruption corrupt_uniform(const Labels& labels, double rate, std::size_t classes, std::uint64_t seed) {
  if (!(rate >= 0.0 && rate <= 1.0)) throw ConfigError("corrupt_uniform: rate must lie in [0, 1]");
  const std::size_t k = detail::exact_count(rate, labels.size());
  if (k > 0 && classes < 2) throw ConfigError("corrupt_uniform: need at least two classes");
  Corruption out{labels, std::vector<bool>(labels.size(), false)};
  Rng rng(seed);
  std::uniform_int_distribution<std::size_t> other(0, classes >= 2 ? classes - 2 : 0);
  for (std::size_t i : detail::choose_without_replacement(labels.size(), k, rng)) {
    const std::size_t y = labels[i];
    if (y >= classes) throw DomainError("corrupt_uniform: label out of range");
    const std::size_t r = other(rng);
    out.labels[i] = r < y ? r : r + 1;
    out.mask[i] = true;
  }
  return out;
}

inline Labels default_flip_mapping(std::size_t classes) {
  Labels m(classes);
  for (std::size_t c = 0; c < classes; ++c) m[c] = (c + 1) % classes;
  return m;
}

/// Exactly round(p n_c) samples of every class c remapped to mapping[c].
inline Corruption corrupt_flip(const Labels& labels, double rate, const Labels& mapping, std::uint64_t seed) {
  if (!(rate >= 0.0 && rate <= 1.0)) throw ConfigError("corrupt_flip: rate must lie in [0, 1]");
  for (std::size_t c = 0; c < mapping.size(); ++c) {
    if (mapping[c] == c) throw ConfigError("corrupt_flip: mapping has fixed point " + std::to_string(c));
    if (mapping[c] >= mapping.size()) throw ConfigError("corrupt_flip: mapping target out of range");
  }
  Corruption out{labels, std::vector<bool>(labels.size(), false)};
  Rng rng(seed);
  for (std::size_t c = 0; c < mapping.size(); ++c) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] == c) members.push_back(i);
    }
    const std::size_t k = detail::exact_count(rate, members.size());
    for (std::size_t j : detail::choose_without_replacement(members.size(), k, rng)) {
      out.labels[members[j]] = mapping[c];
      out.mask[members[j]] = true;
    }
  }
  for (std::size_t y : labels) {
    if (y >= mapping.size()) throw DomainError("corrupt_flip: label out of range");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Clean / noisy split
// ---------------------------------------------------------------------------

/// Per-class stratified split: round(f n_c) samples of every class become
/// clean. No labels are corrupted yet.
inline CorruptedDataset split_clean_noisy(const LabeledDataset& ds, double clean_fraction, std::uint64_t seed) {
  if (!(clean_fraction > 0.0 && clean_fraction < 1.0)) throw ConfigError("split_clean_noisy: fraction must lie in (0, 1)");
  ds.validate();
  CorruptedDataset out{ds, ds.labels, std::vector<bool>(ds.size(), false), std::vector<Split>(ds.size(), Split::kNoisy)};
  Rng rng(seed);
  for (std::size_t c = 0; c < ds.classes; ++c) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      if (ds.labels[i] == c) members.push_back(i);
    }
    const std::size_t need = detail::exact_count(clean_fraction, members.size());
    if (need == 0 || need > members.size()) {
      throw ConfigError("split_clean_noisy: class " + std::to_string(c) + " has " + std::to_string(members.size()) +
                        " samples, cannot supply a clean share of " + std::to_string(clean_fraction));
    }
    for (std::size_t j : detail::choose_without_replacement(members.size(), need, rng)) {
      out.split[members[j]] = Split::kClean;
    }
  }
  return out;
}

enum class NoiseKind : std::uint8_t { kUniform, kFlip };

/// Corrupts the noisy side only; `rate` is the fraction of noisy samples.
inline void apply_noise(CorruptedDataset& ds, NoiseKind kind, double rate, std::uint64_t seed,
                        const Labels& flip_mapping = {}) {
  const auto noisy = ds.indices(Split::kNoisy);
  Labels side(noisy.size());
  for (std::size_t j = 0; j < noisy.size(); ++j) side[j] = ds.base.labels[noisy[j]];
  const Corruption c = kind == NoiseKind::kUniform
                           ? corrupt_uniform(side, rate, ds.base.classes, seed)
                           : corrupt_flip(side, rate, flip_mapping.empty() ? default_flip_mapping(ds.base.classes) : flip_mapping,
                                          seed);
  for (std::size_t j = 0; j < noisy.size(); ++j) {
    ds.corrupted_labels[noisy[j]] = c.labels[j];
    ds.mask[noisy[j]] = c.mask[j];
  }
}

// ---------------------------------------------------------------------------
// Standardization
// ---------------------------------------------------------------------------

struct Standardizer {
  std::vector<double> mean;
  std::vector<double> scale;

  /// Per-dimension statistics over the given rows.
  static Standardizer fit(const Tensor& features, const std::vector<std::size_t>& rows) {
    const std::size_t d = features.dim(1);
    Standardizer s{std::vector<double>(d, 0.0), std::vector<double>(d, 1.0)};
    if (rows.empty()) return s;
    const double n = static_cast<double>(rows.size());
    for (std::size_t r : rows) {
      for (std::size_t j = 0; j < d; ++j) s.mean[j] += features.at(r, j);
    }
    for (double& m : s.mean) m /= n;
    std::vector<double> var(d, 0.0);
    for (std::size_t r : rows) {
      for (std::size_t j = 0; j < d; ++j) {
        const double dv = features.at(r, j) - s.mean[j];
        var[j] += dv * dv;
      }
    }
    for (std::size_t j = 0; j < d; ++j) {
      const double sd = std::sqrt(var[j] / n);
      s.scale[j] = sd > 1e-12 ? sd : 1.0;
    }
    return s;
  }

  void apply(Tensor& features) const {
    const std::size_t d = features.dim(1);
    for (std::size_t r = 0; r < features.dim(0); ++r) {
      for (std::size_t j = 0; j < d; ++j) features.at(r, j) = (features.at(r, j) - mean[j]) / scale[j];
    }
  }
};

// ---------------------------------------------------------------------------
// Batching
// ---------------------------------------------------------------------------

struct Batch {
  Tensor features;  // (m, d)
  Labels labels;    // observed labels
  Split source = Split::kNoisy;
  std::vector<std::size_t> indices;

  std::size_t size() const { return labels.size(); }
};

inline Tensor gather_feature_rows(const Tensor& features, const std::vector<std::size_t>& rows) {
  const std::size_t d = features.dim(1);
  Tensor out(Shape{rows.size(), d});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy_n(features.data().data() + rows[i] * d, d, out.data().data() + i * d);
  }
  return out;
}

inline Batch make_batch(const CorruptedDataset& ds, const std::vector<std::size_t>& rows, Split source) {
  if (rows.empty()) throw UsageError("make_batch: empty batch");
  Batch b{gather_feature_rows(ds.base.features, rows), Labels(rows.size()), source, rows};
  for (std::size_t i = 0; i < rows.size(); ++i) b.labels[i] = ds.corrupted_labels[rows[i]];
  return b;
}

/// Seeded per-epoch shuffles of one side; the trailing short batch is dropped.
class BatchIterator {
 public:
  BatchIterator(std::vector<std::size_t> side, std::size_t batch_size, std::uint64_t seed)
      : side_(std::move(side)), batch_size_(batch_size), seed_(seed) {
    if (batch_size_ == 0 || batch_size_ > side_.size()) {
      throw ConfigError("batch_iter: batch size " + std::to_string(batch_size_) + " exceeds side size " +
                        std::to_string(side_.size()));
    }
  }

  std::size_t batches_per_epoch() const { return side_.size() / batch_size_; }
  std::size_t batch_size() const { return batch_size_; }

  std::vector<std::vector<std::size_t>> epoch(std::uint64_t e) const {
    std::vector<std::size_t> perm = side_;
    Rng rng(derive_seed(seed_, {e}));
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<std::vector<std::size_t>> out(batches_per_epoch());
    for (std::size_t b = 0; b < out.size(); ++b) {
      out[b].assign(perm.begin() + static_cast<std::ptrdiff_t>(b * batch_size_),
                    perm.begin() + static_cast<std::ptrdiff_t>((b + 1) * batch_size_));
    }
    return out;
  }

 private:
  std::vector<std::size_t> side_;
  std::size_t batch_size_;
  std::uint64_t seed_;
};

/// Endless stream over a side that moves to the next shuffled epoch whenever
/// the current one is exhausted.
class BatchStream {
 public:
  BatchStream(BatchIterator it) : it_(std::move(it)) {}

  const std::vector<std::size_t>& next() {
    if (pos_ >= current_.size()) {
      current_ = it_.epoch(epoch_++);
      pos_ = 0;
    }
    return current_[pos_++];
  }

 private:
  BatchIterator it_;
  std::vector<std::vector<std::size_t>> current_;
  std::size_t pos_ = 0;
  std::uint64_t epoch_ = 0;
};

// ---------------------------------------------------------------------------
// CIFAR-10 binary format: records of 1 label byte + 3072 pixel bytes
// ---------------------------------------------------------------------------

inline constexpr std::size_t kCifarRecordBytes = 3073;
inline constexpr std::size_t kCifarPixels = 3072;

inline LabeledDataset parse_cifar10_binary(const std::vector<unsigned char>& bytes) {
  if (bytes.empty() || bytes.size() % kCifarRecordBytes != 0) {
    throw FormatError("cifar10: file length " + std::to_string(bytes.size()) + " is not a positive multiple of 3073");
  }
  const std::size_t n = bytes.size() / kCifarRecordBytes;
  LabeledDataset ds{Tensor(Shape{n, kCifarPixels}), Labels(n), 10};
  for (std::size_t i = 0; i < n; ++i) {
    const unsigned char* rec = bytes.data() + i * kCifarRecordBytes;
    if (rec[0] >= 10) throw FormatError("cifar10: record " + std::to_string(i) + " has label byte " + std::to_string(rec[0]));
    ds.labels[i] = rec[0];
    double* row = ds.features.data().data() + i * kCifarPixels;
    for (std::size_t j = 0; j < kCifarPixels; ++j) row[j] = static_cast<double>(rec[1 + j]) / 255.0;
  }
  return ds;
}

inline LabeledDataset load_cifar10_binary(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cifar10: cannot open '" + path + "'");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return parse_cifar10_binary(bytes);
}

// ---------------------------------------------------------------------------
// Export
// ---------------------------------------------------------------------------

/// Writes `<prefix>.csv` (index,split,clean_label,observed_label,corrupted)
/// and `<prefix>_features.bmps` with the matching feature rows.
inline void export_side(const CorruptedDataset& ds, Split side, const std::string& prefix) {
  const auto rows = ds.indices(side);
  std::ofstream csv(prefix + ".csv");
  if (!csv) throw FormatError("export: cannot open '" + prefix + ".csv'");
  csv << "index,split,clean_label,observed_label,corrupted\n";
  for (std::size_t i : rows) {
    csv << i << ',' << split_name(side) << ',' << ds.base.labels[i] << ',' << ds.corrupted_labels[i] << ','
        << (ds.mask[i] ? 1 : 0) << '\n';
  }
  ParamSet feats;
  feats.add("features", gather_feature_rows(ds.base.features, rows));
  save_bmps(prefix + "_features.bmps", feats);
}

}  // namespace ebomlc
