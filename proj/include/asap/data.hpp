#pragma once

// Labeled data pools: a seeded Gaussian-cluster generator and IDX (MNIST
// family) ingestion, plus a stratified holdout split.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "asap/error.hpp"
#include "asap/linalg.hpp"
#include "asap/random.hpp"

namespace asap {

using ClassId = std::size_t;

class LabeledPool {
 public:
  LabeledPool() = default;

  LabeledPool(Matrix inputs, std::vector<ClassId> labels, std::size_t num_classes)
      : inputs_(std::move(inputs)), labels_(std::move(labels)), class_index_(num_classes) {
    if (inputs_.rows() != labels_.size()) {
      throw StructuralError("pool: " + std::to_string(inputs_.rows()) + " inputs but " +
                            std::to_string(labels_.size()) + " labels");
    }
    if (num_classes < 2) throw StructuralError("pool: need at least two classes");
    for (std::size_t row = 0; row < labels_.size(); ++row) {
      if (labels_[row] >= num_classes) {
        throw StructuralError("pool: label " + std::to_string(labels_[row]) + " at row " +
                              std::to_string(row) + " is outside [0, " +
                              std::to_string(num_classes) + ")");
      }
      class_index_[labels_[row]].push_back(row);
    }
    for (std::size_t c = 0; c < num_classes; ++c) {
      if (class_index_[c].empty()) {
        throw InsufficientDataError("pool: class " + std::to_string(c) + " has no rows");
      }
    }
    for (double x : inputs_.entries()) {
      if (!std::isfinite(x)) throw StructuralError("pool: non-finite feature value");
    }
  }

  std::size_t size() const noexcept { return labels_.size(); }
  std::size_t dim() const noexcept { return inputs_.cols(); }
  std::size_t num_classes() const noexcept { return class_index_.size(); }

  std::span<const double> input(std::size_t row) const { return inputs_.row(row); }
  ClassId label(std::size_t row) const { return labels_[row]; }

  const Matrix& inputs() const noexcept { return inputs_; }
  const std::vector<ClassId>& labels() const noexcept { return labels_; }
  const std::vector<std::size_t>& rows_of(ClassId c) const { return class_index_.at(c); }

  // Empirical label distribution of the pool.
  Vector class_prior() const {
    Vector prior(num_classes());
    for (std::size_t c = 0; c < num_classes(); ++c) {
      prior[c] = static_cast<double>(class_index_[c].size()) / static_cast<double>(size());
    }
    return prior;
  }

  LabeledPool subset(std::span<const std::size_t> rows) const {
    Matrix x(rows.size(), dim());
    std::vector<ClassId> y(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      std::ranges::copy(input(rows[i]), x.row(i).begin());
      y[i] = label(rows[i]);
    }
    return LabeledPool(std::move(x), std::move(y), num_classes());
  }

 private:
  Matrix inputs_;
  std::vector<ClassId> labels_;
  std::vector<std::vector<std::size_t>> class_index_;
};

enum class DatasetKind { synthetic, idx_files };

struct DatasetSpec {
  std::string name = "synthetic";
  DatasetKind kind = DatasetKind::synthetic;
  std::size_t num_classes = 10;
  std::size_t dim = 20;
  std::size_t per_class = 500;
  double separation = 3.0;
  std::filesystem::path images_path;
  std::filesystem::path labels_path;
  std::uint64_t seed = 1;

  void validate() const {
    if (num_classes < 2) throw ConfigError("dataset: num_classes must be >= 2");
    if (per_class < 1) throw ConfigError("dataset: per_class must be >= 1");
    if (kind == DatasetKind::synthetic) {
      if (dim < 1) throw ConfigError("dataset: dim must be >= 1");
      if (num_classes > dim) {
        throw ConfigError("dataset: synthetic pools need num_classes <= dim for separated means");
      }
      if (!(separation > 0.0)) throw ConfigError("dataset: separation must be positive");
    } else if (images_path.empty() || labels_path.empty()) {
      throw ConfigError("dataset: idx datasets need both images and labels paths");
    }
  }
};

namespace detail {

// Rows of a seeded Gaussian matrix, orthonormalized by modified Gram-Schmidt.
inline Matrix random_orthogonal(std::size_t n, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix q(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (;;) {
      for (double& x : q.row(i)) x = normal(rng);
      for (std::size_t k = 0; k < i; ++k) {
        const double proj = dot(q.row(i), q.row(k));
        for (std::size_t j = 0; j < n; ++j) q(i, j) -= proj * q(k, j);
      }
      const double len = norm2(q.row(i));
      if (len > 1e-8) {
        for (double& x : q.row(i)) x /= len;
        break;
      }
    }
  }
  return q;
}

}  // namespace detail

// Class means are separation/sqrt(2) * e_c, rotated by a seeded orthogonal
// matrix, so every pair of means is exactly `separation` apart. Unit-variance
// isotropic noise around each mean.
inline LabeledPool make_gaussian_pool(const DatasetSpec& spec) {
  if (spec.kind != DatasetKind::synthetic) throw ConfigError("make_gaussian_pool: not synthetic");
  spec.validate();
  Rng rng(mix_seed(spec.seed, "gaussian-pool"));
  const Matrix rotation = detail::random_orthogonal(spec.dim, rng);
  const double radius = spec.separation / std::sqrt(2.0);

  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t n = spec.num_classes * spec.per_class;
  Matrix x(n, spec.dim);
  std::vector<ClassId> y(n);
  std::size_t row = 0;
  for (ClassId c = 0; c < spec.num_classes; ++c) {
    // Column (c mod dim) of the rotation, scaled.
    Vector mean(spec.dim);
    for (std::size_t j = 0; j < spec.dim; ++j) mean[j] = radius * rotation(j, c % spec.dim);
    for (std::size_t i = 0; i < spec.per_class; ++i, ++row) {
      for (std::size_t j = 0; j < spec.dim; ++j) x(row, j) = mean[j] + normal(rng);
      y[row] = c;
    }
  }
  return LabeledPool(std::move(x), std::move(y), spec.num_classes);
}

// The class means used by make_gaussian_pool, exposed for oracles.
inline Matrix gaussian_class_means(const DatasetSpec& spec) {
  spec.validate();
  Rng rng(mix_seed(spec.seed, "gaussian-pool"));
  const Matrix rotation = detail::random_orthogonal(spec.dim, rng);
  const double radius = spec.separation / std::sqrt(2.0);
  Matrix means(spec.num_classes, spec.dim);
  for (ClassId c = 0; c < spec.num_classes; ++c)
    for (std::size_t j = 0; j < spec.dim; ++j) means(c, j) = radius * rotation(j, c % spec.dim);
  return means;
}

// ---- IDX ----------------------------------------------------------------

struct IdxTensor {
  std::vector<std::uint32_t> dims;
  std::vector<std::uint8_t> data;

  std::size_t element_count() const {
    return std::accumulate(dims.begin(), dims.end(), std::size_t{1},
                           [](std::size_t a, std::uint32_t b) { return a * b; });
  }

  bool operator==(const IdxTensor&) const = default;
};

inline constexpr std::uint8_t kIdxUnsignedByte = 0x08;

inline IdxTensor parse_idx(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4) throw FormatError("idx: header shorter than 4 bytes", bytes.size());
  if (bytes[0] != 0 || bytes[1] != 0) throw FormatError("idx: bad magic", bytes[0] != 0 ? 0 : 1);
  if (bytes[2] != kIdxUnsignedByte) {
    throw FormatError("idx: unsupported type code " + std::to_string(bytes[2]), 2);
  }
  const std::size_t ndims = bytes[3];
  if (ndims == 0) throw FormatError("idx: zero dimensions", 3);

  IdxTensor t;
  std::size_t offset = 4;
  for (std::size_t d = 0; d < ndims; ++d, offset += 4) {
    if (offset + 4 > bytes.size()) throw FormatError("idx: truncated dimension list", bytes.size());
    t.dims.push_back((std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
                     (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]});
  }
  const std::size_t count = t.element_count();
  if (bytes.size() - offset < count) {
    throw FormatError("idx: truncated payload, expected " + std::to_string(count) + " bytes, got " +
                          std::to_string(bytes.size() - offset),
                      bytes.size());
  }
  if (bytes.size() - offset > count) {
    throw FormatError("idx: trailing bytes after payload", offset + count);
  }
  t.data.assign(bytes.begin() + static_cast<std::ptrdiff_t>(offset), bytes.end());
  return t;
}

inline std::vector<std::uint8_t> serialize_idx(const IdxTensor& t) {
  if (t.dims.empty() || t.dims.size() > 255) throw StructuralError("idx: bad dimension count");
  if (t.element_count() != t.data.size()) throw StructuralError("idx: payload size mismatch");
  std::vector<std::uint8_t> out{0, 0, kIdxUnsignedByte, static_cast<std::uint8_t>(t.dims.size())};
  for (std::uint32_t d : t.dims) {
    for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<std::uint8_t>(d >> shift));
  }
  out.insert(out.end(), t.data.begin(), t.data.end());
  return out;
}

inline std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Images are flattened and scaled to [0,1]; at most spec.per_class rows are
// kept per class, in file order.
inline LabeledPool load_idx_pool(const DatasetSpec& spec) {
  spec.validate();
  const IdxTensor images = parse_idx(read_bytes(spec.images_path));
  const IdxTensor labels = parse_idx(read_bytes(spec.labels_path));
  if (labels.dims.size() != 1) throw StructuralError("idx: label file must be 1-dimensional");
  if (images.dims.size() < 2) throw StructuralError("idx: image file needs at least 2 dimensions");
  if (images.dims[0] != labels.dims[0]) throw StructuralError("idx: image/label count mismatch");

  const std::size_t n = images.dims[0];
  const std::size_t dim = images.element_count() / std::max<std::size_t>(n, 1);
  std::vector<std::size_t> kept_per_class(spec.num_classes, 0);
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t y = labels.data[i];
    if (y >= spec.num_classes) {
      throw StructuralError("idx: label " + std::to_string(y) + " at row " + std::to_string(i) +
                            " exceeds num_classes");
    }
    if (kept_per_class[y] < spec.per_class) {
      ++kept_per_class[y];
      rows.push_back(i);
    }
  }
  Matrix x(rows.size(), dim);
  std::vector<ClassId> y(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto* px = images.data.data() + rows[r] * dim;
    for (std::size_t j = 0; j < dim; ++j) x(r, j) = static_cast<double>(px[j]) / 255.0;
    y[r] = labels.data[rows[r]];
  }
  return LabeledPool(std::move(x), std::move(y), spec.num_classes);
}

inline LabeledPool make_pool(const DatasetSpec& spec) {
  return spec.kind == DatasetKind::synthetic ? make_gaussian_pool(spec) : load_idx_pool(spec);
}

// ---- split ----------------------------------------------------------------

struct PoolSplit {
  LabeledPool train;
  LabeledPool holdout;
};

// Stratified: each class sends round(n_c * fraction) rows to the holdout,
// clamped so both sides keep at least one row. Row order is preserved.
inline PoolSplit split_pool(const LabeledPool& pool, double holdout_fraction, std::uint64_t seed) {
  if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0)) {
    throw StructuralError("split_pool: holdout fraction must lie in (0, 1)");
  }
  Rng rng(mix_seed(seed, "split"));
  std::vector<char> to_holdout(pool.size(), 0);
  for (ClassId c = 0; c < pool.num_classes(); ++c) {
    std::vector<std::size_t> members = pool.rows_of(c);
    if (members.size() < 2) {
      throw InsufficientDataError("split_pool: class " + std::to_string(c) +
                                  " has fewer than 2 rows");
    }
    const auto n = static_cast<double>(members.size());
    auto k = static_cast<std::size_t>(std::llround(n * holdout_fraction));
    k = std::clamp<std::size_t>(k, 1, members.size() - 1);
    std::shuffle(members.begin(), members.end(), rng);
    for (std::size_t i = 0; i < k; ++i) to_holdout[members[i]] = 1;
  }
  std::vector<std::size_t> train_rows;
  std::vector<std::size_t> holdout_rows;
  for (std::size_t r = 0; r < pool.size(); ++r) (to_holdout[r] ? holdout_rows : train_rows).push_back(r);
  return {pool.subset(train_rows), pool.subset(holdout_rows)};
}

}  // namespace asap
