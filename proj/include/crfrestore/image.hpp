#pragma once

// Image raster, patch geometry and the patch extraction / aggregation
// operators R_i and (sum R_i^T R_i)^-1 sum R_i^T.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "crfrestore/errors.hpp"

namespace crf {

/// One vectorized patch, length patch_size^2, row-major inside the patch window.
using PatchVector = Eigen::VectorXd;

/// Grayscale raster with 64-bit real samples, row-major. Nominal range [0, 255].
class Image {
 public:
  Image() = default;

  Image(std::size_t width, std::size_t height, double fill = 0.0)
      : width_(width), height_(height), samples_(width * height, fill) {}

  Image(std::size_t width, std::size_t height, std::vector<double> samples)
      : width_(width), height_(height), samples_(std::move(samples)) {
    if (samples_.size() != width_ * height_) {
      throw DimensionError("image samples: expected " + std::to_string(width_ * height_) +
                           " values, got " + std::to_string(samples_.size()));
    }
  }

  std::size_t width() const noexcept { return width_; }
  std::size_t height() const noexcept { return height_; }
  std::size_t size() const noexcept { return samples_.size(); }
  bool empty() const noexcept { return samples_.empty(); }

  double& operator()(std::size_t row, std::size_t col) { return samples_[row * width_ + col]; }
  double operator()(std::size_t row, std::size_t col) const { return samples_[row * width_ + col]; }

  double& operator[](std::size_t i) { return samples_[i]; }
  double operator[](std::size_t i) const { return samples_[i]; }

  std::span<double> samples() noexcept { return samples_; }
  std::span<const double> samples() const noexcept { return samples_; }

  bool same_shape(const Image& other) const noexcept {
    return width_ == other.width_ && height_ == other.height_;
  }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  std::size_t width_ = 0;
  std::size_t height_ = 0;
  std::vector<double> samples_;
};

/// Row-major top-left coordinate of a patch.
struct PatchPosition {
  std::size_t row = 0;
  std::size_t col = 0;
  friend bool operator==(const PatchPosition&, const PatchPosition&) = default;
};

/// Geometry of patch extraction on a width x height raster.
///
/// Patch indices enumerate every top-left position where a full patch fits,
/// row-major: index = row * position_cols() + col. Reference patches sit on a
/// `reference_stride` grid that always includes the last valid row and column,
/// so that border pixels belong to some reference patch.
class PatchSystem {
 public:
  PatchSystem(std::size_t width, std::size_t height, std::size_t patch_size,
              std::size_t reference_stride)
      : width_(width), height_(height), patch_size_(patch_size), stride_(reference_stride) {
    if (patch_size_ == 0 || stride_ == 0) {
      throw std::invalid_argument("patch size and reference stride must be positive");
    }
    if (width_ < patch_size_ || height_ < patch_size_) {
      throw DimensionError("image " + std::to_string(width_) + "x" + std::to_string(height_) +
                           " is smaller than patch size " + std::to_string(patch_size_));
    }
    pos_rows_ = height_ - patch_size_ + 1;
    pos_cols_ = width_ - patch_size_ + 1;

    auto grid = [this](std::size_t count) {
      std::vector<std::size_t> g;
      for (std::size_t p = 0; p < count; p += stride_) g.push_back(p);
      if (g.back() != count - 1) g.push_back(count - 1);
      return g;
    };
    const auto ref_rows = grid(pos_rows_);
    const auto ref_cols = grid(pos_cols_);
    references_.reserve(ref_rows.size() * ref_cols.size());
    for (auto r : ref_rows)
      for (auto c : ref_cols) references_.push_back(index_of(r, c));

    offsets_.resize(dim());
    for (std::size_t pr = 0; pr < patch_size_; ++pr)
      for (std::size_t pc = 0; pc < patch_size_; ++pc)
        offsets_[pr * patch_size_ + pc] = pr * width_ + pc;
  }

  std::size_t width() const noexcept { return width_; }
  std::size_t height() const noexcept { return height_; }
  std::size_t patch_size() const noexcept { return patch_size_; }
  std::size_t reference_stride() const noexcept { return stride_; }
  /// Patch dimension n = patch_size^2.
  std::size_t dim() const noexcept { return patch_size_ * patch_size_; }

  std::size_t position_rows() const noexcept { return pos_rows_; }
  std::size_t position_cols() const noexcept { return pos_cols_; }
  std::size_t num_patches() const noexcept { return pos_rows_ * pos_cols_; }

  std::size_t index_of(std::size_t row, std::size_t col) const {
    if (row >= pos_rows_ || col >= pos_cols_) {
      throw IndexError("patch position (" + std::to_string(row) + ", " + std::to_string(col) +
                       ") out of range");
    }
    return row * pos_cols_ + col;
  }

  PatchPosition position(std::size_t idx) const {
    check_index(idx);
    return {idx / pos_cols_, idx % pos_cols_};
  }

  /// Indices of reference patches, row-major over the reference grid.
  const std::vector<std::size_t>& reference_indices() const noexcept { return references_; }

  /// Raster index of the top-left pixel of patch `idx`.
  std::size_t anchor(std::size_t idx) const {
    const auto p = position(idx);
    return p.row * width_ + p.col;
  }

  /// Raster offsets of the n patch entries relative to the anchor.
  std::span<const std::size_t> offsets() const noexcept { return offsets_; }

  void check_index(std::size_t idx) const {
    if (idx >= num_patches()) {
      throw IndexError("patch index " + std::to_string(idx) + " >= " +
                       std::to_string(num_patches()));
    }
  }

  bool fits(const Image& img) const noexcept {
    return img.width() == width_ && img.height() == height_;
  }

 private:
  std::size_t width_;
  std::size_t height_;
  std::size_t patch_size_;
  std::size_t stride_;
  std::size_t pos_rows_ = 0;
  std::size_t pos_cols_ = 0;
  std::vector<std::size_t> references_;
  std::vector<std::size_t> offsets_;
};

namespace detail {
inline void require_fit(const Image& img, const PatchSystem& sys) {
  if (!sys.fits(img)) {
    throw DimensionError("image " + std::to_string(img.width()) + "x" +
                         std::to_string(img.height()) + " does not match patch system " +
                         std::to_string(sys.width()) + "x" + std::to_string(sys.height()));
  }
}
}  // namespace detail

/// R_i x: the n pixels of patch `idx`, row-major inside the window.
inline PatchVector extract_patch(const Image& img, const PatchSystem& sys, std::size_t idx) {
  detail::require_fit(img, sys);
  const std::size_t base = sys.anchor(idx);
  const auto off = sys.offsets();
  PatchVector out(static_cast<Eigen::Index>(off.size()));
  for (std::size_t j = 0; j < off.size(); ++j) out[static_cast<Eigen::Index>(j)] = img[base + off[j]];
  return out;
}

/// All patches as columns of an n x num_patches matrix (column k = patch k).
inline Eigen::MatrixXd extract_all(const Image& img, const PatchSystem& sys) {
  detail::require_fit(img, sys);
  const auto off = sys.offsets();
  Eigen::MatrixXd out(static_cast<Eigen::Index>(sys.dim()),
                      static_cast<Eigen::Index>(sys.num_patches()));
  for (std::size_t k = 0; k < sys.num_patches(); ++k) {
    const std::size_t base = sys.anchor(k);
    double* col = out.col(static_cast<Eigen::Index>(k)).data();
    for (std::size_t j = 0; j < off.size(); ++j) col[j] = img[base + off[j]];
  }
  return out;
}

/// Pixel-mean aggregation of patches: column k of `patches` is placed at patch
/// `indices[k]`. Implements (sum R_i^T R_i)^-1 sum R_i^T z_i over the given set.
/// Throws CoverageError naming the first uncovered pixel.
inline Image aggregate_columns(std::span<const std::size_t> indices, const Eigen::MatrixXd& patches,
                               const PatchSystem& sys) {
  if (patches.cols() != static_cast<Eigen::Index>(indices.size()) ||
      patches.rows() != static_cast<Eigen::Index>(sys.dim())) {
    throw DimensionError("aggregate: patch matrix shape does not match index list");
  }
  std::vector<double> sum(sys.width() * sys.height(), 0.0);
  std::vector<std::uint32_t> count(sum.size(), 0);
  const auto off = sys.offsets();
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const std::size_t base = sys.anchor(indices[k]);
    const double* col = patches.col(static_cast<Eigen::Index>(k)).data();
    for (std::size_t j = 0; j < off.size(); ++j) {
      sum[base + off[j]] += col[j];
      ++count[base + off[j]];
    }
  }
  for (std::size_t p = 0; p < sum.size(); ++p) {
    if (count[p] == 0) throw CoverageError(p / sys.width(), p % sys.width());
    sum[p] /= static_cast<double>(count[p]);
  }
  return Image(sys.width(), sys.height(), std::move(sum));
}

/// Same as aggregate_columns, reading patch `indices[k]` from column
/// `indices[k]` of a store indexed by patch index.
inline Image aggregate_from_store(std::span<const std::size_t> indices, const Eigen::MatrixXd& store,
                                  const PatchSystem& sys) {
  if (store.rows() != static_cast<Eigen::Index>(sys.dim()) ||
      store.cols() != static_cast<Eigen::Index>(sys.num_patches())) {
    throw DimensionError("aggregate: patch store shape does not match patch system");
  }
  std::vector<double> sum(sys.width() * sys.height(), 0.0);
  std::vector<std::uint32_t> count(sum.size(), 0);
  const auto off = sys.offsets();
  for (auto idx : indices) {
    const std::size_t base = sys.anchor(idx);
    const double* col = store.col(static_cast<Eigen::Index>(idx)).data();
    for (std::size_t j = 0; j < off.size(); ++j) {
      sum[base + off[j]] += col[j];
      ++count[base + off[j]];
    }
  }
  for (std::size_t p = 0; p < sum.size(); ++p) {
    if (count[p] == 0) throw CoverageError(p / sys.width(), p % sys.width());
    sum[p] /= static_cast<double>(count[p]);
  }
  return Image(sys.width(), sys.height(), std::move(sum));
}

/// List form: each entry is (patch index, patch values).
inline Image aggregate_patches(std::span<const std::pair<std::size_t, PatchVector>> patches,
                               const PatchSystem& sys) {
  std::vector<std::size_t> indices;
  Eigen::MatrixXd cols(static_cast<Eigen::Index>(sys.dim()),
                       static_cast<Eigen::Index>(patches.size()));
  indices.reserve(patches.size());
  for (std::size_t k = 0; k < patches.size(); ++k) {
    sys.check_index(patches[k].first);
    if (patches[k].second.size() != static_cast<Eigen::Index>(sys.dim())) {
      throw DimensionError("aggregate: patch vector has wrong length");
    }
    indices.push_back(patches[k].first);
    cols.col(static_cast<Eigen::Index>(k)) = patches[k].second;
  }
  return aggregate_columns(indices, cols, sys);
}

/// Peak signal-to-noise ratio in dB. Identical images give +infinity.
inline double psnr(const Image& reference, const Image& test, double peak = 255.0) {
  if (!reference.same_shape(test)) {
    throw DimensionError("psnr: image dimensions differ");
  }
  if (reference.empty()) throw DimensionError("psnr: empty image");
  double sse = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const double d = reference[i] - test[i];
    sse += d * d;
  }
  if (sse == 0.0) return std::numeric_limits<double>::infinity();
  const double mse = sse / static_cast<double>(reference.size());
  return 10.0 * std::log10(peak * peak / mse);
}

/// Copy of `img` with every sample clamped to [lo, hi].
inline Image clamped(Image img, double lo = 0.0, double hi = 255.0) {
  for (auto& s : img.samples()) s = std::clamp(s, lo, hi);
  return img;
}

}  // namespace crf
