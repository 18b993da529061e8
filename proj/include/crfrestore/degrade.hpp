#pragma once

// Synthetic degradations: additive white Gaussian noise and Bernoulli pixel
// loss, both reproducible from a 64-bit seed.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "crfrestore/errors.hpp"
#include "crfrestore/image.hpp"
#include "crfrestore/pgm_io.hpp"
#include "crfrestore/random.hpp"

namespace crf {

struct DegradationSpec {
  double noise_sigma = 0.0;      ///< AWGN standard deviation, intensity units
  double keep_probability = 1.0; ///< probability that a pixel is observed
  std::uint64_t seed = 0;

  void validate() const {
    if (!(noise_sigma >= 0.0)) throw std::invalid_argument("noise sigma must be >= 0");
    if (!(keep_probability > 0.0 && keep_probability <= 1.0)) {
      throw std::invalid_argument("keep probability must be in (0, 1]");
    }
  }
};

/// Per-pixel observation flags, true = observed.
class Mask {
 public:
  Mask() = default;
  Mask(std::size_t width, std::size_t height, bool value = true)
      : width_(width), height_(height), observed_(width * height, value ? 1 : 0) {}

  std::size_t width() const noexcept { return width_; }
  std::size_t height() const noexcept { return height_; }
  std::size_t size() const noexcept { return observed_.size(); }

  bool operator[](std::size_t i) const { return observed_[i] != 0; }
  bool operator()(std::size_t row, std::size_t col) const { return observed_[row * width_ + col] != 0; }
  void set(std::size_t i, bool v) { observed_[i] = v ? 1 : 0; }
  void set(std::size_t row, std::size_t col, bool v) { set(row * width_ + col, v); }

  std::size_t count_observed() const {
    std::size_t n = 0;
    for (auto b : observed_) n += b;
    return n;
  }

  bool matches(const Image& img) const noexcept {
    return img.width() == width_ && img.height() == height_;
  }

  friend bool operator==(const Mask&, const Mask&) = default;

 private:
  std::size_t width_ = 0;
  std::size_t height_ = 0;
  std::vector<std::uint8_t> observed_;
};

/// y = x + n with n_i ~ N(0, sigma^2) i.i.d. The result is not clipped.
inline Image add_noise(const Image& img, double sigma, std::uint64_t seed) {
  if (!(sigma >= 0.0)) throw std::invalid_argument("noise sigma must be >= 0");
  Image out = img;
  if (sigma == 0.0) return out;
  Rng rng(derive_seed(seed, 0x6e6f697365ULL));
  for (auto& s : out.samples()) s += sigma * rng.normal();
  return out;
}

/// i.i.d. Bernoulli(keep_probability) observation mask.
inline Mask make_mask(std::size_t width, std::size_t height, double keep_probability,
                      std::uint64_t seed) {
  if (!(keep_probability > 0.0 && keep_probability <= 1.0)) {
    throw std::invalid_argument("keep probability must be in (0, 1]");
  }
  Mask m(width, height, false);
  Rng rng(derive_seed(seed, 0x6d61736bULL));
  for (std::size_t i = 0; i < m.size(); ++i) m.set(i, rng.uniform() < keep_probability);
  return m;
}

/// y = H x: observed pixels copied, missing ones set to `fill` (a placeholder, not data).
inline Image apply_mask(const Image& img, const Mask& mask, double fill = 0.0) {
  if (!mask.matches(img)) throw DimensionError("apply_mask: mask and image dimensions differ");
  Image out = img;
  for (std::size_t i = 0; i < out.size(); ++i)
    if (!mask[i]) out[i] = fill;
  return out;
}

/// Full degradation: mask first, then noise on the observed pixels.
inline Image degrade(const Image& img, const DegradationSpec& spec, Mask* mask_out = nullptr) {
  spec.validate();
  Mask mask = make_mask(img.width(), img.height(), spec.keep_probability, spec.seed);
  Image y = apply_mask(add_noise(img, spec.noise_sigma, spec.seed), mask, 0.0);
  if (mask_out) *mask_out = std::move(mask);
  return y;
}

/// Mask files are P5 PGM: 255 = observed, 0 = missing. On load any nonzero
/// sample counts as observed.
inline void save_mask(const Mask& mask, const std::string& path) {
  std::vector<std::uint8_t> bytes(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) bytes[i] = mask[i] ? 255 : 0;
  write_pgm8(path, mask.width(), mask.height(), bytes);
}

inline Mask load_mask(const std::string& path) {
  const PgmRaster r = read_pgm_raster(path);
  Mask m(r.width, r.height, false);
  for (std::size_t i = 0; i < m.size(); ++i) m.set(i, r.values[i] != 0);
  return m;
}

}  // namespace crf
