#pragma once

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>
#include <string>

#include "crfrestore/image.hpp"

namespace crf::testing {

inline Image random_image(std::size_t w, std::size_t h, std::uint64_t seed, double lo = 0.0,
                          double hi = 255.0) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  Image img(w, h);
  for (auto& s : img.samples()) s = dist(gen);
  return img;
}

/// Smooth image with edges and texture, so that patch statistics are image-like.
inline Image synthetic_scene(std::size_t w, std::size_t h) {
  Image img(w, h);
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c) {
      double v = 60.0 + 0.5 * double(r) + 0.3 * double(c);
      if ((r / 16 + c / 16) % 2 == 0) v += 50.0;
      v += 20.0 * std::sin(0.4 * double(c)) * std::cos(0.15 * double(r));
      img(r, c) = std::clamp(v, 0.0, 255.0);
    }
  return img;
}

/// Path in a per-process scratch directory.
inline std::string temp_path(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() /
                   ("crfrestore_tests_" + std::to_string(::getpid()));
  std::filesystem::create_directories(dir);
  return (dir / name).string();
}

}  // namespace crf::testing
