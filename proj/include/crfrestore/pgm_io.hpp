#pragma once

// Binary (P5) and ASCII (P2) PGM reading; 8-bit P5 writing.
//
// Samples are mapped to the nominal [0, 255] range as value * 255 / maxval,
// so 8-bit files with maxval 255 load unchanged and 16-bit files keep their
// full precision as reals. On save, samples are clamped to [0, 255] and
// rounded to the nearest integer.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "crfrestore/errors.hpp"
#include "crfrestore/image.hpp"

namespace crf {

/// Raw PGM contents before intensity mapping.
struct PgmRaster {
  std::size_t width = 0;
  std::size_t height = 0;
  unsigned maxval = 255;
  std::vector<std::uint16_t> values;
};

namespace detail {

class PgmHeaderReader {
 public:
  PgmHeaderReader(const std::vector<unsigned char>& bytes, const std::string& path)
      : bytes_(bytes), path_(path) {}

  std::string magic() {
    if (bytes_.size() < 2) fail("file too short");
    pos_ = 2;
    return std::string(bytes_.begin(), bytes_.begin() + 2);
  }

  unsigned long number() {
    skip_space_and_comments();
    if (pos_ >= bytes_.size() || !std::isdigit(bytes_[pos_])) fail("malformed header");
    unsigned long v = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      v = v * 10 + static_cast<unsigned long>(bytes_[pos_] - '0');
      if (v > 1'000'000'000UL) fail("header value too large");
      ++pos_;
    }
    return v;
  }

  /// Exactly one whitespace byte separates the header from binary data.
  std::size_t raster_start() {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) fail("malformed header");
    return pos_ + 1;
  }

  std::size_t position() const noexcept { return pos_; }

  [[noreturn]] void fail(const std::string& what) const {
    throw IoError(path_ + ": " + what);
  }

 private:
  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  const std::vector<unsigned char>& bytes_;
  const std::string& path_;
  std::size_t pos_ = 0;
};

inline std::vector<unsigned char> read_all(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path + " for reading");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace detail

inline PgmRaster read_pgm_raster(const std::string& path) {
  const auto bytes = detail::read_all(path);
  detail::PgmHeaderReader hdr(bytes, path);
  const std::string magic = hdr.magic();
  if (magic != "P5" && magic != "P2") hdr.fail("unsupported format '" + magic + "' (need P5 or P2)");

  PgmRaster r;
  r.width = hdr.number();
  r.height = hdr.number();
  const unsigned long maxval = hdr.number();
  if (r.width == 0 || r.height == 0) hdr.fail("zero image dimension");
  if (maxval == 0 || maxval > 65535) hdr.fail("maxval out of range");
  r.maxval = static_cast<unsigned>(maxval);
  const std::size_t count = r.width * r.height;
  r.values.resize(count);

  if (magic == "P2") {
    for (std::size_t i = 0; i < count; ++i) {
      const auto v = hdr.number();
      if (v > maxval) hdr.fail("sample exceeds maxval");
      r.values[i] = static_cast<std::uint16_t>(v);
    }
    return r;
  }

  const std::size_t start = hdr.raster_start();
  const std::size_t bps = maxval < 256 ? 1 : 2;
  if (bytes.size() < start + count * bps) hdr.fail("truncated raster data");
  for (std::size_t i = 0; i < count; ++i) {
    unsigned v = bps == 1 ? bytes[start + i]
                          : (unsigned(bytes[start + 2 * i]) << 8) | bytes[start + 2 * i + 1];
    if (v > maxval) hdr.fail("sample exceeds maxval");
    r.values[i] = static_cast<std::uint16_t>(v);
  }
  return r;
}

/// Loads a grayscale PGM into the nominal [0, 255] range.
inline Image load_image(const std::string& path) {
  const PgmRaster r = read_pgm_raster(path);
  std::vector<double> samples(r.values.size());
  const double scale = 255.0 / static_cast<double>(r.maxval);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    samples[i] = r.maxval == 255 ? double(r.values[i]) : double(r.values[i]) * scale;
  }
  return Image(r.width, r.height, std::move(samples));
}

/// Quantizes one sample for 8-bit storage: clamp to [0, 255], round half away from zero.
inline std::uint8_t quantize8(double v) {
  if (!(v > 0.0)) return 0;  // also maps NaN to 0
  if (v >= 255.0) return 255;
  return static_cast<std::uint8_t>(std::lround(v));
}

inline void write_pgm8(const std::string& path, std::size_t width, std::size_t height,
                       const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << "P5\n" << width << ' ' << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path);
}

/// Saves as 8-bit binary PGM.
inline void save_image(const Image& img, const std::string& path) {
  std::vector<std::uint8_t> bytes(img.size());
  std::transform(img.samples().begin(), img.samples().end(), bytes.begin(), quantize8);
  write_pgm8(path, img.width(), img.height(), bytes);
}

/// Saves as 16-bit binary PGM, value * 65535 / 255 rounded.
inline void save_image16(const Image& img, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << "P5\n" << img.width() << ' ' << img.height() << "\n65535\n";
  for (double s : img.samples()) {
    const double v = std::clamp(s, 0.0, 255.0) * (65535.0 / 255.0);
    const auto q = static_cast<std::uint16_t>(std::lround(v));
    const char be[2] = {static_cast<char>(q >> 8), static_cast<char>(q & 0xff)};
    out.write(be, 2);
  }
  if (!out) throw IoError("write failed for " + path);
}

}  // namespace crf
