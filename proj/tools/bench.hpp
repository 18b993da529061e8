#pragma once

// Benchmark grid over standard test images: degrade, restore with both priors,
// tabulate PSNR as one table per suite.

#include <openssl/evp.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "crfrestore/degrade.hpp"
#include "crfrestore/errors.hpp"
#include "crfrestore/pgm_io.hpp"
#include "crfrestore/solver.hpp"

namespace crf::cli {

inline std::string sha256_hex(const std::vector<unsigned char>& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw IoError("SHA-256 computation failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

/// SHA-256 of the 8-bit PGM files produced by tools/prepare_images.py from
/// the sources named in the README. Images without an entry are accepted with
/// a warning.
inline const std::map<std::string, std::string>& known_checksums() {
  static const std::map<std::string, std::string> sums{
      {"cameraman", "6fd502b9574cf021238a585a56ba2a81161a5a677651989de213dabcc2a127bd"},
      {"lena", "3c011a8e33645ec9bf30d84b938a0ea56a53739e2fddf18e61df16842006bde1"},
  };
  return sums;
}

enum class Suite { denoise, inpaint };

struct BenchOptions {
  std::string image_dir;
  Suite suite = Suite::denoise;
  std::vector<std::string> images;      ///< empty: the suite's standard list
  std::vector<double> settings;         ///< sigma (denoise) or available fraction (inpaint)
  double inpaint_sigma = 0.0;           ///< noise added before masking in the inpaint suite
  std::uint64_t seed = 0;
  unsigned jobs = 1;
};

inline std::vector<std::string> standard_images(Suite s) {
  if (s == Suite::denoise) return {"peppers", "house", "cameraman", "barbara", "lena", "man"};
  return {"barbara", "lena", "house", "boats"};
}

inline std::vector<double> standard_settings(Suite s) {
  if (s == Suite::denoise) return {10.0, 20.0, 30.0, 50.0};
  return {0.8, 0.5, 0.3};
}

struct BenchCell {
  std::string image;
  double setting = 0.0;
  PriorKind prior = PriorKind::gsm;
  double psnr = 0.0;
  double seconds = 0.0;
};

struct BenchReport {
  std::vector<BenchCell> cells;
  std::vector<std::string> missing;
  std::map<std::string, std::string> image_sha256;
  std::vector<std::string> warnings;
};

/// Settings-major order for denoising (one block per sigma, as in the
/// denoising table), image-major for inpainting.
inline BenchReport run_bench(const BenchOptions& opt,
                             const std::function<SolverConfig(Task, double, PriorKind)>& make_config) {
  BenchReport rep;
  const auto names = opt.images.empty() ? standard_images(opt.suite) : opt.images;
  const auto settings = opt.settings.empty() ? standard_settings(opt.suite) : opt.settings;
  std::map<std::string, Image> clean;
  for (const auto& name : names) {
    const auto path = std::filesystem::path(opt.image_dir) / (name + ".pgm");
    if (!std::filesystem::exists(path)) {
      rep.missing.push_back(name);
      continue;
    }
    const std::string digest = sha256_hex(crf::detail::read_all(path.string()));
    rep.image_sha256[name] = digest;
    const auto& pub = known_checksums();
    if (const auto it = pub.find(name); it == pub.end()) {
      rep.warnings.push_back(name + ": no known checksum, results may not match the reference image");
    } else if (it->second != digest) {
      rep.warnings.push_back(name + ": SHA-256 mismatch with the known checksum");
    }
    clean.emplace(name, load_image(path.string()));
  }

  const bool inpaint = opt.suite == Suite::inpaint;
  for (std::size_t a = 0; a < (inpaint ? names.size() : settings.size()); ++a)
    for (std::size_t b = 0; b < (inpaint ? settings.size() : names.size()); ++b) {
      const auto& name = inpaint ? names[a] : names[b];
      if (!clean.count(name)) continue;
      for (auto prior : {PriorKind::gaussian, PriorKind::gsm})
        rep.cells.push_back({name, inpaint ? settings[b] : settings[a], prior, 0.0, 0.0});
    }

  std::atomic<std::size_t> next{0};
  std::mutex err_mu;
  std::exception_ptr first_error;
  auto worker = [&] {
    for (std::size_t i; (i = next++) < rep.cells.size();) {
      BenchCell& cell = rep.cells[i];
      try {
        const Image& img = clean.at(cell.image);
        const auto t0 = std::chrono::steady_clock::now();
        RunResult r;
        if (inpaint) {
          const SolverConfig cfg = make_config(Task::inpaint, opt.inpaint_sigma, cell.prior);
          const Mask mask = make_mask(img.width(), img.height(), cell.setting, opt.seed);
          const Image y = apply_mask(add_noise(img, opt.inpaint_sigma, opt.seed), mask);
          r = run(y, &mask, cfg);
        } else {
          const SolverConfig cfg = make_config(Task::denoise, cell.setting, cell.prior);
          r = run(add_noise(img, cell.setting, opt.seed), nullptr, cfg);
        }
        cell.psnr = psnr(img, r.restored);
        cell.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      } catch (...) {
        const std::lock_guard lock(err_mu);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  const unsigned jobs = std::max(1u, std::min<unsigned>(opt.jobs, unsigned(rep.cells.size())));
  std::vector<std::thread> pool;
  for (unsigned j = 1; j < jobs; ++j) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
  return rep;
}

namespace detail {

inline std::string setting_label(Suite s, double v) {
  char buf[32];
  if (s == Suite::denoise) std::snprintf(buf, sizeof buf, "%g", v);
  else std::snprintf(buf, sizeof buf, "%g%%", v * 100.0);
  return buf;
}

}  // namespace detail

/// One row per (image, setting) with a PSNR column per prior, followed by an
/// `Avg.` row per setting over the images present. With `runtime` the columns
/// hold seconds instead of dB.
inline void write_bench_csv(std::ostream& out, const BenchReport& rep, Suite suite, bool runtime) {
  const char* value = runtime ? "seconds" : "psnr";
  out << "image," << (suite == Suite::denoise ? "sigma" : "available") << ",gaussian_" << value << ",gsm_"
      << value << '\n';
  struct Row {
    std::string image;
    double setting;
    double g = 0.0;
    double s = 0.0;
  };
  std::vector<Row> rows;
  for (const auto& c : rep.cells) {
    if (rows.empty() || rows.back().image != c.image || rows.back().setting != c.setting) {
      rows.push_back({c.image, c.setting});
    }
    (c.prior == PriorKind::gaussian ? rows.back().g : rows.back().s) = runtime ? c.seconds : c.psnr;
  }
  char buf[64];
  const auto emit = [&](const std::string& image, double setting, double g, double s) {
    out << image << ',' << detail::setting_label(suite, setting);
    std::snprintf(buf, sizeof buf, runtime ? ",%.3f,%.3f" : ",%.4f,%.4f", g, s);
    out << buf << '\n';
  };
  std::vector<double> order;
  for (const auto& r : rows) {
    emit(r.image, r.setting, r.g, r.s);
    if (std::find(order.begin(), order.end(), r.setting) == order.end()) order.push_back(r.setting);
  }
  for (double setting : order) {
    double g = 0.0;
    double s = 0.0;
    int n = 0;
    for (const auto& r : rows)
      if (r.setting == setting) {
        g += r.g;
        s += r.s;
        ++n;
      }
    emit("Avg.", setting, g / n, s / n);
  }
}

}  // namespace crf::cli
