// crf-restore: command-line front end for the patch-prior restoration solver.
//
//   crf-restore degrade  IN OUT [--sigma S] [--keep P] [--seed N] [--mask-out M]
//   crf-restore denoise  IN OUT [solver options]
//   crf-restore inpaint  IN MASK OUT [solver options]
//   crf-restore metrics  REF TEST
//   crf-restore bench    IMAGE_DIR --suite {denoise|inpaint} --out CSV
//   crf-restore replay   MANIFEST [--output-dir DIR]
//
// Exit codes: 0 success, 2 bad arguments, 3 I/O failure, 4 numerical failure.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "bench.hpp"
#include "cli_config.hpp"
#include "crfrestore/degrade.hpp"
#include "crfrestore/errors.hpp"
#include "crfrestore/parallel.hpp"
#include "crfrestore/pgm_io.hpp"
#include "crfrestore/solver.hpp"

namespace {

using json = nlohmann::ordered_json;
using namespace crf;
using namespace crf::cli;

enum Exit { exit_ok = 0, exit_argument = 2, exit_io = 3, exit_numerical = 4 };

constexpr int manifest_format = 1;

/// Solver options shared by denoise, inpaint and bench.
struct SolverFlags {
  std::string preset;
  std::string config_file;
  std::vector<std::string> sets;
  std::optional<std::string> prior;
  std::optional<double> sigma;
  std::optional<int> iterations;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
};

void add_solver_flags(CLI::App* cmd, SolverFlags& f, bool per_run) {
  cmd->add_option("--preset", f.preset, "paper-denoise or paper-inpaint (default: the task's)");
  cmd->add_option("--config", f.config_file, "key=value settings file");
  cmd->add_option("--set", f.sets, "override one setting, key=value (repeatable)");
  if (per_run) {
    cmd->add_option("--prior", f.prior, "gaussian or gsm")->check(CLI::IsMember({"gaussian", "gsm"}));
    cmd->add_option("--sigma", f.sigma, "noise standard deviation of the input");
  }
  cmd->add_option("--iterations", f.iterations, "outer iterations");
  cmd->add_option("--seed", f.seed, "seed for cluster assignment");
  cmd->add_option("--threads", f.threads, "worker threads (default $CRF_RESTORE_THREADS or 1)");
}

/// Everything the user asked to change relative to the task preset, in
/// precedence order: config file, then --set, then the named flags.
std::vector<Setting> collect_overrides(const SolverFlags& f) {
  std::vector<Setting> out;
  if (!f.config_file.empty()) out = read_settings_file(f.config_file);
  for (const auto& s : f.sets) out.push_back(split_assignment(s));
  char buf[64];
  if (f.prior) out.emplace_back("prior", *f.prior);
  if (f.sigma) {
    std::snprintf(buf, sizeof buf, "%.17g", *f.sigma);
    out.emplace_back("sigma", buf);
  }
  if (f.iterations) out.emplace_back("iterations", std::to_string(*f.iterations));
  if (f.seed) out.emplace_back("seed", std::to_string(*f.seed));
  if (f.threads) out.emplace_back("threads", std::to_string(*f.threads));
  return out;
}

SolverConfig base_config(Task task, const std::string& preset_name) {
  SolverConfig c = preset(preset_name.empty() ? (task == Task::inpaint ? "paper-inpaint" : "paper-denoise")
                                              : preset_name);
  c.task = task;
  c.threads = default_thread_count();
  return c;
}

SolverConfig resolve_config(Task task, const std::string& preset_name, const std::vector<Setting>& overrides) {
  SolverConfig c = base_config(task, preset_name);
  for (const auto& [k, v] : overrides) apply_setting(c, k, v);
  c.validate();
  return c;
}

void write_json(const json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << j.dump(2) << '\n';
  if (!out) throw IoError("failed writing " + path);
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  return out;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

json psnr_value(double v) { return std::isinf(v) ? json("inf") : json(v); }

// ---------------------------------------------------------------------------
// Jobs: the replayable content of each command

struct DegradeJob {
  std::string in;
  std::string out;
  std::string mask_out;
  DegradationSpec spec;
};

json execute(const DegradeJob& job) {
  const auto t0 = std::chrono::steady_clock::now();
  job.spec.validate();
  const Image clean = load_image(job.in);
  Mask mask(1, 1, true);
  const Image y = degrade(clean, job.spec, &mask);
  save_image(y, job.out);
  if (!job.mask_out.empty()) save_mask(mask, job.mask_out);
  json m;
  m["format"] = manifest_format;
  m["command"] = "degrade";
  m["inputs"] = {{"image", job.in}};
  m["degradation"] = {{"sigma", job.spec.noise_sigma}, {"keep", job.spec.keep_probability}, {"seed", job.spec.seed}};
  m["outputs"] = {{"image", job.out}, {"mask", job.mask_out}};
  m["psnr"] = {{"output", psnr_value(psnr(clean, load_image(job.out)))}};
  m["observed_fraction"] = double(mask.count_observed()) / double(mask.size());
  m["wall_seconds"] = seconds_since(t0);
  return m;
}

struct RestoreJob {
  std::string in;
  std::string mask;  ///< inpainting only
  std::string out;
  std::string csv;
  std::string reference;
  SolverConfig cfg;
};

json execute(const RestoreJob& job) {
  const auto t0 = std::chrono::steady_clock::now();
  const Image y = load_image(job.in);
  std::optional<Mask> mask;
  if (job.cfg.task == Task::inpaint) mask = load_mask(job.mask);
  std::optional<Image> ref;
  if (!job.reference.empty()) ref = load_image(job.reference);
  RunOptions opts;
  if (ref) opts.reference = &*ref;
  const RunResult r = run(y, mask ? &*mask : nullptr, job.cfg, opts);
  save_image(r.restored, job.out);
  if (!job.csv.empty()) {
    auto out = open_output(job.csv);
    write_diagnostics_csv(out, r.diagnostics, ref.has_value());
    if (!out) throw IoError("failed writing " + job.csv);
  }
  json m;
  m["format"] = manifest_format;
  m["command"] = task_name(job.cfg.task);
  m["inputs"] = {{"image", job.in}, {"mask", job.mask}, {"reference", job.reference}};
  m["solver"] = to_json(job.cfg);
  m["outputs"] = {{"image", job.out}, {"csv", job.csv}};
  if (ref) {
    m["psnr"] = {{"input", psnr_value(psnr(*ref, clamped(y)))}, {"output", psnr_value(psnr(*ref, r.restored))}};
  }
  if (!r.diagnostics.empty()) m["final_objective"] = r.diagnostics.back().objective;
  m["wall_seconds"] = seconds_since(t0);
  return m;
}

struct BenchJob {
  BenchOptions opt;
  std::string preset;
  std::vector<Setting> overrides;
  std::string out;
  std::string runtime_out;
};

json execute(const BenchJob& job) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto make_config = [&](Task task, double sigma, PriorKind prior) {
    SolverConfig c = resolve_config(task, job.preset, job.overrides);
    c.sigma = sigma;
    c.prior = prior;
    c.validate();
    return c;
  };
  if (!std::filesystem::is_directory(job.opt.image_dir)) throw IoError("no such directory: " + job.opt.image_dir);
  // validate the overrides before spending time on the grid
  make_config(job.opt.suite == Suite::inpaint ? Task::inpaint : Task::denoise, 0.0, PriorKind::gsm);
  const BenchReport rep = run_bench(job.opt, make_config);
  for (const auto& name : rep.missing) std::cerr << "missing image: " << name << ".pgm\n";
  for (const auto& w : rep.warnings) std::cerr << "warning: " << w << '\n';
  {
    auto out = open_output(job.out);
    write_bench_csv(out, rep, job.opt.suite, false);
    if (!out) throw IoError("failed writing " + job.out);
  }
  {
    auto out = open_output(job.runtime_out);
    write_bench_csv(out, rep, job.opt.suite, true);
    if (!out) throw IoError("failed writing " + job.runtime_out);
  }
  json m;
  m["format"] = manifest_format;
  m["command"] = "bench";
  m["inputs"] = {{"image_dir", job.opt.image_dir}, {"images", job.opt.images}};
  m["bench"] = {{"suite", job.opt.suite == Suite::inpaint ? "inpaint" : "denoise"},
                {"settings", job.opt.settings},
                {"inpaint_sigma", job.opt.inpaint_sigma},
                {"seed", job.opt.seed},
                {"jobs", job.opt.jobs}};
  m["preset"] = job.preset;
  json ov = json::array();
  for (const auto& [k, v] : job.overrides) ov.push_back({k, v});
  m["overrides"] = ov;
  m["image_sha256"] = rep.image_sha256;
  m["missing_images"] = rep.missing;
  m["outputs"] = {{"csv", job.out}, {"runtime_csv", job.runtime_out}};
  m["wall_seconds"] = seconds_since(t0);
  return m;
}

// ---------------------------------------------------------------------------
// Replay

std::string relocate(const std::string& path, const std::string& dir) {
  if (path.empty() || dir.empty()) return path;
  return (std::filesystem::path(dir) / std::filesystem::path(path).filename()).string();
}

json replay(const json& m, const std::string& dir) {
  if (m.at("format").get<int>() != manifest_format) throw SettingError("unsupported manifest format");
  const std::string cmd = m.at("command").get<std::string>();
  const json& in = m.at("inputs");
  const json& outs = m.at("outputs");
  if (cmd == "degrade") {
    DegradeJob job;
    job.in = in.at("image");
    job.out = relocate(outs.at("image"), dir);
    job.mask_out = relocate(outs.at("mask"), dir);
    const json& d = m.at("degradation");
    job.spec.noise_sigma = d.at("sigma");
    job.spec.keep_probability = d.at("keep");
    job.spec.seed = d.at("seed");
    return execute(job);
  }
  if (cmd == "denoise" || cmd == "inpaint") {
    RestoreJob job;
    job.in = in.at("image");
    job.mask = in.at("mask");
    job.reference = in.at("reference");
    job.out = relocate(outs.at("image"), dir);
    job.csv = relocate(outs.at("csv"), dir);
    job.cfg = solver_config_from_json(m.at("solver"));
    return execute(job);
  }
  if (cmd == "bench") {
    BenchJob job;
    job.opt.image_dir = in.at("image_dir");
    job.opt.images = in.at("images").get<std::vector<std::string>>();
    const json& b = m.at("bench");
    job.opt.suite = b.at("suite") == "inpaint" ? Suite::inpaint : Suite::denoise;
    job.opt.settings = b.at("settings").get<std::vector<double>>();
    job.opt.inpaint_sigma = b.at("inpaint_sigma");
    job.opt.seed = b.at("seed");
    job.opt.jobs = b.at("jobs");
    job.preset = m.at("preset");
    for (const auto& kv : m.at("overrides")) job.overrides.emplace_back(kv.at(0), kv.at(1));
    job.out = relocate(outs.at("csv"), dir);
    job.runtime_out = relocate(outs.at("runtime_csv"), dir);
    return execute(job);
  }
  throw SettingError("manifest command '" + cmd + "' cannot be replayed");
}

std::string default_manifest(const std::string& out) { return out + ".manifest.json"; }

int run_cli(int argc, char** argv) {
  CLI::App app{"Patch-prior image restoration (denoising and inpainting)"};
  app.require_subcommand(1);

  DegradeJob degrade_job;
  std::string degrade_manifest;
  auto* deg = app.add_subcommand("degrade", "add Gaussian noise, then drop pixels at random");
  deg->add_option("input", degrade_job.in, "clean PGM image")->required();
  deg->add_option("output", degrade_job.out, "degraded PGM image")->required();
  deg->add_option("--sigma", degrade_job.spec.noise_sigma, "noise standard deviation")->check(CLI::NonNegativeNumber);
  deg->add_option("--keep", degrade_job.spec.keep_probability, "probability a pixel is observed")
      ->check(CLI::Range(0.0, 1.0));
  deg->add_option("--seed", degrade_job.spec.seed, "seed for noise and mask");
  deg->add_option("--mask-out", degrade_job.mask_out, "write the observation mask (PGM, 255 = observed)");
  deg->add_option("--manifest", degrade_manifest, "manifest path (default OUTPUT.manifest.json)");

  RestoreJob restore_job;
  SolverFlags flags;
  std::string restore_manifest;
  auto add_restore = [&](CLI::App* cmd) {
    add_solver_flags(cmd, flags, true);
    cmd->add_option("--csv", restore_job.csv, "per-iteration diagnostics CSV");
    cmd->add_option("--reference", restore_job.reference, "clean image for PSNR reporting")
        ;
    cmd->add_option("--manifest", restore_manifest, "manifest path (default OUTPUT.manifest.json)");
  };
  auto* den = app.add_subcommand("denoise", "remove additive Gaussian noise");
  den->add_option("input", restore_job.in, "noisy PGM image")->required();
  den->add_option("output", restore_job.out, "restored PGM image")->required();
  add_restore(den);
  auto* inp = app.add_subcommand("inpaint", "estimate missing pixels");
  inp->add_option("input", restore_job.in, "observed PGM image")->required();
  inp->add_option("mask", restore_job.mask, "mask PGM (nonzero = observed)")->required();
  inp->add_option("output", restore_job.out, "restored PGM image")->required();
  add_restore(inp);

  std::string ref_path;
  std::string test_path;
  double peak = 255.0;
  auto* met = app.add_subcommand("metrics", "print the PSNR of TEST against REF");
  met->add_option("ref", ref_path)->required();
  met->add_option("test", test_path)->required();
  met->add_option("--peak", peak, "peak intensity");

  BenchJob bench_job;
  SolverFlags bench_flags;
  std::string suite = "denoise";
  std::string bench_manifest;
  auto* ben = app.add_subcommand("bench", "run the standard benchmark grid for both priors");
  ben->add_option("image_dir", bench_job.opt.image_dir, "directory holding NAME.pgm test images")->required();
  ben->add_option("--suite", suite, "denoise or inpaint")->check(CLI::IsMember({"denoise", "inpaint"}));
  ben->add_option("--out", bench_job.out, "PSNR table CSV")->required();
  ben->add_option("--runtime-out", bench_job.runtime_out, "runtime table CSV (default OUT with .runtime.csv)");
  ben->add_option("--images", bench_job.opt.images, "image names (default: the suite's standard set)")
      ->delimiter(',');
  ben->add_option("--settings", bench_job.opt.settings, "noise sigmas (denoise) or available fractions (inpaint)")
      ->delimiter(',');
  ben->add_option("--inpaint-sigma", bench_job.opt.inpaint_sigma, "noise added in the inpaint suite")
      ->check(CLI::NonNegativeNumber);
  ben->add_option("--data-seed", bench_job.opt.seed, "seed for noise and masks");
  ben->add_option("--jobs", bench_job.opt.jobs, "grid cells run concurrently")->check(CLI::PositiveNumber);
  ben->add_option("--manifest", bench_manifest, "manifest path (default OUT.manifest.json)");
  add_solver_flags(ben, bench_flags, false);

  std::string manifest_in;
  std::string output_dir;
  auto* rep = app.add_subcommand("replay", "rerun a command from its manifest");
  rep->add_option("manifest", manifest_in)->required();
  rep->add_option("--output-dir", output_dir, "write artifacts here instead of the recorded paths");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? exit_ok : exit_argument;
  }

  if (deg->parsed()) {
    const json m = execute(degrade_job);
    write_json(m, degrade_manifest.empty() ? default_manifest(degrade_job.out) : degrade_manifest);
    std::cout << m.dump(2) << '\n';
  } else if (den->parsed() || inp->parsed()) {
    const Task task = inp->parsed() ? Task::inpaint : Task::denoise;
    restore_job.cfg = resolve_config(task, flags.preset, collect_overrides(flags));
    const json m = execute(restore_job);
    write_json(m, restore_manifest.empty() ? default_manifest(restore_job.out) : restore_manifest);
    if (m.contains("psnr")) {
      std::cout << "psnr " << m["psnr"]["input"].dump() << " -> " << m["psnr"]["output"].dump() << " dB\n";
    }
  } else if (met->parsed()) {
    const double v = psnr(load_image(ref_path), load_image(test_path), peak);
    if (std::isinf(v)) std::cout << "inf\n";
    else std::printf("%.4f\n", v);
  } else if (ben->parsed()) {
    bench_job.opt.suite = suite == "inpaint" ? Suite::inpaint : Suite::denoise;
    if (bench_job.runtime_out.empty()) {
      auto p = std::filesystem::path(bench_job.out);
      bench_job.runtime_out = (p.parent_path() / (p.stem().string() + ".runtime.csv")).string();
    }
    bench_job.preset = bench_flags.preset;
    bench_job.overrides = collect_overrides(bench_flags);
    const json m = execute(bench_job);
    write_json(m, bench_manifest.empty() ? default_manifest(bench_job.out) : bench_manifest);
  } else if (rep->parsed()) {
    std::ifstream in(manifest_in);
    json m;
    try {
      m = json::parse(in);
    } catch (const json::exception& e) {
      throw IoError(manifest_in + ": " + e.what());
    }
    if (!output_dir.empty()) std::filesystem::create_directories(output_dir);
    json fresh;
    try {
      fresh = replay(m, output_dir);
    } catch (const json::exception& e) {
      throw SettingError(manifest_in + ": " + e.what());
    }
    if (!output_dir.empty()) {
      write_json(fresh, (std::filesystem::path(output_dir) / std::filesystem::path(manifest_in).filename()).string());
    }
  }
  return exit_ok;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run_cli(argc, argv);
  } catch (const crf::IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_io;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_io;
  } catch (const crf::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return exit_numerical;
  } catch (const crf::CoverageError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return exit_numerical;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_argument;
  } catch (const std::out_of_range& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_argument;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
