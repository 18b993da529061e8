#pragma once

// Solver settings as flat key=value pairs: presets, config files, flag
// overrides and the JSON form stored in run manifests.

#include <json.hpp>

#include <cctype>
#include <charconv>
#include <fstream>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "crfrestore/errors.hpp"
#include "crfrestore/solver.hpp"

namespace crf::cli {

/// Bad value or unknown key in a setting.
struct SettingError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

using Setting = std::pair<std::string, std::string>;

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

inline double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos == v.size()) return d;
  } catch (const std::exception&) {
  }
  throw SettingError(key + ": expected a number, got '" + v + "'");
}

template <class T>
T to_unsigned(const std::string& key, const std::string& v) {
  T out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw SettingError(key + ": expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

}  // namespace detail

inline std::string prior_name(PriorKind p) { return p == PriorKind::gsm ? "gsm" : "gaussian"; }
inline std::string task_name(Task t) { return t == Task::inpaint ? "inpaint" : "denoise"; }
inline std::string v_mode_name(ScaleFromRoot m) { return m == ScaleFromRoot::square ? "square" : "paper_sqrt"; }

inline PriorKind parse_prior(const std::string& v) {
  if (v == "gsm") return PriorKind::gsm;
  if (v == "gaussian") return PriorKind::gaussian;
  throw SettingError("prior: expected gaussian or gsm, got '" + v + "'");
}

/// Keys accepted in config files, `--set` and the manifest, in output order.
inline const std::vector<std::string>& setting_keys() {
  static const std::vector<std::string> keys{
      "prior",     "iterations", "lambda0",          "rho0",      "gamma1", "gamma2",  "sigma",
      "patch_size", "k_total",   "window",           "reference_stride", "gsm_alpha", "v_mode", "seed",
      "threads"};
  return keys;
}

inline void apply_setting(SolverConfig& c, const std::string& key, const std::string& raw) {
  using namespace detail;
  const std::string v = trim(raw);
  if (key == "prior") c.prior = parse_prior(v);
  else if (key == "iterations") c.iterations = int(to_unsigned<unsigned>(key, v));
  else if (key == "lambda0") c.lambda0 = to_double(key, v);
  else if (key == "rho0") c.rho0 = to_double(key, v);
  else if (key == "gamma1") c.gamma1 = to_double(key, v);
  else if (key == "gamma2") c.gamma2 = to_double(key, v);
  else if (key == "sigma") c.sigma = to_double(key, v);
  else if (key == "patch_size") c.patch_size = to_unsigned<std::size_t>(key, v);
  else if (key == "k_total") c.k_total = to_unsigned<std::size_t>(key, v);
  else if (key == "window") c.window = to_unsigned<std::size_t>(key, v);
  else if (key == "reference_stride") c.reference_stride = to_unsigned<std::size_t>(key, v);
  else if (key == "gsm_alpha") c.gsm.alpha = to_double(key, v);
  else if (key == "v_mode") {
    if (v == "square") c.gsm.scale_from_root = ScaleFromRoot::square;
    else if (v == "paper_sqrt") c.gsm.scale_from_root = ScaleFromRoot::paper_sqrt;
    else throw SettingError("v_mode: expected square or paper_sqrt, got '" + v + "'");
  } else if (key == "seed") c.seed = to_unsigned<std::uint64_t>(key, v);
  else if (key == "threads") c.threads = to_unsigned<unsigned>(key, v);
  else throw SettingError("unknown setting '" + key + "'");
}

/// Parses `key = value` lines; '#' starts a comment, blank lines are skipped.
inline std::vector<Setting> parse_settings(std::istream& in, const std::string& origin) {
  std::vector<Setting> out;
  std::string line;
  for (int lineno = 1; std::getline(in, line); ++lineno) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw SettingError(origin + ":" + std::to_string(lineno) + ": expected key = value");
    }
    out.emplace_back(detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
  }
  return out;
}

inline std::vector<Setting> read_settings_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path);
  return parse_settings(in, path);
}

inline Setting split_assignment(const std::string& s) {
  const auto eq = s.find('=');
  if (eq == std::string::npos) throw SettingError("expected key=value, got '" + s + "'");
  return {detail::trim(s.substr(0, eq)), detail::trim(s.substr(eq + 1))};
}

/// Named presets holding the standard benchmark parameters.
inline SolverConfig preset(const std::string& name) {
  if (name == "paper-denoise") return paper_denoise_preset(20.0);
  if (name == "paper-inpaint") return paper_inpaint_preset(0.0);
  throw SettingError("unknown preset '" + name + "' (paper-denoise, paper-inpaint)");
}

inline nlohmann::ordered_json to_json(const SolverConfig& c) {
  nlohmann::ordered_json j;
  j["task"] = task_name(c.task);
  j["prior"] = prior_name(c.prior);
  j["iterations"] = c.iterations;
  j["lambda0"] = c.lambda0;
  j["rho0"] = c.rho0;
  j["gamma1"] = c.gamma1;
  j["gamma2"] = c.gamma2;
  j["sigma"] = c.sigma;
  j["patch_size"] = c.patch_size;
  j["k_total"] = c.k_total;
  j["window"] = c.window;
  j["reference_stride"] = c.reference_stride;
  j["gsm_alpha"] = c.gsm.alpha;
  j["v_mode"] = v_mode_name(c.gsm.scale_from_root);
  j["seed"] = c.seed;
  j["threads"] = c.threads;
  return j;
}

inline SolverConfig solver_config_from_json(const nlohmann::json& j) {
  SolverConfig c;
  const std::string task = j.at("task").get<std::string>();
  if (task == "inpaint") c.task = Task::inpaint;
  else if (task == "denoise") c.task = Task::denoise;
  else throw SettingError("manifest: unknown task '" + task + "'");
  c.prior = parse_prior(j.at("prior").get<std::string>());
  c.iterations = j.at("iterations").get<int>();
  c.lambda0 = j.at("lambda0").get<double>();
  c.rho0 = j.at("rho0").get<double>();
  c.gamma1 = j.at("gamma1").get<double>();
  c.gamma2 = j.at("gamma2").get<double>();
  c.sigma = j.at("sigma").get<double>();
  c.patch_size = j.at("patch_size").get<std::size_t>();
  c.k_total = j.at("k_total").get<std::size_t>();
  c.window = j.at("window").get<std::size_t>();
  c.reference_stride = j.at("reference_stride").get<std::size_t>();
  c.gsm.alpha = j.at("gsm_alpha").get<double>();
  apply_setting(c, "v_mode", j.at("v_mode").get<std::string>());
  c.seed = j.at("seed").get<std::uint64_t>();
  c.threads = j.at("threads").get<unsigned>();
  c.validate();
  return c;
}

}  // namespace crf::cli
