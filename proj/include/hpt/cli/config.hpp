#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "hpt/admm/solver.hpp"
#include "hpt/errors.hpp"

namespace hpt::cli {

/// Everything one run needs. Text form is "key = value [unit]" per line,
/// '#' starts a comment. A unit, when written, must match the key's unit.
struct ExperimentConfig {
  // data
  std::string dataset = "synthetic";  // "synthetic" or a dataset path
  std::size_t data_count = 6000;      // images generated when synthetic
  std::size_t train_size = 4000;
  std::size_t pool_size = 500;
  std::uint64_t data_seed = 1;  // dataset, split and victim training
  // victim
  std::string checkpoint;  // empty: <out_dir>/victim.hptq
  std::string arch = "conv:8:3:2:1,conv:16:3:2:1,dense:64,dense:10";
  std::size_t epochs = 8;
  std::size_t batch = 32;
  double train_lr = 2e-3;
  int q = 8;
  double ta_floor = 95.0;
  // attack
  int t = 0;
  double eps = 0.04;
  double kappa = 0.01;
  double gamma = 1.0;
  std::size_t b = 10;
  std::size_t m = 64;
  std::uint64_t seed = 1;  // attacker sample
  std::string mode = "joint";
  int init_steps = 500;
  double init_lr = 0.01;
  double rho0 = 1e-4;
  double rho_growth = 1.01;
  double rho_cap = 100.0;
  std::string rho_schedule = "capped";
  int inner_steps = 5;
  double lr_delta = 1e-5;
  double lr_flow = 1e-5;
  double lr_bits = 1e-4;
  double stop_threshold = 1e-4;
  int max_iters = 3000;
  std::string precision = "float64";
  // evaluation / output
  std::string defense = "none";
  std::string out_dir = "out";

  admm::AdmmConfig admm() const {
    admm::AdmmConfig c;
    c.gamma = gamma;
    c.b = b;
    c.rho0 = rho0;
    c.rho_growth = rho_growth;
    c.rho_cap = rho_cap;
    c.schedule = rho_schedule == "printed-max" ? admm::RhoSchedule::PrintedMax : admm::RhoSchedule::Capped;
    c.inner_steps = inner_steps;
    c.lr_delta = lr_delta;
    c.lr_flow = lr_flow;
    c.lr_bits = lr_bits;
    c.stop_threshold = stop_threshold;
    c.max_iters = max_iters;
    c.target = t;
    return c;
  }

  admm::TriggerInit trigger_init() const { return {init_steps, init_lr, eps, kappa}; }

  std::filesystem::path checkpoint_path() const {
    return checkpoint.empty() ? std::filesystem::path(out_dir) / "victim.hptq" : std::filesystem::path(checkpoint);
  }
};

namespace detail {

struct Field {
  const char* key;
  const char* unit;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

template <class V>
V parse_number(const std::string& s) {
  std::istringstream is(s);
  V v{};
  if constexpr (std::is_unsigned_v<V>) {
    if (!s.empty() && s[0] == '-') throw std::invalid_argument("negative");
  }
  if (!(is >> v)) throw std::invalid_argument("not a number");
  char extra;
  if (is >> extra) throw std::invalid_argument("trailing characters");
  return v;
}

template <class V>
std::string show(V v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

#define HPT_FIELD(name, unit)                                                                       \
  Field {                                                                                           \
    #name, unit, [](ExperimentConfig& c, const std::string& s) {                                    \
      c.name = parse_number<decltype(c.name)>(s);                                                   \
    },                                                                                              \
        [](const ExperimentConfig& c) { return show(c.name); }                                      \
  }
#define HPT_TEXT(name, unit)                                                                        \
  Field {                                                                                           \
    #name, unit, [](ExperimentConfig& c, const std::string& s) { c.name = s; },                     \
        [](const ExperimentConfig& c) { return c.name; }                                            \
  }

inline const std::vector<Field>& fields() {
  static const std::vector<Field> f{
      HPT_TEXT(dataset, ""),          HPT_FIELD(data_count, "images"),  HPT_FIELD(train_size, "images"),
      HPT_FIELD(pool_size, "images"), HPT_FIELD(data_seed, ""),         HPT_TEXT(checkpoint, ""),
      HPT_TEXT(arch, ""),             HPT_FIELD(epochs, "epochs"),      HPT_FIELD(batch, "images"),
      HPT_FIELD(train_lr, ""),        HPT_FIELD(q, "bits"),             HPT_FIELD(ta_floor, "percent"),
      HPT_FIELD(t, "class"),          HPT_FIELD(eps, "intensity"),      HPT_FIELD(kappa, "px"),
      HPT_FIELD(gamma, ""),           HPT_FIELD(b, "bits"),             HPT_FIELD(m, "images"),
      HPT_FIELD(seed, ""),            HPT_TEXT(mode, ""),               HPT_FIELD(init_steps, "steps"),
      HPT_FIELD(init_lr, ""),         HPT_FIELD(rho0, ""),              HPT_FIELD(rho_growth, ""),
      HPT_FIELD(rho_cap, ""),         HPT_TEXT(rho_schedule, ""),       HPT_FIELD(inner_steps, "steps"),
      HPT_FIELD(lr_delta, ""),        HPT_FIELD(lr_flow, ""),           HPT_FIELD(lr_bits, ""),
      HPT_FIELD(stop_threshold, ""),  HPT_FIELD(max_iters, "iterations"), HPT_TEXT(precision, ""),
      HPT_TEXT(defense, ""),          HPT_TEXT(out_dir, ""),
  };
  return f;
}

#undef HPT_FIELD
#undef HPT_TEXT

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  return s.substr(a, s.find_last_not_of(" \t\r") - a + 1);
}

}  // namespace detail

inline std::vector<std::string> config_keys() {
  std::vector<std::string> k;
  for (const auto& f : detail::fields()) k.emplace_back(f.key);
  return k;
}

inline std::string config_unit(const std::string& key) {
  for (const auto& f : detail::fields())
    if (key == f.key) return f.unit;
  return "";
}

/// Applies key/value pairs. Collects every unknown key, bad value and unit
/// mismatch, then throws one ValidationError naming all of them.
inline void apply_settings(ExperimentConfig& cfg, const std::vector<std::pair<std::string, std::string>>& kv) {
  std::vector<std::string> problems;
  for (const auto& [key, raw] : kv) {
    const detail::Field* field = nullptr;
    for (const auto& f : detail::fields())
      if (key == f.key) field = &f;
    if (!field) {
      problems.push_back(key + ": unknown key");
      continue;
    }
    std::string value = detail::trim(raw);
    const std::string unit = field->unit;
    if (!unit.empty()) {
      const auto sp = value.find_first_of(" \t");
      if (sp != std::string::npos) {
        const std::string given = detail::trim(value.substr(sp));
        value = value.substr(0, sp);
        if (given != unit) {
          problems.push_back(key + ": unit '" + given + "' given, expected '" + unit + "'");
          continue;
        }
      }
    }
    try {
      field->set(cfg, value);
    } catch (const std::exception&) {
      problems.push_back(key + ": cannot parse '" + value + "'");
    }
  }
  if (!problems.empty()) {
    std::string msg = "invalid configuration: ";
    for (std::size_t i = 0; i < problems.size(); ++i) msg += (i ? "; " : "") + problems[i];
    throw ValidationError(msg, problems);
  }
}

/// Range and consistency checks.
inline void validate(const ExperimentConfig& c) {
  std::vector<std::string> bad;
  auto need = [&](bool ok, const char* key, const char* what) {
    if (!ok) bad.push_back(std::string(key) + ": " + what);
  };
  need(c.eps > 0, "eps", "must be > 0");
  need(c.kappa > 0, "kappa", "must be > 0");
  need(c.gamma >= 0 && std::isfinite(c.gamma), "gamma", "must be >= 0");
  need(c.m >= 1, "m", "must be >= 1");
  need(c.m <= c.pool_size, "m", "exceeds the attacker pool (pool_size)");
  need(c.q == 4 || c.q == 8, "q", "must be 4 or 8");
  need(c.t >= 0, "t", "must be a class id");
  need(c.mode == "joint" || c.mode == "two-stage" || c.mode == "trigger-only", "mode",
       "must be joint, two-stage or trigger-only");
  need(c.rho_schedule == "capped" || c.rho_schedule == "printed-max", "rho_schedule", "must be capped or printed-max");
  need(c.precision == "float64" || c.precision == "float32", "precision", "must be float64 or float32");
  need(c.rho0 > 0, "rho0", "must be > 0");
  need(c.rho_growth > 0, "rho_growth", "must be > 0");
  need(c.rho_cap > 0, "rho_cap", "must be > 0");
  need(c.inner_steps >= 1, "inner_steps", "must be >= 1");
  need(c.lr_delta > 0, "lr_delta", "must be > 0");
  need(c.lr_flow > 0, "lr_flow", "must be > 0");
  need(c.lr_bits > 0, "lr_bits", "must be > 0");
  need(c.stop_threshold > 0, "stop_threshold", "must be > 0");
  need(c.max_iters >= 1, "max_iters", "must be >= 1");
  need(c.init_steps >= 0, "init_steps", "must be >= 0");
  need(c.init_lr > 0, "init_lr", "must be > 0");
  need(c.epochs >= 1, "epochs", "must be >= 1");
  need(c.batch >= 1, "batch", "must be >= 1");
  need(c.train_lr > 0, "train_lr", "must be > 0");
  need(c.train_size >= 1, "train_size", "must be >= 1");
  need(!c.out_dir.empty(), "out_dir", "must not be empty");
  if (!bad.empty()) {
    std::string msg = "invalid configuration: ";
    for (std::size_t i = 0; i < bad.size(); ++i) msg += (i ? "; " : "") + bad[i];
    throw ValidationError(msg, bad);
  }
}

inline std::vector<std::pair<std::string, std::string>> parse_settings(std::istream& is, const std::string& origin) {
  std::vector<std::pair<std::string, std::string>> kv;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ValidationError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'",
                            {"line " + std::to_string(lineno)});
    }
    kv.emplace_back(detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
  }
  return kv;
}

inline ExperimentConfig load_config(const std::filesystem::path& path, ExperimentConfig base = {}) {
  std::ifstream is(path);
  if (!is) throw InputError("cannot open config " + path.string());
  apply_settings(base, parse_settings(is, path.string()));
  return base;
}

/// Resolved config in the same text format, with units.
inline std::string to_text(const ExperimentConfig& c) {
  std::ostringstream os;
  for (const auto& f : detail::fields()) {
    os << f.key << " = " << f.get(c);
    if (*f.unit) os << ' ' << f.unit;
    os << '\n';
  }
  return os.str();
}

}  // namespace hpt::cli
