// hpt: train a quantized victim, run the HPT attack, evaluate, defend,
// sweep and render. See README.md for usage.

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "hpt/cli/config.hpp"
#include "hpt/cli/experiment.hpp"
#include "hpt/harness/report.hpp"
#include "hpt/harness/sweep.hpp"
#include "hpt/quantnet/checkpoint.hpp"
#include "hpt/trigger/io.hpp"
#include "hpt/util/image_io.hpp"

namespace fs = std::filesystem;
using hpt::harness::json;

namespace {

constexpr int kReportVersion = 1;

struct Common {
  std::string config_file;
  std::map<std::string, std::string> overrides;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_file, "key = value config file (flags override it)");
  for (const auto& key : hpt::cli::config_keys()) {
    const std::string unit = hpt::cli::config_unit(key);
    cmd->add_option_function<std::string>(
        "--" + key, [&c, key](const std::string& v) { c.overrides[key] = v; },
        unit.empty() ? std::string("config key") : "config key, unit: " + unit);
  }
}

hpt::cli::ExperimentConfig resolve(const Common& c) {
  hpt::cli::ExperimentConfig cfg;
  if (!c.config_file.empty()) cfg = hpt::cli::load_config(c.config_file);
  std::vector<std::pair<std::string, std::string>> kv(c.overrides.begin(), c.overrides.end());
  hpt::cli::apply_settings(cfg, kv);
  hpt::cli::validate(cfg);
  return cfg;
}

fs::path out_path(const hpt::cli::ExperimentConfig& cfg, const std::string& name) {
  fs::create_directories(cfg.out_dir);
  return fs::path(cfg.out_dir) / name;
}

json artifact(const fs::path& p) { return {{"path", p.string()}, {"fnv1a", hpt::harness::file_hash(p)}}; }

json config_json(const hpt::cli::ExperimentConfig& cfg) {
  json j = json::object();
  std::istringstream is(hpt::cli::to_text(cfg));
  std::string line;
  while (std::getline(is, line)) {
    const auto eq = line.find(" = ");
    j[line.substr(0, eq)] = line.substr(eq + 3);
  }
  return j;
}

void write_json(const fs::path& p, const json& j) { hpt::harness::write_text(p, j.dump(2) + "\n"); }

hpt::quant::Model load_victim(const hpt::cli::ExperimentConfig& cfg) {
  const auto p = cfg.checkpoint_path();
  if (!fs::exists(p)) throw hpt::InputError("checkpoint " + p.string() + " not found (run `hpt train` first)");
  return hpt::quant::load_checkpoint(p);
}

int cmd_train(const hpt::cli::ExperimentConfig& cfg) {
  const auto split = hpt::cli::load_split(cfg);
  const auto res = hpt::cli::train(cfg, split);
  fs::create_directories(cfg.out_dir);
  const auto ckpt = cfg.checkpoint_path();
  if (ckpt.has_parent_path()) fs::create_directories(ckpt.parent_path());
  hpt::quant::save_checkpoint(ckpt, res.model);
  hpt::harness::write_text(out_path(cfg, "config.cfg"), hpt::cli::to_text(cfg));
  json j{{"version", kReportVersion},
         {"ta", res.accuracy},
         {"float_ta", res.float_accuracy},
         {"epoch_loss", res.epoch_loss},
         {"warning", res.warning},
         {"checkpoint", artifact(ckpt)},
         {"config", config_json(cfg)}};
  write_json(out_path(cfg, "train.json"), j);
  if (!res.warning.empty()) std::cerr << "warning: " << res.warning << "\n";
  std::cout << "train: TA " << res.accuracy << "% (float " << res.float_accuracy << "%), checkpoint " << ckpt.string()
            << "\n";
  return 0;
}

json attack_json(const hpt::cli::ExperimentConfig& cfg, const hpt::cli::AttackRun& run) {
  return {{"mode", hpt::admm::to_string(run.outcome.mode)},
          {"converged", run.outcome.converged},
          {"iterations", run.outcome.trace.size()},
          {"binarity_gap", run.outcome.binarity_gap},
          {"diagnostics", run.outcome.diagnostics},
          {"attacker_images", cfg.m}};
}

int cmd_attack(const hpt::cli::ExperimentConfig& cfg) {
  const auto victim = load_victim(cfg);
  const auto split = hpt::cli::load_split(cfg);
  const auto run = hpt::cli::run_attack(cfg, victim, split);

  const auto trig_p = out_path(cfg, "trigger.hptt");
  const auto flips_p = out_path(cfg, "flips.json");
  const auto trace_p = out_path(cfg, "trace.csv");
  const auto cfg_p = out_path(cfg, "config.cfg");
  hpt::trigger::save_trigger(trig_p, run.outcome.trigger);
  write_json(flips_p, hpt::harness::flips_to_json(victim, run.outcome.flips));
  hpt::harness::write_text(trace_p, hpt::admm::trace_csv(run.outcome.trace));
  std::ostringstream init;
  init << "step,loss\n";
  for (std::size_t i = 0; i < run.outcome.init_trace.size(); ++i) init << i << ',' << run.outcome.init_trace[i] << '\n';
  hpt::harness::write_text(out_path(cfg, "init_trace.csv"), init.str());
  hpt::harness::write_text(cfg_p, hpt::cli::to_text(cfg));

  json j{{"version", kReportVersion},
         {"report", hpt::harness::to_json(run.report)},
         {"attack", attack_json(cfg, run)},
         {"artifacts",
          {{"checkpoint", artifact(cfg.checkpoint_path())},
           {"trigger", artifact(trig_p)},
           {"flips", artifact(flips_p)},
           {"trace", artifact(trace_p)},
           {"config", artifact(cfg_p)}}},
         {"config", config_json(cfg)}};
  write_json(out_path(cfg, "report.json"), j);
  const auto& r = run.report;
  std::cout << "attack (" << cfg.mode << ", t=" << cfg.t << "): TA " << r.ta << "% PA-TA " << r.pa_ta << "% ASR "
            << r.asr << "% N_flip " << r.n_flip << " MSE " << r.mse << "\n";
  return 0;
}

struct LoadedAttack {
  hpt::quant::Model victim, attacked;
  hpt::trigger::Trigger trigger;
  fs::path trigger_path, flips_path;
};

LoadedAttack load_attack(const hpt::cli::ExperimentConfig& cfg, const std::string& trig_file,
                         const std::string& flips_file) {
  LoadedAttack a;
  a.victim = load_victim(cfg);
  a.trigger_path = trig_file.empty() ? fs::path(cfg.out_dir) / "trigger.hptt" : fs::path(trig_file);
  a.flips_path = flips_file.empty() ? fs::path(cfg.out_dir) / "flips.json" : fs::path(flips_file);
  a.trigger = hpt::trigger::load_trigger(a.trigger_path);
  json flips;
  try {
    flips = json::parse(hpt::harness::read_file(a.flips_path));
  } catch (const json::exception& e) {
    throw hpt::FormatError(a.flips_path.string() + ": " + e.what());
  }
  const auto list = hpt::harness::flips_from_json(flips);
  a.attacked = hpt::harness::apply_recorded_flips(a.victim, list);
  return a;
}

json provenance(const hpt::cli::ExperimentConfig& cfg, const LoadedAttack& a) {
  return {{"checkpoint", artifact(cfg.checkpoint_path())},
          {"trigger", artifact(a.trigger_path)},
          {"flips", artifact(a.flips_path)}};
}

int cmd_eval(const hpt::cli::ExperimentConfig& cfg, const std::string& trig, const std::string& flips) {
  const auto a = load_attack(cfg, trig, flips);
  const auto split = hpt::cli::load_split(cfg);
  const auto r = hpt::harness::defense_eval(a.victim, a.attacked, a.trigger, split.test, cfg.t,
                                            hpt::harness::DefenseSpec::parse(cfg.defense));
  json j{{"version", kReportVersion},
         {"report", hpt::harness::to_json(r)},
         {"artifacts", provenance(cfg, a)},
         {"config", config_json(cfg)}};
  write_json(out_path(cfg, "eval.json"), j);
  std::cout << "eval (t=" << cfg.t << ", defense " << r.defense << "): TA " << r.ta << "% PA-TA " << r.pa_ta
            << "% ASR " << r.asr << "% N_flip " << r.n_flip << " MSE " << r.mse << "\n";
  return 0;
}

int cmd_defend(const hpt::cli::ExperimentConfig& cfg, const std::string& trig, const std::string& flips) {
  const auto a = load_attack(cfg, trig, flips);
  const auto split = hpt::cli::load_split(cfg);
  json rows = json::array();
  std::ostringstream line;
  line << "defend (t=" << cfg.t << "):";
  std::vector<std::string> defenses{"none", "average:2", "depth:5"};
  if (cfg.defense != "none") defenses = {"none", cfg.defense};
  for (const auto& d : defenses) {
    const auto r =
        hpt::harness::defense_eval(a.victim, a.attacked, a.trigger, split.test, cfg.t, hpt::harness::DefenseSpec::parse(d));
    rows.push_back(hpt::harness::to_json(r));
    line << " [" << r.defense << " PA-TA " << r.pa_ta << "% ASR " << r.asr << "%]";
  }
  json j{{"version", kReportVersion}, {"reports", rows}, {"artifacts", provenance(cfg, a)}, {"config", config_json(cfg)}};
  write_json(out_path(cfg, "defense.json"), j);
  std::cout << line.str() << "\n";
  return 0;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto a = item.find_first_not_of(' ');
    if (a != std::string::npos) out.push_back(item.substr(a, item.find_last_not_of(' ') - a + 1));
  }
  return out;
}

int cmd_sweep(const hpt::cli::ExperimentConfig& cfg, const std::string& param, const std::string& values) {
  const auto victim = load_victim(cfg);
  const auto split = hpt::cli::load_split(cfg);
  const std::string key = param == "M" ? "m" : param;
  const auto table = hpt::harness::sweep(param, split_list(values), [&](const std::string& v) {
    auto c = cfg;
    hpt::cli::apply_settings(c, {{key, v}});
    return hpt::cli::run_attack(c, victim, split).report;
  });
  const auto csv_p = out_path(cfg, "sweep_" + param + ".csv");
  const auto svg_p = out_path(cfg, "sweep_" + param + ".svg");
  hpt::harness::write_text(csv_p, hpt::harness::sweep_csv(table));
  hpt::harness::write_text(svg_p, hpt::harness::sweep_svg(table));
  hpt::harness::write_text(out_path(cfg, "config.cfg"), hpt::cli::to_text(cfg));
  std::size_t ran = 0;
  for (const auto& r : table.rows) ran += r.ran;
  std::cout << "sweep " << param << ": " << ran << "/" << table.rows.size() << " runs, " << csv_p.string() << ", "
            << svg_p.string() << "\n";
  return 0;
}

int cmd_render(const hpt::cli::ExperimentConfig& cfg, const std::string& trig_file, std::size_t count,
               std::size_t zoom) {
  const fs::path tp = trig_file.empty() ? fs::path(cfg.out_dir) / "trigger.hptt" : fs::path(trig_file);
  const auto trig = hpt::trigger::load_trigger(tp);
  const fs::path dir = out_path(cfg, "render");
  fs::create_directories(dir);
  const std::size_t H = trig.delta.dim(0), W = trig.delta.dim(1), C = trig.delta.dim(2);
  const std::string ext = C == 1 ? ".pgm" : ".ppm";

  std::vector<double> noise(trig.delta.size());
  for (std::size_t i = 0; i < noise.size(); ++i) noise[i] = 0.5 + 0.5 * trig.delta.data[i] / trig.eps;
  hpt::io::write_pnm(dir / ("delta" + ext), noise, H, W, C, zoom);

  std::vector<double> mag(H * W);
  double peak = 0;
  for (std::size_t p = 0; p < H * W; ++p) {
    mag[p] = std::hypot(trig.flow.data[2 * p], trig.flow.data[2 * p + 1]);
    peak = std::max(peak, mag[p]);
  }
  for (auto& v : mag) v = peak > 0 ? v / peak : 0.0;
  hpt::io::write_pnm(dir / "flow_magnitude.pgm", mag, H, W, 1, zoom);

  const auto split = hpt::cli::load_split(cfg);
  const auto imgs = split.test.range(0, count);
  if (imgs.height != H || imgs.width != W || imgs.channels != C) {
    throw hpt::InputError("render: trigger shape does not match the dataset images");
  }
  const auto clean = imgs.images();
  const auto trojan = hpt::trigger::apply<double>(clean, trig);
  const std::size_t per = H * W * C;
  for (std::size_t i = 0; i < imgs.size(); ++i) {
    const std::span<const double> c(clean.data.data() + i * per, per), t(trojan.data.data() + i * per, per);
    hpt::io::write_pnm(dir / ("clean_" + std::to_string(i) + ext), c, H, W, C, zoom);
    hpt::io::write_pnm(dir / ("trojan_" + std::to_string(i) + ext), t, H, W, C, zoom);
  }
  std::cout << "render: delta, flow magnitude and " << imgs.size() << " clean/trojan pairs in " << dir.string()
            << " (peak flow " << peak << " px)\n";
  return 0;
}

int fail(const std::string& kind, const std::string& message, const std::vector<std::string>& issues, int code) {
  json j{{"error", kind}, {"message", message}};
  if (!issues.empty()) j["issues"] = issues;
  std::cerr << j.dump() << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hardly perceptible Trojan attack on quantized classifiers"};
  app.require_subcommand(1);

  Common train_o, attack_o, eval_o, defend_o, sweep_o, render_o;
  std::string trig, flips, param, values;
  std::size_t count = 8, zoom = 4;

  auto* train = app.add_subcommand("train", "train and quantize a victim; writes the checkpoint");
  add_common(train, train_o);
  auto* attack = app.add_subcommand("attack", "attack a checkpoint; writes trigger, flip list, trace and report");
  add_common(attack, attack_o);
  auto* eval = app.add_subcommand("eval", "evaluate saved attack artifacts");
  add_common(eval, eval_o);
  eval->add_option("--trigger", trig, "trigger file (default <out_dir>/trigger.hptt)");
  eval->add_option("--flips", flips, "flip list (default <out_dir>/flips.json)");
  auto* defend = app.add_subcommand("defend", "evaluate saved artifacts under feature squeezing");
  add_common(defend, defend_o);
  defend->add_option("--trigger", trig, "trigger file");
  defend->add_option("--flips", flips, "flip list");
  auto* sweep = app.add_subcommand("sweep", "one attack per value of a parameter; writes CSV and SVG");
  add_common(sweep, sweep_o);
  sweep->add_option("--param", param, "t, eps, kappa, M, b or gamma")->required();
  sweep->add_option("--values", values, "comma-separated values")->required();
  auto* render = app.add_subcommand("render", "write trigger and Trojan example images (PGM/PPM)");
  add_common(render, render_o);
  render->add_option("--trigger", trig, "trigger file");
  render->add_option("--count", count, "number of example images");
  render->add_option("--zoom", zoom, "integer upscale factor");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("validation_error", e.what(), {}, 2);
  }

  try {
    if (*train) return cmd_train(resolve(train_o));
    if (*attack) return cmd_attack(resolve(attack_o));
    if (*eval) return cmd_eval(resolve(eval_o), trig, flips);
    if (*defend) return cmd_defend(resolve(defend_o), trig, flips);
    if (*sweep) return cmd_sweep(resolve(sweep_o), param, values);
    if (*render) return cmd_render(resolve(render_o), trig, count, zoom);
  } catch (const hpt::ValidationError& e) {
    return fail(e.kind(), e.what(), e.issues(), 2);
  } catch (const hpt::FormatError& e) {
    return fail(e.kind(), e.what(), {}, 3);
  } catch (const hpt::OptimizationError& e) {
    std::cerr << e.trace();
    return fail(e.kind(), e.what(), {}, 4);
  } catch (const hpt::Error& e) {
    return fail(e.kind(), e.what(), {}, 1);
  } catch (const std::exception& e) {
    return fail("internal_error", e.what(), {}, 1);
  }
  return 0;
}
