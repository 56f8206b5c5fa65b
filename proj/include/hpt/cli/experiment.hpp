#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "hpt/admm/solver.hpp"
#include "hpt/cli/config.hpp"
#include "hpt/harness/dataset.hpp"
#include "hpt/harness/metrics.hpp"
#include "hpt/harness/train.hpp"
#include "hpt/quantnet/checkpoint.hpp"
#include "hpt/trigger/init.hpp"
#include "hpt/trigger/io.hpp"

// Glue from an ExperimentConfig to data, victim, attack and report.

namespace hpt::cli {

/// Dataset (generated or loaded) split into victim-train, attacker pool and
/// test, all determined by data_seed.
inline harness::Split load_split(const ExperimentConfig& c) {
  harness::Dataset all = c.dataset == "synthetic" ? harness::make_digits(c.data_count, c.data_seed)
                                                  : harness::load_dataset(c.dataset);
  return harness::split(all, c.train_size, c.pool_size, c.data_seed + 1);
}

inline harness::TrainConfig train_config(const ExperimentConfig& c) {
  harness::TrainConfig t;
  t.epochs = c.epochs;
  t.batch = c.batch;
  t.lr = c.train_lr;
  t.q = c.q;
  t.seed = c.data_seed + 2;
  t.ta_floor = c.ta_floor;
  return t;
}

inline harness::TrainResult train(const ExperimentConfig& c, const harness::Split& s) {
  const auto arch = harness::ArchSpec::parse(c.arch);
  return c.precision == "float32" ? harness::train_victim<float>(arch, s.train, s.test, train_config(c))
                                  : harness::train_victim<double>(arch, s.train, s.test, train_config(c));
}

struct AttackRun {
  harness::Dataset attacker;
  admm::AttackOutcome outcome;
  quant::Model attacked;
  harness::AttackReport report;
};

inline harness::Dataset attacker_set(const ExperimentConfig& c, const harness::Split& s) {
  if (c.m > s.attacker_pool.size()) {
    throw InputError("M=" + std::to_string(c.m) + " exceeds the attacker pool of " +
                     std::to_string(s.attacker_pool.size()) + " images");
  }
  return harness::sample_attacker_set(s.attacker_pool, c.m, c.seed);
}

inline AttackRun run_attack(const ExperimentConfig& c, const quant::Model& victim, const harness::Split& s) {
  validate(c);
  AttackRun run;
  run.attacker = attacker_set(c, s);
  const auto batch = run.attacker.batch();
  const auto mode = admm::parse_mode(c.mode);
  run.outcome = c.precision == "float32"
                    ? admm::staged_attack<float>(victim, batch, c.admm(), c.trigger_init(), mode)
                    : admm::staged_attack<double>(victim, batch, c.admm(), c.trigger_init(), mode);
  // Report on the trigger exactly as it will be stored, so evaluating the
  // saved artifacts reproduces this report.
  run.outcome.trigger = trigger::round_to_storage(run.outcome.trigger);
  run.attacked = quant::apply_flips(victim, std::span<const std::size_t>(run.outcome.flips));
  run.report = harness::defense_eval(victim, run.attacked, run.outcome.trigger, s.test, c.t,
                                     harness::DefenseSpec::parse(c.defense));
  return run;
}

}  // namespace hpt::cli
