// Trains a small victim on synthetic digits, runs the joint attack against
// class 0 and prints the report. Takes a couple of minutes.

#include <iostream>

#include "hpt/cli/experiment.hpp"

int main() {
  hpt::cli::ExperimentConfig cfg;
  cfg.data_count = 3000;
  cfg.train_size = 2000;
  cfg.epochs = 6;
  cfg.precision = "float32";
  cfg.gamma = 0.1;
  const auto split = hpt::cli::load_split(cfg);
  const auto victim = hpt::cli::train(cfg, split);
  std::cout << "victim TA " << victim.accuracy << "%\n";
  const auto run = hpt::cli::run_attack(cfg, victim.model, split);
  const auto& r = run.report;
  std::cout << "TA " << r.ta << "%  PA-TA " << r.pa_ta << "%  ASR " << r.asr << "%  N_flip " << r.n_flip
            << "  MSE " << r.mse << "  iterations " << run.outcome.trace.size() << "\n";
  if (!run.outcome.diagnostics.empty()) std::cout << run.outcome.diagnostics << "\n";
}
