#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "hpt/diffcore/graph.hpp"
#include "hpt/diffcore/ops.hpp"

namespace hpt::diff {

struct GradCheckOptions {
  double step = 1e-5;
  // Relative error is |a - n| / max(|a|, |n|, floor).
  double floor = 1e-4;
  // Inputs to differentiate; empty means all.
  std::vector<bool> check_input;
  // Weights that reduce a non-scalar output to a scalar. Drawn uniformly
  // from [-1, 1] with the seed when absent.
  std::optional<std::vector<double>> projection;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_input = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;
  bool passed = true;
};

using GraphBuilder = std::function<NodeId(Graph<double>&, std::span<const NodeId>)>;

/// Compares reverse-mode gradients of `build(inputs)` against central
/// differences. Deterministic for a fixed seed.
inline GradCheckReport grad_check(const GraphBuilder& build, std::vector<Tensor<double>> inputs,
                                  double tolerance, std::uint64_t seed = 0,
                                  GradCheckOptions opts = {}) {
  auto wants = [&](std::size_t i) { return opts.check_input.empty() || opts.check_input.at(i); };

  std::vector<double> projection;
  auto evaluate = [&](const std::vector<Tensor<double>>& xs, Graph<double>& g) {
    std::vector<NodeId> ids;
    ids.reserve(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i)
      ids.push_back(wants(i) ? g.variable(xs[i]) : g.constant(xs[i]));
    NodeId out = build(g, ids);
    if (g.value(out).size() != 1) {
      if (projection.empty()) {
        if (opts.projection) {
          projection = *opts.projection;
        } else {
          std::mt19937_64 rng(seed);
          std::uniform_real_distribution<double> u(-1.0, 1.0);
          projection.resize(g.value(out).size());
          for (auto& p : projection) p = u(rng);
        }
      }
      out = weighted_sum(g, out, projection);
    } else if (opts.projection) {
      out = scale(g, out, opts.projection->at(0));
    }
    return std::pair{ids, out};
  };

  Graph<double> g;
  auto [ids, root] = evaluate(inputs, g);
  g.backward(root);

  GradCheckReport report;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (!wants(i)) continue;
    std::vector<double> analytic = g.grad(ids[i]);
    analytic.resize(inputs[i].size(), 0.0);
    for (std::size_t j = 0; j < inputs[i].size(); ++j) {
      const double x0 = inputs[i].data[j];
      const double xp = x0 + opts.step;
      const double xm = x0 - opts.step;
      inputs[i].data[j] = xp;
      Graph<double> gp;
      const double fp = gp.value(evaluate(inputs, gp).second).data[0];
      inputs[i].data[j] = xm;
      Graph<double> gm;
      const double fm = gm.value(evaluate(inputs, gm).second).data[0];
      inputs[i].data[j] = x0;

      const double numeric = (fp - fm) / (xp - xm);
      const double a = analytic[j];
      const double denom = std::max({std::abs(a), std::abs(numeric), opts.floor});
      const double rel = std::abs(a - numeric) / denom;
      ++report.checked;
      if (rel > report.max_rel_error || !std::isfinite(rel)) {
        report.max_rel_error = std::isfinite(rel) ? rel : std::numeric_limits<double>::infinity();
        report.worst_input = i;
        report.worst_index = j;
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
    }
  }
  report.passed = report.max_rel_error < tolerance;
  return report;
}

}  // namespace hpt::diff
