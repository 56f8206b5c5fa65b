#pragma once

#include <cmath>
#include <sstream>
#include <vector>

#include "hpt/admm/losses.hpp"
#include "hpt/diffcore/graph.hpp"
#include "hpt/errors.hpp"
#include "hpt/quantnet/model.hpp"
#include "hpt/trigger/trigger.hpp"

namespace hpt::trigger {

/// Warm start for the joint solver: projected gradient descent on the
/// Trojan loss of the unmodified model, starting from the zero trigger.
/// `loss_trace` (optional) receives the loss before every step and after
/// the last one.
template <class T = double>
Trigger init_trigger(const quant::Model& m, const admm::LabeledBatch& data, int target, int steps,
                     double lr, double eps, double kappa, std::vector<double>* loss_trace = nullptr) {
  admm::check_batch(data);
  admm::check_target(m, target);
  if (steps < 0) throw InputError("init_trigger: steps must be >= 0");
  if (!(lr > 0.0)) throw InputError("init_trigger: learning rate must be positive");
  Trigger trig = Trigger::zero(m.height, m.width, m.channels, eps, kappa);
  if (loss_trace) loss_trace->clear();
  if (steps == 0) return trig;

  const auto images = data.images.template cast<T>();
  const auto bits = admm::bits_tensor<T>(m.attackable().bits);
  std::vector<double> history;

  auto fail = [&](int step) {
    std::ostringstream os;
    os << "step,loss\n";
    for (std::size_t i = 0; i < history.size(); ++i) os << i << ',' << history[i] << '\n';
    throw OptimizationError("init_trigger: non-finite Trojan loss at step " + std::to_string(step),
                            os.str());
  };

  for (int s = 0; s <= steps; ++s) {
    diff::Graph<T> g;
    const auto delta = g.variable(trig.delta.template cast<T>());
    const auto flow = g.variable(trig.flow.template cast<T>());
    const auto loss = admm::trojan_loss_node(g, m, g.constant(images), delta, flow, g.constant(bits), target);
    const double value = static_cast<double>(g.value(loss).data[0]);
    history.push_back(value);
    if (loss_trace) loss_trace->push_back(value);
    if (!std::isfinite(value)) fail(s);
    if (s == steps) break;
    g.backward(loss);
    const auto& gd = g.grad(delta);
    const auto& gf = g.grad(flow);
    for (std::size_t i = 0; i < trig.delta.size(); ++i)
      trig.delta.data[i] -= lr * static_cast<double>(gd.empty() ? T(0) : gd[i]);
    for (std::size_t i = 0; i < trig.flow.size(); ++i)
      trig.flow.data[i] -= lr * static_cast<double>(gf.empty() ? T(0) : gf[i]);
    trig = project(std::move(trig));
  }
  return trig;
}

}  // namespace hpt::trigger
