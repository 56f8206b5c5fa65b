#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "hpt/admm/losses.hpp"
#include "hpt/admm/projections.hpp"
#include "hpt/diffcore/graph.hpp"
#include "hpt/diffcore/ops.hpp"
#include "hpt/errors.hpp"
#include "hpt/quantnet/model.hpp"
#include "hpt/quantnet/quant.hpp"
#include "hpt/trigger/init.hpp"
#include "hpt/trigger/trigger.hpp"

namespace hpt::admm {

enum class RhoSchedule {
  // rho <- min(cap, growth * rho): grows from rho0 up to the cap.
  Capped,
  // rho <- max(cap, growth * rho): the rule exactly as printed, which jumps
  // to the cap after the first iteration. Kept for fidelity experiments.
  PrintedMax,
};

struct AdmmConfig {
  double gamma = 1000.0;
  std::size_t b = 10;
  double rho0 = 1e-4;
  double rho_growth = 1.01;
  double rho_cap = 100.0;
  RhoSchedule schedule = RhoSchedule::Capped;
  int inner_steps = 5;
  double lr_delta = 1e-5;
  double lr_flow = 1e-5;
  double lr_bits = 1e-4;
  double stop_threshold = 1e-4;
  int max_iters = 3000;
  int target = 0;

  void validate() const {
    auto positive = [](double v, const char* name) {
      if (!(v > 0.0) || !std::isfinite(v)) throw InputError(std::string("AdmmConfig: ") + name + " must be positive");
    };
    if (!(gamma >= 0.0)) throw InputError("AdmmConfig: gamma must be >= 0");
    positive(rho0, "rho0");
    positive(rho_growth, "rho_growth");
    positive(rho_cap, "rho_cap");
    positive(lr_delta, "lr_delta");
    positive(lr_flow, "lr_flow");
    positive(lr_bits, "lr_bits");
    positive(stop_threshold, "stop_threshold");
    if (inner_steps < 1) throw InputError("AdmmConfig: inner_steps must be >= 1");
    if (max_iters < 1) throw InputError("AdmmConfig: max_iters must be >= 1");
  }

  double next_rho(double rho) const {
    return schedule == RhoSchedule::Capped ? std::min(rho_cap, rho_growth * rho)
                                           : std::max(rho_cap, rho_growth * rho);
  }
};

/// Relaxed bits of the attackable layer plus the splitting variables and
/// multipliers of the lp-box reformulation.
struct AdmmState {
  quant::BitTensor theta_hat;
  std::vector<double> z1, z2;
  double z3 = 0.0;
  std::vector<double> lam1, lam2;
  double lam3 = 0.0;
  double rho = 1e-4;
  int iter = 0;

  static AdmmState start(const quant::BitTensor& theta, double rho0) {
    AdmmState s;
    s.theta_hat = theta.relaxed();
    s.z1 = theta.bits;
    s.z2 = theta.bits;
    s.lam1.assign(theta.size(), 0.0);
    s.lam2.assign(theta.size(), 0.0);
    s.rho = rho0;
    return s;
  }
};

struct TraceRecord {
  int iter = 0;
  double l_clean = 0.0;
  double l_trojan = 0.0;
  double r1 = 0.0;  // ||theta_hat - z1||^2
  double r2 = 0.0;  // ||theta_hat - z2||^2
  double rho = 0.0;
};

using ConvergenceTrace = std::vector<TraceRecord>;

inline std::string trace_csv(const ConvergenceTrace& trace) {
  std::ostringstream os;
  os.precision(17);
  os << "iter,L_cle,L_tro,r1,r2,rho\n";
  for (const auto& r : trace)
    os << r.iter << ',' << r.l_clean << ',' << r.l_trojan << ',' << r.r1 << ',' << r.r2 << ',' << r.rho << '\n';
  return os.str();
}

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

/// Value and gradients of the augmented Lagrangian at one point.
struct LagrangianEval {
  double value = 0.0;
  double l_clean = 0.0;
  double l_trojan = 0.0;
  std::vector<double> grad_bits;
  std::vector<double> grad_delta;
  std::vector<double> grad_flow;
};

/// Penalty part of the augmented Lagrangian (everything except
/// L_cle + gamma * L_tro), accumulating its theta_hat gradient into `grad`.
inline double penalty_terms(const AdmmState& s, std::span<const double> theta, std::size_t b,
                            std::vector<double>* grad) {
  const auto& th = s.theta_hat.bits;
  const std::size_t n = th.size();
  double lin = 0.0, quad = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d1 = th[i] - s.z1[i], d2 = th[i] - s.z2[i];
    lin += s.lam1[i] * d1 + s.lam2[i] * d2;
    quad += d1 * d1 + d2 * d2;
  }
  const double h = squared_distance(theta, th) - static_cast<double>(b) + s.z3;
  const double value = lin + s.lam3 * h + 0.5 * s.rho * (quad + h * h);
  if (grad) {
    const double coupling = 2.0 * (s.lam3 + s.rho * h);
    for (std::size_t i = 0; i < n; ++i) {
      (*grad)[i] += s.lam1[i] + s.lam2[i] + s.rho * (th[i] - s.z1[i]) + s.rho * (th[i] - s.z2[i]) +
                    coupling * (th[i] - theta[i]);
    }
  }
  return value;
}

/// Precomputed pieces that stay fixed while the solver runs: clean-set
/// features (only the last layer moves) and, when the trigger is frozen,
/// Trojan-set features too.
template <class T>
struct LossContext {
  const quant::Model* model = nullptr;
  const LabeledBatch* data = nullptr;
  diff::Tensor<T> images;
  diff::Tensor<T> clean_features;
  std::optional<diff::Tensor<T>> frozen_trojan_features;

  LossContext(const quant::Model& m, const LabeledBatch& d) : model(&m), data(&d) {
    check_batch(d);
    images = d.images.template cast<T>();
    clean_features = quant::features<T>(m, images);
  }

  void freeze_trigger(const trigger::Trigger& trig) {
    frozen_trojan_features = quant::features<T>(*model, trigger::apply<T>(images, trig));
  }
};

/// L(delta, flow, theta_hat; z, lambda, rho) and its gradients.
template <class T>
LagrangianEval evaluate_lagrangian(const LossContext<T>& ctx, const AdmmState& s,
                                   const trigger::Trigger& trig, std::span<const double> theta,
                                   const AdmmConfig& cfg, bool want_trigger_grads = true) {
  const quant::Model& m = *ctx.model;
  diff::Graph<T> g;
  const auto bits = g.variable(bits_tensor<T>(s.theta_hat));
  const auto clean = clean_loss_node(g, m, g.constant(ctx.clean_features), bits, ctx.data->labels);

  diff::NodeId trojan;
  diff::NodeId delta = 0, flow = 0;
  const bool trigger_grads = want_trigger_grads && !ctx.frozen_trojan_features;
  if (ctx.frozen_trojan_features) {
    const std::vector<int> targets(ctx.data->size(), cfg.target);
    const auto logits = quant::forward_head(g, m, g.constant(*ctx.frozen_trojan_features), bits);
    trojan = diff::softmax_cross_entropy(g, logits, targets, diff::Reduction::Sum);
  } else {
    delta = trigger_grads ? g.variable(trig.delta.template cast<T>()) : g.constant(trig.delta.template cast<T>());
    flow = trigger_grads ? g.variable(trig.flow.template cast<T>()) : g.constant(trig.flow.template cast<T>());
    trojan = trojan_loss_node(g, m, g.constant(ctx.images), delta, flow, bits, cfg.target);
  }
  const auto total = diff::add(g, clean, diff::scale(g, trojan, static_cast<T>(cfg.gamma)));
  g.backward(total);

  LagrangianEval out;
  out.l_clean = static_cast<double>(g.value(clean).data[0]);
  out.l_trojan = static_cast<double>(g.value(trojan).data[0]);
  const auto& gb = g.grad(bits);
  out.grad_bits.assign(gb.begin(), gb.end());
  out.grad_bits.resize(s.theta_hat.size(), 0.0);
  if (trigger_grads) {
    const auto& gd = g.grad(delta);
    const auto& gf = g.grad(flow);
    out.grad_delta.assign(gd.begin(), gd.end());
    out.grad_flow.assign(gf.begin(), gf.end());
    out.grad_delta.resize(trig.delta.size(), 0.0);
    out.grad_flow.resize(trig.flow.size(), 0.0);
  }
  out.value = out.l_clean + cfg.gamma * out.l_trojan + penalty_terms(s, theta, cfg.b, &out.grad_bits);
  return out;
}

/// Augmented Lagrangian value only.
template <class T = double>
double augmented_lagrangian(const quant::Model& m, const LabeledBatch& data, const AdmmState& s,
                            const trigger::Trigger& trig, const AdmmConfig& cfg) {
  LossContext<T> ctx(m, data);
  return evaluate_lagrangian<T>(ctx, s, trig, m.attackable().bits.bits, cfg, false).value;
}

/// Rounds theta_hat to {0,1} and lists the positions that differ from
/// theta. Beyond `b` positions, keeps those with the largest
/// |theta_hat - theta| (ties: lowest index). Result is sorted.
inline std::vector<std::size_t> finalize_bits(std::span<const double> theta, std::span<const double> theta_hat,
                                              std::size_t b) {
  if (theta.size() != theta_hat.size()) throw DimensionError("finalize_bits: length mismatch");
  std::vector<std::size_t> flips;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double rounded = theta_hat[i] >= 0.5 ? 1.0 : 0.0;
    if (rounded != theta[i]) flips.push_back(i);
  }
  if (flips.size() > b) {
    std::stable_sort(flips.begin(), flips.end(), [&](std::size_t a, std::size_t c) {
      return std::abs(theta_hat[a] - theta[a]) > std::abs(theta_hat[c] - theta[c]);
    });
    flips.resize(b);
    std::sort(flips.begin(), flips.end());
  }
  return flips;
}

/// Largest distance of any relaxed bit from the nearest of {0, 1}.
inline double binarity_gap(std::span<const double> theta_hat) {
  double gap = 0.0;
  for (double v : theta_hat) gap = std::max(gap, std::min(std::abs(v), std::abs(v - 1.0)));
  return gap;
}

struct AdmmResult {
  trigger::Trigger trigger;
  std::vector<std::size_t> flips;
  ConvergenceTrace trace;
  AdmmState state;
  bool converged = false;
  std::size_t flips_before_truncation = 0;
  double binarity_gap = 0.0;
  std::string diagnostics;
};

/// Alternating updates of (z1, z2, z3), (delta, flow, theta_hat) and the
/// multipliers, until max(r1, r2) < stop_threshold or max_iters. With
/// `update_trigger = false` the trigger stays at its initial value and only
/// theta_hat moves.
template <class T = double>
AdmmResult admm_attack(const quant::Model& m, const LabeledBatch& data, const trigger::Trigger& trigger_init,
                       const AdmmConfig& cfg, bool update_trigger = true) {
  cfg.validate();
  check_batch(data);
  check_target(m, cfg.target);
  const std::vector<double>& theta = m.attackable().bits.bits;
  const std::size_t n = theta.size();

  LossContext<T> ctx(m, data);
  if (!update_trigger) ctx.freeze_trigger(trigger_init);

  AdmmResult res;
  res.trigger = trigger_init;
  AdmmState s = AdmmState::start(m.attackable().bits, cfg.rho0);
  auto& th = s.theta_hat.bits;
  std::vector<double> shifted(n);

  while (s.iter < cfg.max_iters) {
    // Auxiliary variables.
    for (std::size_t i = 0; i < n; ++i) shifted[i] = th[i] + s.lam1[i] / s.rho;
    s.z1 = project_box(shifted);
    for (std::size_t i = 0; i < n; ++i) shifted[i] = th[i] + s.lam2[i] / s.rho;
    s.z2 = project_sphere(shifted);
    s.z3 = project_nonneg(-squared_distance(theta, th) + static_cast<double>(cfg.b) - s.lam3 / s.rho);

    // Primal gradient steps; one backward pass feeds all three variables.
    TraceRecord rec;
    rec.iter = s.iter;
    rec.rho = s.rho;
    for (int step = 0; step < cfg.inner_steps; ++step) {
      const auto ev = evaluate_lagrangian<T>(ctx, s, res.trigger, theta, cfg, update_trigger);
      if (step == 0) {
        rec.l_clean = ev.l_clean;
        rec.l_trojan = ev.l_trojan;
      }
      if (!std::isfinite(ev.value)) {
        res.trace.push_back(rec);
        throw OptimizationError("admm_attack: non-finite augmented Lagrangian at iteration " +
                                    std::to_string(s.iter),
                                trace_csv(res.trace));
      }
      if (update_trigger) {
        for (std::size_t i = 0; i < res.trigger.delta.size(); ++i)
          res.trigger.delta.data[i] -= cfg.lr_delta * ev.grad_delta[i];
        for (std::size_t i = 0; i < res.trigger.flow.size(); ++i)
          res.trigger.flow.data[i] -= cfg.lr_flow * ev.grad_flow[i];
        res.trigger = trigger::project(std::move(res.trigger));
      }
      for (std::size_t i = 0; i < n; ++i) th[i] -= cfg.lr_bits * ev.grad_bits[i];
    }

    // Dual ascent.
    const double h = squared_distance(theta, th) - static_cast<double>(cfg.b) + s.z3;
    for (std::size_t i = 0; i < n; ++i) {
      s.lam1[i] += s.rho * (th[i] - s.z1[i]);
      s.lam2[i] += s.rho * (th[i] - s.z2[i]);
    }
    s.lam3 += s.rho * h;

    rec.r1 = squared_distance(th, s.z1);
    rec.r2 = squared_distance(th, s.z2);
    res.trace.push_back(rec);
    ++s.iter;
    if (!std::isfinite(rec.r1) || !std::isfinite(rec.r2)) {
      throw OptimizationError("admm_attack: residuals diverged at iteration " + std::to_string(rec.iter),
                              trace_csv(res.trace));
    }
    if (std::max(rec.r1, rec.r2) < cfg.stop_threshold) {
      res.converged = true;
      break;
    }
    s.rho = cfg.next_rho(s.rho);
  }

  res.binarity_gap = binarity_gap(th);
  for (std::size_t i = 0; i < n; ++i) res.flips_before_truncation += (th[i] >= 0.5 ? 1.0 : 0.0) != theta[i];
  res.flips = finalize_bits(theta, th, cfg.b);
  std::ostringstream diag;
  if (!res.converged) diag << "stopping criterion not reached in " << cfg.max_iters << " iterations; ";
  if (res.binarity_gap > 0.01) diag << "relaxed bits not binary (max gap " << res.binarity_gap << "); ";
  if (res.flips_before_truncation > cfg.b)
    diag << res.flips_before_truncation << " rounded flips truncated to budget " << cfg.b << "; ";
  res.diagnostics = diag.str();
  res.state = std::move(s);
  return res;
}

enum class AttackMode { TriggerOnly, TwoStage, Joint };

inline const char* to_string(AttackMode m) {
  switch (m) {
    case AttackMode::TriggerOnly: return "trigger-only";
    case AttackMode::TwoStage: return "two-stage";
    case AttackMode::Joint: return "joint";
  }
  return "?";
}

inline AttackMode parse_mode(const std::string& s) {
  if (s == "trigger-only") return AttackMode::TriggerOnly;
  if (s == "two-stage") return AttackMode::TwoStage;
  if (s == "joint") return AttackMode::Joint;
  throw InputError("unknown attack mode '" + s + "' (expected trigger-only, two-stage or joint)");
}

struct TriggerInit {
  int steps = 500;
  double lr = 0.01;
  double eps = 0.04;
  double kappa = 0.01;
};

struct AttackOutcome {
  AttackMode mode = AttackMode::Joint;
  trigger::Trigger trigger;
  std::vector<std::size_t> flips;
  ConvergenceTrace trace;
  std::vector<double> init_trace;
  bool converged = false;
  double binarity_gap = 0.0;
  std::string diagnostics;
};

/// Runs one of the three attack modes: trigger only (no flips), trigger
/// then bits with the trigger frozen, or the joint solver.
template <class T = double>
AttackOutcome staged_attack(const quant::Model& m, const LabeledBatch& data, const AdmmConfig& cfg,
                            const TriggerInit& init, AttackMode mode) {
  AttackOutcome out;
  out.mode = mode;
  out.trigger = trigger::init_trigger<T>(m, data, cfg.target, init.steps, init.lr, init.eps, init.kappa,
                                         &out.init_trace);
  if (mode == AttackMode::TriggerOnly) {
    out.converged = true;
    return out;
  }
  auto res = admm_attack<T>(m, data, out.trigger, cfg, mode == AttackMode::Joint);
  out.trigger = std::move(res.trigger);
  out.flips = std::move(res.flips);
  out.trace = std::move(res.trace);
  out.converged = res.converged;
  out.binarity_gap = res.binarity_gap;
  out.diagnostics = std::move(res.diagnostics);
  return out;
}

}  // namespace hpt::admm
