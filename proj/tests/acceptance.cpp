// Acceptance run: prints one PASS/FAIL line per criterion and exits nonzero
// if any criterion fails. The desk-scale criteria use configs/default.cfg.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <random>
#include <sstream>

#include "hpt/admm/projections.hpp"
#include "hpt/cli/experiment.hpp"
#include "hpt/diffcore/grad_check.hpp"
#include "hpt/harness/report.hpp"
#include "toy.hpp"

using namespace hpt;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int prec = 2) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(prec) << v;
  return os.str();
}

std::string sci(double v) {
  std::ostringstream os;
  os << std::scientific << std::setprecision(2) << v;
  return os.str();
}

diff::Tensor<double> random_tensor(diff::Shape s, std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  diff::Tensor<double> t(std::move(s));
  for (auto& v : t.data) v = u(rng);
  return t;
}

// Keeps every entry at least `margin` away from each kink.
diff::Tensor<double> off_kinks(diff::Tensor<double> t, const std::vector<double>& kinks, double margin) {
  for (auto& v : t.data)
    for (double k : kinks)
      if (std::abs(v - k) < margin) v = k + (v < k ? -margin : margin);
  return t;
}

// ---------------------------------------------------------------- 1

Verdict gradient_correctness() {
  using diff::Graph;
  using diff::NodeId;
  using Span = std::span<const NodeId>;
  struct OpCase {
    std::string name;
    diff::GraphBuilder build;
    std::function<std::vector<diff::Tensor<double>>(std::mt19937_64&)> inputs;
  };
  const std::vector<int> labels{0, 2, 1, 3, 2};
  const quant::QuantSpec qs{8, 0.05};
  std::vector<OpCase> ops{
      {"dense", [](Graph<double>& g, Span in) { return diff::dense(g, in[0], in[1], in[2]); },
       [](auto& r) {
         return std::vector{random_tensor({3, 4}, r, -1, 1), random_tensor({5, 4}, r, -1, 1), random_tensor({5}, r, -1, 1)};
       }},
      {"conv2d", [](Graph<double>& g, Span in) { return diff::conv2d(g, in[0], in[1], in[2], 2, 1); },
       [](auto& r) {
         return std::vector{random_tensor({2, 2, 5, 5}, r, -1, 1), random_tensor({3, 2, 3, 3}, r, -1, 1),
                            random_tensor({3}, r, -1, 1)};
       }},
      {"relu", [](Graph<double>& g, Span in) { return diff::relu(g, in[0]); },
       [](auto& r) { return std::vector{off_kinks(random_tensor({4, 6}, r, -1, 1), {0.0}, 1e-3)}; }},
      {"clamp", [](Graph<double>& g, Span in) { return diff::clamp(g, in[0], 0.0, 1.0); },
       [](auto& r) { return std::vector{off_kinks(random_tensor({4, 6}, r, -0.5, 1.5), {0.0, 1.0}, 1e-3)}; }},
      {"softmax_cross_entropy",
       [labels](Graph<double>& g, Span in) {
         return diff::softmax_cross_entropy(g, in[0], labels, diff::Reduction::Sum);
       },
       [](auto& r) { return std::vector{random_tensor({5, 4}, r, -3, 3)}; }},
      {"reshape", [](Graph<double>& g, Span in) { return diff::reshape(g, in[0], {6, 4}); },
       [](auto& r) { return std::vector{random_tensor({4, 6}, r, -1, 1)}; }},
      {"nhwc_to_nchw", [](Graph<double>& g, Span in) { return diff::nhwc_to_nchw(g, in[0]); },
       [](auto& r) { return std::vector{random_tensor({2, 3, 2, 2}, r, -1, 1)}; }},
      {"add", [](Graph<double>& g, Span in) { return diff::add(g, in[0], in[1]); },
       [](auto& r) { return std::vector{random_tensor({12}, r, -1, 1), random_tensor({12}, r, -1, 1)}; }},
      {"scale", [](Graph<double>& g, Span in) { return diff::scale(g, in[0], -1.7); },
       [](auto& r) { return std::vector{random_tensor({24}, r, -1, 1)}; }},
      {"weighted_sum",
       [](Graph<double>& g, Span in) {
         std::vector<double> w(24);
         for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::sin(static_cast<double>(i));
         return diff::weighted_sum(g, in[0], w);
       },
       [](auto& r) { return std::vector{random_tensor({24}, r, -1, 1)}; }},
      {"dequantize", [qs](Graph<double>& g, Span in) { return quant::dequantize_op(g, in[0], qs, {4}); },
       [](auto& r) { return std::vector{random_tensor({32}, r, 0, 1)}; }},
      {"tv", [](Graph<double>& g, Span in) { return trigger::tv_op(g, in[0]); },
       [](auto& r) { return std::vector{random_tensor({3, 4, 2}, r, -1, 1)}; }},
      {"warp", [](Graph<double>& g, Span in) { return trigger::warp_op(g, in[0], in[1], in[2]); },
       [](auto& r) {
         // sub-pixel flows pointing inward, pixels away from the clip
         auto flow = random_tensor({4, 4, 2}, r, 0.1, 0.9);
         for (std::size_t p = 0; p < 16; ++p) {
           const std::size_t row = p / 4, col = p % 4;
           if (row >= 2) flow.data[2 * p] = -flow.data[2 * p];
           if (col >= 2) flow.data[2 * p + 1] = -flow.data[2 * p + 1];
         }
         return std::vector{random_tensor({2, 4, 4, 1}, r, 0.3, 0.7), random_tensor({4, 4, 1}, r, -0.05, 0.05), flow};
       }},
  };
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  std::string worst_op;
  std::size_t min_points = SIZE_MAX;
  bool ok = true;
  for (const auto& op : ops) {
    std::size_t points = 0;
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      std::mt19937_64 rng(1000 + seed);
      const auto r = diff::grad_check(op.build, op.inputs(rng), 1e-4, seed);
      points += r.checked;
      ok = ok && r.passed;
      if (r.max_rel_error >= worst) {
        worst = r.max_rel_error;
        worst_op = op.name;
      }
    }
    min_points = std::min(min_points, points);
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  ok = ok && min_points >= 20 && secs < 60.0;
  return {ok, std::to_string(ops.size()) + " ops, >= " + std::to_string(min_points) +
                  " points each, max rel err " + sci(worst) + " (" + worst_op + "), " + fmt(secs, 2) + " s"};
}

// ---------------------------------------------------------------- 2

Verdict quantization_fidelity() {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> log_scale(-4.0, 2.0);
  std::uniform_int_distribution<std::size_t> len(1, 300);
  double worst_ratio = 0.0;
  for (int q : {4, 8}) {
    for (int layer = 0; layer < 1000; ++layer) {
      std::normal_distribution<double> nd(0.0, std::pow(10.0, log_scale(rng)));
      std::vector<double> w(len(rng));
      for (auto& v : w) v = nd(rng);
      const auto [bits, spec] = quant::quantize(w, q);
      const auto back = quant::dequantize(bits, spec);
      for (std::size_t i = 0; i < w.size(); ++i) worst_ratio = std::max(worst_ratio, std::abs(back[i] - w[i]) / spec.step);
    }
  }
  return {worst_ratio <= 0.5 + 1e-9, "2000 layers (Q=4 and 8), max |W - W'| / step = " + fmt(worst_ratio, 6)};
}

// ---------------------------------------------------------------- 3

Verdict projection_suite() {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  std::uniform_int_distribution<std::size_t> len(1, 64);
  double sphere_res = 0.0, tv_excess = -1.0;
  bool ok = true;
  for (int i = 0; i < 1000; ++i) {
    std::vector<double> e(len(rng));
    for (auto& v : e) v = u(rng);
    const auto b = admm::project_box(e);
    ok = ok && admm::project_box(b) == b && std::all_of(b.begin(), b.end(), [](double v) { return v >= 0 && v <= 1; });
    const auto s = admm::project_sphere(e);
    const auto s2 = admm::project_sphere(s);
    sphere_res = std::max(sphere_res, std::abs(admm::sphere_residual(s)));
    for (std::size_t k = 0; k < s.size(); ++k) ok = ok && std::abs(s2[k] - s[k]) < 1e-9;
    const double sc = u(rng);
    const double n = admm::project_nonneg(sc);
    ok = ok && n >= 0 && admm::project_nonneg(n) == n;

    const double eps = 0.01 + 0.1 * std::abs(u(rng)), kappa = 0.001 + 0.05 * std::abs(u(rng));
    const auto d = trigger::project_noise(random_tensor({4, 5, 3}, rng, -1, 1), eps);
    ok = ok && trigger::project_noise(d, eps).data == d.data &&
         std::all_of(d.data.begin(), d.data.end(), [&](double v) { return std::abs(v) <= eps; });
    const auto f = trigger::project_flow(random_tensor({4, 5, 2}, rng, -1, 1), kappa);
    const auto f2 = trigger::project_flow(f, kappa);
    tv_excess = std::max(tv_excess, trigger::tv(f) - kappa);
    for (std::size_t k = 0; k < f.size(); ++k) ok = ok && std::abs(f2.data[k] - f.data[k]) < 1e-12;
  }
  ok = ok && sphere_res < 1e-6 && tv_excess <= 1e-9;
  return {ok, "1000 inputs per projection, max sphere residual " + sci(sphere_res) +
                  ", max TV - kappa " + sci(tv_excess)};
}

// ---------------------------------------------------------------- 4

double naive_tv(const diff::Tensor<double>& f) {
  const long H = static_cast<long>(f.dim(0)), W = static_cast<long>(f.dim(1));
  double total = 0.0;
  for (long r = 0; r < H; ++r)
    for (long c = 0; c < W; ++c)
      for (auto [dr, dc] : {std::pair{-1L, 0L}, {1L, 0L}, {0L, -1L}, {0L, 1L}}) {
        const long qr = r + dr, qc = c + dc;
        if (qr < 0 || qc < 0 || qr >= H || qc >= W) continue;
        const double du = f.data[static_cast<std::size_t>((r * W + c) * 2)] - f.data[static_cast<std::size_t>((qr * W + qc) * 2)];
        const double dv =
            f.data[static_cast<std::size_t>((r * W + c) * 2 + 1)] - f.data[static_cast<std::size_t>((qr * W + qc) * 2 + 1)];
        total += std::sqrt(du * du + dv * dv);
      }
  return total;
}

double per_sample_ce(const diff::Tensor<double>& z, std::size_t row, int y) {
  const std::size_t K = z.dim(1);
  double m = -1e300, s = 0.0;
  for (std::size_t k = 0; k < K; ++k) m = std::max(m, z.data[row * K + k]);
  for (std::size_t k = 0; k < K; ++k) s += std::exp(z.data[row * K + k] - m);
  return m + std::log(s) - z.data[row * K + static_cast<std::size_t>(y)];
}

Verdict oracle_equivalence() {
  std::mt19937_64 rng(4);
  double tv_err = 0.0, loss_err = 0.0;
  bool ham_ok = true;
  for (int i = 0; i < 1000; ++i) {
    const std::size_t H = 1 + rng() % 8, W = 1 + rng() % 8;
    const auto f = random_tensor({H, W, 2}, rng, -2, 2);
    tv_err = std::max(tv_err, std::abs(trigger::tv(f) - naive_tv(f)));

    const std::size_t n = 8 * (1 + rng() % 16);
    quant::BitTensor a{std::vector<double>(n), 8, quant::BitMode::Exact}, b = a;
    std::size_t count = 0;
    double sq = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      a.bits[k] = static_cast<double>(rng() & 1u);
      b.bits[k] = static_cast<double>(rng() & 1u);
      count += a.bits[k] != b.bits[k];
      sq += (a.bits[k] - b.bits[k]) * (a.bits[k] - b.bits[k]);
    }
    const auto h = quant::hamming(a, b);
    ham_ok = ham_ok && h == count && static_cast<double>(h) == sq;
  }
  for (int trial = 0; trial < 20; ++trial) {
    const auto m = toy::mlp(5, 6, 4, trial % 2 ? 4 : 8, 40 + static_cast<std::uint64_t>(trial));
    auto data = toy::batch(m, 10, 60 + static_cast<std::uint64_t>(trial));
    for (std::size_t i = 0; i < data.size(); ++i) data.labels[i] = static_cast<int>((i + trial) % 4);
    trigger::Trigger t{random_tensor({5, 5, 1}, rng, -0.04, 0.04), random_tensor({5, 5, 2}, rng, -0.5, 0.5), 0.04, 100};
    const int target = trial % 4;
    const auto warped = trigger::apply(data.images, t);
    double clean = 0.0, trojan = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      const auto slice = [&](const diff::Tensor<double>& x) {
        return diff::Tensor<double>({1, 5, 5, 1}, std::vector<double>(x.data.begin() + static_cast<long>(i * 25),
                                                                     x.data.begin() + static_cast<long>((i + 1) * 25)));
      };
      clean += per_sample_ce(quant::logits(m, slice(data.images)), 0, data.labels[i]);
      trojan += per_sample_ce(quant::logits(m, slice(warped)), 0, target);
    }
    loss_err = std::max(loss_err, std::abs(admm::loss_clean(m, m.attackable().bits, data) - clean));
    loss_err = std::max(loss_err, std::abs(admm::loss_trojan(m, t, m.attackable().bits, data, target) - trojan));
  }
  const bool ok = tv_err < 1e-10 && ham_ok && loss_err < 1e-10;
  return {ok, "tv max err " + sci(tv_err) + ", hamming " + (ham_ok ? "exact" : "MISMATCH") +
                  " on 1000 pairs, losses max err " + sci(loss_err)};
}

// ---------------------------------------------------------------- 5-10

struct Desk {
  cli::ExperimentConfig cfg;
  harness::Split split;
  harness::TrainResult victim;
  std::map<std::string, cli::AttackRun> runs;
  std::map<std::string, double> seconds;

  const cli::AttackRun& attack(const std::string& key, const std::function<void(cli::ExperimentConfig&)>& tweak) {
    auto it = runs.find(key);
    if (it != runs.end()) return it->second;
    auto c = cfg;
    tweak(c);
    const auto t0 = std::chrono::steady_clock::now();
    auto run = cli::run_attack(c, victim.model, split);
    seconds[key] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const auto& r = run.report;
    std::cerr << "  [" << key << "] TA " << fmt(r.ta) << " PA-TA " << fmt(r.pa_ta) << " ASR " << fmt(r.asr)
              << " N_flip " << r.n_flip << " iters " << run.outcome.trace.size() << " gap "
              << fmt(run.outcome.binarity_gap, 4) << " (" << fmt(seconds[key], 0) << " s)\n";
    return runs.emplace(key, std::move(run)).first->second;
  }
  const cli::AttackRun& joint(int t, std::uint64_t seed = 1, double eps = -1) {
    const double e = eps < 0 ? cfg.eps : eps;
    return attack("joint t=" + std::to_string(t) + " seed=" + std::to_string(seed) + " eps=" + fmt(e), [&](auto& c) {
      c.t = t;
      c.seed = seed;
      c.eps = e;
      c.mode = "joint";
    });
  }
};

Verdict admm_convergence(Desk& d) {
  const auto& run = d.joint(0);
  const double secs = d.seconds["joint t=0 seed=1 eps=" + fmt(d.cfg.eps)];
  int first_below = -1;
  for (const auto& rec : run.outcome.trace)
    if (std::max(rec.r1, rec.r2) < 1e-4) {
      first_below = rec.iter + 1;
      break;
    }
  const bool reached = first_below > 0 && first_below <= 3000;
  const bool binary = run.outcome.binarity_gap <= 0.01;
  const bool victim_ok = d.victim.accuracy >= 95.0 && d.cfg.q == 8;
  const bool ok = reached && binary && victim_ok && secs <= 1800.0;
  return {ok, "victim TA " + fmt(d.victim.accuracy) + "%, residuals < 1e-4 " +
                  (reached ? "at iteration " + std::to_string(first_below) : std::string("not reached")) +
                  ", final max distance of theta_hat from {0,1} = " + fmt(run.outcome.binarity_gap, 4) +
                  " (need <= 0.01), " + fmt(secs, 0) + " s"};
}

Verdict attack_efficacy(Desk& d) {
  bool ok = true;
  double min_asr = 1e9, max_drop = -1e9;
  std::size_t max_flip = 0;
  std::ostringstream per;
  for (int t = 0; t < 10; ++t) {
    const auto& r = d.joint(t).report;
    const double drop = r.ta - r.pa_ta;
    ok = ok && r.asr >= 80.0 && r.n_flip <= 10 && drop <= 2.0;
    min_asr = std::min(min_asr, r.asr);
    max_drop = std::max(max_drop, drop);
    max_flip = std::max(max_flip, r.n_flip);
    per << (t ? " " : "") << t << ":" << fmt(r.asr, 1) << "/" << r.n_flip << "/" << fmt(drop, 1);
  }
  return {ok, "min ASR " + fmt(min_asr) + "%, max N_flip " + std::to_string(max_flip) + ", max PA-TA drop " +
                  fmt(max_drop) + " [t:ASR/N_flip/drop " + per.str() + "]"};
}

Verdict mode_ordering(Desk& d) {
  bool ok = true;
  std::ostringstream per;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const double joint = d.joint(0, seed).report.asr;
    auto set = [seed](const char* mode) {
      return [seed, mode](cli::ExperimentConfig& c) {
        c.t = 0;
        c.seed = seed;
        c.mode = mode;
      };
    };
    const double two = d.attack("two-stage seed=" + std::to_string(seed), set("two-stage")).report.asr;
    const double only = d.attack("trigger-only seed=" + std::to_string(seed), set("trigger-only")).report.asr;
    ok = ok && joint >= two && two >= only;
    per << (seed > 1 ? "; " : "") << "seed " << seed << ": " << fmt(joint, 1) << " >= " << fmt(two, 1) << " >= "
        << fmt(only, 1);
  }
  return {ok, "ASR joint >= two-stage >= trigger-only, " + per.str()};
}

Verdict eps_monotonicity(Desk& d) {
  const std::vector<double> grid{0.01, 0.02, 0.04};
  std::vector<double> asr;
  for (double e : grid) asr.push_back(d.joint(0, 1, e).report.asr);
  bool ok = true;
  for (std::size_t i = 1; i < asr.size(); ++i) ok = ok && asr[i] >= asr[i - 1] - 2.0;
  return {ok, "ASR at eps 0.01/0.02/0.04: " + fmt(asr[0]) + " / " + fmt(asr[1]) + " / " + fmt(asr[2])};
}

Verdict defense_direction(Desk& d) {
  const auto& run = d.joint(0);
  const auto& victim = d.victim.model;
  const auto none = harness::defense_eval(victim, run.attacked, run.outcome.trigger, d.split.test, 0,
                                          harness::DefenseSpec::none());
  const auto avg = harness::defense_eval(victim, run.attacked, run.outcome.trigger, d.split.test, 0,
                                         harness::DefenseSpec::average(2));
  const auto dep = harness::defense_eval(victim, run.attacked, run.outcome.trigger, d.split.test, 0,
                                         harness::DefenseSpec::depth(5));
  const bool ok = none.asr - avg.asr >= 10.0 && none.asr - dep.asr >= 10.0;
  return {ok, "ASR none " + fmt(none.asr) + "%, average 2x2 " + fmt(avg.asr) + "% (PA-TA " + fmt(avg.pa_ta) +
                  "), depth 5 bits " + fmt(dep.asr) + "% (PA-TA " + fmt(dep.pa_ta) + ")"};
}

Verdict perceptibility(Desk& d) {
  const auto& trig = d.joint(0).outcome.trigger;
  const auto imgs = d.split.test.range(0, 500);
  const auto clean = imgs.images();
  const double hpt = harness::mse_255(clean, trigger::apply(clean, trig));
  const double patch = harness::square_patch_mse(imgs);
  // Bilinear sampling is a convex combination, so the noise moves each
  // output by at most eps: sqrt(mse) <= 255 eps + sqrt(warp-only mse).
  auto warp_only = trig;
  std::fill(warp_only.delta.data.begin(), warp_only.delta.data.end(), 0.0);
  const double warp = harness::mse_255(clean, trigger::apply(clean, warp_only));
  const double bound = std::pow(255.0 * trig.eps + std::sqrt(warp), 2);
  return {hpt < patch, std::to_string(imgs.size()) + " images: HPT MSE " + fmt(hpt) + " vs square patch " + fmt(patch) +
                           "; bound (255 eps + sqrt(warp term))^2 = " + fmt(bound) + " with warp term " + fmt(warp, 4) +
                           " (flow TV " + fmt(trigger::tv(trig.flow), 5) + ")"};
}

// ---------------------------------------------------------------- 11

Verdict micro_oracle() {
  const auto m = toy::mlp(4, 2, 2, 4, 7);  // attackable layer: 2 x 2 weights x 4 bits
  const auto data = toy::batch(m, 32, 8);
  const int target = 1;
  admm::AdmmConfig cfg;
  cfg.gamma = 1.0;
  cfg.b = 2;
  cfg.target = target;
  cfg.lr_bits = 1e-2;
  cfg.lr_delta = cfg.lr_flow = 1e-3;
  const auto init = trigger::init_trigger(m, data, target, 100, 0.01, 0.04, 0.01);
  const auto res = admm::admm_attack(m, data, init, cfg);
  const auto& theta = m.attackable().bits;
  const std::size_t n = theta.size();

  auto trojan_loss = [&](const std::vector<std::size_t>& flips) {
    auto bits = theta;
    for (std::size_t i : flips) bits.bits[i] = 1.0 - bits.bits[i];
    return admm::loss_trojan(m, res.trigger, bits, data, target);
  };
  std::vector<double> all{trojan_loss({})};
  for (std::size_t i = 0; i < n; ++i) {
    all.push_back(trojan_loss({i}));
    for (std::size_t j = i + 1; j < n; ++j) all.push_back(trojan_loss({i, j}));
  }
  const double mine = trojan_loss(res.flips);
  const auto better = static_cast<std::size_t>(std::count_if(all.begin(), all.end(), [&](double v) { return v < mine - 1e-12; }));
  const double best = *std::min_element(all.begin(), all.end());
  const std::size_t decile = (all.size() + 9) / 10;
  const bool feasible = res.flips.size() <= cfg.b;
  const bool ok = feasible && better < decile;
  return {ok, std::to_string(n) + " bits, b=2: ADMM flips {" + [&] {
            std::string s;
            for (std::size_t i : res.flips) s += (s.empty() ? "" : ",") + std::to_string(i);
            return s;
          }() + "}, Trojan loss " + fmt(mine, 4) + " vs exhaustive min " + fmt(best, 4) + ", rank " +
                  std::to_string(better + 1) + " of " + std::to_string(all.size()) + " (top decile: <= " +
                  std::to_string(decile) + ")"};
}

// ---------------------------------------------------------------- 12

Verdict reproducibility(const cli::ExperimentConfig& base) {
  auto c = base;
  c.precision = "float64";
  c.data_count = 600;
  c.train_size = 400;
  c.pool_size = 100;
  c.epochs = 2;
  c.m = 16;
  c.init_steps = 50;
  c.max_iters = 200;
  c.t = 3;
  auto once = [&] {
    const auto split = cli::load_split(c);
    const auto victim = cli::train(c, split);
    const auto run = cli::run_attack(c, victim.model, split);
    harness::json j{{"report", harness::to_json(run.report)},
                    {"flips", harness::flips_to_json(victim.model, run.outcome.flips)},
                    {"trace", admm::trace_csv(run.outcome.trace)},
                    {"trigger_fnv1a", harness::fnv1a_hex(std::string_view(
                                          reinterpret_cast<const char*>(run.outcome.trigger.delta.data.data()),
                                          run.outcome.trigger.delta.size() * sizeof(double)))}};
    return j.dump();
  };
  const auto a = once(), b = once();
  return {a == b, "two float64 runs (train + attack), reports " + std::string(a == b ? "bit-identical" : "DIFFER") +
                      ", fnv1a " + harness::fnv1a_hex(a)};
}

}  // namespace

int main(int argc, char** argv) {
  std::filesystem::path config = std::filesystem::path(HPT_SOURCE_DIR) / "configs" / "default.cfg";
  if (argc > 1) config = argv[1];
  const auto t0 = std::chrono::steady_clock::now();
  int failures = 0;
  auto report = [&](int id, const char* name, const Verdict& v) {
    failures += v.pass ? 0 : 1;
    std::cout << (v.pass ? "PASS" : "FAIL") << "  criterion " << std::setw(2) << id << "  " << name << ": " << v.detail
              << std::endl;
  };
  auto guarded = [&](const std::function<Verdict()>& f) {
    try {
      return f();
    } catch (const std::exception& e) {
      return Verdict{false, std::string("exception: ") + e.what()};
    }
  };

  report(1, "gradient correctness", guarded(gradient_correctness));
  report(2, "quantization fidelity", guarded(quantization_fidelity));
  report(3, "projection suite", guarded(projection_suite));
  report(4, "oracle equivalence", guarded(oracle_equivalence));

  Desk desk;
  std::string setup_error;
  try {
    desk.cfg = cli::load_config(config);
    cli::validate(desk.cfg);
    desk.split = cli::load_split(desk.cfg);
    desk.victim = cli::train(desk.cfg, desk.split);
    std::cerr << "  desk victim: TA " << fmt(desk.victim.accuracy) << "% (" << desk.cfg.arch << ", Q=" << desk.cfg.q
              << "), M=" << desk.cfg.m << ", gamma=" << desk.cfg.gamma << ", " << desk.cfg.precision << "\n";
  } catch (const std::exception& e) {
    setup_error = e.what();
  }
  auto desk_guarded = [&](const std::function<Verdict(Desk&)>& f) {
    if (!setup_error.empty()) return Verdict{false, "desk setup failed: " + setup_error};
    return guarded([&] { return f(desk); });
  };
  report(5, "ADMM convergence", desk_guarded(admm_convergence));
  report(6, "attack efficacy", desk_guarded(attack_efficacy));
  report(7, "mode ordering", desk_guarded(mode_ordering));
  report(8, "eps monotonicity", desk_guarded(eps_monotonicity));
  report(9, "defense directionality", desk_guarded(defense_direction));
  report(10, "perceptibility", desk_guarded(perceptibility));
  report(11, "exhaustive micro-oracle", guarded(micro_oracle));
  report(12, "reproducibility", guarded([&] { return reproducibility(setup_error.empty() ? desk.cfg : cli::ExperimentConfig{}); }));

  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::cout << (failures ? std::to_string(failures) + " of 12 criteria failed" : std::string("all 12 criteria passed"))
            << " (" << fmt(secs / 60.0, 1) << " min)" << std::endl;
  return failures ? 1 : 0;
}
