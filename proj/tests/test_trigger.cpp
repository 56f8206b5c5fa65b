#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "hpt/diffcore/grad_check.hpp"
#include "hpt/trigger/init.hpp"
#include "hpt/trigger/io.hpp"
#include "hpt/trigger/trigger.hpp"

using namespace hpt;
using namespace hpt::trigger;

namespace {

diff::Tensor<double> random_tensor(diff::Shape s, std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  diff::Tensor<double> t(std::move(s));
  for (auto& v : t.data) v = u(rng);
  return t;
}

// Unordered neighbour pairs, each counted twice.
double naive_tv(const diff::Tensor<double>& f) {
  const std::size_t H = f.dim(0), W = f.dim(1);
  auto at = [&](long r, long c, int k) { return f.data[(static_cast<std::size_t>(r) * W + c) * 2 + k]; };
  double total = 0.0;
  for (long r = 0; r < static_cast<long>(H); ++r)
    for (long c = 0; c < static_cast<long>(W); ++c) {
      const long nb[4][2] = {{r - 1, c}, {r + 1, c}, {r, c - 1}, {r, c + 1}};
      for (const auto& q : nb) {
        if (q[0] < 0 || q[1] < 0 || q[0] >= static_cast<long>(H) || q[1] >= static_cast<long>(W)) continue;
        const double du = at(r, c, 0) - at(q[0], q[1], 0);
        const double dv = at(r, c, 1) - at(q[0], q[1], 1);
        total += std::sqrt(du * du + dv * dv);
      }
    }
  return total;
}

// Direct bilinear sampling of x + delta with replicate clamping, then clip
// to [0,1].
double naive_warp(const diff::Tensor<double>& x, std::size_t b, std::size_t r, std::size_t c, std::size_t ch,
                  const Trigger& t) {
  const std::size_t H = x.dim(1), W = x.dim(2), C = x.dim(3);
  const double du = t.flow.data[(r * W + c) * 2], dv = t.flow.data[(r * W + c) * 2 + 1];
  const double u = std::clamp(static_cast<double>(r) + du, 0.0, static_cast<double>(H - 1));
  const double v = std::clamp(static_cast<double>(c) + dv, 0.0, static_cast<double>(W - 1));
  const auto r0 = static_cast<std::size_t>(std::floor(u)), c0 = static_cast<std::size_t>(std::floor(v));
  const std::size_t r1 = std::min(r0 + 1, H - 1), c1 = std::min(c0 + 1, W - 1);
  const double ar = u - static_cast<double>(r0), ac = v - static_cast<double>(c0);
  auto px = [&](std::size_t rr, std::size_t cc) {
    return x.data[((b * H + rr) * W + cc) * C + ch] + t.delta.data[(rr * W + cc) * C + ch];
  };
  const double s = (1 - ar) * (1 - ac) * px(r0, c0) + (1 - ar) * ac * px(r0, c1) + ar * (1 - ac) * px(r1, c0) +
                   ar * ac * px(r1, c1);
  return std::clamp(s, 0.0, 1.0);
}

}  // namespace

TEST(Tv, ConstantFlowIsZero) {
  const auto f = diff::Tensor<double>::filled({4, 5, 2}, 0.3);
  EXPECT_EQ(tv(f), 0.0);
  // 4x5 grid has 2*(3*5 + 4*4) = 62 directed pairs
  EXPECT_NEAR(tv(f, 1e-12), 62.0 * 1e-6, 1e-12);
}

TEST(Tv, OneByTwoHandValue) {
  const diff::Tensor<double> f({1, 2, 2}, {0, 0, 3, 4});
  EXPECT_NEAR(tv(f), 10.0, 1e-12);
}

TEST(Tv, MatchesNaiveDoubleLoop) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t H = 1 + trial % 6, W = 1 + (trial / 6) % 7;
    const auto f = random_tensor({H, W, 2}, rng, -2, 2);
    ASSERT_NEAR(tv(f), naive_tv(f), 1e-10);
  }
}

TEST(Tv, RejectsWrongShape) { EXPECT_THROW(tv(diff::Tensor<double>({3, 3, 3})), DimensionError); }

TEST(Tv, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(2);
  auto build = [](diff::Graph<double>& g, std::span<const diff::NodeId> in) { return tv_op(g, in[0]); };
  const auto r = diff::grad_check(build, {random_tensor({3, 4, 2}, rng, -1, 1)}, 1e-4, 1);
  EXPECT_TRUE(r.passed) << r.max_rel_error;
  EXPECT_GE(r.checked, 20u);
}

TEST(Warp, ZeroTriggerIsIdentity) {
  std::mt19937_64 rng(3);
  const auto x = random_tensor({2, 4, 5, 3}, rng, 0, 1);
  EXPECT_EQ(apply(x, Trigger::zero(4, 5, 3, 0.04, 0.01)).data, x.data);
}

TEST(Warp, PureNoiseOnMidGray) {
  const auto x = diff::Tensor<double>::filled({1, 3, 3, 1}, 0.5);
  auto t = Trigger::zero(3, 3, 1, 0.04, 0.01);
  for (auto& v : t.delta.data) v = 0.04;
  for (double v : apply(x, t).data) EXPECT_NEAR(v, 0.54, 1e-15);
}

TEST(Warp, UnitRowShiftSamplesNeighbour) {
  const diff::Tensor<double> x({1, 2, 1, 1}, {0.0, 1.0});
  auto t = Trigger::zero(2, 1, 1, 0.04, 10.0);
  t.flow.data[0] = 1.0;
  EXPECT_DOUBLE_EQ(apply(x, t).data[0], 1.0);
}

TEST(Warp, MatchesDirectBilinearSampling) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const auto x = random_tensor({2, 5, 6, 2}, rng, 0, 1);
    Trigger t{random_tensor({5, 6, 2}, rng, -0.1, 0.1), random_tensor({5, 6, 2}, rng, -2.5, 2.5), 0.1, 100.0};
    const auto y = apply(x, t);
    for (std::size_t b = 0; b < 2; ++b)
      for (std::size_t r = 0; r < 5; ++r)
        for (std::size_t c = 0; c < 6; ++c)
          for (std::size_t ch = 0; ch < 2; ++ch)
            ASSERT_NEAR(y.data[((b * 5 + r) * 6 + c) * 2 + ch], naive_warp(x, b, r, c, ch, t), 1e-12);
  }
}

TEST(Warp, GradientMatchesFiniteDifferencesAwayFromKinks) {
  std::mt19937_64 rng(5);
  // Flows kept off integer offsets and inside the image; pixels kept away
  // from the output clip.
  auto flow = random_tensor({4, 4, 2}, rng, 0.1, 0.9);
  for (std::size_t i = 0; i < flow.size(); ++i)
    if (i % 3 == 0) flow.data[i] = -flow.data[i];
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 4; ++c) {
      double& du = flow.data[(r * 4 + c) * 2];
      double& dv = flow.data[(r * 4 + c) * 2 + 1];
      if (r == 0) du = std::abs(du);
      if (r == 3) du = -std::abs(du);
      if (c == 0) dv = std::abs(dv);
      if (c == 3) dv = -std::abs(dv);
    }
  auto build = [](diff::Graph<double>& g, std::span<const diff::NodeId> in) { return warp_op(g, in[0], in[1], in[2]); };
  const auto r = diff::grad_check(
      build, {random_tensor({2, 4, 4, 1}, rng, 0.3, 0.7), random_tensor({4, 4, 1}, rng, -0.05, 0.05), flow}, 1e-4, 3);
  EXPECT_TRUE(r.passed) << r.max_rel_error << " input " << r.worst_input << " index " << r.worst_index;
  EXPECT_GE(r.checked, 20u);
}

TEST(Warp, ShapeMismatchThrows) {
  diff::Graph<double> g;
  EXPECT_THROW(warp_op(g, g.constant(diff::Tensor<double>({1, 4, 4, 1})), g.constant(diff::Tensor<double>({4, 3, 1})),
                       g.constant(diff::Tensor<double>({4, 4, 2}))),
               DimensionError);
}

TEST(ProjectNoise, Examples) {
  const diff::Tensor<double> inside({3}, {0.01, -0.04, 0.0});
  EXPECT_EQ(project_noise(inside, 0.04).data, inside.data);
  EXPECT_EQ(project_noise(diff::Tensor<double>({1}, {10.0}), 0.04).data[0], 0.04);
  EXPECT_THROW(project_noise(inside, 0.0), InputError);
}

TEST(ProjectFlow, Examples) {
  EXPECT_EQ(project_flow(diff::Tensor<double>({3, 3, 2}), 0.01).data, std::vector<double>(18, 0.0));
  std::mt19937_64 rng(6);
  auto f = random_tensor({4, 4, 2}, rng, -1, 1);
  const double kappa = tv(f) / 2.0;
  const auto p = project_flow(f, kappa);
  for (std::size_t i = 0; i < f.size(); ++i) EXPECT_NEAR(p.data[i], 0.5 * f.data[i], 1e-15);
  EXPECT_NEAR(tv(p), kappa, 1e-9);
}

TEST(Projections, IdempotentAndFeasible) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    const auto d = random_tensor({3, 4, 1}, rng, -1, 1);
    const auto pd = project_noise(d, 0.04);
    for (double v : pd.data) ASSERT_LE(std::abs(v), 0.04);
    ASSERT_EQ(project_noise(pd, 0.04).data, pd.data);
    const auto f = random_tensor({3, 4, 2}, rng, -1, 1);
    const auto pf = project_flow(f, 0.01);
    ASSERT_LE(tv(pf), 0.01 + 1e-9);
    const auto pf2 = project_flow(pf, 0.01);
    for (std::size_t i = 0; i < pf.size(); ++i) ASSERT_NEAR(pf2.data[i], pf.data[i], 1e-15);
  }
}

TEST(TriggerIo, RoundTripAfterStorageRounding) {
  std::mt19937_64 rng(8);
  Trigger t{random_tensor({5, 4, 3}, rng, -0.05, 0.05), random_tensor({5, 4, 2}, rng, -0.01, 0.01), 0.04, 0.01};
  t = round_to_storage(project(t));
  for (double v : t.delta.data) EXPECT_LE(std::abs(v), 0.04);
  EXPECT_LE(tv(t.flow), 0.01);
  std::stringstream ss;
  write_trigger(ss, t);
  const auto back = read_trigger(ss);
  EXPECT_EQ(back.delta.data, t.delta.data);
  EXPECT_EQ(back.flow.data, t.flow.data);
  EXPECT_EQ(back.eps, 0.04);
  EXPECT_EQ(back.kappa, 0.01);
}

TEST(TriggerIo, RejectsCorruptFiles) {
  std::stringstream ss;
  write_trigger(ss, Trigger::zero(2, 2, 1, 0.04, 0.01));
  std::string s = ss.str();
  std::stringstream trunc(s.substr(0, s.size() - 3));
  EXPECT_THROW(read_trigger(trunc), FormatError);
  s[1] = 'Q';
  std::stringstream magic(s);
  EXPECT_THROW(read_trigger(magic), FormatError);
}

TEST(SquarePatch, CoversRequestedArea) {
  const auto x = diff::Tensor<double>::filled({1, 10, 10, 1}, 0.5);
  const auto y = apply_square_patch(x, 0.09);
  std::size_t changed = 0;
  for (std::size_t i = 0; i < y.size(); ++i) changed += y.data[i] != 0.5;
  EXPECT_EQ(changed, 9u);
}
