#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "hpt/diffcore/graph.hpp"
#include "hpt/diffcore/tensor.hpp"
#include "hpt/errors.hpp"

namespace hpt::trigger {

/// Smoothing added under each square root of the differentiable TV.
inline constexpr double kTvSmoothing = 1e-12;

/// Input-agnostic trigger: additive noise `delta` (H x W x C) and per-pixel
/// flow (H x W x 2, channel 0 = row displacement, channel 1 = column
/// displacement, in pixels), with their budgets.
struct Trigger {
  diff::Tensor<double> delta;
  diff::Tensor<double> flow;
  double eps = 0.04;
  double kappa = 0.01;

  std::size_t height() const { return delta.dim(0); }
  std::size_t width() const { return delta.dim(1); }
  std::size_t channels() const { return delta.dim(2); }

  static Trigger zero(std::size_t h, std::size_t w, std::size_t c, double eps, double kappa) {
    return {diff::Tensor<double>({h, w, c}), diff::Tensor<double>({h, w, 2}), eps, kappa};
  }
};

namespace detail {

inline void check_flow_shape(const diff::Shape& s, const char* what) {
  if (s.size() != 3 || s[2] != 2) {
    throw DimensionError(std::string(what) + ": flow must be H x W x 2, got " + diff::to_string(s));
  }
}

// Visits every ordered 4-neighbour pair (p, q) of an H x W grid.
template <class F>
void for_each_neighbor_pair(std::size_t H, std::size_t W, F&& fn) {
  for (std::size_t r = 0; r < H; ++r)
    for (std::size_t c = 0; c < W; ++c) {
      const std::size_t p = r * W + c;
      if (r > 0) fn(p, p - W);
      if (r + 1 < H) fn(p, p + W);
      if (c > 0) fn(p, p - 1);
      if (c + 1 < W) fn(p, p + 1);
    }
}

}  // namespace detail

/// Total variation of a flow field: sum over pixels p and 4-neighbours q of
/// sqrt(|du_p - du_q|^2 + |dv_p - dv_q|^2 + mu). Each unordered pair is
/// counted from both endpoints.
template <class T>
T tv(std::span<const T> flow, std::size_t H, std::size_t W, double mu = 0.0) {
  if (flow.size() != H * W * 2) throw DimensionError("tv: flow length does not match H x W x 2");
  T total = T(0);
  detail::for_each_neighbor_pair(H, W, [&](std::size_t p, std::size_t q) {
    const T du = flow[2 * p] - flow[2 * q];
    const T dv = flow[2 * p + 1] - flow[2 * q + 1];
    total += std::sqrt(du * du + dv * dv + static_cast<T>(mu));
  });
  return total;
}

inline double tv(const diff::Tensor<double>& flow, double mu = 0.0) {
  detail::check_flow_shape(flow.shape, "tv");
  return tv<double>(flow.data, flow.dim(0), flow.dim(1), mu);
}

/// Differentiable TV (smoothed by mu) as a graph op.
template <class T>
diff::NodeId tv_op(diff::Graph<T>& g, diff::NodeId flow, double mu = kTvSmoothing) {
  const auto& f = g.value(flow);
  detail::check_flow_shape(f.shape, "tv");
  const std::size_t H = f.dim(0), W = f.dim(1);
  diff::Tensor<T> out({1}, {tv<T>(f.data, H, W, mu)});
  return g.emit("tv", {flow}, std::move(out), [=](diff::Graph<T>& gr, diff::NodeId self) {
    const T d = gr.value(self).grad[0];
    const auto& fv = gr.value(flow).data;
    auto& df = gr.grad_buffer(flow);
    detail::for_each_neighbor_pair(H, W, [&](std::size_t p, std::size_t q) {
      const T du = fv[2 * p] - fv[2 * q];
      const T dv = fv[2 * p + 1] - fv[2 * q + 1];
      const T s = std::sqrt(du * du + dv * dv + static_cast<T>(mu));
      if (s == T(0)) return;
      df[2 * p] += d * du / s;
      df[2 * p + 1] += d * dv / s;
      df[2 * q] -= d * du / s;
      df[2 * q + 1] -= d * dv / s;
    });
  });
}

namespace detail {

// Bilinear footprint of one output pixel. Source coordinates are clamped
// to the image (replicate border); a clamped axis carries no gradient.
struct Footprint {
  std::size_t r0, r1, c0, c1;
  double ar, ac;
  bool row_free, col_free;
};

inline Footprint footprint(std::size_t r, std::size_t c, double dr, double dc, std::size_t H, std::size_t W) {
  double u = static_cast<double>(r) + dr;
  double v = static_cast<double>(c) + dc;
  const double umax = static_cast<double>(H - 1), vmax = static_cast<double>(W - 1);
  Footprint fp{};
  fp.row_free = u >= 0.0 && u <= umax;
  fp.col_free = v >= 0.0 && v <= vmax;
  u = std::clamp(u, 0.0, umax);
  v = std::clamp(v, 0.0, vmax);
  const double uf = std::floor(u), vf = std::floor(v);
  fp.r0 = static_cast<std::size_t>(uf);
  fp.c0 = static_cast<std::size_t>(vf);
  fp.r1 = std::min(fp.r0 + 1, H - 1);
  fp.c1 = std::min(fp.c0 + 1, W - 1);
  fp.ar = u - uf;
  fp.ac = v - vf;
  return fp;
}

}  // namespace detail

/// Trojan images T(x; delta, flow): every output pixel bilinearly samples
/// (x + delta) at its displaced source position, then the result is clipped
/// to [0,1]. `images` is B x H x W x C, delta H x W x C, flow H x W x 2.
/// The clip passes gradient only strictly inside (0,1).
template <class T>
diff::NodeId warp_op(diff::Graph<T>& g, diff::NodeId images, diff::NodeId delta, diff::NodeId flow) {
  const auto& x = g.value(images);
  const auto& d = g.value(delta);
  const auto& f = g.value(flow);
  diff::require_rank(x, 4, "warp images");
  const std::size_t B = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
  diff::require_shape(d, {H, W, C}, "warp delta");
  diff::require_shape(f, {H, W, 2}, "warp flow");

  std::vector<detail::Footprint> fps(H * W);
  for (std::size_t r = 0; r < H; ++r)
    for (std::size_t c = 0; c < W; ++c) {
      const std::size_t p = r * W + c;
      fps[p] = detail::footprint(r, c, static_cast<double>(f.data[2 * p]),
                                 static_cast<double>(f.data[2 * p + 1]), H, W);
    }

  diff::Tensor<T> out(x.shape);
  std::vector<T> pre(x.size());
  for (std::size_t b = 0; b < B; ++b) {
    const T* xb = &x.data[b * H * W * C];
    for (std::size_t p = 0; p < H * W; ++p) {
      const auto& fp = fps[p];
      const T w00 = static_cast<T>((1 - fp.ar) * (1 - fp.ac)), w01 = static_cast<T>((1 - fp.ar) * fp.ac);
      const T w10 = static_cast<T>(fp.ar * (1 - fp.ac)), w11 = static_cast<T>(fp.ar * fp.ac);
      const std::size_t q00 = fp.r0 * W + fp.c0, q01 = fp.r0 * W + fp.c1;
      const std::size_t q10 = fp.r1 * W + fp.c0, q11 = fp.r1 * W + fp.c1;
      for (std::size_t ch = 0; ch < C; ++ch) {
        const T v = w00 * (xb[q00 * C + ch] + d.data[q00 * C + ch]) +
                    w01 * (xb[q01 * C + ch] + d.data[q01 * C + ch]) +
                    w10 * (xb[q10 * C + ch] + d.data[q10 * C + ch]) +
                    w11 * (xb[q11 * C + ch] + d.data[q11 * C + ch]);
        const std::size_t o = (b * H * W + p) * C + ch;
        pre[o] = v;
        out.data[o] = std::clamp(v, T(0), T(1));
      }
    }
  }

  return g.emit(
      "warp", {images, delta, flow}, std::move(out),
      [=, fps = std::move(fps), pre = std::move(pre)](diff::Graph<T>& gr, diff::NodeId self) {
        const auto& dy = gr.value(self).grad;
        const auto& xv = gr.value(images).data;
        const auto& dv = gr.value(delta).data;
        const bool want_x = gr.requires_grad(images);
        const bool want_d = gr.requires_grad(delta);
        const bool want_f = gr.requires_grad(flow);
        std::vector<T>* dx = want_x ? &gr.grad_buffer(images) : nullptr;
        std::vector<T>* dd = want_d ? &gr.grad_buffer(delta) : nullptr;
        std::vector<T>* df = want_f ? &gr.grad_buffer(flow) : nullptr;
        for (std::size_t b = 0; b < B; ++b) {
          const std::size_t xoff = b * H * W * C;
          for (std::size_t p = 0; p < H * W; ++p) {
            const auto& fp = fps[p];
            const T ar = static_cast<T>(fp.ar), ac = static_cast<T>(fp.ac);
            const T w00 = (1 - ar) * (1 - ac), w01 = (1 - ar) * ac, w10 = ar * (1 - ac), w11 = ar * ac;
            const std::size_t q00 = fp.r0 * W + fp.c0, q01 = fp.r0 * W + fp.c1;
            const std::size_t q10 = fp.r1 * W + fp.c0, q11 = fp.r1 * W + fp.c1;
            for (std::size_t ch = 0; ch < C; ++ch) {
              const std::size_t o = xoff + p * C + ch;
              const T v = pre[o];
              if (!(v > T(0) && v < T(1))) continue;
              const T g0 = dy[o];
              if (g0 == T(0)) continue;
              if (dd || dx) {
                for (auto [q, w] : {std::pair{q00, w00}, std::pair{q01, w01}, std::pair{q10, w10},
                                    std::pair{q11, w11}}) {
                  if (dd) (*dd)[q * C + ch] += g0 * w;
                  if (dx) (*dx)[xoff + q * C + ch] += g0 * w;
                }
              }
              if (df) {
                const T s00 = xv[xoff + q00 * C + ch] + dv[q00 * C + ch];
                const T s01 = xv[xoff + q01 * C + ch] + dv[q01 * C + ch];
                const T s10 = xv[xoff + q10 * C + ch] + dv[q10 * C + ch];
                const T s11 = xv[xoff + q11 * C + ch] + dv[q11 * C + ch];
                if (fp.row_free) (*df)[2 * p] += g0 * ((1 - ac) * (s10 - s00) + ac * (s11 - s01));
                if (fp.col_free) (*df)[2 * p + 1] += g0 * ((1 - ar) * (s01 - s00) + ar * (s11 - s10));
              }
            }
          }
        }
      });
}

/// Applies the trigger to a batch of images (B x H x W x C).
template <class T>
diff::Tensor<T> apply(const diff::Tensor<T>& images, const Trigger& trig) {
  diff::Graph<T> g;
  const auto out = warp_op(g, g.constant(images), g.constant(trig.delta.cast<T>()),
                           g.constant(trig.flow.cast<T>()));
  return g.value(out);
}

/// Elementwise clamp of delta to [-eps, eps].
inline diff::Tensor<double> project_noise(diff::Tensor<double> delta, double eps) {
  if (!(eps > 0.0)) throw InputError("project_noise: eps must be positive");
  for (auto& v : delta.data) v = std::clamp(v, -eps, eps);
  return delta;
}

/// Rescales the flow onto the TV ball of radius kappa when it lies outside.
/// Uses the exact (unsmoothed) TV, which is positively homogeneous.
inline diff::Tensor<double> project_flow(diff::Tensor<double> flow, double kappa) {
  if (!(kappa > 0.0)) throw InputError("project_flow: kappa must be positive");
  const double F = tv(flow, 0.0);
  if (F <= kappa || F == 0.0) return flow;
  const double s = kappa / F;
  for (auto& v : flow.data) v *= s;
  return flow;
}

/// Projects both trigger components onto their budgets.
inline Trigger project(Trigger t) {
  t.delta = project_noise(std::move(t.delta), t.eps);
  t.flow = project_flow(std::move(t.flow), t.kappa);
  return t;
}

/// Square-patch baseline trigger for the perceptibility comparison: a
/// bottom-right square covering `area_fraction` of the image, filled with a
/// black/white checkerboard.
template <class T>
diff::Tensor<T> apply_square_patch(diff::Tensor<T> images, double area_fraction) {
  diff::require_rank(images, 4, "square patch images");
  const std::size_t B = images.dim(0), H = images.dim(1), W = images.dim(2), C = images.dim(3);
  const auto side = static_cast<std::size_t>(
      std::lround(std::sqrt(area_fraction * static_cast<double>(H * W))));
  const std::size_t s = std::clamp<std::size_t>(side, 1, std::min(H, W));
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t r = H - s; r < H; ++r)
      for (std::size_t c = W - s; c < W; ++c)
        for (std::size_t ch = 0; ch < C; ++ch)
          images.data[((b * H + r) * W + c) * C + ch] = ((r + c) % 2 == 0) ? T(1) : T(0);
  return images;
}

}  // namespace hpt::trigger
