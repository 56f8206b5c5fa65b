#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hpt/diffcore/graph.hpp"
#include "hpt/diffcore/tensor.hpp"
#include "hpt/errors.hpp"

// Differentiable ops used by the attack loss graph. Shapes must match
// exactly; the only broadcast is bias addition in dense/conv2d.

namespace hpt::diff {

enum class Reduction { Mean, Sum };

/// out[b,k] = sum_f in[b,f] * weight[k,f] + bias[k]
template <class T>
NodeId dense(Graph<T>& g, NodeId input, NodeId weight, NodeId bias) {
  const auto& x = g.value(input);
  const auto& w = g.value(weight);
  const auto& bv = g.value(bias);
  require_rank(x, 2, "dense input");
  require_rank(w, 2, "dense weight");
  const std::size_t B = x.dim(0), F = x.dim(1), K = w.dim(0);
  if (w.dim(1) != F) {
    throw DimensionError("dense: input features " + std::to_string(F) +
                         " do not match weight " + to_string(w.shape));
  }
  require_shape(bv, {K}, "dense bias");

  // Accumulate along K against the transposed weight so the inner loop is
  // contiguous; zero activations (post-ReLU) are skipped.
  std::vector<T> wt(F * K);
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t f = 0; f < F; ++f) wt[f * K + k] = w.data[k * F + f];
  Tensor<T> out({B, K});
  for (std::size_t b = 0; b < B; ++b) {
    const T* xr = &x.data[b * F];
    T* yr = &out.data[b * K];
    std::copy(bv.data.begin(), bv.data.end(), yr);
    for (std::size_t f = 0; f < F; ++f) {
      const T xv = xr[f];
      if (xv == T(0)) continue;
      const T* wr = &wt[f * K];
      for (std::size_t k = 0; k < K; ++k) yr[k] += xv * wr[k];
    }
  }

  return g.emit("dense", {input, weight, bias}, std::move(out),
                [=](Graph<T>& gr, NodeId self) {
                  const auto& dy = gr.value(self).grad;
                  const auto& xv = gr.value(input).data;
                  const auto& wv = gr.value(weight).data;
                  if (gr.requires_grad(input)) {
                    auto& dx = gr.grad_buffer(input);
                    for (std::size_t b = 0; b < B; ++b)
                      for (std::size_t k = 0; k < K; ++k) {
                        const T d = dy[b * K + k];
                        if (d == T(0)) continue;
                        const T* wr = &wv[k * F];
                        T* dxr = &dx[b * F];
                        for (std::size_t f = 0; f < F; ++f) dxr[f] += d * wr[f];
                      }
                  }
                  if (gr.requires_grad(weight)) {
                    auto& dw = gr.grad_buffer(weight);
                    for (std::size_t b = 0; b < B; ++b)
                      for (std::size_t k = 0; k < K; ++k) {
                        const T d = dy[b * K + k];
                        if (d == T(0)) continue;
                        const T* xr = &xv[b * F];
                        T* dwr = &dw[k * F];
                        for (std::size_t f = 0; f < F; ++f) dwr[f] += d * xr[f];
                      }
                  }
                  if (gr.requires_grad(bias)) {
                    auto& db = gr.grad_buffer(bias);
                    for (std::size_t b = 0; b < B; ++b)
                      for (std::size_t k = 0; k < K; ++k) db[k] += dy[b * K + k];
                  }
                });
}

namespace detail {

// Output positions o with 0 <= o*stride - pad + tap < in_size.
inline std::pair<std::size_t, std::size_t> valid_range(std::size_t in_size, std::size_t out_size,
                                                       std::size_t tap, std::size_t stride,
                                                       std::size_t pad) {
  const long lo_num = static_cast<long>(pad) - static_cast<long>(tap);
  long lo = lo_num <= 0 ? 0 : (lo_num + static_cast<long>(stride) - 1) / static_cast<long>(stride);
  const long hi_num = static_cast<long>(in_size) - 1 + static_cast<long>(pad) - static_cast<long>(tap);
  if (hi_num < 0) return {0, 0};
  long hi = hi_num / static_cast<long>(stride) + 1;
  hi = std::min<long>(hi, static_cast<long>(out_size));
  if (lo >= hi) return {0, 0};
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

// Patch matrix layout for one image: row r = (c, ki, kj), column p = (oh, ow).
struct ConvGeometry {
  std::size_t C, H, W, k, stride, pad, OH, OW;
  std::vector<std::pair<std::size_t, std::size_t>> rows, cols;

  std::size_t patch_rows() const { return C * k * k; }
  std::size_t positions() const { return OH * OW; }

  template <class T>
  void im2col(const T* x, T* col) const {
    std::fill(col, col + patch_rows() * positions(), T(0));
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t ki = 0; ki < k; ++ki)
        for (std::size_t kj = 0; kj < k; ++kj) {
          T* dst = col + ((c * k + ki) * k + kj) * positions();
          const auto [r0, r1] = rows[ki];
          const auto [c0, c1] = cols[kj];
          for (std::size_t oh = r0; oh < r1; ++oh) {
            const T* src = x + (c * H + oh * stride + ki - pad) * W + c0 * stride + kj - pad;
            T* d = dst + oh * OW;
            for (std::size_t ow = c0; ow < c1; ++ow) d[ow] = src[(ow - c0) * stride];
          }
        }
  }

  template <class T>
  void col2im_add(const T* col, T* dx) const {
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t ki = 0; ki < k; ++ki)
        for (std::size_t kj = 0; kj < k; ++kj) {
          const T* src = col + ((c * k + ki) * k + kj) * positions();
          const auto [r0, r1] = rows[ki];
          const auto [c0, c1] = cols[kj];
          for (std::size_t oh = r0; oh < r1; ++oh) {
            T* d = dx + (c * H + oh * stride + ki - pad) * W + c0 * stride + kj - pad;
            const T* s = src + oh * OW;
            for (std::size_t ow = c0; ow < c1; ++ow) d[(ow - c0) * stride] += s[ow];
          }
        }
  }
};

}  // namespace detail

inline std::size_t conv_out_size(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad) {
  return (in + 2 * pad - k) / stride + 1;
}

/// Cross-correlation of B x C x H x W input with O x C x k x k kernel,
/// plus an optional per-output-channel bias.
template <class T>
NodeId conv2d(Graph<T>& g, NodeId input, NodeId kernel, std::optional<NodeId> bias,
              std::size_t stride, std::size_t pad) {
  const auto& x = g.value(input);
  const auto& w = g.value(kernel);
  require_rank(x, 4, "conv2d input");
  require_rank(w, 4, "conv2d kernel");
  if (stride < 1) throw InputError("conv2d: stride must be >= 1");
  const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t O = w.dim(0), k = w.dim(2);
  if (w.dim(1) != C) {
    throw DimensionError("conv2d: input has " + std::to_string(C) + " channels, kernel expects " +
                         std::to_string(w.dim(1)));
  }
  if (w.dim(3) != k) throw DimensionError("conv2d: kernel must be square");
  if (k > H + 2 * pad || k > W + 2 * pad) throw DimensionError("conv2d: kernel larger than padded input");
  if (bias) require_shape(g.value(*bias), {O}, "conv2d bias");

  detail::ConvGeometry geo{C, H, W, k, stride, pad, conv_out_size(H, k, stride, pad),
                           conv_out_size(W, k, stride, pad), {}, {}};
  for (std::size_t t = 0; t < k; ++t) {
    geo.rows.push_back(detail::valid_range(H, geo.OH, t, stride, pad));
    geo.cols.push_back(detail::valid_range(W, geo.OW, t, stride, pad));
  }
  const std::size_t R = geo.patch_rows(), P = geo.positions();
  Tensor<T> out({B, O, geo.OH, geo.OW});

  std::vector<T> col(R * P);
  for (std::size_t b = 0; b < B; ++b) {
    geo.im2col(&x.data[b * C * H * W], col.data());
    for (std::size_t o = 0; o < O; ++o) {
      T* yo = &out.data[(b * O + o) * P];
      std::fill(yo, yo + P, bias ? g.value(*bias).data[o] : T(0));
      const T* wo = &w.data[o * R];
      for (std::size_t r = 0; r < R; ++r) {
        const T wv = wo[r];
        const T* cr = &col[r * P];
        for (std::size_t p = 0; p < P; ++p) yo[p] += wv * cr[p];
      }
    }
  }

  std::vector<NodeId> ins{input, kernel};
  if (bias) ins.push_back(*bias);
  return g.emit(
      "conv2d", std::move(ins), std::move(out),
      [=](Graph<T>& gr, NodeId self) {
        const auto& dy = gr.value(self).grad;
        const auto& xv = gr.value(input).data;
        const auto& wv = gr.value(kernel).data;
        const bool want_x = gr.requires_grad(input);
        const bool want_w = gr.requires_grad(kernel);
        std::vector<T>* dx = want_x ? &gr.grad_buffer(input) : nullptr;
        std::vector<T>* dw = want_w ? &gr.grad_buffer(kernel) : nullptr;
        std::vector<T> cols(want_w ? R * P : 0), colt(cols.size()), dcol(want_x ? R * P : 0);
        for (std::size_t b = 0; b < B; ++b) {
          const T* dyb = &dy[b * O * P];
          if (want_w) {
            geo.im2col(&xv[b * C * H * W], cols.data());
            for (std::size_t r = 0; r < R; ++r)
              for (std::size_t p = 0; p < P; ++p) colt[p * R + r] = cols[r * P + p];
            for (std::size_t o = 0; o < O; ++o) {
              const T* dyo = dyb + o * P;
              T* dwo = &(*dw)[o * R];
              for (std::size_t p = 0; p < P; ++p) {
                const T d = dyo[p];
                if (d == T(0)) continue;
                const T* cp = &colt[p * R];
                for (std::size_t r = 0; r < R; ++r) dwo[r] += d * cp[r];
              }
            }
          }
          if (want_x) {
            std::fill(dcol.begin(), dcol.end(), T(0));
            for (std::size_t o = 0; o < O; ++o) {
              const T* dyo = dyb + o * P;
              const T* wo = &wv[o * R];
              for (std::size_t r = 0; r < R; ++r) {
                const T wr = wo[r];
                if (wr == T(0)) continue;
                T* dc = &dcol[r * P];
                for (std::size_t p = 0; p < P; ++p) dc[p] += wr * dyo[p];
              }
            }
            geo.col2im_add(dcol.data(), dx->data() + b * C * H * W);
          }
        }
        if (bias && gr.requires_grad(*bias)) {
          auto& db = gr.grad_buffer(*bias);
          for (std::size_t b = 0; b < B; ++b)
            for (std::size_t o = 0; o < O; ++o) {
              const T* dyo = &dy[(b * O + o) * P];
              T s = T(0);
              for (std::size_t i = 0; i < P; ++i) s += dyo[i];
              db[o] += s;
            }
        }
      });
}

/// Elementwise max(0, x); derivative at 0 is 0.
template <class T>
NodeId relu(Graph<T>& g, NodeId input) {
  const auto& x = g.value(input);
  Tensor<T> out(x.shape);
  for (std::size_t i = 0; i < x.size(); ++i) out.data[i] = x.data[i] > T(0) ? x.data[i] : T(0);
  return g.emit("relu", {input}, std::move(out), [input](Graph<T>& gr, NodeId self) {
    const auto& dy = gr.value(self).grad;
    const auto& xv = gr.value(input).data;
    auto& dx = gr.grad_buffer(input);
    for (std::size_t i = 0; i < dy.size(); ++i)
      if (xv[i] > T(0)) dx[i] += dy[i];
  });
}

/// Elementwise clamp to [lo, hi]; derivative is 1 strictly inside, 0 elsewhere.
template <class T>
NodeId clamp(Graph<T>& g, NodeId input, T lo, T hi) {
  const auto& x = g.value(input);
  Tensor<T> out(x.shape);
  for (std::size_t i = 0; i < x.size(); ++i) out.data[i] = std::clamp(x.data[i], lo, hi);
  return g.emit("clamp", {input}, std::move(out), [=](Graph<T>& gr, NodeId self) {
    const auto& dy = gr.value(self).grad;
    const auto& xv = gr.value(input).data;
    auto& dx = gr.grad_buffer(input);
    for (std::size_t i = 0; i < dy.size(); ++i)
      if (xv[i] > lo && xv[i] < hi) dx[i] += dy[i];
  });
}

/// Cross-entropy of softmax(logits) against integer labels, reduced to a scalar.
template <class T>
NodeId softmax_cross_entropy(Graph<T>& g, NodeId logits, std::span<const int> labels,
                             Reduction reduction = Reduction::Mean) {
  const auto& z = g.value(logits);
  require_rank(z, 2, "softmax_cross_entropy logits");
  const std::size_t B = z.dim(0), K = z.dim(1);
  if (labels.size() != B) {
    throw DimensionError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                         " labels for batch of " + std::to_string(B));
  }
  if (B == 0) throw InputError("softmax_cross_entropy: empty batch");
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= K) {
      throw InputError("softmax_cross_entropy: label " + std::to_string(y) + " outside [0, " +
                       std::to_string(K) + ")");
    }
  }

  std::vector<T> probs(B * K);
  T total = T(0);
  for (std::size_t b = 0; b < B; ++b) {
    const T* zr = &z.data[b * K];
    const T m = *std::max_element(zr, zr + K);
    T s = T(0);
    for (std::size_t k = 0; k < K; ++k) s += std::exp(zr[k] - m);
    const T lse = m + std::log(s);
    for (std::size_t k = 0; k < K; ++k) probs[b * K + k] = std::exp(zr[k] - lse);
    total += lse - zr[labels[b]];
  }
  const T scale = reduction == Reduction::Mean ? T(1) / static_cast<T>(B) : T(1);
  Tensor<T> out({1}, {total * scale});

  std::vector<int> ys(labels.begin(), labels.end());
  return g.emit("softmax_cross_entropy", {logits}, std::move(out),
                [=, probs = std::move(probs), ys = std::move(ys)](Graph<T>& gr, NodeId self) {
                  const T d = gr.value(self).grad[0] * scale;
                  auto& dz = gr.grad_buffer(logits);
                  for (std::size_t b = 0; b < B; ++b)
                    for (std::size_t k = 0; k < K; ++k) {
                      const T onehot = static_cast<std::size_t>(ys[b]) == k ? T(1) : T(0);
                      dz[b * K + k] += d * (probs[b * K + k] - onehot);
                    }
                });
}

/// Same data, new shape.
template <class T>
NodeId reshape(Graph<T>& g, NodeId input, Shape shape) {
  const auto& x = g.value(input);
  if (numel(shape) != x.size()) {
    throw DimensionError("reshape: cannot view " + to_string(x.shape) + " as " + to_string(shape));
  }
  Tensor<T> out(std::move(shape), x.data);
  return g.emit("reshape", {input}, std::move(out), [input](Graph<T>& gr, NodeId self) {
    const auto& dy = gr.value(self).grad;
    auto& dx = gr.grad_buffer(input);
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i];
  });
}

/// B x H x W x C  ->  B x C x H x W
template <class T>
NodeId nhwc_to_nchw(Graph<T>& g, NodeId input) {
  const auto& x = g.value(input);
  require_rank(x, 4, "nhwc_to_nchw");
  const std::size_t B = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
  Tensor<T> out({B, C, H, W});
  if (C == 1) {
    out.data = x.data;
  } else {
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t h = 0; h < H; ++h)
        for (std::size_t w = 0; w < W; ++w)
          for (std::size_t c = 0; c < C; ++c)
            out.data[((b * C + c) * H + h) * W + w] = x.data[((b * H + h) * W + w) * C + c];
  }
  return g.emit("nhwc_to_nchw", {input}, std::move(out), [=](Graph<T>& gr, NodeId self) {
    const auto& dy = gr.value(self).grad;
    auto& dx = gr.grad_buffer(input);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t h = 0; h < H; ++h)
        for (std::size_t w = 0; w < W; ++w)
          for (std::size_t c = 0; c < C; ++c)
            dx[((b * H + h) * W + w) * C + c] += dy[((b * C + c) * H + h) * W + w];
  });
}

template <class T>
NodeId add(Graph<T>& g, NodeId a, NodeId b) {
  const auto& x = g.value(a);
  const auto& y = g.value(b);
  require_shape(y, x.shape, "add");
  Tensor<T> out(x.shape);
  for (std::size_t i = 0; i < x.size(); ++i) out.data[i] = x.data[i] + y.data[i];
  return g.emit("add", {a, b}, std::move(out), [=](Graph<T>& gr, NodeId self) {
    const auto& dy = gr.value(self).grad;
    for (NodeId in : {a, b}) {
      if (!gr.requires_grad(in)) continue;
      auto& dx = gr.grad_buffer(in);
      for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i];
    }
  });
}

template <class T>
NodeId scale(Graph<T>& g, NodeId a, T factor) {
  const auto& x = g.value(a);
  Tensor<T> out(x.shape);
  for (std::size_t i = 0; i < x.size(); ++i) out.data[i] = factor * x.data[i];
  return g.emit("scale", {a}, std::move(out), [=](Graph<T>& gr, NodeId self) {
    const auto& dy = gr.value(self).grad;
    auto& dx = gr.grad_buffer(a);
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += factor * dy[i];
  });
}

/// Scalar sum_i weights[i] * x[i] with constant weights.
template <class T>
NodeId weighted_sum(Graph<T>& g, NodeId a, std::vector<T> weights) {
  const auto& x = g.value(a);
  if (weights.size() != x.size()) throw DimensionError("weighted_sum: weight count mismatch");
  T s = T(0);
  for (std::size_t i = 0; i < x.size(); ++i) s += weights[i] * x.data[i];
  Tensor<T> out({1}, {s});
  return g.emit("weighted_sum", {a}, std::move(out),
                [a, weights = std::move(weights)](Graph<T>& gr, NodeId self) {
                  const T d = gr.value(self).grad[0];
                  auto& dx = gr.grad_buffer(a);
                  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += d * weights[i];
                });
}

}  // namespace hpt::diff
