#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hpt/diffcore/graph.hpp"
#include "hpt/diffcore/tensor.hpp"
#include "hpt/errors.hpp"

namespace hpt::quant {

/// Layer-wise uniform quantizer parameters: Q bits per weight and step size.
struct QuantSpec {
  int q = 8;
  double step = 1.0;

  void validate() const {
    if (q != 4 && q != 8) throw InputError("QuantSpec: Q must be 4 or 8, got " + std::to_string(q));
    if (!(step > 0.0) || !std::isfinite(step)) throw InputError("QuantSpec: step must be positive");
  }

  std::int64_t code_min() const { return -(std::int64_t{1} << (q - 1)); }
  std::int64_t code_max() const { return (std::int64_t{1} << (q - 1)) - 1; }
};

enum class BitMode { Exact, Relaxed };

/// Flat bit vector of N weights x Q bits. Weight i owns entries
/// [i*Q, (i+1)*Q); entry i*Q + j holds bit j+1 (LSB first), and the last
/// entry of each group is the two's-complement sign bit.
struct BitTensor {
  std::vector<double> bits;
  int q = 8;
  BitMode mode = BitMode::Exact;

  std::size_t size() const { return bits.size(); }
  std::size_t weight_count() const { return bits.size() / static_cast<std::size_t>(q); }

  void validate() const {
    if (q < 2) throw InputError("BitTensor: Q must be >= 2");
    if (bits.size() % static_cast<std::size_t>(q) != 0) {
      throw InputError("BitTensor: length " + std::to_string(bits.size()) +
                       " is not divisible by Q=" + std::to_string(q));
    }
    if (mode == BitMode::Exact) {
      for (double b : bits)
        if (b != 0.0 && b != 1.0) throw ContractError("BitTensor: exact-binary entry not in {0,1}");
    }
  }

  BitTensor relaxed() const { return {bits, q, BitMode::Relaxed}; }
};

/// Signed power-of-two weight of bit `j` (0-based) in a Q-bit group.
inline double bit_weight(int j, int q) {
  return j == q - 1 ? -std::ldexp(1.0, q - 1) : std::ldexp(1.0, j);
}

/// Integer code of weight `i` (exact bits only).
inline std::int64_t code_of(const BitTensor& t, std::size_t i) {
  std::int64_t code = 0;
  const auto q = static_cast<std::size_t>(t.q);
  for (std::size_t j = 0; j < q; ++j) {
    if (t.bits[i * q + j] != 0.0) {
      code += j + 1 == q ? -(std::int64_t{1} << (q - 1)) : (std::int64_t{1} << j);
    }
  }
  return code;
}

inline void encode_code(std::int64_t code, int q, std::span<double> out) {
  const auto u = static_cast<std::uint64_t>(code) & ((std::uint64_t{1} << q) - 1);
  for (int j = 0; j < q; ++j) out[static_cast<std::size_t>(j)] = static_cast<double>((u >> j) & 1u);
}

/// W_i = (-2^{Q-1} b_{i,Q} + sum_{j<Q} 2^{j-1} b_{i,j}) * step. Works on
/// relaxed bits too, since the map is linear.
template <class T = double>
std::vector<T> dequantize(const BitTensor& bits, const QuantSpec& spec) {
  if (bits.q != spec.q) throw InputError("dequantize: bit tensor Q differs from QuantSpec");
  if (bits.bits.size() % static_cast<std::size_t>(spec.q) != 0) {
    throw InputError("dequantize: length " + std::to_string(bits.bits.size()) +
                     " is not divisible by Q=" + std::to_string(spec.q));
  }
  const auto q = static_cast<std::size_t>(spec.q);
  const std::size_t n = bits.bits.size() / q;
  std::vector<double> pow2(q);
  for (std::size_t j = 0; j < q; ++j) pow2[j] = bit_weight(static_cast<int>(j), spec.q);
  std::vector<T> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    // Integer part first so exact bits give code * step with one rounding.
    double acc = 0.0;
    for (std::size_t j = 0; j < q; ++j) acc += pow2[j] * bits.bits[i * q + j];
    w[i] = static_cast<T>(acc * spec.step);
  }
  return w;
}

/// Symmetric max-abs quantizer: step = max|W| / (2^{Q-1} - 1), round to
/// nearest code. An all-zero layer gets step 1 and zero bits.
inline std::pair<BitTensor, QuantSpec> quantize(std::span<const double> weights, int q) {
  if (weights.empty()) throw InputError("quantize: empty weight tensor");
  QuantSpec spec{q, 1.0};
  spec.validate();
  double max_abs = 0.0;
  for (double w : weights) {
    if (!std::isfinite(w)) throw InputError("quantize: non-finite weight");
    max_abs = std::max(max_abs, std::abs(w));
  }
  if (max_abs > 0.0) spec.step = max_abs / static_cast<double>(spec.code_max());

  BitTensor bits{std::vector<double>(weights.size() * static_cast<std::size_t>(q), 0.0), q,
                 BitMode::Exact};
  if (max_abs == 0.0) return {bits, spec};
  for (std::size_t i = 0; i < weights.size(); ++i) {
    auto code = static_cast<std::int64_t>(std::llround(weights[i] / spec.step));
    code = std::clamp(code, spec.code_min(), spec.code_max());
    encode_code(code, q, std::span<double>(bits.bits).subspan(i * static_cast<std::size_t>(q),
                                                              static_cast<std::size_t>(q)));
  }
  return {bits, spec};
}

/// Re-encodes weights with a fixed step (no recalibration).
inline BitTensor requantize(std::span<const double> weights, const QuantSpec& spec) {
  spec.validate();
  const auto q = static_cast<std::size_t>(spec.q);
  BitTensor bits{std::vector<double>(weights.size() * q, 0.0), spec.q, BitMode::Exact};
  for (std::size_t i = 0; i < weights.size(); ++i) {
    auto code = static_cast<std::int64_t>(std::llround(weights[i] / spec.step));
    code = std::clamp(code, spec.code_min(), spec.code_max());
    encode_code(code, spec.q, std::span<double>(bits.bits).subspan(i * q, q));
  }
  return bits;
}

/// Number of differing positions between two exact-binary tensors.
inline std::size_t hamming(const BitTensor& a, const BitTensor& b) {
  if (a.mode != BitMode::Exact || b.mode != BitMode::Exact) {
    throw ContractError("hamming: both bit tensors must be exact-binary");
  }
  if (a.bits.size() != b.bits.size()) throw DimensionError("hamming: length mismatch");
  std::size_t d = 0;
  for (std::size_t i = 0; i < a.bits.size(); ++i) d += a.bits[i] != b.bits[i];
  return d;
}

/// Graph op: relaxed bits (length N*Q) -> dequantized weights of `shape`.
/// d W_i / d bit_{i,j} = bit_weight(j) * step.
template <class T>
diff::NodeId dequantize_op(diff::Graph<T>& g, diff::NodeId bits, const QuantSpec& spec,
                           diff::Shape shape) {
  const auto& b = g.value(bits);
  const auto q = static_cast<std::size_t>(spec.q);
  if (b.size() % q != 0) {
    throw InputError("dequantize: length " + std::to_string(b.size()) +
                     " is not divisible by Q=" + std::to_string(spec.q));
  }
  const std::size_t n = b.size() / q;
  if (diff::numel(shape) != n) throw DimensionError("dequantize: weight shape does not match bit count");
  std::vector<T> pow2(q), scale(q);
  const T step = static_cast<T>(spec.step);
  for (std::size_t j = 0; j < q; ++j) {
    pow2[j] = static_cast<T>(bit_weight(static_cast<int>(j), spec.q));
    scale[j] = pow2[j] * step;
  }
  diff::Tensor<T> out(std::move(shape));
  for (std::size_t i = 0; i < n; ++i) {
    T acc = T(0);
    for (std::size_t j = 0; j < q; ++j) acc += pow2[j] * b.data[i * q + j];
    out.data[i] = acc * step;
  }
  return g.emit("dequantize", {bits}, std::move(out),
                [=](diff::Graph<T>& gr, diff::NodeId self) {
                  const auto& dw = gr.value(self).grad;
                  auto& db = gr.grad_buffer(bits);
                  for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = 0; j < q; ++j) db[i * q + j] += scale[j] * dw[i];
                });
}

}  // namespace hpt::quant
