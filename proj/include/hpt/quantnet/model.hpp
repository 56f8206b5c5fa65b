#pragma once

#include <algorithm>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hpt/diffcore/graph.hpp"
#include "hpt/diffcore/ops.hpp"
#include "hpt/diffcore/tensor.hpp"
#include "hpt/errors.hpp"
#include "hpt/quantnet/quant.hpp"

namespace hpt::quant {

enum class LayerKind { Conv, Dense };

/// One quantized layer. Conv weights are O x C x k x k, dense weights K x F.
/// A flatten is implied between the last conv and the first dense layer.
struct Layer {
  LayerKind kind = LayerKind::Dense;
  diff::Shape weight_shape;
  std::size_t stride = 1;
  std::size_t pad = 0;
  bool relu = true;
  QuantSpec quant;
  BitTensor bits;
  std::vector<float> bias;

  std::size_t out_channels() const { return weight_shape.at(0); }
  std::size_t weight_count() const { return diff::numel(weight_shape); }
};

/// One toggled bit of the attackable layer.
struct BitFlip {
  std::size_t layer = 0;
  std::size_t bit = 0;
  int old_value = 0;
  int new_value = 1;

  friend bool operator==(const BitFlip&, const BitFlip&) = default;
};

/// A Q-bit quantized classifier over H x W x C images in [0,1]. Only the
/// last layer is attackable; every other layer keeps its bits forever.
struct Model {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 1;
  int q = 8;
  std::vector<Layer> layers;

  std::size_t attackable_index() const { return layers.size() - 1; }
  const Layer& attackable() const { return layers.back(); }
  std::size_t num_classes() const { return layers.back().out_channels(); }
  std::size_t feature_dim() const { return layers.back().weight_shape.at(1); }

  void validate() const {
    if (layers.empty()) throw InputError("model has no layers");
    if (layers.back().kind != LayerKind::Dense) throw InputError("attackable (last) layer must be dense");
    if (layers.back().relu) throw InputError("attackable (last) layer must not have an activation");
    bool seen_dense = false;
    for (const auto& l : layers) {
      if (l.quant.q != q || l.bits.q != q) throw InputError("layer Q differs from model Q");
      l.quant.validate();
      l.bits.validate();
      if (l.bits.mode != BitMode::Exact) throw ContractError("stored model bits must be exact-binary");
      if (l.bits.weight_count() != l.weight_count()) throw InputError("layer bit count does not match shape");
      if (l.bias.size() != l.out_channels()) throw InputError("layer bias length mismatch");
      if (l.kind == LayerKind::Conv) {
        if (seen_dense) throw InputError("conv layer after dense layer");
        if (l.weight_shape.size() != 4) throw InputError("conv weight must be rank 4");
      } else {
        seen_dense = true;
        if (l.weight_shape.size() != 2) throw InputError("dense weight must be rank 2");
      }
    }
  }
};

template <class T>
diff::Tensor<T> layer_weights(const Layer& l) {
  return diff::Tensor<T>(l.weight_shape, dequantize<T>(l.bits, l.quant));
}

template <class T>
diff::Tensor<T> layer_bias(const Layer& l) {
  return diff::Tensor<T>({l.bias.size()}, std::vector<T>(l.bias.begin(), l.bias.end()));
}

/// Runs every layer except the attackable one. `images` is B x H x W x C;
/// the result is the B x F input of the attackable layer.
template <class T>
diff::NodeId forward_features(diff::Graph<T>& g, const Model& m, diff::NodeId images) {
  const auto& x = g.value(images);
  diff::require_rank(x, 4, "model input");
  if (x.dim(1) != m.height || x.dim(2) != m.width || x.dim(3) != m.channels) {
    throw DimensionError("model input: expected images of " + std::to_string(m.height) + "x" +
                         std::to_string(m.width) + "x" + std::to_string(m.channels) + ", got " +
                         diff::to_string(x.shape));
  }
  const std::size_t B = x.dim(0);
  diff::NodeId h = diff::nhwc_to_nchw(g, images);
  bool flat = false;
  for (std::size_t i = 0; i + 1 < m.layers.size(); ++i) {
    const Layer& l = m.layers[i];
    const auto w = g.constant(layer_weights<T>(l));
    const auto b = g.constant(layer_bias<T>(l));
    if (l.kind == LayerKind::Conv) {
      h = diff::conv2d(g, h, w, b, l.stride, l.pad);
    } else {
      if (!flat) {
        h = diff::reshape(g, h, {B, g.value(h).size() / std::max<std::size_t>(B, 1)});
        flat = true;
      }
      h = diff::dense(g, h, w, b);
    }
    if (l.relu) h = diff::relu(g, h);
  }
  if (!flat) h = diff::reshape(g, h, {B, g.value(h).size() / std::max<std::size_t>(B, 1)});
  return h;
}

/// Attackable layer applied to features. With `override_bits` (a relaxed
/// bit node) the weights are dequantized from it and gradients reach it.
template <class T>
diff::NodeId forward_head(diff::Graph<T>& g, const Model& m, diff::NodeId features,
                          std::optional<diff::NodeId> override_bits = std::nullopt) {
  const Layer& l = m.attackable();
  const diff::NodeId w = override_bits
                             ? dequantize_op(g, *override_bits, l.quant, l.weight_shape)
                             : g.constant(layer_weights<T>(l));
  return diff::dense(g, features, w, g.constant(layer_bias<T>(l)));
}

template <class T>
diff::NodeId forward(diff::Graph<T>& g, const Model& m, diff::NodeId images,
                     std::optional<diff::NodeId> override_bits = std::nullopt) {
  return forward_head(g, m, forward_features(g, m, images), override_bits);
}

/// Plain (tape-free use) logits for a batch.
template <class T>
diff::Tensor<T> logits(const Model& m, const diff::Tensor<T>& images) {
  diff::Graph<T> g;
  const auto out = forward(g, m, g.constant(images));
  return g.value(out);
}

template <class T>
diff::Tensor<T> features(const Model& m, const diff::Tensor<T>& images) {
  diff::Graph<T> g;
  const auto out = forward_features(g, m, g.constant(images));
  return g.value(out);
}

inline std::vector<int> argmax_rows(std::span<const double> values, std::size_t cols) {
  std::vector<int> out(values.size() / cols);
  for (std::size_t r = 0; r < out.size(); ++r) {
    const auto row = values.subspan(r * cols, cols);
    out[r] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

/// Toggles the listed bits of the attackable layer, returning a new model.
inline Model apply_flips(const Model& m, std::span<const std::size_t> bit_indices) {
  Model out = m;
  auto& bits = out.layers.back().bits.bits;
  for (std::size_t idx : bit_indices) {
    if (idx >= bits.size()) {
      throw InputError("apply_flips: bit index " + std::to_string(idx) + " outside attackable layer of " +
                       std::to_string(bits.size()) + " bits");
    }
    bits[idx] = 1.0 - bits[idx];
  }
  return out;
}

inline Model apply_flips(const Model& m, std::span<const BitFlip> flips) {
  std::vector<std::size_t> idx;
  idx.reserve(flips.size());
  for (const auto& f : flips) {
    if (f.layer != m.attackable_index()) {
      throw InputError("apply_flips: flip targets layer " + std::to_string(f.layer) +
                       ", only layer " + std::to_string(m.attackable_index()) + " is attackable");
    }
    idx.push_back(f.bit);
  }
  return apply_flips(m, std::span<const std::size_t>(idx));
}

/// Hamming distance between the attackable layers of two models; every
/// other layer must be bit-identical.
inline std::size_t flip_distance(const Model& a, const Model& b) {
  if (a.layers.size() != b.layers.size()) throw InputError("models differ in layer count");
  for (std::size_t i = 0; i + 1 < a.layers.size(); ++i) {
    if (a.layers[i].bits.bits != b.layers[i].bits.bits) {
      throw InputError("non-attackable layer " + std::to_string(i) + " differs between models");
    }
  }
  return hamming(a.attackable().bits, b.attackable().bits);
}

}  // namespace hpt::quant
