#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "hpt/diffcore/graph.hpp"
#include "hpt/diffcore/ops.hpp"
#include "hpt/errors.hpp"
#include "hpt/quantnet/model.hpp"
#include "hpt/trigger/trigger.hpp"

namespace hpt::admm {

/// The attacker's small clean set: B x H x W x C images and their labels.
struct LabeledBatch {
  diff::Tensor<double> images;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
};

inline void check_batch(const LabeledBatch& data) {
  if (data.labels.empty()) throw InputError("clean data set is empty");
  if (data.images.rank() != 4 || data.images.dim(0) != data.labels.size()) {
    throw DimensionError("clean data: images must be B x H x W x C with one label per image");
  }
}

inline void check_target(const quant::Model& m, int target) {
  if (target < 0 || static_cast<std::size_t>(target) >= m.num_classes()) {
    throw InputError("target class " + std::to_string(target) + " outside [0, " +
                     std::to_string(m.num_classes()) + ")");
  }
}

/// Sum over the batch of the cross-entropy against `labels`, with the
/// attackable layer driven by `bits` (a relaxed bit node).
template <class T>
diff::NodeId clean_loss_node(diff::Graph<T>& g, const quant::Model& m, diff::NodeId features,
                             diff::NodeId bits, const std::vector<int>& labels) {
  const auto logits = quant::forward_head(g, m, features, bits);
  return diff::softmax_cross_entropy(g, logits, labels, diff::Reduction::Sum);
}

/// Sum over the batch of the cross-entropy of the Trojan images against t.
template <class T>
diff::NodeId trojan_loss_node(diff::Graph<T>& g, const quant::Model& m, diff::NodeId images,
                              diff::NodeId delta, diff::NodeId flow, diff::NodeId bits, int target) {
  const auto trojan = trigger::warp_op(g, images, delta, flow);
  const auto feats = quant::forward_features(g, m, trojan);
  const auto logits = quant::forward_head(g, m, feats, bits);
  const std::vector<int> targets(g.value(images).dim(0), target);
  return diff::softmax_cross_entropy(g, logits, targets, diff::Reduction::Sum);
}

template <class T>
diff::Tensor<T> bits_tensor(const quant::BitTensor& bits) {
  return diff::Tensor<T>({bits.size()}, std::vector<T>(bits.bits.begin(), bits.bits.end()));
}

/// Clean loss: sum_i CE(g(x_i; theta_hat), y_i).
template <class T = double>
double loss_clean(const quant::Model& m, const quant::BitTensor& theta_hat, const LabeledBatch& data) {
  check_batch(data);
  diff::Graph<T> g;
  const auto feats = quant::forward_features(g, m, g.constant(data.images.template cast<T>()));
  const auto bits = g.constant(bits_tensor<T>(theta_hat));
  return static_cast<double>(g.value(clean_loss_node(g, m, feats, bits, data.labels)).data[0]);
}

/// Trojan loss: sum_i CE(g(T(x_i; delta, flow); theta_hat), t).
template <class T = double>
double loss_trojan(const quant::Model& m, const trigger::Trigger& trig, const quant::BitTensor& theta_hat,
                   const LabeledBatch& data, int target) {
  check_batch(data);
  check_target(m, target);
  diff::Graph<T> g;
  const auto node = trojan_loss_node(g, m, g.constant(data.images.template cast<T>()),
                                     g.constant(trig.delta.template cast<T>()),
                                     g.constant(trig.flow.template cast<T>()),
                                     g.constant(bits_tensor<T>(theta_hat)), target);
  return static_cast<double>(g.value(node).data[0]);
}

}  // namespace hpt::admm
