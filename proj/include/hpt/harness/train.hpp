#pragma once

#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "hpt/diffcore/graph.hpp"
#include "hpt/diffcore/ops.hpp"
#include "hpt/errors.hpp"
#include "hpt/harness/dataset.hpp"
#include "hpt/quantnet/model.hpp"
#include "hpt/quantnet/quant.hpp"
#include "hpt/util/rng.hpp"

namespace hpt::harness {

struct LayerSpec {
  quant::LayerKind kind = quant::LayerKind::Dense;
  std::size_t out = 0;
  std::size_t kernel = 0, stride = 1, pad = 0;  // conv only
};

/// Comma-separated layers: "conv:<out>:<k>:<stride>:<pad>" or "dense:<out>".
/// Every layer but the last gets a ReLU; the last must be dense.
struct ArchSpec {
  std::vector<LayerSpec> layers;

  static ArchSpec parse(const std::string& text) {
    ArchSpec a;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
      std::vector<std::string> f;
      std::stringstream is(item);
      std::string tok;
      while (std::getline(is, tok, ':')) f.push_back(tok);
      auto num = [&](std::size_t i) -> std::size_t {
        try {
          std::size_t used = 0;
          const auto v = std::stoul(f.at(i), &used);
          if (used != f[i].size()) throw std::invalid_argument("trailing");
          return v;
        } catch (const std::exception&) {
          throw ValidationError("arch: bad number in '" + item + "'");
        }
      };
      LayerSpec l;
      if (!f.empty() && f[0] == "conv" && f.size() == 5) {
        l = {quant::LayerKind::Conv, num(1), num(2), num(3), num(4)};
        if (l.kernel == 0 || l.stride == 0) throw ValidationError("arch: conv kernel and stride must be >= 1");
      } else if (!f.empty() && f[0] == "dense" && f.size() == 2) {
        l.out = num(1);
      } else {
        throw ValidationError("arch: cannot parse layer '" + item + "'");
      }
      if (l.out == 0) throw ValidationError("arch: layer width must be >= 1");
      a.layers.push_back(l);
    }
    if (a.layers.empty()) throw ValidationError("arch: no layers");
    if (a.layers.back().kind != quant::LayerKind::Dense) throw ValidationError("arch: last layer must be dense");
    return a;
  }
};

struct TrainConfig {
  std::size_t epochs = 8;
  std::size_t batch = 32;
  double lr = 2e-3;
  int q = 8;
  std::uint64_t seed = 1;
  double ta_floor = 90.0;  // percent
};

struct TrainResult {
  quant::Model model;
  double float_accuracy = 0;  // on `eval`, before quantization
  double accuracy = 0;        // on `eval`, quantized model
  std::vector<double> epoch_loss;
  std::string warning;
};

namespace detail {

struct FloatLayer {
  LayerSpec spec;
  diff::Shape wshape;
  std::vector<double> w, b;
  std::vector<double> mw, vw, mb, vb;  // Adam moments
};

template <class T>
diff::NodeId float_forward(diff::Graph<T>& g, std::vector<FloatLayer>& net, diff::NodeId images,
                           std::vector<std::pair<diff::NodeId, diff::NodeId>>* params) {
  const std::size_t B = g.value(images).dim(0);
  diff::NodeId h = diff::nhwc_to_nchw(g, images);
  bool flat = false;
  for (std::size_t i = 0; i < net.size(); ++i) {
    auto& l = net[i];
    const auto w = g.variable(diff::Tensor<T>(l.wshape, std::vector<T>(l.w.begin(), l.w.end())));
    const auto b = g.variable(diff::Tensor<T>({l.b.size()}, std::vector<T>(l.b.begin(), l.b.end())));
    if (params) params->emplace_back(w, b);
    if (l.spec.kind == quant::LayerKind::Conv) {
      h = diff::conv2d(g, h, w, b, l.spec.stride, l.spec.pad);
    } else {
      if (!flat) {
        h = diff::reshape(g, h, {B, g.value(h).size() / B});
        flat = true;
      }
      h = diff::dense(g, h, w, b);
    }
    if (i + 1 < net.size()) h = diff::relu(g, h);
  }
  return h;
}

inline double accuracy_percent(std::span<const int> pred, std::span<const int> labels) {
  if (labels.empty()) return 0.0;
  std::size_t ok = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) ok += pred[i] == labels[i];
  return 100.0 * static_cast<double>(ok) / static_cast<double>(labels.size());
}

}  // namespace detail

/// Top-1 accuracy (percent) of a quantized model, evaluated in chunks.
inline double accuracy(const quant::Model& m, const Dataset& ds, std::size_t chunk = 256) {
  std::vector<int> pred;
  for (std::size_t s = 0; s < ds.size(); s += chunk) {
    const auto part = ds.range(s, s + chunk);
    const auto z = quant::logits<double>(m, part.images());
    const auto p = quant::argmax_rows(z.data, m.num_classes());
    pred.insert(pred.end(), p.begin(), p.end());
  }
  return detail::accuracy_percent(pred, ds.labels);
}

/// Trains a float network with Adam on `train`, then quantizes every layer
/// to Q bits (biases stay float). Deterministic under `cfg.seed`.
/// Training runs in T precision; use double for bit-reproducibility tests.
template <class T = float>
TrainResult train_victim(const ArchSpec& arch, const Dataset& train, const Dataset& eval, const TrainConfig& cfg) {
  if (train.size() == 0) throw InputError("train_victim: empty training set");
  if (cfg.batch == 0) throw ValidationError("train_victim: batch must be >= 1");
  Rng rng(cfg.seed);

  std::vector<detail::FloatLayer> net;
  std::size_t C = train.channels, H = train.height, W = train.width, flat = 0;
  bool dense_seen = false;
  for (const auto& s : arch.layers) {
    detail::FloatLayer l{s, {}, {}, {}, {}, {}, {}, {}};
    std::size_t fan_in = 0;
    if (s.kind == quant::LayerKind::Conv) {
      if (dense_seen) throw ValidationError("arch: conv after dense");
      if (s.kernel > H + 2 * s.pad || s.kernel > W + 2 * s.pad) throw ValidationError("arch: kernel larger than input");
      l.wshape = {s.out, C, s.kernel, s.kernel};
      fan_in = C * s.kernel * s.kernel;
      H = diff::conv_out_size(H, s.kernel, s.stride, s.pad);
      W = diff::conv_out_size(W, s.kernel, s.stride, s.pad);
      C = s.out;
    } else {
      if (!dense_seen) flat = C * H * W;
      dense_seen = true;
      l.wshape = {s.out, flat};
      fan_in = flat;
      flat = s.out;
    }
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    l.w.resize(diff::numel(l.wshape));
    for (auto& v : l.w) v = rng.uniform(-bound, bound);
    l.b.assign(s.out, 0.0);
    l.mw.assign(l.w.size(), 0.0);
    l.vw = l.mw;
    l.mb.assign(l.b.size(), 0.0);
    l.vb = l.mb;
    net.push_back(std::move(l));
  }

  TrainResult res;
  constexpr double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
  std::size_t t = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = rng.permutation(train.size());
    double total = 0;
    for (std::size_t s = 0; s < order.size(); s += cfg.batch) {
      const std::size_t e = std::min(order.size(), s + cfg.batch);
      const auto mb = train.subset(std::span<const std::size_t>(order).subspan(s, e - s));
      diff::Graph<T> g;
      const auto imgs = mb.images();
      const auto x = g.constant(diff::Tensor<T>(imgs.shape, std::vector<T>(imgs.data.begin(), imgs.data.end())));
      std::vector<std::pair<diff::NodeId, diff::NodeId>> params;
      const auto z = detail::float_forward(g, net, x, &params);
      const auto loss = diff::softmax_cross_entropy(g, z, std::span<const int>(mb.labels), diff::Reduction::Mean);
      g.backward(loss);
      total += static_cast<double>(g.value(loss).data[0]) * static_cast<double>(e - s);
      ++t;
      const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
      const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
      auto step = [&](std::vector<double>& p, std::vector<double>& m, std::vector<double>& v, const std::vector<T>& gr) {
        for (std::size_t i = 0; i < p.size(); ++i) {
          const double gi = gr.empty() ? 0.0 : static_cast<double>(gr[i]);
          m[i] = beta1 * m[i] + (1 - beta1) * gi;
          v[i] = beta2 * v[i] + (1 - beta2) * gi * gi;
          p[i] -= cfg.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + adam_eps);
        }
      };
      for (std::size_t i = 0; i < net.size(); ++i) {
        step(net[i].w, net[i].mw, net[i].vw, g.grad(params[i].first));
        step(net[i].b, net[i].mb, net[i].vb, g.grad(params[i].second));
      }
    }
    res.epoch_loss.push_back(total / static_cast<double>(train.size()));
  }

  // Float accuracy before quantization.
  {
    std::vector<int> pred;
    for (std::size_t s = 0; s < eval.size(); s += 256) {
      const auto part = eval.range(s, s + 256);
      diff::Graph<double> g;
      const auto z = detail::float_forward(g, net, g.constant(part.images()), nullptr);
      const auto p = quant::argmax_rows(g.value(z).data, net.back().spec.out);
      pred.insert(pred.end(), p.begin(), p.end());
    }
    res.float_accuracy = detail::accuracy_percent(pred, eval.labels);
  }

  quant::Model& m = res.model;
  m.height = train.height;
  m.width = train.width;
  m.channels = train.channels;
  m.q = cfg.q;
  for (std::size_t i = 0; i < net.size(); ++i) {
    const auto& l = net[i];
    quant::Layer ql;
    ql.kind = l.spec.kind;
    ql.weight_shape = l.wshape;
    ql.stride = l.spec.stride;
    ql.pad = l.spec.pad;
    ql.relu = i + 1 < net.size();
    std::tie(ql.bits, ql.quant) = quant::quantize(l.w, cfg.q);
    ql.bias.assign(l.b.begin(), l.b.end());
    m.layers.push_back(std::move(ql));
  }
  m.validate();
  res.accuracy = eval.size() ? accuracy(m, eval) : 0.0;
  if (eval.size() && res.accuracy < cfg.ta_floor) {
    std::ostringstream os;
    os << "victim accuracy " << res.accuracy << "% is below the floor of " << cfg.ta_floor
       << "%; attack metrics will be hard to interpret";
    res.warning = os.str();
  }
  return res;
}

}  // namespace hpt::harness
