#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "hpt/diffcore/tensor.hpp"
#include "hpt/errors.hpp"
#include "hpt/harness/dataset.hpp"
#include "hpt/quantnet/model.hpp"
#include "hpt/trigger/trigger.hpp"

namespace hpt::harness {

enum class Defense { None, Average, Depth };

/// Input squeezer applied to both clean and Trojan images before the model.
struct DefenseSpec {
  Defense kind = Defense::None;
  int param = 0;  // window for Average, bit depth for Depth

  static DefenseSpec none() { return {}; }
  static DefenseSpec average(int window = 2) { return {Defense::Average, window}; }
  static DefenseSpec depth(int bits = 5) { return {Defense::Depth, bits}; }

  std::string name() const {
    switch (kind) {
      case Defense::None: return "none";
      case Defense::Average: return "average" + std::to_string(param);
      case Defense::Depth: return "depth" + std::to_string(param);
    }
    return "?";
  }

  /// "none", "average[:w]" or "depth[:bits]".
  static DefenseSpec parse(const std::string& s) {
    const auto colon = s.find(':');
    const std::string head = s.substr(0, colon);
    int arg = 0;
    if (colon != std::string::npos) {
      try {
        arg = std::stoi(s.substr(colon + 1));
      } catch (const std::exception&) {
        throw ValidationError("defense: bad parameter in '" + s + "'");
      }
    }
    if (head == "none") return none();
    if (head == "average") return average(arg ? arg : 2);
    if (head == "depth") return depth(arg ? arg : 5);
    throw ValidationError("defense: expected none, average[:w] or depth[:bits], got '" + s + "'");
  }
};

struct AttackReport {
  double ta = 0;     // percent, original model, clean test images
  double pa_ta = 0;  // percent, attacked model, clean test images
  double asr = 0;    // percent of all Trojan test images predicted as target
  std::size_t n_flip = 0;
  double mse = 0;  // [0,255] scale, clean vs Trojan
  int target = 0;
  std::size_t test_size = 0;
  std::string defense = "none";
};

/// Mean over a window x window block. The block is anchored at the pixel
/// ([-(w-1)/2, w/2] offsets) and shifted inward where it would leave the
/// image; only an image smaller than the window sees replicated borders.
template <class T>
diff::Tensor<T> squeeze_average(const diff::Tensor<T>& images, int window) {
  diff::require_rank(images, 4, "squeeze_average");
  if (window < 1) throw InputError("squeeze_average: window must be >= 1");
  const std::size_t B = images.dim(0), H = images.dim(1), W = images.dim(2), C = images.dim(3);
  if (window == 1) return images;
  const long w = window, lo = -(w - 1) / 2;
  auto start = [&](std::size_t p, std::size_t n) {
    return std::max<long>(0, std::min<long>(static_cast<long>(p) + lo, static_cast<long>(n) - w));
  };
  auto at = [](long i, std::size_t n) { return static_cast<std::size_t>(std::clamp<long>(i, 0, static_cast<long>(n) - 1)); };
  diff::Tensor<T> out(images.shape);
  const T norm = T(1) / static_cast<T>(w * w);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t r = 0; r < H; ++r)
      for (std::size_t c = 0; c < W; ++c)
        for (std::size_t ch = 0; ch < C; ++ch) {
          const long r0 = start(r, H), c0 = start(c, W);
          T acc = T(0);
          for (long dr = 0; dr < w; ++dr)
            for (long dc = 0; dc < w; ++dc) acc += images.data[((b * H + at(r0 + dr, H)) * W + at(c0 + dc, W)) * C + ch];
          out.data[((b * H + r) * W + c) * C + ch] = std::clamp(acc * norm, T(0), T(1));
        }
  return out;
}

/// x' = round(x * (2^bits - 1)) / (2^bits - 1), halves rounded up.
template <class T>
diff::Tensor<T> squeeze_depth(diff::Tensor<T> images, int bits) {
  if (bits < 1 || bits > 8) throw InputError("squeeze_depth: bits must be in [1, 8]");
  const double levels = std::ldexp(1.0, bits) - 1.0;
  for (auto& v : images.data) {
    const double x = std::clamp(static_cast<double>(v), 0.0, 1.0);
    v = static_cast<T>(std::floor(x * levels + 0.5) / levels);
  }
  return images;
}

template <class T>
diff::Tensor<T> apply_defense(const diff::Tensor<T>& images, const DefenseSpec& d) {
  switch (d.kind) {
    case Defense::None: return images;
    case Defense::Average: return squeeze_average(images, d.param);
    case Defense::Depth: return squeeze_depth(images, d.param);
  }
  return images;
}

/// Mean squared pixel difference on the [0,255] scale.
inline double mse_255(const diff::Tensor<double>& a, const diff::Tensor<double>& b) {
  if (a.shape != b.shape) throw InputError("mse: shape mismatch");
  if (a.size() == 0) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = 255.0 * (a.data[i] - b.data[i]);
    s += d * d;
  }
  return s / static_cast<double>(a.size());
}

namespace detail {

inline std::vector<int> predict(const quant::Model& m, const diff::Tensor<double>& images, std::size_t chunk = 256) {
  const std::size_t B = images.dim(0), per = images.size() / std::max<std::size_t>(B, 1);
  std::vector<int> out;
  out.reserve(B);
  for (std::size_t s = 0; s < B; s += chunk) {
    const std::size_t e = std::min(B, s + chunk);
    diff::Shape shp = images.shape;
    shp[0] = e - s;
    diff::Tensor<double> part(shp, std::vector<double>(images.data.begin() + static_cast<std::ptrdiff_t>(s * per),
                                                      images.data.begin() + static_cast<std::ptrdiff_t>(e * per)));
    const auto z = quant::logits<double>(m, part);
    const auto p = quant::argmax_rows(z.data, m.num_classes());
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

inline double percent(std::size_t hits, std::size_t n) {
  return n ? 100.0 * static_cast<double>(hits) / static_cast<double>(n) : 0.0;
}

}  // namespace detail

/// TA / PA-TA on clean test images, ASR over all Trojan test images, N_flip
/// between the two models, and clean-vs-Trojan MSE. The defense (if any)
/// preprocesses every image fed to either model; MSE is measured on the
/// undefended images.
inline AttackReport defense_eval(const quant::Model& original, const quant::Model& attacked,
                                 const trigger::Trigger& trig, const Dataset& test, int target,
                                 const DefenseSpec& defense) {
  test.validate();
  if (test.size() == 0) throw InputError("evaluate: empty test set");
  if (test.height != original.height || test.width != original.width || test.channels != original.channels) {
    throw InputError("evaluate: test images do not match the model input shape");
  }
  if (trig.delta.shape != diff::Shape{test.height, test.width, test.channels}) {
    throw InputError("evaluate: trigger shape does not match the test images");
  }
  if (target < 0 || static_cast<std::size_t>(target) >= original.num_classes()) {
    throw InputError("evaluate: target class out of range");
  }
  AttackReport r;
  r.target = target;
  r.test_size = test.size();
  r.defense = defense.name();
  r.n_flip = quant::flip_distance(original, attacked);

  const auto clean = test.images();
  const auto trojan = trigger::apply<double>(clean, trig);
  r.mse = mse_255(clean, trojan);

  const auto clean_in = apply_defense(clean, defense);
  const auto trojan_in = apply_defense(trojan, defense);
  const auto p_orig = detail::predict(original, clean_in);
  const auto p_att = &original == &attacked ? p_orig : detail::predict(attacked, clean_in);
  const auto p_troj = detail::predict(attacked, trojan_in);
  std::size_t ok0 = 0, ok1 = 0, hit = 0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    ok0 += p_orig[i] == test.labels[i];
    ok1 += p_att[i] == test.labels[i];
    hit += p_troj[i] == target;
  }
  r.ta = detail::percent(ok0, test.size());
  r.pa_ta = detail::percent(ok1, test.size());
  r.asr = detail::percent(hit, test.size());
  return r;
}

inline AttackReport evaluate(const quant::Model& original, const quant::Model& attacked,
                             const trigger::Trigger& trig, const Dataset& test, int target) {
  return defense_eval(original, attacked, trig, test, target, DefenseSpec::none());
}

/// MSE of the fixed square-patch baseline on the same images.
inline double square_patch_mse(const Dataset& images, double area_fraction = 0.1) {
  const auto clean = images.images();
  return mse_255(clean, trigger::apply_square_patch<double>(clean, area_fraction));
}

}  // namespace hpt::harness
