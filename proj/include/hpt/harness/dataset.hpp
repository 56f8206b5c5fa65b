#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "hpt/admm/losses.hpp"
#include "hpt/diffcore/tensor.hpp"
#include "hpt/errors.hpp"
#include "hpt/util/binary_io.hpp"
#include "hpt/util/image_io.hpp"
#include "hpt/util/rng.hpp"

namespace hpt::harness {

/// n images of H x W x C in [0,1] with integer labels.
struct Dataset {
  std::size_t height = 0, width = 0, channels = 1;
  std::size_t num_classes = 10;
  std::vector<double> pixels;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  std::size_t image_size() const { return height * width * channels; }

  void validate() const {
    if (pixels.size() != size() * image_size()) throw DimensionError("dataset: pixel count mismatch");
    for (double p : pixels)
      if (!(p >= 0.0 && p <= 1.0)) throw InputError("dataset: pixel outside [0,1]");
    for (int y : labels)
      if (y < 0 || static_cast<std::size_t>(y) >= num_classes) throw InputError("dataset: label out of range");
  }

  Dataset subset(std::span<const std::size_t> idx) const {
    Dataset out{height, width, channels, num_classes, {}, {}};
    out.pixels.reserve(idx.size() * image_size());
    for (std::size_t i : idx) {
      if (i >= size()) throw InputError("dataset: index out of range");
      out.pixels.insert(out.pixels.end(), pixels.begin() + static_cast<std::ptrdiff_t>(i * image_size()),
                        pixels.begin() + static_cast<std::ptrdiff_t>((i + 1) * image_size()));
      out.labels.push_back(labels[i]);
    }
    return out;
  }

  Dataset range(std::size_t begin, std::size_t end) const {
    std::vector<std::size_t> idx;
    for (std::size_t i = begin; i < std::min(end, size()); ++i) idx.push_back(i);
    return subset(idx);
  }

  diff::Tensor<double> images() const {
    return diff::Tensor<double>({size(), height, width, channels}, pixels);
  }

  admm::LabeledBatch batch() const { return {images(), labels}; }
};

/// Training data for the victim, the attacker's clean pool, and the
/// held-out test set. The three are disjoint.
struct Split {
  Dataset train;
  Dataset attacker_pool;
  Dataset test;
};

inline Split split(const Dataset& all, std::size_t n_train, std::size_t n_pool, std::uint64_t seed) {
  if (n_train + n_pool >= all.size()) throw InputError("split: not enough images for train + attacker pool + test");
  Rng rng(seed);
  const auto perm = rng.permutation(all.size());
  std::span<const std::size_t> p(perm);
  return {all.subset(p.subspan(0, n_train)), all.subset(p.subspan(n_train, n_pool)),
          all.subset(p.subspan(n_train + n_pool))};
}

/// Draws M attacker images from the pool (seeded, without replacement).
inline Dataset sample_attacker_set(const Dataset& pool, std::size_t m, std::uint64_t seed) {
  if (m == 0 || m > pool.size()) {
    throw InputError("attacker set size M=" + std::to_string(m) + " exceeds pool of " + std::to_string(pool.size()));
  }
  Rng rng(seed ^ 0x9E3779B97F4A7C15ull);
  auto perm = rng.permutation(pool.size());
  perm.resize(m);
  return pool.subset(perm);
}

// ---------------------------------------------------------------------------
// Synthetic handwritten-style digits.

namespace detail {

using Point = std::array<double, 2>;  // (x, y) in the unit box, y downwards
using Stroke = std::vector<Point>;

inline Stroke arc(double cx, double cy, double rx, double ry, double a0, double a1, int segments = 14) {
  Stroke s;
  for (int i = 0; i <= segments; ++i) {
    const double a = a0 + (a1 - a0) * i / segments;
    s.push_back({cx + rx * std::cos(a), cy + ry * std::sin(a)});
  }
  return s;
}

inline std::vector<Stroke> glyph(int digit) {
  constexpr double pi = std::numbers::pi;
  switch (digit) {
    case 0: return {arc(0.5, 0.5, 0.26, 0.38, 0, 2 * pi, 20)};
    case 1: return {{{0.36, 0.26}, {0.52, 0.1}, {0.52, 0.9}}};
    case 2: {
      auto top = arc(0.5, 0.33, 0.24, 0.22, pi * 1.05, pi * 2.15);
      top.push_back({0.26, 0.88});
      top.push_back({0.76, 0.88});
      return {top};
    }
    case 3: return {arc(0.48, 0.3, 0.22, 0.19, -pi * 0.85, pi * 0.5), arc(0.48, 0.69, 0.25, 0.21, -pi * 0.5, pi * 0.85)};
    case 4: return {{{0.64, 0.9}, {0.64, 0.1}, {0.2, 0.64}, {0.8, 0.64}}};
    case 5: {
      Stroke s{{0.74, 0.12}, {0.32, 0.12}, {0.29, 0.46}};
      auto bowl = arc(0.48, 0.64, 0.25, 0.24, -pi * 0.75, pi * 0.8);
      s.insert(s.end(), bowl.begin(), bowl.end());
      return {s};
    }
    case 6: return {arc(0.68, 0.62, 0.4, 0.52, pi * 1.45, pi * 1.0), arc(0.5, 0.68, 0.22, 0.21, 0, 2 * pi, 18)};
    case 7: return {{{0.22, 0.12}, {0.78, 0.12}, {0.42, 0.9}}};
    case 8: return {arc(0.5, 0.29, 0.19, 0.18, 0, 2 * pi, 16), arc(0.5, 0.7, 0.23, 0.2, 0, 2 * pi, 18)};
    case 9: return {arc(0.5, 0.32, 0.21, 0.2, 0, 2 * pi, 18), {{0.71, 0.34}, {0.6, 0.9}}};
    default: throw InputError("glyph: digit out of range");
  }
}

inline double segment_distance(double px, double py, const Point& a, const Point& b) {
  const double dx = b[0] - a[0], dy = b[1] - a[1];
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0 ? ((px - a[0]) * dx + (py - a[1]) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double ex = a[0] + t * dx - px, ey = a[1] + t * dy - py;
  return std::sqrt(ex * ex + ey * ey);
}

}  // namespace detail

/// Renders `n` random 10-class digit images (size x size, grayscale,
/// 8-bit representable pixel values). Classes are balanced round-robin
/// before shuffling. Each sample gets its own affine jitter and stroke
/// width, drawn with low contrast over a mid-tone background with a linear
/// gradient, a low-frequency texture and per-pixel noise.
inline Dataset make_digits(std::size_t n, std::uint64_t seed, std::size_t size = 28) {
  Dataset ds{size, size, 1, 10, {}, {}};
  ds.pixels.assign(n * size * size, 0.0);
  ds.labels.resize(n);
  Rng rng(seed);
  const double S = static_cast<double>(size);
  for (std::size_t i = 0; i < n; ++i) {
    const int digit = static_cast<int>(i % 10);
    ds.labels[i] = digit;
    const double angle = rng.uniform(-0.22, 0.22);
    const double sx = rng.uniform(0.78, 1.02), sy = rng.uniform(0.82, 1.02);
    const double shear = rng.uniform(-0.25, 0.25);
    const double tx = rng.uniform(-0.07, 0.07), ty = rng.uniform(-0.06, 0.06);
    const double thickness = rng.uniform(1.1, 2.3);
    const double ink = rng.uniform(0.2, 0.45);
    const double base = rng.uniform(0.2, 0.45);
    const double gx = rng.uniform(-0.1, 0.1), gy = rng.uniform(-0.1, 0.1);
    const double fx = rng.uniform(0.2, 0.7), fy = rng.uniform(0.2, 0.7), phase = rng.uniform(0.0, 6.2832);
    const double texture = rng.uniform(0.0, 0.06);
    const double ca = std::cos(angle), sa = std::sin(angle);

    auto strokes = detail::glyph(digit);
    for (auto& s : strokes)
      for (auto& p : s) {
        double x = p[0] - 0.5 + rng.uniform(-0.025, 0.025);
        double y = p[1] - 0.5 + rng.uniform(-0.025, 0.025);
        x = (x + shear * y) * sx;
        y = y * sy;
        const double rx = ca * x - sa * y, ry = sa * x + ca * y;
        // Glyph box occupies the central ~20 px of a 28 px canvas.
        p = {(0.5 + tx + rx * 0.72) * S, (0.5 + ty + ry * 0.72) * S};
      }

    double* img = &ds.pixels[i * size * size];
    for (std::size_t r = 0; r < size; ++r)
      for (std::size_t c = 0; c < size; ++c) {
        const double px = static_cast<double>(c) + 0.5, py = static_cast<double>(r) + 0.5;
        double d = 1e9;
        for (const auto& s : strokes)
          for (std::size_t k = 0; k + 1 < s.size(); ++k) d = std::min(d, detail::segment_distance(px, py, s[k], s[k + 1]));
        const double u = px / S - 0.5, w = py / S - 0.5;
        const double bg = base + gx * u + gy * w + texture * std::sin(fx * px + fy * py + phase);
        const double v = bg + ink * std::clamp(thickness / 2 + 0.5 - d, 0.0, 1.0) + rng.uniform(-0.04, 0.04);
        img[r * size + c] = std::lround(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0;
      }
  }
  // Shuffle so that consecutive ranges are not class-ordered.
  auto perm = rng.permutation(n);
  return ds.subset(perm);
}

// ---------------------------------------------------------------------------
// Flat binary dataset:
//   "HPTD" | u32 version | u32 n | u32 H | u32 W | u32 C | u32 classes
//   | n*H*W*C x u8 pixels (image-major, H, W, C) | n x u8 labels

inline constexpr std::string_view kDatasetMagic = "HPTD";
inline constexpr std::uint32_t kDatasetVersion = 1;

inline void save_dataset(const std::filesystem::path& path, const Dataset& ds) {
  ds.validate();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InputError("cannot open " + path.string() + " for writing");
  io::write_magic(os, kDatasetMagic);
  io::write_u32(os, kDatasetVersion);
  for (auto v : {ds.size(), ds.height, ds.width, ds.channels, ds.num_classes}) io::write_u32(os, static_cast<std::uint32_t>(v));
  std::string raw(ds.pixels.size(), '\0');
  for (std::size_t i = 0; i < raw.size(); ++i) raw[i] = static_cast<char>(io::to_u8(ds.pixels[i]));
  os.write(raw.data(), static_cast<std::streamsize>(raw.size()));
  for (int y : ds.labels) io::write_u8(os, static_cast<std::uint8_t>(y));
  if (!os) throw FormatError("dataset: write failed");
}

inline Dataset load_flat_dataset(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot open dataset " + path.string());
  io::expect_magic(is, kDatasetMagic, "dataset");
  io::expect_version(io::read_u32(is, "version"), kDatasetVersion, "dataset");
  Dataset ds;
  const std::size_t n = io::read_u32(is, "count");
  ds.height = io::read_u32(is, "H");
  ds.width = io::read_u32(is, "W");
  ds.channels = io::read_u32(is, "C");
  ds.num_classes = io::read_u32(is, "classes");
  std::string raw(n * ds.image_size(), '\0');
  is.read(raw.data(), static_cast<std::streamsize>(raw.size()));
  if (!is) throw FormatError("dataset: truncated pixel data");
  ds.pixels.resize(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) ds.pixels[i] = static_cast<unsigned char>(raw[i]) / 255.0;
  for (std::size_t i = 0; i < n; ++i) ds.labels.push_back(io::read_u8(is, "label"));
  ds.validate();
  return ds;
}

/// Directory of P5/P6 images plus `labels.txt` with "<file> <label>" lines.
inline Dataset load_image_directory(const std::filesystem::path& dir) {
  std::ifstream manifest(dir / "labels.txt");
  if (!manifest) throw InputError("dataset directory " + dir.string() + " has no labels.txt");
  Dataset ds;
  int max_label = 0;
  std::string line;
  while (std::getline(manifest, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string file;
    int label = -1;
    if (!(ls >> file >> label) || label < 0) throw FormatError("labels.txt: malformed line '" + line + "'");
    const auto img = io::read_pnm(dir / file);
    if (ds.labels.empty()) {
      ds.height = img.height;
      ds.width = img.width;
      ds.channels = img.channels;
    } else if (img.height != ds.height || img.width != ds.width || img.channels != ds.channels) {
      throw FormatError(file + ": image shape differs from the first image");
    }
    ds.pixels.insert(ds.pixels.end(), img.pixels.begin(), img.pixels.end());
    ds.labels.push_back(label);
    max_label = std::max(max_label, label);
  }
  if (ds.labels.empty()) throw InputError("dataset directory " + dir.string() + " lists no images");
  ds.num_classes = std::max<std::size_t>(10, static_cast<std::size_t>(max_label) + 1);
  ds.validate();
  return ds;
}

inline Dataset load_dataset(const std::filesystem::path& path) {
  if (std::filesystem::is_directory(path)) return load_image_directory(path);
  return load_flat_dataset(path);
}

}  // namespace hpt::harness
