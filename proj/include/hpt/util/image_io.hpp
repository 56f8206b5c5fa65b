#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "hpt/errors.hpp"

// Binary netpbm (P5 grey / P6 RGB, maxval 255) read/write for H x W x C
// images with values in [0,1].

namespace hpt::io {

struct Image {
  std::size_t height = 0, width = 0, channels = 1;
  std::vector<double> pixels;  // H x W x C in [0,1]
};

inline std::uint8_t to_u8(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

/// Writes a P5/P6 file, nearest-neighbour upscaled by `zoom`.
inline void write_pnm(const std::filesystem::path& path, std::span<const double> pixels, std::size_t H,
                      std::size_t W, std::size_t C, std::size_t zoom = 1) {
  if (C != 1 && C != 3) throw InputError("write_pnm: only 1 or 3 channels supported");
  if (pixels.size() != H * W * C) throw DimensionError("write_pnm: pixel count mismatch");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InputError("cannot open " + path.string() + " for writing");
  os << (C == 1 ? "P5" : "P6") << '\n' << W * zoom << ' ' << H * zoom << "\n255\n";
  std::string row(W * zoom * C, '\0');
  for (std::size_t r = 0; r < H * zoom; ++r) {
    for (std::size_t c = 0; c < W * zoom; ++c)
      for (std::size_t ch = 0; ch < C; ++ch)
        row[c * C + ch] = static_cast<char>(to_u8(pixels[((r / zoom) * W + c / zoom) * C + ch]));
    os.write(row.data(), static_cast<std::streamsize>(row.size()));
  }
}

inline Image read_pnm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot open image " + path.string());
  auto token = [&]() {
    std::string t;
    int ch;
    while ((ch = is.get()) != EOF) {
      if (ch == '#') {
        while ((ch = is.get()) != EOF && ch != '\n') {
        }
        continue;
      }
      if (std::isspace(ch)) {
        if (!t.empty()) break;
        continue;
      }
      t.push_back(static_cast<char>(ch));
    }
    return t;
  };
  const std::string magic = token();
  if (magic != "P5" && magic != "P6") throw FormatError(path.string() + ": only binary P5/P6 images are supported");
  Image img;
  try {
    img.width = std::stoul(token());
    img.height = std::stoul(token());
    if (std::stoul(token()) != 255) throw FormatError(path.string() + ": maxval must be 255");
  } catch (const std::logic_error&) {
    throw FormatError(path.string() + ": malformed header");
  }
  img.channels = magic == "P5" ? 1 : 3;
  std::string raw(img.height * img.width * img.channels, '\0');
  is.read(raw.data(), static_cast<std::streamsize>(raw.size()));
  if (!is) throw FormatError(path.string() + ": truncated pixel data");
  img.pixels.resize(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) img.pixels[i] = static_cast<unsigned char>(raw[i]) / 255.0;
  return img;
}

}  // namespace hpt::io
