#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>

#include "hpt/errors.hpp"
#include "hpt/trigger/trigger.hpp"
#include "hpt/util/binary_io.hpp"

// Trigger artifact layout (little-endian):
//   "HPTT" | u32 version | f64 eps | f64 kappa | u32 H | u32 W | u32 C
//   | H*W*C x f32 delta (row-major H, W, C) | H*W*2 x f32 flow (H, W, {du, dv})

namespace hpt::trigger {

inline constexpr std::string_view kTriggerMagic = "HPTT";
inline constexpr std::uint32_t kTriggerVersion = 1;

/// Rounds delta and flow to 32-bit floats while keeping both budgets, so a
/// trigger survives a save/load cycle unchanged.
inline Trigger round_to_storage(Trigger t) {
  for (auto& v : t.delta.data) {
    float f = static_cast<float>(v);
    while (std::abs(static_cast<double>(f)) > t.eps) f = std::nextafter(f, 0.0f);
    v = f;
  }
  for (int attempt = 0; attempt < 64; ++attempt) {
    for (auto& v : t.flow.data) v = static_cast<float>(v);
    if (tv(t.flow) <= t.kappa) break;
    for (auto& v : t.flow.data) v *= 1.0 - 1e-6;
  }
  return t;
}

inline void write_trigger(std::ostream& os, const Trigger& t) {
  io::write_magic(os, kTriggerMagic);
  io::write_u32(os, kTriggerVersion);
  io::write_f64(os, t.eps);
  io::write_f64(os, t.kappa);
  io::write_u32(os, static_cast<std::uint32_t>(t.height()));
  io::write_u32(os, static_cast<std::uint32_t>(t.width()));
  io::write_u32(os, static_cast<std::uint32_t>(t.channels()));
  for (double v : t.delta.data) io::write_f32(os, static_cast<float>(v));
  for (double v : t.flow.data) io::write_f32(os, static_cast<float>(v));
  if (!os) throw FormatError("trigger: write failed");
}

inline Trigger read_trigger(std::istream& is) {
  io::expect_magic(is, kTriggerMagic, "trigger");
  io::expect_version(io::read_u32(is, "version"), kTriggerVersion, "trigger");
  const double eps = io::read_f64(is, "eps");
  const double kappa = io::read_f64(is, "kappa");
  const auto H = io::read_u32(is, "H"), W = io::read_u32(is, "W"), C = io::read_u32(is, "C");
  if (H == 0 || W == 0 || C == 0 || H > 4096 || W > 4096 || C > 16) throw FormatError("trigger: bad dimensions");
  Trigger t = Trigger::zero(H, W, C, eps, kappa);
  for (auto& v : t.delta.data) v = io::read_f32(is, "delta");
  for (auto& v : t.flow.data) v = io::read_f32(is, "flow");
  return t;
}

inline void save_trigger(const std::filesystem::path& path, const Trigger& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InputError("cannot open " + path.string() + " for writing");
  write_trigger(os, t);
}

inline Trigger load_trigger(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot open trigger " + path.string());
  return read_trigger(is);
}

}  // namespace hpt::trigger
