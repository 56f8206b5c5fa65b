#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "hpt/errors.hpp"
#include "hpt/quantnet/model.hpp"
#include "hpt/util/binary_io.hpp"

// Checkpoint layout (all integers little-endian):
//
//   "HPTQ" | u32 version | u32 Q | u32 layer_count | u32 H | u32 W | u32 C
//   per layer:
//     u32 kind (0 = conv, 1 = dense) | u32 relu | u32 rank | rank x u32 dims
//     u32 stride | u32 pad | f64 step
//     u32 payload_bytes | payload
//     u32 bias_count | bias_count x f32
//
// The payload is the flat bit vector (weight i, bit j at position i*Q + j,
// LSB first) packed 8 bits per byte, least significant bit first. For Q = 8
// each byte is exactly the two's-complement code of one weight.

namespace hpt::quant {

inline constexpr std::string_view kCheckpointMagic = "HPTQ";
inline constexpr std::uint32_t kCheckpointVersion = 1;

inline std::string pack_bits(const BitTensor& t) {
  std::string out((t.bits.size() + 7) / 8, '\0');
  for (std::size_t k = 0; k < t.bits.size(); ++k)
    if (t.bits[k] != 0.0) out[k / 8] = static_cast<char>(static_cast<unsigned char>(out[k / 8]) | (1u << (k % 8)));
  return out;
}

inline std::vector<double> unpack_bits(const std::string& payload, std::size_t count) {
  std::vector<double> bits(count);
  for (std::size_t k = 0; k < count; ++k)
    bits[k] = (static_cast<unsigned char>(payload[k / 8]) >> (k % 8)) & 1u;
  return bits;
}

inline void write_checkpoint(std::ostream& os, const Model& m) {
  m.validate();
  io::write_magic(os, kCheckpointMagic);
  io::write_u32(os, kCheckpointVersion);
  io::write_u32(os, static_cast<std::uint32_t>(m.q));
  io::write_u32(os, static_cast<std::uint32_t>(m.layers.size()));
  io::write_u32(os, static_cast<std::uint32_t>(m.height));
  io::write_u32(os, static_cast<std::uint32_t>(m.width));
  io::write_u32(os, static_cast<std::uint32_t>(m.channels));
  for (const auto& l : m.layers) {
    io::write_u32(os, l.kind == LayerKind::Conv ? 0u : 1u);
    io::write_u32(os, l.relu ? 1u : 0u);
    io::write_u32(os, static_cast<std::uint32_t>(l.weight_shape.size()));
    for (auto d : l.weight_shape) io::write_u32(os, static_cast<std::uint32_t>(d));
    io::write_u32(os, static_cast<std::uint32_t>(l.stride));
    io::write_u32(os, static_cast<std::uint32_t>(l.pad));
    io::write_f64(os, l.quant.step);
    const std::string payload = pack_bits(l.bits);
    io::write_u32(os, static_cast<std::uint32_t>(payload.size()));
    os.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    io::write_u32(os, static_cast<std::uint32_t>(l.bias.size()));
    for (float b : l.bias) io::write_f32(os, b);
  }
  if (!os) throw FormatError("checkpoint: write failed");
}

inline Model read_checkpoint(std::istream& is) {
  io::expect_magic(is, kCheckpointMagic, "checkpoint");
  io::expect_version(io::read_u32(is, "version"), kCheckpointVersion, "checkpoint");
  Model m;
  m.q = static_cast<int>(io::read_u32(is, "Q"));
  const auto count = io::read_u32(is, "layer count");
  m.height = io::read_u32(is, "height");
  m.width = io::read_u32(is, "width");
  m.channels = io::read_u32(is, "channels");
  if (count == 0 || count > 1024) throw FormatError("checkpoint: implausible layer count");
  for (std::uint32_t i = 0; i < count; ++i) {
    Layer l;
    const auto kind = io::read_u32(is, "layer kind");
    if (kind > 1) throw FormatError("checkpoint: unknown layer kind " + std::to_string(kind));
    l.kind = kind == 0 ? LayerKind::Conv : LayerKind::Dense;
    l.relu = io::read_u32(is, "relu flag") != 0;
    const auto rank = io::read_u32(is, "rank");
    if (rank == 0 || rank > 4) throw FormatError("checkpoint: bad weight rank");
    for (std::uint32_t r = 0; r < rank; ++r) l.weight_shape.push_back(io::read_u32(is, "dim"));
    l.stride = io::read_u32(is, "stride");
    l.pad = io::read_u32(is, "pad");
    l.quant = {m.q, io::read_f64(is, "step")};
    const auto nbits = l.weight_count() * static_cast<std::size_t>(m.q);
    const auto bytes = io::read_u32(is, "payload size");
    if (bytes != (nbits + 7) / 8) throw FormatError("checkpoint: payload size does not match layer shape");
    std::string payload(bytes, '\0');
    is.read(payload.data(), bytes);
    if (!is) throw FormatError("checkpoint: truncated bit payload");
    l.bits = {unpack_bits(payload, nbits), m.q, BitMode::Exact};
    const auto nb = io::read_u32(is, "bias count");
    if (nb != l.out_channels()) throw FormatError("checkpoint: bias count does not match layer");
    for (std::uint32_t b = 0; b < nb; ++b) l.bias.push_back(io::read_f32(is, "bias"));
    m.layers.push_back(std::move(l));
  }
  try {
    m.validate();
  } catch (const Error& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  }
  return m;
}

inline void save_checkpoint(const std::filesystem::path& path, const Model& m) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InputError("cannot open " + path.string() + " for writing");
  write_checkpoint(os, m);
}

inline Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot open checkpoint " + path.string());
  return read_checkpoint(is);
}

}  // namespace hpt::quant
