#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hpt/errors.hpp"
#include "hpt/harness/metrics.hpp"
#include "hpt/quantnet/model.hpp"

namespace hpt::harness {

using json = nlohmann::ordered_json;

/// 64-bit FNV-1a, rendered as 16 hex digits.
inline std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw InputError("cannot open " + p.string());
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

inline std::string file_hash(const std::filesystem::path& p) { return fnv1a_hex(read_file(p)); }

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw InputError("cannot open " + p.string() + " for writing");
  os << text;
  if (!os) throw InputError("write failed: " + p.string());
}

inline json to_json(const AttackReport& r) {
  return json{{"ta", r.ta},         {"pa_ta", r.pa_ta},   {"asr", r.asr},         {"n_flip", r.n_flip},
              {"mse", r.mse},       {"target", r.target}, {"test_size", r.test_size}, {"defense", r.defense}};
}

inline AttackReport report_from_json(const json& j) {
  AttackReport r;
  try {
    r.ta = j.at("ta").get<double>();
    r.pa_ta = j.at("pa_ta").get<double>();
    r.asr = j.at("asr").get<double>();
    r.n_flip = j.at("n_flip").get<std::size_t>();
    r.mse = j.at("mse").get<double>();
    r.target = j.at("target").get<int>();
    r.test_size = j.at("test_size").get<std::size_t>();
    r.defense = j.at("defense").get<std::string>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("report: ") + e.what());
  }
  return r;
}

/// Flip list as [{"layer", "bit", "old", "new"}], bit indices into the
/// attackable layer's flat bit vector.
inline json flips_to_json(const quant::Model& m, std::span<const std::size_t> bits) {
  json arr = json::array();
  const auto& theta = m.attackable().bits.bits;
  for (std::size_t b : bits) {
    if (b >= theta.size()) throw InputError("flip index out of range");
    const int old = static_cast<int>(theta[b]);
    arr.push_back({{"layer", m.attackable_index()}, {"bit", b}, {"old", old}, {"new", 1 - old}});
  }
  return arr;
}

inline std::vector<quant::BitFlip> flips_from_json(const json& j) {
  std::vector<quant::BitFlip> out;
  try {
    for (const auto& e : j) {
      out.push_back({e.at("layer").get<std::size_t>(), e.at("bit").get<std::size_t>(), e.at("old").get<int>(),
                     e.at("new").get<int>()});
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("flip list: ") + e.what());
  }
  return out;
}

/// Applies a parsed flip list after checking each recorded old value.
inline quant::Model apply_recorded_flips(const quant::Model& m, std::span<const quant::BitFlip> flips) {
  const auto& theta = m.attackable().bits.bits;
  for (const auto& f : flips) {
    if (f.bit < theta.size() && static_cast<int>(theta[f.bit]) != f.old_value) {
      throw InputError("flip list does not match checkpoint: bit " + std::to_string(f.bit) + " is " +
                       std::to_string(static_cast<int>(theta[f.bit])) + ", expected " + std::to_string(f.old_value));
    }
  }
  return quant::apply_flips(m, flips);
}

}  // namespace hpt::harness
