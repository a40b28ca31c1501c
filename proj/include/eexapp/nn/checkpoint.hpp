#pragma once

// Named-parameter flat binary checkpoint.
//
//   magic    8 bytes  "EEXCKPT\0"
//   version  u32
//   count    u32
//   per parameter:
//     name_len u32, name bytes, rank u32, dims u64 * rank,
//     payload  f64 * prod(dims)
//
// All integers and floats little-endian.

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "eexapp/errors.hpp"
#include "eexapp/nn/autodiff.hpp"

namespace eexapp::nn {

inline constexpr std::array<char, 8> kCheckpointMagic = {'E', 'E', 'X', 'C', 'K', 'P', 'T', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

template <typename T>
void put_le(std::ostream& os, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  std::array<char, sizeof(T)> b;
  std::memcpy(b.data(), &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b.begin(), b.end());
  os.write(b.data(), sizeof(T));
}

template <typename T>
T get_le(std::istream& is) {
  std::array<char, sizeof(T)> b;
  if (!is.read(b.data(), sizeof(T))) throw ConfigError("checkpoint: truncated file");
  if constexpr (std::endian::native == std::endian::big) std::reverse(b.begin(), b.end());
  T v;
  std::memcpy(&v, b.data(), sizeof(T));
  return v;
}

}  // namespace detail

inline void write_checkpoint(std::ostream& os, std::span<Parameter* const> params) {
  os.write(kCheckpointMagic.data(), kCheckpointMagic.size());
  detail::put_le<std::uint32_t>(os, kCheckpointVersion);
  detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(params.size()));
  for (const Parameter* p : params) {
    detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(p->name.size()));
    os.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
    detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(p->value.shape.size()));
    for (auto d : p->value.shape) detail::put_le<std::uint64_t>(os, d);
    for (double v : p->value.data) detail::put_le<double>(os, v);
  }
}

/// name -> tensor, in file order.
inline std::map<std::string, Tensor> read_checkpoint(std::istream& is) {
  std::array<char, 8> magic{};
  if (!is.read(magic.data(), magic.size()) || magic != kCheckpointMagic) throw ConfigError("checkpoint: bad magic");
  const auto version = detail::get_le<std::uint32_t>(is);
  if (version != kCheckpointVersion) throw ConfigError("checkpoint: unsupported version " + std::to_string(version));
  const auto count = detail::get_le<std::uint32_t>(is);
  std::map<std::string, Tensor> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = detail::get_le<std::uint32_t>(is);
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) throw ConfigError("checkpoint: truncated name");
    const auto rank = detail::get_le<std::uint32_t>(is);
    std::vector<std::size_t> dims(rank);
    std::size_t n = 1;
    for (auto& d : dims) {
      d = static_cast<std::size_t>(detail::get_le<std::uint64_t>(is));
      n *= d;
    }
    std::vector<double> data(n);
    for (auto& v : data) v = detail::get_le<double>(is);
    out.emplace(std::move(name), Tensor(std::move(dims), std::move(data)));
  }
  return out;
}

/// Copies checkpoint values into `params` by name; every parameter must be
/// present with a matching shape.
inline void load_into(const std::map<std::string, Tensor>& ckpt, std::span<Parameter* const> params) {
  for (Parameter* p : params) {
    auto it = ckpt.find(p->name);
    if (it == ckpt.end()) throw ConfigError("checkpoint: missing parameter '" + p->name + "'");
    if (it->second.shape != p->value.shape)
      throw ConfigError("checkpoint: shape mismatch for '" + p->name + "': " + it->second.shape_str() + " vs " +
                        p->value.shape_str());
    p->value = it->second;
  }
}

inline void save_checkpoint_file(const std::string& path, std::span<Parameter* const> params) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  write_checkpoint(os, params);
}

inline void load_checkpoint_file(const std::string& path, std::span<Parameter* const> params) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open checkpoint " + path);
  load_into(read_checkpoint(is), params);
}

}  // namespace eexapp::nn
