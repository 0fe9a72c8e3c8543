// Copyright 2026 The Composer Authors.
// SPDX-License-Identifier: Apache-2.0

// Deterministic key tree. Every derivation is one BLAKE2b-256 call over a
// length-prefixed, little-endian encoding, so keys are identical on every
// platform:
//
//   child_key(parent, name, index) = BLAKE2b-256(parent[32] || "child" ||
//                                    u64le(|name|) || name || u64le(index))
//   uniform block i of key        = BLAKE2b-256(key[32] || "uniform" || u64le(i))

#pragma once

#include <sodium.h>

#include <array>
#include <cstdint>
#include <cstdio>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace composer {

namespace detail {

inline void ensure_sodium() {
  static const int ok = sodium_init();
  if (ok < 0) throw std::runtime_error("libsodium failed to initialize");
}

class Blake2b256 {
 public:
  Blake2b256() {
    ensure_sodium();
    crypto_generichash_init(&state_, nullptr, 0, 32);
  }
  Blake2b256& update(std::span<const std::uint8_t> bytes) {
    crypto_generichash_update(&state_, bytes.data(), bytes.size());
    return *this;
  }
  Blake2b256& update(std::string_view s) {
    return update({reinterpret_cast<const std::uint8_t*>(s.data()), s.size()});
  }
  Blake2b256& update_u64(std::uint64_t v) {
    std::array<std::uint8_t, 8> le{};
    for (int i = 0; i < 8; ++i) le[i] = static_cast<std::uint8_t>(v >> (8 * i));
    return update(le);
  }
  std::array<std::uint8_t, 32> finish() {
    std::array<std::uint8_t, 32> out{};
    crypto_generichash_final(&state_, out.data(), out.size());
    return out;
  }

 private:
  crypto_generichash_state state_;
};

}  // namespace detail

inline std::string to_hex(std::span<const std::uint8_t> bytes) {
  std::string out;
  out.reserve(bytes.size() * 2);
  char buf[3];
  for (auto b : bytes) {
    std::snprintf(buf, sizeof(buf), "%02x", b);
    out += buf;
  }
  return out;
}

/// Hex BLAKE2b-256 of arbitrary text.
inline std::string content_digest(std::string_view text) {
  auto d = detail::Blake2b256().update(text).finish();
  return to_hex(d);
}

/// 256-bit PRNG key.
struct RngKey {
  std::array<std::uint8_t, 32> bytes{};

  static RngKey from_seed(std::uint64_t seed) {
    RngKey k;
    for (int i = 0; i < 8; ++i) k.bytes[i] = static_cast<std::uint8_t>(seed >> (8 * i));
    return k;
  }
  std::string hex() const { return to_hex(bytes); }

  friend bool operator==(const RngKey&, const RngKey&) = default;
  friend auto operator<=>(const RngKey&, const RngKey&) = default;
};

inline RngKey child_key(const RngKey& parent, std::string_view child_name, std::uint64_t index) {
  RngKey out;
  out.bytes = detail::Blake2b256()
                  .update(parent.bytes)
                  .update("child")
                  .update_u64(child_name.size())
                  .update(child_name)
                  .update_u64(index)
                  .finish();
  return out;
}

/// Counter-mode stream of uniform doubles in [0, 1) drawn from one key.
class UniformStream {
 public:
  explicit UniformStream(const RngKey& key) : key_(key) {}

  double next() {
    if (used_ == 4) refill();
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{block_[used_ * 8 + i]} << (8 * i);
    ++used_;
    return static_cast<double>(v >> 11) * 0x1.0p-53;
  }

 private:
  void refill() {
    block_ = detail::Blake2b256().update(key_.bytes).update("uniform").update_u64(counter_++).finish();
    used_ = 0;
  }

  RngKey key_;
  std::array<std::uint8_t, 32> block_{};
  std::uint64_t counter_ = 0;
  int used_ = 4;
};

}  // namespace composer
