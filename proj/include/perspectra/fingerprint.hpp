#pragma once

#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>

namespace perspectra {

// Incremental 64-bit FNV-1a content hash.
class Fingerprint {
 public:
  Fingerprint& add(std::string_view bytes) {
    for (unsigned char c : bytes) {
      state_ ^= c;
      state_ *= 0x100000001b3ULL;
    }
    // Length terminator keeps ("ab","c") distinct from ("a","bc").
    add_raw(bytes.size());
    return *this;
  }

  Fingerprint& add(const char* bytes) { return add(std::string_view(bytes)); }
  Fingerprint& add(const std::string& bytes) { return add(std::string_view(bytes)); }

  Fingerprint& add(double value) {
    if (value == 0.0) value = 0.0;  // fold -0.0
    std::uint64_t bits;
    std::memcpy(&bits, &value, sizeof bits);
    return add_raw(bits);
  }

  Fingerprint& add(std::int64_t value) { return add_raw(static_cast<std::uint64_t>(value)); }
  Fingerprint& add(std::uint64_t value) { return add_raw(value); }
  Fingerprint& add(int value) { return add_raw(static_cast<std::uint64_t>(static_cast<std::int64_t>(value))); }
  Fingerprint& add(bool value) { return add_raw(value ? 1u : 0u); }

  std::uint64_t value() const { return state_; }
  std::string hex() const;

 private:
  Fingerprint& add_raw(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      state_ ^= (v >> (8 * i)) & 0xffu;
      state_ *= 0x100000001b3ULL;
    }
    return *this;
  }

  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

std::string hex64(std::uint64_t value);

// Hash of a file's bytes; throws Error(Io) when unreadable.
std::string file_fingerprint(const std::string& path);

}  // namespace perspectra
