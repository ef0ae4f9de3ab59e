#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <string_view>
#include <vector>

namespace anchorlab {

// splitmix64 finalizer; the building block for all seed derivation.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Derives an independent substream seed from a root seed and a key path,
// e.g. derive_seed(run_seed, {base, k, item}). Order of keys matters, call
// order does not.
constexpr std::uint64_t derive_seed(std::uint64_t root,
                                    std::initializer_list<std::uint64_t> keys) noexcept {
  std::uint64_t h = mix64(root);
  for (std::uint64_t key : keys) h = mix64(h ^ mix64(key + 0x632be59bd9b4e019ULL));
  return h;
}

// FNV-1a, stable across platforms (unlike std::hash).
constexpr std::uint64_t fnv1a64(std::string_view text) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Shortest round-trip decimal representation of a double.
std::string format_double(double value);

std::string hex64(std::uint64_t value);

std::vector<std::string> split(std::string_view text, char sep);
std::string_view trim(std::string_view text);

}  // namespace anchorlab
