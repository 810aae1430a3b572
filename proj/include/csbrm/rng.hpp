#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace csbrm {

std::uint64_t splitmix64(std::uint64_t x);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view bytes);

/// Seed of a named sub-stream. Every random draw in a run flows from the
/// top-level seed through one of these, so results do not depend on the
/// order in which workers run.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream,
                          std::initializer_list<std::uint64_t> ids = {});

inline std::mt19937_64 make_rng(std::uint64_t seed, std::string_view stream,
                                std::initializer_list<std::uint64_t> ids = {}) {
  return std::mt19937_64(derive_seed(seed, stream, ids));
}

}  // namespace csbrm
