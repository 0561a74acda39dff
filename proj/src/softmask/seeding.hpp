// Copyright 2026 The SoftMask Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <initializer_list>

namespace softmask {

// Independent random streams keyed by purpose. Every stochastic choice of a
// training step draws from derive_seed(run_seed, {purpose, step, index}), so
// runs are reproducible and resumable without serializing generator state.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> keys) {
  std::uint64_t h = splitmix64(base);
  for (std::uint64_t k : keys) h = splitmix64(h ^ splitmix64(k + 0x632be59bd9b4e019ULL));
  return h;
}

enum class Stream : std::uint64_t {
  kBatch = 1,
  kAugment = 2,
  kTextMask = 3,
  kNegatives = 4,
  kWordIndex = 5,
  kRandomMask = 6,
  kQueueWarmup = 7,
};

inline std::uint64_t stream_seed(std::uint64_t base, Stream s, std::uint64_t step, std::uint64_t index = 0) {
  return derive_seed(base, {static_cast<std::uint64_t>(s), step, index});
}

}  // namespace softmask
