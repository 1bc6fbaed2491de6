// Copyright 2026 The jcl Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Seeded random streams. One root seed is split into named, independent
// sub-streams so that changing one device's strategy never shifts the draws
// of another.

#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace jcl {

// FNV-1a; stable across platforms, unlike std::hash.
inline constexpr std::uint64_t StableHash(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  return h;
}

// SplitMix64 finalizer.
inline constexpr std::uint64_t Mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

class Stream {
 public:
  Stream(std::uint64_t root, std::string_view label, std::uint64_t index = 0)
      : engine_(Mix64(root ^ Mix64(StableHash(label) ^ Mix64(index)))) {}

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  bool bernoulli(double p) { return uniform() < p; }

  std::uint64_t next_u64() { return engine_(); }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

// Derives the per-run streams used by every mechanism run.
struct RunStreams {
  Stream device1;
  Stream device2;

  RunStreams(std::uint64_t root, std::uint64_t run_id)
      : device1(root, "device1", run_id), device2(root, "device2", run_id) {}

  Stream& device(int d) { return d == 0 ? device1 : device2; }
};

}  // namespace jcl
