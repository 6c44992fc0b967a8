/*
 * Copyright 2026 The moemba Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstdint>
#include <random>

namespace moemba {

// One independent random stream per consumer. A master seed is expanded
// with splitmix64 so that, e.g., the gate-noise stream can be replayed
// without touching the shuffle stream.
enum class Stream : std::uint64_t {
  kData = 1,
  kInit = 2,
  kGateNoise = 3,
  kShuffle = 4,
  kValidation = 5,
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t stream_seed(std::uint64_t master, Stream stream) {
  return splitmix64(splitmix64(master) ^ static_cast<std::uint64_t>(stream));
}

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t master, Stream stream) {
  return Rng(stream_seed(master, stream));
}

}  // namespace moemba
