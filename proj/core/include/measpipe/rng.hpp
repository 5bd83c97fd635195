// Copyright 2026 The MeasPipe Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef MEASPIPE_RNG_HPP_
#define MEASPIPE_RNG_HPP_

#include <cstdint>
#include <vector>

// Hand-rolled generators instead of <random> distributions: the standard
// distributions are implementation-defined, and golden test values must be
// stable across compilers and platforms.
namespace measpipe::rng {

// splitmix64 finalizer; good avalanche, used both as a stream and a hash.
std::uint64_t mix(std::uint64_t x);

// Combines keys into one hash (order sensitive).
std::uint64_t combine(std::uint64_t a, std::uint64_t b);

// Maps a hash to a double uniform in [-1, 1).
double to_unit(std::uint64_t h);

class Random {
 public:
  explicit Random(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64();
  // Uniform in [lo, hi).
  double uniform(double lo, double hi);
  // Box-Muller; the pair's second value is cached.
  double normal(double mean, double sd);
  // Uniform index in [0, n); n must be > 0.
  std::size_t index(std::size_t n);

  // Fisher-Yates.
  template <class T>
  void shuffle(std::vector<T>& v) {
    if (v.size() < 2) return;
    for (std::size_t i = v.size() - 1; i > 0; --i) {
      std::swap(v[i], v[index(i + 1)]);
    }
  }

 private:
  std::uint64_t state_;
  bool has_cached_ = false;
  double cached_ = 0.0;
};

}  // namespace measpipe::rng

#endif  // MEASPIPE_RNG_HPP_
