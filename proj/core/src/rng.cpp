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

#include "measpipe/rng.hpp"

#include <cmath>

namespace measpipe::rng {

std::uint64_t mix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t combine(std::uint64_t a, std::uint64_t b) {
  return mix(a ^ (mix(b) + 0x9E3779B97F4A7C15ULL + (a << 6) + (a >> 2)));
}

double to_unit(std::uint64_t h) {
  // Top 53 bits -> [0,1), then map to [-1,1).
  const double u = static_cast<double>(h >> 11) * 0x1.0p-53;
  return 2.0 * u - 1.0;
}

std::uint64_t Random::next_u64() {
  state_ += 0x9E3779B97F4A7C15ULL;
  std::uint64_t x = state_;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

double Random::uniform(double lo, double hi) {
  const double u = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  return lo + u * (hi - lo);
}

double Random::normal(double mean, double sd) {
  if (has_cached_) {
    has_cached_ = false;
    return mean + sd * cached_;
  }
  double u1 = 0.0;
  do {
    u1 = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  } while (u1 <= 0.0);
  const double u2 = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * M_PI * u2;
  cached_ = r * std::sin(theta);
  has_cached_ = true;
  return mean + sd * r * std::cos(theta);
}

std::size_t Random::index(std::size_t n) {
  return static_cast<std::size_t>(next_u64() % n);
}

}  // namespace measpipe::rng
