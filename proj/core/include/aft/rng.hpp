// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

namespace aft {

/// Portable random source.
///
/// Raw bits come from std::mt19937_64, whose output sequence is fixed by the
/// C++ standard. Every derived quantity is computed here with an explicit
/// formula (std distributions are implementation-defined), so a given seed
/// produces the same values on every conforming platform:
///   uniform()  = (u64 >> 11) * 2^-53
///   normal()   = Box-Muller, r = sqrt(-2 ln(1 - u1)), both outputs used
///   index(n)   = u64 mod n
///   shuffle()  = Fisher-Yates from the back, j = index(i + 1)
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  double uniform();
  double normal();
  std::size_t index(std::size_t n);
  void shuffle(std::vector<std::size_t>& values);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// SplitMix64 finalizer applied to seed + stream; gives independent sub-seeds.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace aft
