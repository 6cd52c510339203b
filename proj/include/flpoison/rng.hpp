#pragma once

#include <cstdint>
#include <random>
#include <initializer_list>
#include <iterator>
#include <utility>

namespace flpoison {

using Rng = std::mt19937_64;

// SplitMix64 finalizer. Used to derive independent stream seeds from a
// master seed plus integer keys (round, client, purpose salt).
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t key);
std::uint64_t mix_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> keys);

Rng make_rng(std::uint64_t seed);

// Uniform double in [0, 1) built from the top 53 bits.
double uniform01(Rng& rng);
double uniform(Rng& rng, double lo, double hi);
// Uniform integer in [0, n). n must be positive.
std::uint64_t uniform_index(Rng& rng, std::uint64_t n);

// Fisher-Yates over any random-access range, using uniform_index so the
// permutation does not depend on the standard library implementation.
template <typename Range>
void shuffle(Range& range, Rng& rng) {
  const auto n = static_cast<std::uint64_t>(std::size(range));
  for (std::uint64_t i = n; i > 1; --i) {
    const std::uint64_t j = uniform_index(rng, i);
    using std::swap;
    swap(range[i - 1], range[j]);
  }
}

// Stream salts. Keeping them in one place avoids accidental stream reuse.
namespace salt {
inline constexpr std::uint64_t kDataset = 0x64617461;       // "data"
inline constexpr std::uint64_t kSplit = 0x73706c74;         // "splt"
inline constexpr std::uint64_t kBackdoorTest = 0x62646f72;  // "bdor"
inline constexpr std::uint64_t kModelInit = 0x696e6974;     // "init"
inline constexpr std::uint64_t kMalicious = 0x6d616c69;     // "mali"
inline constexpr std::uint64_t kSampling = 0x73616d70;      // "samp"
inline constexpr std::uint64_t kClientTrain = 0x74726e63;   // "trnc"
inline constexpr std::uint64_t kServerTrain = 0x74726e73;   // "trns"
inline constexpr std::uint64_t kAttack = 0x61747461;        // "atta"
}  // namespace salt

}  // namespace flpoison
