#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace imeq {

// One rng type everywhere so seeded runs are reproducible bit for bit.
using Rng = std::mt19937_64;

// splitmix64 finalizer; used to derive independent child streams
// (per worker, per equation, per individual) from a base seed.
inline uint64_t mix_seed(uint64_t base, uint64_t salt) {
  uint64_t z = base + 0x9e3779b97f4a7c15ull * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

struct MalformedPrefix : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct SlotCountMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NonFiniteObjective : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct AllRestartsDegenerate : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NoViableCandidate : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DegenerateTruth : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ShapeMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NonScalarLoss : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace imeq
