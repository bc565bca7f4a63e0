#pragma once

#include <cstdint>
#include <vector>

#include "fairdraw/crypto.hpp"

namespace fairdraw {

/// Bijection on [0, k) in one-line array form: entry i is the image of i.
class Permutation {
 public:
  /// Validates the bijection invariant; throws std::invalid_argument.
  explicit Permutation(std::vector<std::uint64_t> mapping);

  static Permutation identity(std::uint64_t k);

  std::uint64_t size() const { return mapping_.size(); }

  std::uint64_t apply(std::uint64_t a) const {
    if (a >= mapping_.size()) throw std::out_of_range("permutation input out of range");
    return mapping_[a];
  }

  Permutation inverse() const;

  const std::vector<std::uint64_t>& mapping() const { return mapping_; }

  bool operator==(const Permutation&) const = default;

 private:
  std::vector<std::uint64_t> mapping_;
};

/// p∘q, i.e. x ↦ p(q(x)). Sizes must match.
Permutation compose(const Permutation& p, const Permutation& q);

/// Uniform over all k! permutations: unbiased shuffle driven by
/// rejection-sampled indices.
Permutation random_permutation(std::uint64_t k, EntropySource& src);

/// τ_b on t-bit strings, a ↦ a ⊕ b. Self-inverse, hence a permutation of
/// {0,1}^t; with b uniform, a uniformly distributed permutation.
struct XorMap {
  std::uint64_t b = 0;
  unsigned t = 0;

  std::uint64_t apply(std::uint64_t a) const;
  Permutation as_permutation() const;
};

}  // namespace fairdraw
