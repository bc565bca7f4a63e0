#include "fairdraw/permutation.hpp"

#include <algorithm>
#include <numeric>

namespace fairdraw {

Permutation::Permutation(std::vector<std::uint64_t> mapping) : mapping_(std::move(mapping)) {
  const std::uint64_t k = mapping_.size();
  if (k == 0) throw std::invalid_argument("permutation must have size >= 1");
  std::vector<bool> seen(k, false);
  for (std::uint64_t v : mapping_) {
    if (v >= k) throw std::invalid_argument("permutation entry out of range");
    if (seen[v]) throw std::invalid_argument("permutation entry repeated");
    seen[v] = true;
  }
}

Permutation Permutation::identity(std::uint64_t k) {
  if (k == 0) throw std::invalid_argument("permutation must have size >= 1");
  std::vector<std::uint64_t> m(k);
  std::iota(m.begin(), m.end(), 0);
  return Permutation(std::move(m));
}

Permutation Permutation::inverse() const {
  std::vector<std::uint64_t> inv(mapping_.size());
  for (std::uint64_t i = 0; i < mapping_.size(); ++i) inv[mapping_[i]] = i;
  return Permutation(std::move(inv));
}

Permutation compose(const Permutation& p, const Permutation& q) {
  if (p.size() != q.size()) throw std::invalid_argument("compose: size mismatch");
  std::vector<std::uint64_t> m(p.size());
  for (std::uint64_t x = 0; x < p.size(); ++x) m[x] = p.apply(q.apply(x));
  return Permutation(std::move(m));
}

Permutation random_permutation(std::uint64_t k, EntropySource& src) {
  if (k == 0) throw std::invalid_argument("random_permutation: k must be >= 1");
  std::vector<std::uint64_t> m(k);
  std::iota(m.begin(), m.end(), 0);
  for (std::uint64_t i = k - 1; i > 0; --i) {
    std::uint64_t j = src.next_below(i + 1);
    std::swap(m[i], m[j]);
  }
  return Permutation(std::move(m));
}

std::uint64_t XorMap::apply(std::uint64_t a) const {
  if (t == 0 || t > 63) throw std::invalid_argument("xor map: bit width out of range");
  const std::uint64_t mask = (std::uint64_t{1} << t) - 1;
  if (a > mask || b > mask) throw std::out_of_range("xor map: value exceeds bit width");
  return a ^ b;
}

Permutation XorMap::as_permutation() const {
  if (t == 0 || t > 20) throw std::invalid_argument("xor map: bit width out of range");
  const std::uint64_t k = std::uint64_t{1} << t;
  std::vector<std::uint64_t> m(k);
  for (std::uint64_t a = 0; a < k; ++a) m[a] = a ^ b;
  return Permutation(std::move(m));
}

}  // namespace fairdraw
