#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <map>
#include <numeric>

#include "fairdraw/permutation.hpp"
#include "fairdraw/stats.hpp"

using namespace fairdraw;

namespace {

std::array<std::uint8_t, 32> test_seed(std::uint8_t fill) {
  std::array<std::uint8_t, 32> s{};
  s.fill(fill);
  return s;
}

// Independent oracle: every permutation of [0,k) by exhaustive enumeration.
std::vector<std::vector<std::uint64_t>> enumerate_permutations(std::uint64_t k) {
  std::vector<std::uint64_t> m(k);
  std::iota(m.begin(), m.end(), 0);
  std::vector<std::vector<std::uint64_t>> all;
  do {
    all.push_back(m);
  } while (std::next_permutation(m.begin(), m.end()));
  return all;
}

}  // namespace

TEST_CASE("permutation invariants") {
  CHECK_THROWS_AS(Permutation({}), std::invalid_argument);
  CHECK_THROWS_AS(Permutation({0, 0}), std::invalid_argument);   // repeated
  CHECK_THROWS_AS(Permutation({0, 2}), std::invalid_argument);   // out of range
  CHECK(Permutation({0}) == Permutation::identity(1));
  CHECK(Permutation({1, 2, 0}).apply(1) == 2);
  CHECK(Permutation::identity(5).apply(3) == 3);
  CHECK_THROWS_AS((void)Permutation::identity(3).apply(3), std::out_of_range);
}

TEST_CASE("compose follows p(q(x)) and the group laws") {
  Permutation p({1, 2, 0});
  Permutation q({2, 0, 1});
  CHECK(compose(p, q) == Permutation::identity(3));
  CHECK(compose(Permutation::identity(3), q) == q);
  CHECK(compose(p, Permutation::identity(3)) == p);
  CHECK_THROWS_AS((void)compose(p, Permutation::identity(4)), std::invalid_argument);

  EntropySource src = EntropySource::seeded(test_seed(20));
  for (int i = 0; i < 50; ++i) {
    Permutation a = random_permutation(6, src);
    Permutation b = random_permutation(6, src);
    Permutation c = random_permutation(6, src);
    CHECK(compose(compose(a, b), c) == compose(a, compose(b, c)));
    std::uint64_t x = src.next_below(6);
    CHECK(compose(a, b).apply(x) == a.apply(b.apply(x)));
    CHECK(compose(a, a.inverse()) == Permutation::identity(6));
  }
}

TEST_CASE("random_permutation always yields a bijection") {
  EntropySource src = EntropySource::seeded(test_seed(21));
  CHECK(random_permutation(1, src) == Permutation::identity(1));
  CHECK_THROWS_AS((void)random_permutation(0, src), std::invalid_argument);
  for (int i = 0; i < 64; ++i) {
    std::uint64_t k = 1 + src.next_below(256);
    Permutation p = random_permutation(k, src);  // constructor revalidates
    CHECK(p.size() == k);
  }
}

TEST_CASE("random_permutation is uniform over S3") {
  auto all = enumerate_permutations(3);
  REQUIRE(all.size() == 6);
  std::map<std::vector<std::uint64_t>, std::uint64_t> counts;
  EntropySource src = EntropySource::seeded(test_seed(22));
  const int trials = 60'000;
  for (int i = 0; i < trials; ++i) ++counts[random_permutation(3, src).mapping()];
  REQUIRE(counts.size() == 6);  // all six observed
  std::vector<std::uint64_t> bins;
  for (const auto& m : all) bins.push_back(counts[m]);
  double stat = chi_square_statistic(bins);
  CHECK(stat < 20.52);  // 5 dof at significance 1e-3
}

TEST_CASE("uniform composition: random permutation of a constant input is uniform") {
  // The heart of the construction: phi(a) is uniform when phi is uniform,
  // no matter how a was chosen. Here a = 0 always.
  EntropySource src = EntropySource::seeded(test_seed(23));
  std::vector<std::uint64_t> bins(3, 0);
  for (int i = 0; i < 60'000; ++i) ++bins[random_permutation(3, src).apply(0)];
  CHECK(chi_square_statistic(bins) < 13.82);  // 2 dof at significance 1e-3
}

TEST_CASE("uniform composition mirror: fixed adversarial permutation of a uniform input") {
  EntropySource src = EntropySource::seeded(test_seed(24));
  Permutation fixed({2, 0, 1});  // adversary-chosen, constant
  std::vector<std::uint64_t> bins(3, 0);
  for (int i = 0; i < 60'000; ++i) ++bins[fixed.apply(src.next_below(3))];
  CHECK(chi_square_statistic(bins) < 13.82);
}

TEST_CASE("xor map basics") {
  XorMap self{5, 4};
  XorMap zero{0, 4};
  XorMap narrow{1, 3};
  CHECK(self.apply(5) == 0);  // a xor a = 0
  CHECK(zero.apply(7) == 7);  // a xor 0 = a
  CHECK_THROWS_AS((void)narrow.apply(8), std::out_of_range);
}

TEST_CASE("xor maps are self-inverse bijections for every b at t=4") {
  for (std::uint64_t b = 0; b < 16; ++b) {
    XorMap m{b, 4};
    Permutation p = m.as_permutation();  // constructor checks bijectivity
    CHECK(p.size() == 16);
    CHECK(compose(p, p) == Permutation::identity(16));
    for (std::uint64_t a = 0; a < 16; ++a) CHECK(m.apply(m.apply(a)) == a);
  }
}
