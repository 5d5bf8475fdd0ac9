#include <doctest.h>

#include <cmath>
#include <numeric>
#include <set>
#include <vector>

#include "longtail/rng.hpp"

using namespace longtail;

TEST_CASE("same seed reproduces the exact draw sequence") {
  Rng a(123), b(123);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("different seeds diverge") {
  Rng a(1), b(2);
  int same = 0;
  for (int i = 0; i < 64; ++i) same += a.next_u64() == b.next_u64();
  CHECK(same == 0);
}

TEST_CASE("uniform stays in [0,1) and is roughly centered") {
  Rng rng(7);
  double sum = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    sum += u;
  }
  CHECK(sum / n == doctest::Approx(0.5).epsilon(0.01));
}

TEST_CASE("uniform_int covers [0,n) uniformly") {
  Rng rng(11);
  std::vector<int> counts(10, 0);
  const int n = 100000;
  for (int i = 0; i < n; ++i) counts[rng.uniform_int(10)]++;
  for (int c : counts) CHECK(std::abs(c - n / 10) < 600);
}

TEST_CASE("normal has mean 0 and variance 1") {
  Rng rng(13);
  double sum = 0.0, sq = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    sum += z;
    sq += z * z;
  }
  CHECK(sum / n == doctest::Approx(0.0).epsilon(0.02));
  CHECK(sq / n == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("shuffle is a permutation and seed-deterministic") {
  std::vector<int> v(50);
  std::iota(v.begin(), v.end(), 0);
  std::vector<int> w = v;
  Rng a(99), b(99);
  a.shuffle(v);
  b.shuffle(w);
  CHECK(v == w);
  CHECK(std::set<int>(v.begin(), v.end()).size() == 50);
}

TEST_CASE("named streams are independent and stable") {
  Rng a = Rng::stream(42, "episodes", 0);
  Rng a2 = Rng::stream(42, "episodes", 0);
  Rng b = Rng::stream(42, "episodes", 1);
  Rng c = Rng::stream(42, "init", 0);
  const std::uint64_t va = a.next_u64();
  CHECK(va == a2.next_u64());
  CHECK(va != b.next_u64());
  CHECK(va != c.next_u64());
}

TEST_CASE("fnv1a is stable and sensitive to every byte") {
  const std::uint64_t h = fnv1a_hash("abc");
  CHECK(h == fnv1a_hash("abc"));
  CHECK(h != fnv1a_hash("abd"));
  CHECK(h != fnv1a_hash("ab"));
}
