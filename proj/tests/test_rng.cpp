#include <set>

#include "doctest.h"
#include "qmg/rng.hpp"

using namespace qmg;

TEST_CASE("named streams are deterministic and independent") {
  RandomStream a1(42, "qkd/link/1>2");
  RandomStream a2(42, "qkd/link/1>2");
  RandomStream b(42, "qkd/link/1>3");

  std::set<std::uint64_t> seen;
  for (int i = 0; i < 64; ++i) {
    std::uint64_t v = a1.next_u64();
    CHECK(v == a2.next_u64());
    seen.insert(v);
    seen.insert(b.next_u64());
  }
  CHECK(seen.size() == 128);  // streams do not collide

  RandomStream c(43, "qkd/link/1>2");
  CHECK(c.next_u64() != RandomStream(42, "qkd/link/1>2").next_u64());
}

TEST_CASE("next_double is uniform-ish in [0,1)") {
  RandomStream rng(7, "uniformity");
  double sum = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    double u = rng.next_double();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    sum += u;
  }
  CHECK(sum / n == doctest::Approx(0.5).epsilon(0.01));
}

TEST_CASE("next_bit is a fair coin") {
  RandomStream rng(7, "coin");
  int ones = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) ones += rng.next_bit();
  double freq = static_cast<double>(ones) / n;
  CHECK(std::abs(freq - 0.5) < 4.0 * std::sqrt(0.25 / n));
}
