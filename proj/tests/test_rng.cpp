#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <vector>

#include "casvae/rng.hpp"

using casvae::Rng;

TEST_SUITE_BEGIN("rng");

TEST_CASE("identical seeds produce bit-identical streams") {
  Rng a(1234567), b(1234567);
  for (int i = 0; i < 1000; ++i) CHECK(a.next_u64() == b.next_u64());
  Rng c(42), d(42);
  for (int i = 0; i < 1000; ++i) {
    CHECK(c.uniform() == d.uniform());
    CHECK(c.normal() == d.normal());
  }
}

TEST_CASE("different seeds diverge immediately") {
  Rng a(1), b(2);
  CHECK(a.next_u64() != b.next_u64());
}

TEST_CASE("splitmix64 reference values for seed 0") {
  // First outputs of splitmix64 with the canonical constants, seed 0.
  Rng r(0);
  CHECK(r.next_u64() == 0xE220A8397B1DCDAFull);
  CHECK(r.next_u64() == 0x6E789E6AA1B965F4ull);
  CHECK(r.next_u64() == 0x06C45D188009454Full);
}

TEST_CASE("uniform lies in [0,1) and symmetric range works") {
  Rng r(7);
  double lo = 1.0, hi = 0.0;
  for (int i = 0; i < 100000; ++i) {
    const double u = r.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    lo = std::min(lo, u);
    hi = std::max(hi, u);
  }
  CHECK(lo < 0.01);  // range actually explored
  CHECK(hi > 0.99);
  for (int i = 0; i < 1000; ++i) {
    const double u = r.uniform(-3.0, 5.0);
    CHECK(u >= -3.0);
    CHECK(u < 5.0);
  }
}

TEST_CASE("box-muller moments over 1e6 draws") {
  Rng r(2026);
  const int n = 1000000;
  double sum = 0.0, sumsq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = r.normal();
    sum += x;
    sumsq += x * x;
  }
  const double mean = sum / n;
  const double var = sumsq / n - mean * mean;
  CHECK(std::abs(mean) < 0.01);
  CHECK(std::abs(var - 1.0) < 0.02);
}

TEST_CASE("normal tail behavior is sane") {
  Rng r(5);
  int beyond3 = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i)
    if (std::abs(r.normal()) > 3.0) ++beyond3;
  // P(|Z|>3) ≈ 0.0027; allow a generous band.
  CHECK(beyond3 > n * 0.0015);
  CHECK(beyond3 < n * 0.0045);
}

TEST_CASE("fork derives stable independent substreams") {
  Rng base(99);
  Rng f0 = base.fork(0);
  Rng f1 = base.fork(1);
  CHECK(f0.next_u64() != f1.next_u64());

  // fork ignores how many draws the parent has taken
  Rng base2(99);
  (void)base2.next_u64();
  (void)base2.normal();
  Rng f0_again = base2.fork(0);
  Rng f0_ref = base.fork(0);
  for (int i = 0; i < 100; ++i) CHECK(f0_again.next_u64() == f0_ref.next_u64());

  // nearby stream ids decorrelate
  Rng g1 = base.fork(12345), g2 = base.fork(12346);
  int same = 0;
  for (int i = 0; i < 64; ++i)
    if ((g1.next_u64() & 1ull) == (g2.next_u64() & 1ull)) ++same;
  CHECK(same > 10);
  CHECK(same < 54);
}

TEST_SUITE_END();
