#include <cmath>
#include <numbers>

#include "doctest.h"
#include "qmg/rng.hpp"
#include "qmg/secondary.hpp"

using namespace qmg;

namespace {
constexpr double kOmegaN = 2.0 * std::numbers::pi * 50.0;
}

TEST_CASE("rates vanish at the consensus fixed point") {
  std::vector<DgParams> droops(2);
  NeighborView view(2);
  view[1] = NeighborSample{kOmegaN, 500.0, 200.0, true, 0};
  LocalMeasurement local{kOmegaN, 500.0, 200.0};
  SecondaryRates r = secondary_rates(0, view, local, 1.0, ControlGains{2.0, 2.0}, droops);
  CHECK(r.d_omega_rate == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(r.d_v_rate == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("single-neighbor frequency disagreement") {
  std::vector<DgParams> droops(2);
  NeighborView view(2);
  view[1] = NeighborSample{kOmegaN + 0.5, 1000.0, 0.0, true, 0};
  LocalMeasurement local{kOmegaN, 1000.0, 0.0};
  SecondaryRates r = secondary_rates(0, view, local, 0.0, ControlGains{2.0, 2.0}, droops);
  CHECK(r.d_omega_rate == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("pinning term alone") {
  std::vector<DgParams> droops(1);
  NeighborView view(1);
  LocalMeasurement local{kOmegaN - 0.2, 0.0, 0.0};
  SecondaryRates r = secondary_rates(0, view, local, 1.0, ControlGains{2.0, 2.0}, droops);
  CHECK(r.d_omega_rate == doctest::Approx(0.4).epsilon(1e-12));
}

TEST_CASE("reactive channel uses droop products of both ends") {
  std::vector<DgParams> droops(2);
  NeighborView view(2);
  view[1] = NeighborSample{kOmegaN, 0.0, 3000.0, true, 0};
  LocalMeasurement local{kOmegaN, 0.0, 1000.0};
  SecondaryRates r = secondary_rates(0, view, local, 0.0, ControlGains{1.0, 3.0}, droops);
  CHECK(r.d_v_rate == doctest::Approx(3.0 * (1e-4 * 3000.0 - 1e-4 * 1000.0)).epsilon(1e-12));
}

TEST_CASE("integration is exact for constant rates") {
  DgState s;
  SUBCASE("zero rates leave the state unchanged") {
    DgState next = integrate_secondary(s, SecondaryRates{0.0, 0.0}, 1e-3);
    CHECK(next.d_omega == 0.0);
    CHECK(next.d_v == 0.0);
  }
  SUBCASE("constant rate accumulates linearly") {
    DgState cur = s;
    for (int k = 0; k < 250; ++k) cur = integrate_secondary(cur, SecondaryRates{0.4, -0.2}, 1e-3);
    CHECK(cur.d_omega == doctest::Approx(0.4 * 250 * 1e-3).epsilon(1e-12));
    CHECK(cur.d_v == doctest::Approx(-0.2 * 250 * 1e-3).epsilon(1e-12));
  }
  SUBCASE("non-finite rates abort") {
    CHECK_THROWS_AS(integrate_secondary(s, SecondaryRates{1e308 * 10, 0.0}, 1e-3), Diverged);
  }
}

TEST_CASE("rates are linear in the neighbor disagreement") {
  std::vector<DgParams> droops(3);
  RandomStream rng(5, "secondary/superposition");
  for (int trial = 0; trial < 25; ++trial) {
    LocalMeasurement local{kOmegaN + rng.next_double(), 1000.0 * rng.next_double(),
                           500.0 * rng.next_double()};
    auto sample = [&] {
      return NeighborSample{kOmegaN + rng.next_double(), 1000.0 * rng.next_double(),
                            500.0 * rng.next_double(), true, 0};
    };
    NeighborSample a = sample(), b = sample();

    ControlGains g{1.7, 1.7};
    NeighborView va(3), vb(3), vab(3);
    va[1] = a;
    vb[2] = b;
    vab[1] = a;
    vab[2] = b;
    SecondaryRates ra = secondary_rates(0, va, local, 0.0, g, droops);
    SecondaryRates rb = secondary_rates(0, vb, local, 0.0, g, droops);
    SecondaryRates rab = secondary_rates(0, vab, local, 0.0, g, droops);
    CHECK(rab.d_omega_rate == doctest::Approx(ra.d_omega_rate + rb.d_omega_rate).epsilon(1e-10));
    CHECK(rab.d_v_rate == doctest::Approx(ra.d_v_rate + rb.d_v_rate).epsilon(1e-10));
  }
}
