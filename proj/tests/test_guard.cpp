#include <cmath>
#include <numbers>

#include "doctest.h"
#include "qmg/guard.hpp"

using namespace qmg;

namespace {

constexpr double kOmegaN = 2.0 * std::numbers::pi * 50.0;

using Delivered = std::vector<std::vector<std::optional<Triple>>>;

Delivered steady_frames(int n, double omega = kOmegaN, double p = 1000.0, double q = 500.0) {
  Delivered d(static_cast<std::size_t>(n), std::vector<std::optional<Triple>>(static_cast<std::size_t>(n)));
  for (int x = 0; x < n; ++x)
    for (int y = 0; y < n; ++y)
      if (x != y) d[static_cast<std::size_t>(x)][static_cast<std::size_t>(y)] = Triple{omega, p, q};
  return d;
}

std::vector<LocalMeasurement> steady_locals(int n, double omega = kOmegaN, double p = 1000.0,
                                            double q = 500.0) {
  return std::vector<LocalMeasurement>(static_cast<std::size_t>(n),
                                       LocalMeasurement{omega, p, q});
}

GuardConfig tight_config() {
  GuardConfig cfg;
  cfg.dm1_threshold = 0.1;
  cfg.dm2_threshold = 0.1;
  cfg.edge_dm1_threshold = 0.1;
  cfg.edge_dm2_threshold = 0.1;
  cfg.debounce = 3;
  cfg.recovery_hold = 5;
  cfg.arm_time = 0.0;
  return cfg;
}

Guard make_guard(int n, const GuardConfig& cfg, bool armed = true) {
  return Guard(AdjacencyMatrix::complete(n, 1), PinningVector::single(n, 0, 1.0), cfg,
               std::vector<DgParams>(static_cast<std::size_t>(n)), armed);
}

}  // namespace

TEST_CASE("metrics vanish at the synchronized steady state") {
  std::vector<DgParams> droops(2);
  NeighborView view(2);
  view[1] = NeighborSample{kOmegaN, 1000.0, 500.0, true, 0};
  auto [dm1, dm2] = detection_metrics(0, view, LocalMeasurement{kOmegaN, 1000.0, 500.0}, 1.0, droops);
  CHECK(dm1 == doctest::Approx(0.0).epsilon(1e-6));
  CHECK(dm2 == doctest::Approx(0.0).epsilon(1e-6));
}

TEST_CASE("a corrupted neighbor frequency shows up one-for-one") {
  std::vector<DgParams> droops(2);
  NeighborView view(2);
  view[1] = NeighborSample{kOmegaN + 0.5, 1000.0, 500.0, true, 0};
  auto [dm1, dm2] = detection_metrics(0, view, LocalMeasurement{kOmegaN, 1000.0, 500.0}, 0.0, droops);
  CHECK(dm1 == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("garbage-scale values saturate the metric immediately") {
  std::vector<DgParams> droops(2);
  NeighborView view(2);
  view[1] = NeighborSample{1e300, 1000.0, 500.0, true, 0};
  auto [dm1, dm2] = detection_metrics(0, view, LocalMeasurement{kOmegaN, 1000.0, 500.0}, 0.0, droops);
  CHECK(dm1 > 1e299);
}

TEST_CASE("sustained exceedance needs the full debounce window") {
  GuardConfig cfg = tight_config();
  std::vector<std::pair<double, double>> history;

  for (int i = 0; i < 10; ++i) history.push_back({0.01, 0.01});
  CHECK_FALSE(sustained_exceedance(history, cfg));

  history.push_back({0.5, 0.0});
  history.push_back({0.5, 0.0});
  CHECK_FALSE(sustained_exceedance(history, cfg));  // debounce - 1 steps

  history.push_back({0.0, 0.0});
  CHECK_FALSE(sustained_exceedance(history, cfg));  // dipped below, window broken

  history.push_back({0.5, 0.0});
  history.push_back({0.5, 0.0});
  history.push_back({0.0, 0.5});  // either metric counts
  CHECK(sustained_exceedance(history, cfg));
}

TEST_CASE("mitigation: node flags around the pinned healthy DG") {
  std::vector<bool> node_flags{false, true, true, true};
  MitigationResult m = mitigate(node_flags, {}, AdjacencyMatrix::complete(4, 1),
                                PinningVector::single(4, 0, 1.0));
  CHECK(m.valid);
  CHECK(m.proxy_source == 0);
  for (int a = 1; a < 4; ++a) {
    CHECK(m.matrix.at(a, 0) == 1);
    for (int y = 1; y < 4; ++y) CHECK(m.matrix.at(a, y) == 0);
  }
  // Each follower lost the two other flagged sources.
  CHECK(m.substitutions.size() == 6);
  for (int x = 0; x < 4; ++x)
    for (int y = 0; y < 4; ++y) CHECK((m.matrix.at(x, y) & m.taint.at(x, y)) == 0);
}

TEST_CASE("mitigation: channel flags cut single edges") {
  std::set<std::pair<int, int>> edges{{1, 0}, {3, 0}};  // consumers 2 and 4 of DG 1
  MitigationResult m = mitigate(std::vector<bool>(4, false), edges,
                                AdjacencyMatrix::complete(4, 1), PinningVector::single(4, 0, 1.0));
  CHECK(m.valid);
  CHECK(m.proxy_source == -1);
  CHECK(m.substitutions.empty());
  CHECK(m.matrix.at(1, 0) == 0);
  CHECK(m.matrix.at(3, 0) == 0);
  CHECK(m.matrix.at(2, 0) == 1);  // untouched path keeps the reference flowing
  CHECK(is_valid_topology(m.matrix, PinningVector::single(4, 0, 1.0)));
}

TEST_CASE("mitigation with every node flagged propagates the error") {
  CHECK_THROWS_AS(mitigate(std::vector<bool>(4, true), {}, AdjacencyMatrix::complete(4, 1),
                           PinningVector::single(4, 0, 1.0)),
                  NoHealthyNode);
}

TEST_CASE("guard confirms a node-level compromise and reshapes the matrix") {
  GuardConfig cfg = tight_config();
  Guard guard = make_guard(4, cfg);
  auto locals = steady_locals(4);

  for (int k = 0; k < 5; ++k) {
    Guard::StepOutcome out = guard.step(k * 1e-3, steady_frames(4), locals);
    CHECK(out.new_flags.empty());
  }
  CHECK(guard.active_id() == 1);

  // Every frame leaving DG 2 (index 1) is biased: all consumers flag it.
  Delivered biased = steady_frames(4);
  for (int x = 0; x < 4; ++x)
    if (x != 1) biased[static_cast<std::size_t>(x)][1] = Triple{kOmegaN + 1.0, 6000.0, 5500.0};

  int flagged_at = -1;
  for (int k = 0; k < 6; ++k) {
    Guard::StepOutcome out = guard.step(0.005 + k * 1e-3, biased, locals);
    if (!out.new_flags.empty() && flagged_at < 0) flagged_at = k;
  }
  CHECK(flagged_at == cfg.debounce - 1);
  CHECK(guard.active_id() == 2);
  const AdjacencyMatrix& active = guard.active();
  for (int x = 0; x < 4; ++x) CHECK(active.at(x, 1) == 0);  // nobody consumes the flagged DG
  CHECK(active.at(1, 0) == 1);  // the flagged DG follows the healthy node

  // Control views exclude the flagged source and proxy it from the healthy DG.
  NeighborView view = guard.control_view(2);
  REQUIRE(view[1].has_value());
  CHECK(view[1]->omega == doctest::Approx(kOmegaN));
  CHECK_FALSE(view[1]->fresh);
}

TEST_CASE("exceedance shorter than the debounce never confirms") {
  GuardConfig cfg = tight_config();
  Guard guard = make_guard(4, cfg);
  auto locals = steady_locals(4);
  for (int k = 0; k < 3; ++k) guard.step(k * 1e-3, steady_frames(4), locals);

  Delivered biased = steady_frames(4);
  biased[1][0] = Triple{kOmegaN + 5.0, 1000.0, 500.0};
  for (int k = 0; k < cfg.debounce - 1; ++k) {
    Guard::StepOutcome out = guard.step(0.003 + k * 1e-3, biased, locals);
    CHECK(out.new_flags.empty());
  }
  Guard::StepOutcome out = guard.step(0.01, steady_frames(4), locals);
  CHECK(out.new_flags.empty());
  CHECK(guard.active_id() == 1);
  CHECK(guard.confirmed_edges().empty());
}

TEST_CASE("channel-level flag isolates the edge, not the source DG") {
  GuardConfig cfg = tight_config();
  Guard guard = make_guard(4, cfg);
  auto locals = steady_locals(4);
  for (int k = 0; k < 3; ++k) guard.step(k * 1e-3, steady_frames(4), locals);

  // Only consumer 2's intake from DG 1 decodes garbage.
  Delivered tainted = steady_frames(4);
  for (int k = 0; k < cfg.debounce + 1; ++k) {
    tainted[1][0] = Triple{1e290 * (k + 1), -3e12, 7e200};
    guard.step(0.003 + k * 1e-3, tainted, locals);
  }
  CHECK(guard.confirmed_edges() == std::set<std::pair<int, int>>{{1, 0}});
  CHECK(guard.active().at(1, 0) == 0);
  CHECK(guard.active().at(2, 0) == 1);
  CHECK(guard.active().at(3, 0) == 1);
  CHECK(guard.active_id() == 2);
}

TEST_CASE("default matrix returns after a full quiet window") {
  GuardConfig cfg = tight_config();
  Guard guard = make_guard(4, cfg);
  auto locals = steady_locals(4);
  for (int k = 0; k < 3; ++k) guard.step(k * 1e-3, steady_frames(4), locals);

  Delivered tainted = steady_frames(4);
  tainted[1][0] = Triple{kOmegaN + 9.0, 1000.0, 500.0};
  for (int k = 0; k < cfg.debounce + 1; ++k) guard.step(0.01 + k * 1e-3, tainted, locals);
  REQUIRE(guard.active_id() != 1);

  // Oscillating residuals straddling the threshold postpone the restore.
  for (int k = 0; k < 3 * cfg.recovery_hold; ++k) {
    bool noisy = k % cfg.recovery_hold == 0;
    guard.step(0.1 + k * 1e-3, noisy ? tainted : steady_frames(4), locals);
    CHECK(guard.active_id() != 1);
  }

  // A clean stretch of recovery_hold steps reinstates the default matrix.
  bool restored = false;
  for (int k = 0; k <= cfg.recovery_hold && !restored; ++k) {
    Guard::StepOutcome out = guard.step(1.0 + k * 1e-3, steady_frames(4), locals);
    restored = out.matrix_changed && guard.active_id() == 1;
  }
  CHECK(restored);
  CHECK(guard.confirmed_edges().empty());
}

TEST_CASE("non-finite decodes count as exceedance") {
  GuardConfig cfg = tight_config();
  Guard guard = make_guard(4, cfg);
  auto locals = steady_locals(4);
  guard.step(0.0, steady_frames(4), locals);

  Delivered tainted = steady_frames(4);
  tainted[1][0] = Triple{std::nan(""), 1000.0, 500.0};
  for (int k = 0; k + 1 < cfg.debounce; ++k) guard.step(0.001 + k * 1e-3, tainted, locals);
  CHECK(guard.confirmed_edges().empty());

  // While the flag debounces, the gated view holds the last vetted value.
  NeighborView view = guard.control_view(1);
  REQUIRE(view[0].has_value());
  CHECK(std::isfinite(view[0]->omega));
  CHECK_FALSE(view[0]->fresh);

  guard.step(0.01, tainted, locals);  // debounce ran out, flag confirmed
  CHECK(guard.confirmed_edges().count({1, 0}) == 1);
  CHECK(guard.active().at(1, 0) == 0);
}

TEST_CASE("unarmed guard reports metrics but never acts") {
  GuardConfig cfg = tight_config();
  Guard guard = make_guard(4, cfg, false);
  auto locals = steady_locals(4);

  Delivered tainted = steady_frames(4);
  tainted[1][0] = Triple{kOmegaN + 50.0, 1000.0, 500.0};
  for (int k = 0; k < 10; ++k) {
    Guard::StepOutcome out = guard.step(k * 1e-3, tainted, locals);
    CHECK(out.new_flags.empty());
    CHECK(out.reports[1].dm1 > 10.0);  // metric sees the corruption
    CHECK_FALSE(out.reports[1].triggered);
  }
  CHECK(guard.active_id() == 1);
  // Raw (unvetted) values pass straight through to control.
  NeighborView view = guard.control_view(1);
  REQUIRE(view[0].has_value());
  CHECK(view[0]->omega == kOmegaN + 50.0);
}
