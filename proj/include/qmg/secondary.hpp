#pragma once

#include <optional>
#include <vector>

#include "qmg/plant.hpp"

namespace qmg {

/// Latest measurement triple received from one source DG.
struct NeighborSample {
  double omega = 0.0;  // rad/s
  double p = 0.0;      // W
  double q = 0.0;      // var
  bool fresh = true;   // false when the value is a held copy
  int age = 0;         // cyber steps since the last successful decrypt; 0 iff fresh
};

/// Per-source view of the active in-neighborhood; index = source DG,
/// entries present only for sources the consumer currently reads.
using NeighborView = std::vector<std::optional<NeighborSample>>;

struct ControlGains {
  double k1 = 1.0;  // 1/s
  double k2 = 1.0;  // 1/s
};

struct LocalMeasurement {
  double omega = 0.0;
  double p = 0.0;
  double q = 0.0;
};

struct SecondaryRates {
  double d_omega_rate = 0.0;  // rad/s^2
  double d_v_rate = 0.0;      // V/s
};

/// Leader-follower consensus rates for DG x:
///   d_omega_rate = K1 * [ sum_y ((omega_y - omega_x) + (m_p_y p_y - m_p_x p_x))
///                         + g_x (omega_n - omega_x) ]
///   d_v_rate     = K2 *   sum_y  (n_q_y q_y - n_q_x q_x)
/// Stale view entries contribute their held values.
SecondaryRates secondary_rates(int x, const NeighborView& view, const LocalMeasurement& local,
                               double pin_gain, const ControlGains& gains,
                               const std::vector<DgParams>& droops);

/// Forward-Euler update of the secondary corrections at the cyber step.
/// Throws Diverged on a non-finite result.
DgState integrate_secondary(const DgState& state, const SecondaryRates& rates, double dt);

}  // namespace qmg
