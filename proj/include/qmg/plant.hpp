#pragma once

#include <complex>
#include <memory>
#include <optional>
#include <utility>
#include <vector>

#include "qmg/errors.hpp"

namespace qmg {

/// Droop and filter parameters of a single DG.
struct DgParams {
  double m_p = 1e-4;        // frequency droop coefficient (rad/s per W)
  double n_q = 1e-4;        // voltage droop coefficient (V per var)
  double omega_n = 2.0 * 3.14159265358979323846 * 50.0;  // nominal frequency (rad/s)
  double v_nom = 311.0;     // nominal voltage set-point (V, peak phase)
  double omega_c = 31.4;    // measurement low-pass cutoff (rad/s)
};

/// Per-DG physical and control state.
struct DgState {
  double delta = 0.0;    // bus phase angle relative to the nominal rotating frame (rad)
  double p_filt = 0.0;   // filtered real power (W)
  double q_filt = 0.0;   // filtered reactive power (var)
  double d_omega = 0.0;  // secondary frequency correction (rad/s)
  double d_v = 0.0;      // secondary voltage correction (V)

  bool finite() const;
};

/// States beyond this magnitude abort the run as diverged.
inline constexpr double kDivergenceCap = 1e9;

struct LoadZ {
  double r = 0.0;  // ohm
  double x = 0.0;  // ohm at nominal frequency
};

struct Line {
  int from = 0;
  int to = 0;
  double r = 0.0;  // ohm
  double x = 0.0;  // ohm at nominal frequency
};

/// Impedance network: one bus per DG, series coupling resistance per DG,
/// optional constant-impedance shunt load per bus.
struct NetworkModel {
  int n_bus = 0;
  std::vector<Line> lines;
  std::vector<std::optional<LoadZ>> loads;  // size n_bus
  std::vector<double> coupling_r;           // size n_bus

  bool connected() const;
  void validate() const;  // throws std::invalid_argument
};

struct DroopOutputs {
  double omega = 0.0;  // rad/s
  double v = 0.0;      // V
};

/// omega = omega_n - m_p * p_filt + d_omega;  v = v_nom - n_q * q_filt + d_v.
DroopOutputs droop_outputs(const DgParams& params, const DgState& state);

struct PowerFlow {
  std::vector<double> p;  // W, injection measured at each DG source
  std::vector<double> q;  // var
};

/// Phasor admittance solve with a fixed network: DG sources held at given
/// phasors behind their coupling resistances, loads as constant shunts.
/// The admittance factorization is computed once and reused per solve.
class NetworkSolver {
 public:
  explicit NetworkSolver(const NetworkModel& net);  // throws SingularNetwork
  ~NetworkSolver();
  NetworkSolver(NetworkSolver&&) noexcept;
  NetworkSolver& operator=(NetworkSolver&&) noexcept;

  PowerFlow solve(const std::vector<std::complex<double>>& dg_phasors) const;
  const NetworkModel& model() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// One-shot convenience over NetworkSolver. Phasors as (magnitude V, angle rad).
PowerFlow solve_network(const NetworkModel& net,
                        const std::vector<std::pair<double, double>>& v_mag_angle);

/// Reduced-order plant: droop-level dynamics of N DGs on the impedance
/// network, advanced with classical fixed-step RK4. Secondary corrections
/// d_omega / d_v are held constant within a step.
class PlantModel {
 public:
  PlantModel(std::vector<DgParams> params, NetworkModel net);

  int n_dg() const { return static_cast<int>(params_.size()); }
  const std::vector<DgParams>& params() const { return params_; }
  const NetworkModel& network() const { return solver_.model(); }

  /// Replace the shunt load at a bus and refactorize.
  void set_load(int bus, std::optional<LoadZ> load);

  /// Advance one RK4 step of dt. Throws Diverged (tagged with t_now + dt)
  /// if any state goes non-finite or beyond the divergence cap.
  void step(std::vector<DgState>& states, double dt, double t_now) const;

  /// Instantaneous (omega, v) and injections for the given states.
  struct Measurements {
    std::vector<double> omega, v, p_inst, q_inst;
  };
  Measurements measure(const std::vector<DgState>& states) const;

 private:
  struct Derivatives {
    std::vector<double> d_delta, d_p, d_q;
  };
  Derivatives derivs(const std::vector<DgState>& states) const;

  std::vector<DgParams> params_;
  NetworkModel net_;
  NetworkSolver solver_;
};

/// Single-step functional form used by tests and bindings.
std::vector<DgState> step_physics(const std::vector<DgState>& states,
                                  const std::vector<DgParams>& params, const NetworkModel& net,
                                  double dt);

}  // namespace qmg
