#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "qmg/comms.hpp"
#include "qmg/graph.hpp"
#include "qmg/plant.hpp"
#include "qmg/qkd.hpp"

namespace qmg {

/// Eavesdropper placement: one model applied to a set of directed links.
struct EveAttackCfg {
  std::vector<std::pair<int, int>> links;  // (tx, rx), 0-based
  EveModel model;
};

/// Constant-impedance load change at a bus; an absent load clears the bus.
struct LoadStepCfg {
  int bus = 0;
  std::optional<LoadZ> load;
  double t = 0.0;
};

struct GuardSettings {
  std::optional<double> dm1_threshold;  // absent = calibrate from a clean run
  std::optional<double> dm2_threshold;
  int debounce = 5;
  int recovery_hold = 200;
  double calibration_margin = 3.0;
  double arm_time = 0.5;  // detection holdoff covering the startup transient
};

/// Fully validated scenario. Produced by parse_config; field defaults match
/// the shipped model parameters.
struct ScenarioConfig {
  double duration = 0.0;  // s, required
  double dt = 1e-4;       // physics step, s
  double t_s = 1e-3;      // cyber step, s
  QkdMode mode = QkdMode::fortified;
  std::uint64_t seed = 1;
  std::string out_dir = "out";

  int n_dg = 4;
  DgParams dg;            // uniform droop parameters
  NetworkModel network;

  AdjacencyMatrix topology;  // default consumption matrix, id 1
  PinningVector pin;
  double gain_scale = 5.0;          // K1 = K2 = gain_scale * consensus bound
  std::optional<double> k_override; // explicit K1 = K2

  QkdParams qkd;
  int key_buffer_frames = 2;  // per-link key FIFO capacity, in frame units

  GuardSettings guard;

  std::vector<EveAttackCfg> eve_attacks;
  std::vector<NodeAttack> node_attacks;
  std::vector<LoadStepCfg> load_steps;

  int steps_per_cyber() const;
  int n_cyber_steps() const;
  double onset_time() const;  // earliest attack start, or duration - 0.5 when clean
};

/// Parse and validate scenario text (flat key/value format with sectioned
/// attack blocks; see docs/config_format.md). Unknown keys are rejected.
/// Throws ConfigError with a line diagnostic.
ScenarioConfig parse_config(const std::string& text);

/// Read a scenario file and parse it.
ScenarioConfig load_scenario_file(const std::string& path);

}  // namespace qmg
