#pragma once

#include <limits>
#include <optional>
#include <set>
#include <utility>
#include <vector>

#include "qmg/comms.hpp"
#include "qmg/graph.hpp"
#include "qmg/secondary.hpp"

namespace qmg {

struct GuardConfig {
  // Aggregate detection-metric thresholds (dm1: rad/s scale, dm2: V scale).
  double dm1_threshold = std::numeric_limits<double>::infinity();
  double dm2_threshold = std::numeric_limits<double>::infinity();
  // Per-source attribution thresholds applied to single-edge residuals.
  double edge_dm1_threshold = std::numeric_limits<double>::infinity();
  double edge_dm2_threshold = std::numeric_limits<double>::infinity();
  int debounce = 5;        // consecutive cyber steps before a flag is confirmed
  int recovery_hold = 200; // quiet steps before the default matrix returns
  double arm_time = 0.5;   // detection holds off until the startup transient passed
};

struct DetectionReport {
  int dg = 0;
  double dm1 = 0.0;
  double dm2 = 0.0;
  bool triggered = false;          // aggregate exceedance sustained for debounce
  std::set<int> flagged_sources;   // sources with confirmed flags on this DG's intake
  double t = 0.0;
};

/// Event-triggered error-detection metrics: magnitude of the consensus
/// disagreement this DG's controller sees.
///   dm1 = | g_x (omega_n - omega_x) + sum_y [(omega_y - omega_x)
///           + (m_p_y p_y - m_p_x p_x)] |
///   dm2 = | sum_y (n_q_y q_y - n_q_x q_x) |
std::pair<double, double> detection_metrics(int x, const NeighborView& view,
                                            const LocalMeasurement& local, double pin_gain,
                                            const std::vector<DgParams>& droops);

/// True when the trailing `debounce` entries of the history all exceed a
/// threshold (dm1 over its, or dm2 over its).
bool sustained_exceedance(const std::vector<std::pair<double, double>>& dm_history,
                          const GuardConfig& cfg);

struct MitigationResult {
  AdjacencyMatrix matrix;  // new active consumption matrix
  AdjacencyMatrix taint;   // edges carrying flagged data
  bool valid = false;      // is_valid_topology on the new matrix
  int proxy_source = -1;   // healthy node b when node-level flags exist
  // Consumers that lost a node-flagged source; its terms are served by b.
  std::vector<std::pair<int, int>> substitutions;  // (consumer, lost source)
};

/// Rebuild the active topology from the default matrix under the current
/// flag state: channel-flagged edges are cut, node-flagged DGs go through the
/// dynamic matrix perturbation around the healthy node b (pinned nodes
/// preferred, then lowest index). Throws NoHealthyNode when every DG is
/// node-flagged.
MitigationResult mitigate(const std::vector<bool>& node_flags,
                          const std::set<std::pair<int, int>>& edge_flags,
                          const AdjacencyMatrix& default_matrix, const PinningVector& pin);

/// Per-run detection and mitigation orchestrator. Each cyber step it ingests
/// the raw delivered frames, maintains held copies and debounce counters,
/// confirms flags, reshapes the active matrix, and serves the gated control
/// views the secondary layer consumes.
class Guard {
 public:
  Guard(AdjacencyMatrix default_matrix, PinningVector pin, GuardConfig cfg,
        std::vector<DgParams> droops, bool detect_and_mitigate);

  struct StepOutcome {
    std::vector<DetectionReport> reports;
    bool matrix_changed = false;
    std::vector<std::pair<int, int>> new_flags;  // (consumer, source) confirmed this step
    double max_edge_r1 = 0.0;                    // largest single-edge residuals this step
    double max_edge_r2 = 0.0;
  };

  /// delivered[x][y]: values decoded by consumer x from source y this step,
  /// nullopt when the frame was undeliverable (or the edge is not part of the
  /// default topology). local[x]: DG x's own measurement.
  StepOutcome step(double t, const std::vector<std::vector<std::optional<Triple>>>& delivered,
                   const std::vector<LocalMeasurement>& local);

  /// Active in-neighborhood of DG x with gating and reconstruction proxies
  /// applied; used by the secondary controller.
  NeighborView control_view(int x) const;

  const AdjacencyMatrix& active() const { return active_; }
  int active_id() const { return active_.id; }
  const AdjacencyMatrix& default_matrix() const { return default_; }
  const std::vector<AdjacencyMatrix>& registry() const { return registry_; }
  const std::set<std::pair<int, int>>& confirmed_edges() const { return edge_flags_; }
  int mitigation_failures() const { return mitigation_failures_; }

 private:
  struct EdgeState {
    NeighborSample raw;   // latest decoded values (held over stale steps)
    bool have_raw = false;
    NeighborSample good;  // latest sample that passed the residual check
    bool have_good = false;
    int over_count = 0;   // consecutive steps above the edge thresholds
    double r1 = 0.0;
    double r2 = 0.0;
  };

  EdgeState& edge(int x, int y) { return edges_[static_cast<std::size_t>(x) * n_ + y]; }
  const EdgeState& edge(int x, int y) const { return edges_[static_cast<std::size_t>(x) * n_ + y]; }
  void apply_flag_state();
  int register_matrix(const AdjacencyMatrix& m);

  int n_;
  AdjacencyMatrix default_;
  AdjacencyMatrix active_;
  PinningVector pin_;
  GuardConfig cfg_;
  std::vector<DgParams> droops_;
  bool armed_;
  bool live_ = false;  // armed and past the arming delay

  std::vector<EdgeState> edges_;
  std::vector<int> agg_over_;                     // per-DG aggregate debounce counters
  std::vector<bool> node_flags_;
  std::set<std::pair<int, int>> edge_flags_;      // confirmed (consumer, source)
  std::vector<std::pair<int, int>> substitutions_;
  int proxy_source_ = -1;
  int quiet_streak_ = 0;
  int mitigation_failures_ = 0;
  std::vector<AdjacencyMatrix> registry_;
};

}  // namespace qmg
