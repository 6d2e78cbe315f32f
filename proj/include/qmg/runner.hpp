#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "qmg/config.hpp"
#include "qmg/guard.hpp"

namespace qmg {

struct TriggerEvent {
  double t = 0.0;
  int dg = 0;                // consumer that confirmed the flags
  std::set<int> sources;     // flagged sources
};

/// Deterministic digest of one run; derivable from the emitted CSV files.
struct RunSummary {
  int n_dg = 0;
  bool converged = false;   // final-window bounds: |omega - omega_n| < 1e-3 rad/s,
                            // droop-product spreads < 1 %
  bool diverged = false;
  double t_diverged = -1.0;

  double onset_t = 0.0;     // earliest attack start (clean runs: final window start)
  std::vector<double> max_freq_dev_post_onset;  // per DG, rad/s, t >= onset
  double max_freq_dev_final = 0.0;              // all DGs, final 0.5 s
  double p_droop_spread = 0.0;                  // relative, max over final 0.5 s
  double q_droop_spread = 0.0;

  std::vector<TriggerEvent> triggers;
  double first_trigger_t = -1.0;
  long n_triggered_steps = 0;
  int mitigation_failures = 0;

  std::vector<int> matrix_sequence;
  std::vector<AdjacencyMatrix> matrix_registry;

  std::map<std::string, double> link_mean_qber;  // "1>2" -> mean estimate, when sampled

  double k1 = 0.0;  // consensus gain actually used (K1 = K2)
  double dm1_threshold = 0.0;
  double dm2_threshold = 0.0;

  int rows_per_dg = 0;
  std::string out_dir;
};

/// Execute a scenario: per cyber step, QKD sessions per link, frame
/// encode/encrypt/deliver, guard metrics and mitigation, secondary
/// integration; physics advances at dt in between. Emits per-DG and per-link
/// CSV series plus summary.txt / summary.kv under cfg.out_dir. Identical
/// (config, seed) pairs produce byte-identical outputs.
RunSummary run(const ScenarioConfig& cfg, bool quiet = true);

}  // namespace qmg
