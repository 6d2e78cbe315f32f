#pragma once

#include <stdexcept>
#include <string>

namespace qmg {

/// Consensus gain is undefined: smallest eigenvalue of L+G is at or below
/// the numerical tolerance (unpinned or disconnected topology).
struct SingularGain : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Every node is flagged; no perturbation target exists.
struct NoHealthyNode : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// The network admittance system cannot be factorized.
struct SingularNetwork : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A state left the admissible region (non-finite or beyond the magnitude cap).
struct Diverged : std::runtime_error {
  Diverged(const std::string& what, double t_at) : std::runtime_error(what), t(t_at) {}
  double t;
};

/// Sifting produced zero bits; the session yields no key material.
struct EmptySiftedKey : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Scenario text failed to parse or validate. `line` is 1-based, 0 if global.
struct ConfigError : std::runtime_error {
  ConfigError(const std::string& what, int line_no = 0)
      : std::runtime_error(line_no > 0 ? "line " + std::to_string(line_no) + ": " + what : what),
        line(line_no) {}
  int line;
};

}  // namespace qmg
