#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "qmg/errors.hpp"
#include "qmg/rng.hpp"

namespace qmg {

enum class Basis : std::uint8_t { rectilinear = 0, diagonal = 1 };

/// Ideal two-state qubit: rectilinear basis holds |0> / |1>, diagonal holds
/// |+> / |-> (bit 0 = |+>, bit 1 = |->).
struct Qubit {
  Basis basis = Basis::rectilinear;
  std::uint8_t bit = 0;
};

enum class EveKind : std::uint8_t { none = 0, intercept_resend = 1 };

/// Eavesdropper model for one quantum channel. Intercepted qubits are
/// measured in a uniformly random basis and the collapsed state re-sent.
struct EveModel {
  EveKind kind = EveKind::none;
  double p_intercept = 0.0;  // per-qubit probability in [0, 1]
  double t_start = 0.0;
  double t_end = std::numeric_limits<double>::infinity();

  bool active_at(double t) const {
    return kind != EveKind::none && p_intercept > 0.0 && t >= t_start && t < t_end;
  }
};

enum class QkdMode : std::uint8_t { baseline = 0, fortified = 1 };

struct QkdParams {
  int n_raw = 512;                  // qubits prepared per session
  double sacrifice_fraction = 0.25; // sifted-bit share compared in baseline mode
  double qber_threshold = 0.11;     // baseline key-discard threshold
  double p_noise = 0.0;             // intrinsic per-qubit flip probability
};

/// Outcome of one key-establishment round on a directed link.
struct QkdSessionResult {
  std::vector<std::uint8_t> sifted_tx;  // transmitter bits at matching-basis positions
  std::vector<std::uint8_t> sifted_rx;  // receiver bits at the same positions
  std::optional<double> qber_estimate;  // discrepancies / sacrificed, baseline only
  int sacrificed = 0;                   // bits publicly compared
  int discrepancies = 0;                // mismatches within the compared sample
  std::vector<std::uint8_t> key_tx;     // usable key material (sifted minus sacrificed)
  std::vector<std::uint8_t> key_rx;
};

/// Measure a qubit. A matching basis returns the prepared bit; a mismatched
/// basis collapses to a uniformly random bit from the stream.
std::uint8_t measure(const Qubit& q, Basis basis, RandomStream& rng);

/// One full BB84 round: preparation, channel (optional eavesdropper and
/// intrinsic noise), measurement, sifting, and, in baseline mode, sampled
/// error estimation. The eavesdropper acts whenever `eve.kind` is
/// intercept_resend with p_intercept > 0; window gating is the caller's job.
/// Throws EmptySiftedKey when sifting yields zero bits.
QkdSessionResult run_session(const QkdParams& params, const EveModel& eve, QkdMode mode,
                             RandomStream& rng);

enum class KeyDecision : std::uint8_t { accept = 0, discard = 1 };

/// Conventional post-processing rule: discard iff the estimate exceeds the
/// threshold (strict inequality).
KeyDecision baseline_accept(const QkdSessionResult& result, double threshold);

}  // namespace qmg
