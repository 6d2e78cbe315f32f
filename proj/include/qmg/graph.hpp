#pragma once

#include <cstdint>
#include <vector>

#include "qmg/errors.hpp"

namespace qmg {

/// N x N binary consumption matrix: entry (x, y) = 1 means DG x consumes
/// measurements originating from DG y. Diagonal is always zero.
struct AdjacencyMatrix {
  int n = 0;
  std::vector<std::uint8_t> entries;  // row-major, n*n
  int id = 0;                         // small label assigned by the guard registry

  AdjacencyMatrix() = default;
  AdjacencyMatrix(int nodes, int label = 0)
      : n(nodes), entries(static_cast<std::size_t>(nodes) * nodes, 0), id(label) {}

  std::uint8_t at(int x, int y) const { return entries[static_cast<std::size_t>(x) * n + y]; }
  void set(int x, int y, std::uint8_t v) { entries[static_cast<std::size_t>(x) * n + y] = v; }

  /// Fully connected consumption graph (every off-diagonal entry 1).
  static AdjacencyMatrix complete(int nodes, int label = 1);

  bool same_edges(const AdjacencyMatrix& other) const {
    return n == other.n && entries == other.entries;
  }

  /// Throws std::invalid_argument on an invariant breach (n < 2, nonzero
  /// diagonal, entries outside {0, 1}).
  void validate() const;
};

/// Per-node non-negative pinning gains coupling leader nodes to the reference.
struct PinningVector {
  std::vector<double> gains;

  static PinningVector single(int n, int pinned_node, double gain = 1.0);
  bool any_pinned() const;
};

/// In-degree Laplacian, row-major n*n: diagonal holds each row's in-degree,
/// entry (x, y) = -adj(x, y). Every row sums to zero.
std::vector<double> laplacian(const AdjacencyMatrix& adj);

/// Consensus gain lower bound 1 / (2 * lambda_min(L + diag(gains))).
/// Throws SingularGain when lambda_min is at or below tolerance (no pinning,
/// or a topology through which the reference cannot reach every node).
double consensus_gain(const AdjacencyMatrix& adj, const PinningVector& pin);

/// Eigenvalue magnitudes at or below this are treated as zero: separates the
/// Laplacian kernel from genuinely small pinned eigenvalues at double precision.
inline constexpr double kGainTolerance = 1e-9;

/// True iff every node is reachable from some pinned node following the
/// direction of information flow (y's data reaches x when adj(x, y) = 1).
bool is_valid_topology(const AdjacencyMatrix& adj, const PinningVector& pin);

struct Perturbation {
  AdjacencyMatrix matrix;  // perturbed consumption matrix
  AdjacencyMatrix taint;   // error-propagation matrix: edges carrying flagged data
};

/// Lowest-index unflagged node. Throws NoHealthyNode if every node is flagged.
int choose_healthy(const std::vector<bool>& flags);

/// Dynamic matrix perturbation. Every flagged node a is cut out of the active
/// matrix (row and column zeroed) and re-attached as a follower of healthy
/// node b (entry (a, b) = 1). The taint matrix marks column a for every
/// flagged a (all edges that would disseminate a's data); its overlap with the
/// returned matrix is structurally empty. Healthy columns orphaned by the cut
/// are re-read by b so their data stays in the loop.
Perturbation perturb_matrix(const AdjacencyMatrix& active, const std::vector<bool>& flags,
                            int healthy_b);

/// Convenience overload choosing b as the lowest-index unflagged node.
/// Throws NoHealthyNode when every node is flagged.
Perturbation perturb_matrix(const AdjacencyMatrix& active, const std::vector<bool>& flags);

}  // namespace qmg
