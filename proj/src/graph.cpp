#include "qmg/graph.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <stdexcept>

namespace qmg {

AdjacencyMatrix AdjacencyMatrix::complete(int nodes, int label) {
  AdjacencyMatrix m(nodes, label);
  for (int x = 0; x < nodes; ++x)
    for (int y = 0; y < nodes; ++y)
      if (x != y) m.set(x, y, 1);
  return m;
}

void AdjacencyMatrix::validate() const {
  if (n < 2) throw std::invalid_argument("adjacency matrix needs n >= 2");
  if (entries.size() != static_cast<std::size_t>(n) * n)
    throw std::invalid_argument("adjacency matrix entry count mismatch");
  for (int x = 0; x < n; ++x) {
    for (int y = 0; y < n; ++y) {
      std::uint8_t v = at(x, y);
      if (v != 0 && v != 1) throw std::invalid_argument("adjacency entries must be 0 or 1");
      if (x == y && v != 0) throw std::invalid_argument("adjacency diagonal must be zero");
    }
  }
}

PinningVector PinningVector::single(int n, int pinned_node, double gain) {
  PinningVector p;
  p.gains.assign(static_cast<std::size_t>(n), 0.0);
  p.gains.at(static_cast<std::size_t>(pinned_node)) = gain;
  return p;
}

bool PinningVector::any_pinned() const {
  return std::any_of(gains.begin(), gains.end(), [](double g) { return g > 0.0; });
}

std::vector<double> laplacian(const AdjacencyMatrix& adj) {
  const int n = adj.n;
  std::vector<double> lap(static_cast<std::size_t>(n) * n, 0.0);
  for (int x = 0; x < n; ++x) {
    double degree = 0.0;
    for (int y = 0; y < n; ++y) {
      if (x == y) continue;
      if (adj.at(x, y)) {
        lap[static_cast<std::size_t>(x) * n + y] = -1.0;
        degree += 1.0;
      }
    }
    lap[static_cast<std::size_t>(x) * n + x] = degree;
  }
  return lap;
}

namespace {

bool is_symmetric(const AdjacencyMatrix& adj) {
  for (int x = 0; x < adj.n; ++x)
    for (int y = x + 1; y < adj.n; ++y)
      if (adj.at(x, y) != adj.at(y, x)) return false;
  return true;
}

}  // namespace

double consensus_gain(const AdjacencyMatrix& adj, const PinningVector& pin) {
  adj.validate();
  const int n = adj.n;
  if (static_cast<int>(pin.gains.size()) != n)
    throw std::invalid_argument("pinning vector length mismatch");

  std::vector<double> lap = laplacian(adj);
  Eigen::MatrixXd m(n, n);
  for (int x = 0; x < n; ++x)
    for (int y = 0; y < n; ++y) m(x, y) = lap[static_cast<std::size_t>(x) * n + y];
  for (int x = 0; x < n; ++x) m(x, x) += pin.gains[static_cast<std::size_t>(x)];

  double lambda_min;
  if (is_symmetric(adj)) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(m, Eigen::EigenvaluesOnly);
    lambda_min = solver.eigenvalues()(0);
  } else {
    // Directed topology: L + G is not symmetric; use the smallest real part.
    Eigen::EigenSolver<Eigen::MatrixXd> solver(m, false);
    lambda_min = solver.eigenvalues()(0).real();
    for (int i = 1; i < n; ++i) lambda_min = std::min(lambda_min, solver.eigenvalues()(i).real());
  }

  if (lambda_min <= kGainTolerance)
    throw SingularGain("lambda_min(L+G) <= tolerance; topology cannot carry the reference");
  return 1.0 / (2.0 * lambda_min);
}

bool is_valid_topology(const AdjacencyMatrix& adj, const PinningVector& pin) {
  const int n = adj.n;
  if (n < 2 || static_cast<int>(pin.gains.size()) != n) return false;

  std::vector<bool> reached(static_cast<std::size_t>(n), false);
  std::vector<int> queue;
  for (int x = 0; x < n; ++x) {
    if (pin.gains[static_cast<std::size_t>(x)] > 0.0) {
      reached[static_cast<std::size_t>(x)] = true;
      queue.push_back(x);
    }
  }
  // Information flows from y to every x consuming y: adj(x, y) = 1.
  while (!queue.empty()) {
    int y = queue.back();
    queue.pop_back();
    for (int x = 0; x < n; ++x) {
      if (!reached[static_cast<std::size_t>(x)] && adj.at(x, y)) {
        reached[static_cast<std::size_t>(x)] = true;
        queue.push_back(x);
      }
    }
  }
  return std::all_of(reached.begin(), reached.end(), [](bool r) { return r; });
}

int choose_healthy(const std::vector<bool>& flags) {
  for (std::size_t i = 0; i < flags.size(); ++i)
    if (!flags[i]) return static_cast<int>(i);
  throw NoHealthyNode("every node is flagged");
}

Perturbation perturb_matrix(const AdjacencyMatrix& active, const std::vector<bool>& flags,
                            int healthy_b) {
  active.validate();
  const int n = active.n;
  if (static_cast<int>(flags.size()) != n) throw std::invalid_argument("flag vector length mismatch");
  if (healthy_b < 0 || healthy_b >= n) throw std::invalid_argument("healthy node out of range");
  if (flags[static_cast<std::size_t>(healthy_b)])
    throw std::invalid_argument("healthy node must be unflagged");
  if (std::none_of(flags.begin(), flags.end(), [](bool f) { return f; }))
    throw std::invalid_argument("at least one node must be flagged");

  Perturbation out{active, AdjacencyMatrix(n)};
  for (int a = 0; a < n; ++a) {
    if (!flags[static_cast<std::size_t>(a)]) continue;
    // Cut a out of the information flow, then re-attach it to b.
    for (int k = 0; k < n; ++k) {
      out.matrix.set(a, k, 0);
      out.matrix.set(k, a, 0);
    }
    out.matrix.set(a, healthy_b, 1);
    // Column a of the taint matrix: every edge that would carry a's data.
    for (int x = 0; x < n; ++x)
      if (x != a) out.taint.set(x, a, 1);
  }
  // Healthy columns orphaned by the cut: b keeps consuming their data.
  for (int y = 0; y < n; ++y) {
    if (y == healthy_b || flags[static_cast<std::size_t>(y)]) continue;
    bool consumed = false;
    for (int x = 0; x < n; ++x)
      if (out.matrix.at(x, y)) consumed = true;
    if (!consumed) out.matrix.set(healthy_b, y, 1);
  }
  for (int x = 0; x < n; ++x)
    for (int y = 0; y < n; ++y)
      if (out.matrix.at(x, y) && out.taint.at(x, y))
        throw std::logic_error("perturbed matrix overlaps taint matrix");
  return out;
}

Perturbation perturb_matrix(const AdjacencyMatrix& active, const std::vector<bool>& flags) {
  return perturb_matrix(active, flags, choose_healthy(flags));
}

}  // namespace qmg
