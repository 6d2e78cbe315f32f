#pragma once

// Test-only oracles, independent of the library's implementation paths.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

namespace oracles {

/// Cyclic Jacobi eigenvalue iteration for a symmetric matrix (row-major).
/// Brute-force reference for small n; returns eigenvalues sorted ascending.
inline std::vector<double> jacobi_eigenvalues(std::vector<double> a, int n) {
  auto idx = [n](int i, int j) { return static_cast<std::size_t>(i) * n + j; };
  for (int sweep = 0; sweep < 200; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q) off += a[idx(p, q)] * a[idx(p, q)];
    if (off < 1e-28) break;
    for (int p = 0; p < n; ++p) {
      for (int q = p + 1; q < n; ++q) {
        double apq = a[idx(p, q)];
        if (std::abs(apq) < 1e-300) continue;
        double tau = (a[idx(q, q)] - a[idx(p, p)]) / (2.0 * apq);
        double t = (tau >= 0.0 ? 1.0 : -1.0) / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
        double c = 1.0 / std::sqrt(1.0 + t * t);
        double s = t * c;
        for (int k = 0; k < n; ++k) {
          double akp = a[idx(k, p)], akq = a[idx(k, q)];
          a[idx(k, p)] = c * akp - s * akq;
          a[idx(k, q)] = s * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          double apk = a[idx(p, k)], aqk = a[idx(q, k)];
          a[idx(p, k)] = c * apk - s * aqk;
          a[idx(q, k)] = s * apk + c * aqk;
        }
      }
    }
  }
  std::vector<double> ev(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) ev[static_cast<std::size_t>(i)] = a[idx(i, i)];
  std::sort(ev.begin(), ev.end());
  return ev;
}

/// Four binomial standard deviations of a frequency estimate.
inline double four_sigma(double p, double n) { return 4.0 * std::sqrt(p * (1.0 - p) / n); }

/// Plain breadth-first reachability over explicit directed edges
/// (edge (u, v) means u's data reaches v).
inline bool reaches_all(int n, const std::vector<std::pair<int, int>>& edges,
                        const std::vector<int>& roots) {
  std::vector<bool> seen(static_cast<std::size_t>(n), false);
  std::vector<int> stack(roots);
  for (int r : roots) seen[static_cast<std::size_t>(r)] = true;
  while (!stack.empty()) {
    int u = stack.back();
    stack.pop_back();
    for (const auto& [from, to] : edges)
      if (from == u && !seen[static_cast<std::size_t>(to)]) {
        seen[static_cast<std::size_t>(to)] = true;
        stack.push_back(to);
      }
  }
  return std::all_of(seen.begin(), seen.end(), [](bool b) { return b; });
}

}  // namespace oracles
