#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "qmg/graph.hpp"
#include "qmg/rng.hpp"

using namespace qmg;

namespace {

std::vector<std::pair<int, int>> flow_edges(const AdjacencyMatrix& m) {
  std::vector<std::pair<int, int>> edges;  // (source, consumer): data flow direction
  for (int x = 0; x < m.n; ++x)
    for (int y = 0; y < m.n; ++y)
      if (m.at(x, y)) edges.push_back({y, x});
  return edges;
}

AdjacencyMatrix from_rows(const std::vector<std::vector<int>>& rows) {
  AdjacencyMatrix m(static_cast<int>(rows.size()));
  for (int x = 0; x < m.n; ++x)
    for (int y = 0; y < m.n; ++y)
      m.set(x, y, rows[static_cast<std::size_t>(x)][static_cast<std::size_t>(y)] ? 1 : 0);
  return m;
}

/// Random symmetric connected graph with one pinned node: a chain backbone
/// plus random extra edges.
struct RandomGraph {
  AdjacencyMatrix adj;
  PinningVector pin;
};

RandomGraph random_pinned_graph(RandomStream& rng) {
  int n = 2 + static_cast<int>(rng.next_below(7));  // 2..8
  AdjacencyMatrix adj(n);
  for (int i = 0; i + 1 < n; ++i) {
    adj.set(i, i + 1, 1);
    adj.set(i + 1, i, 1);
  }
  for (int x = 0; x < n; ++x)
    for (int y = x + 2; y < n; ++y)
      if (rng.bernoulli(0.5)) {
        adj.set(x, y, 1);
        adj.set(y, x, 1);
      }
  PinningVector pin;
  pin.gains.assign(static_cast<std::size_t>(n), 0.0);
  pin.gains[rng.next_below(static_cast<std::uint64_t>(n))] = 1.0;
  if (rng.bernoulli(0.3)) pin.gains[rng.next_below(static_cast<std::uint64_t>(n))] += 0.5;
  return {adj, pin};
}

}  // namespace

TEST_CASE("laplacian of the smallest symmetric graph") {
  AdjacencyMatrix m = AdjacencyMatrix::complete(2);
  std::vector<double> lap = laplacian(m);
  CHECK(lap == std::vector<double>{1.0, -1.0, -1.0, 1.0});
}

TEST_CASE("laplacian of an empty graph is zero") {
  AdjacencyMatrix m(3);
  for (double v : laplacian(m)) CHECK(v == 0.0);
}

TEST_CASE("laplacian of the complete 4-node graph") {
  std::vector<double> lap = laplacian(AdjacencyMatrix::complete(4));
  for (int x = 0; x < 4; ++x)
    for (int y = 0; y < 4; ++y) CHECK(lap[static_cast<std::size_t>(x) * 4 + y] == (x == y ? 3.0 : -1.0));
}

TEST_CASE("laplacian rows sum to zero for random matrices") {
  RandomStream rng(11, "graph/laplacian");
  for (int trial = 0; trial < 50; ++trial) {
    RandomGraph g = random_pinned_graph(rng);
    std::vector<double> lap = laplacian(g.adj);
    for (int x = 0; x < g.adj.n; ++x) {
      double row = 0.0;
      for (int y = 0; y < g.adj.n; ++y) row += lap[static_cast<std::size_t>(x) * g.adj.n + y];
      CHECK(row == 0.0);
    }
  }
}

TEST_CASE("consensus gain rejects an unpinned topology") {
  PinningVector none{std::vector<double>(4, 0.0)};
  CHECK_THROWS_AS(consensus_gain(AdjacencyMatrix::complete(4), none), SingularGain);
}

TEST_CASE("consensus gain on the 2-node graph matches the eigen oracle") {
  AdjacencyMatrix m = AdjacencyMatrix::complete(2);
  PinningVector pin = PinningVector::single(2, 0, 1.0);
  // L + G = [[2, -1], [-1, 1]]
  std::vector<double> ev = oracles::jacobi_eigenvalues({2.0, -1.0, -1.0, 1.0}, 2);
  double expected = 1.0 / (2.0 * ev[0]);
  double got = consensus_gain(m, pin);
  CHECK(got == doctest::Approx(expected).epsilon(1e-12));
  // Closed form of the smallest eigenvalue: (3 - sqrt(5)) / 2.
  CHECK(got == doctest::Approx(1.0 / (3.0 - std::sqrt(5.0))).epsilon(1e-12));
}

TEST_CASE("consensus gain on the complete 4-node graph matches the oracle") {
  AdjacencyMatrix m = AdjacencyMatrix::complete(4);
  PinningVector pin = PinningVector::single(4, 0, 1.0);
  std::vector<double> lg = laplacian(m);
  lg[0] += 1.0;
  std::vector<double> ev = oracles::jacobi_eigenvalues(lg, 4);
  CHECK(consensus_gain(m, pin) == doctest::Approx(1.0 / (2.0 * ev[0])).epsilon(1e-9));
}

TEST_CASE("consensus gain matches the oracle on 100 random pinned graphs") {
  RandomStream rng(101, "graph/gain");
  for (int trial = 0; trial < 100; ++trial) {
    RandomGraph g = random_pinned_graph(rng);
    std::vector<double> lg = laplacian(g.adj);
    for (int i = 0; i < g.adj.n; ++i)
      lg[static_cast<std::size_t>(i) * g.adj.n + i] += g.pin.gains[static_cast<std::size_t>(i)];
    std::vector<double> ev = oracles::jacobi_eigenvalues(lg, g.adj.n);
    double expected = 1.0 / (2.0 * ev[0]);
    CHECK(consensus_gain(g.adj, g.pin) ==
          doctest::Approx(expected).epsilon(1e-9));
  }
}

TEST_CASE("topology validity") {
  PinningVector g1 = PinningVector::single(4, 0, 1.0);
  CHECK(is_valid_topology(AdjacencyMatrix::complete(4), g1));

  AdjacencyMatrix isolated = AdjacencyMatrix::complete(4);
  for (int k = 0; k < 4; ++k) {
    isolated.set(3, k, 0);
    isolated.set(k, 3, 0);
  }
  CHECK_FALSE(is_valid_topology(isolated, g1));

  // Directed chain: each DG consumes from its predecessor.
  AdjacencyMatrix chain(4);
  chain.set(1, 0, 1);
  chain.set(2, 1, 1);
  chain.set(3, 2, 1);
  CHECK(is_valid_topology(chain, g1));
  CHECK(oracles::reaches_all(4, flow_edges(chain), {0}));
  CHECK_FALSE(is_valid_topology(chain, PinningVector::single(4, 3, 1.0)));
}

TEST_CASE("perturbation of the complete graph, single flagged node") {
  AdjacencyMatrix base = AdjacencyMatrix::complete(4);
  std::vector<bool> flags{false, true, false, false};
  Perturbation p = perturb_matrix(base, flags, 0);

  AdjacencyMatrix expected = from_rows({{0, 0, 1, 1}, {1, 0, 0, 0}, {1, 0, 0, 1}, {1, 0, 1, 0}});
  CHECK(p.matrix.same_edges(expected));
  for (int x = 0; x < 4; ++x)
    for (int y = 0; y < 4; ++y) {
      CHECK(p.taint.at(x, y) == ((y == 1 && x != 1) ? 1 : 0));
      CHECK((p.matrix.at(x, y) & p.taint.at(x, y)) == 0);
    }
}

TEST_CASE("perturbation with three flagged nodes is the star") {
  AdjacencyMatrix base = AdjacencyMatrix::complete(4);
  std::vector<bool> flags{false, true, true, true};
  Perturbation p = perturb_matrix(base, flags, 0);
  AdjacencyMatrix star = from_rows({{0, 0, 0, 0}, {1, 0, 0, 0}, {1, 0, 0, 0}, {1, 0, 0, 0}});
  CHECK(p.matrix.same_edges(star));
  for (int x = 0; x < 4; ++x)
    for (int y = 0; y < 4; ++y) CHECK((p.matrix.at(x, y) & p.taint.at(x, y)) == 0);
}

TEST_CASE("perturbation with every node flagged has no target") {
  CHECK_THROWS_AS(perturb_matrix(AdjacencyMatrix::complete(4), {true, true, true, true}),
                  NoHealthyNode);
}

TEST_CASE("orphaned healthy sources are re-read by the healthy node") {
  // Ring of consumption: 1<-2<-3<-4<-1; cutting node 2 orphans node 3.
  AdjacencyMatrix ring(4);
  ring.set(0, 1, 1);
  ring.set(1, 2, 1);
  ring.set(2, 3, 1);
  ring.set(3, 0, 1);
  Perturbation p = perturb_matrix(ring, {false, true, false, false}, 0);
  CHECK(p.matrix.at(0, 2) == 1);  // healthy b consumes the orphaned source
  CHECK(oracles::reaches_all(4, flow_edges(p.matrix), {0}));
}

TEST_CASE("perturbation properties hold exhaustively on the complete graph") {
  for (int n : {4, 6}) {
    AdjacencyMatrix base = AdjacencyMatrix::complete(n);
    for (unsigned mask = 1; mask < (1u << n); ++mask) {
      std::vector<bool> flags(static_cast<std::size_t>(n), false);
      int count = 0;
      for (int i = 0; i < n; ++i)
        if (mask & (1u << i)) {
          flags[static_cast<std::size_t>(i)] = true;
          ++count;
        }
      if (count >= n) continue;
      for (int b = 0; b < n; ++b) {
        if (flags[static_cast<std::size_t>(b)]) continue;
        Perturbation p = perturb_matrix(base, flags, b);
        for (int x = 0; x < n; ++x)
          for (int y = 0; y < n; ++y) REQUIRE((p.matrix.at(x, y) & p.taint.at(x, y)) == 0);
        // Every flagged node hears the healthy node (search, not construction).
        std::vector<std::pair<int, int>> edges = flow_edges(p.matrix);
        std::vector<bool> reached(static_cast<std::size_t>(n), false);
        reached[static_cast<std::size_t>(b)] = true;
        std::vector<int> stack{b};
        while (!stack.empty()) {
          int u = stack.back();
          stack.pop_back();
          for (const auto& [from, to] : edges)
            if (from == u && !reached[static_cast<std::size_t>(to)]) {
              reached[static_cast<std::size_t>(to)] = true;
              stack.push_back(to);
            }
        }
        for (int a = 0; a < n; ++a)
          if (flags[static_cast<std::size_t>(a)]) REQUIRE(reached[static_cast<std::size_t>(a)]);
        // Idempotence on its own output.
        Perturbation again = perturb_matrix(p.matrix, flags, b);
        REQUIRE(again.matrix.same_edges(p.matrix));
      }
    }
  }
}

TEST_CASE("adjacency invariants are enforced") {
  AdjacencyMatrix bad(3);
  bad.set(1, 1, 1);
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  AdjacencyMatrix tiny(1);
  CHECK_THROWS_AS(tiny.validate(), std::invalid_argument);
}
