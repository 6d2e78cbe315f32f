#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "qmg/config.hpp"
#include "qmg/graph.hpp"
#include "qmg/qkd.hpp"
#include "qmg/rng.hpp"
#include "qmg/runner.hpp"

namespace py = pybind11;
using namespace qmg;

namespace {

AdjacencyMatrix matrix_from_rows(const std::vector<std::vector<int>>& rows) {
  const int n = static_cast<int>(rows.size());
  AdjacencyMatrix m(n);
  for (int x = 0; x < n; ++x) {
    if (static_cast<int>(rows[static_cast<std::size_t>(x)].size()) != n)
      throw py::value_error("adjacency rows must form a square matrix");
    for (int y = 0; y < n; ++y)
      m.set(x, y, rows[static_cast<std::size_t>(x)][static_cast<std::size_t>(y)] ? 1 : 0);
  }
  m.validate();
  return m;
}

std::vector<std::vector<int>> matrix_to_rows(const AdjacencyMatrix& m) {
  std::vector<std::vector<int>> rows(static_cast<std::size_t>(m.n),
                                     std::vector<int>(static_cast<std::size_t>(m.n), 0));
  for (int x = 0; x < m.n; ++x)
    for (int y = 0; y < m.n; ++y) rows[static_cast<std::size_t>(x)][static_cast<std::size_t>(y)] = m.at(x, y);
  return rows;
}

std::vector<std::vector<double>> laplacian_rows(const std::vector<std::vector<int>>& rows) {
  AdjacencyMatrix m = matrix_from_rows(rows);
  std::vector<double> flat = laplacian(m);
  std::vector<std::vector<double>> out(static_cast<std::size_t>(m.n),
                                       std::vector<double>(static_cast<std::size_t>(m.n), 0.0));
  for (int x = 0; x < m.n; ++x)
    for (int y = 0; y < m.n; ++y)
      out[static_cast<std::size_t>(x)][static_cast<std::size_t>(y)] =
          flat[static_cast<std::size_t>(x) * m.n + y];
  return out;
}

}  // namespace

PYBIND11_MODULE(_qmgsim, m) {
  m.doc() = "Deterministic co-simulator for QKD-secured AC microgrids";

  py::register_exception<SingularGain>(m, "SingularGainError");
  py::register_exception<NoHealthyNode>(m, "NoHealthyNodeError");
  py::register_exception<EmptySiftedKey>(m, "EmptySiftedKeyError");
  py::register_exception<ConfigError>(m, "ScenarioError");

  m.def("laplacian", &laplacian_rows, py::arg("adjacency"),
        "In-degree Laplacian of a binary consumption matrix (list of rows).");

  m.def(
      "consensus_gain",
      [](const std::vector<std::vector<int>>& rows, const std::vector<double>& gains) {
        AdjacencyMatrix adj = matrix_from_rows(rows);
        return consensus_gain(adj, PinningVector{gains});
      },
      py::arg("adjacency"), py::arg("pinning"),
      "Consensus gain lower bound 1/(2*lambda_min(L+G)).");

  m.def(
      "is_valid_topology",
      [](const std::vector<std::vector<int>>& rows, const std::vector<double>& gains) {
        return is_valid_topology(matrix_from_rows(rows), PinningVector{gains});
      },
      py::arg("adjacency"), py::arg("pinning"),
      "True iff every node is reachable from a pinned node.");

  m.def(
      "perturb_matrix",
      [](const std::vector<std::vector<int>>& rows, const std::vector<bool>& flags, int healthy) {
        Perturbation p = healthy < 0 ? perturb_matrix(matrix_from_rows(rows), flags)
                                     : perturb_matrix(matrix_from_rows(rows), flags, healthy);
        return py::make_tuple(matrix_to_rows(p.matrix), matrix_to_rows(p.taint));
      },
      py::arg("adjacency"), py::arg("flags"), py::arg("healthy") = -1,
      "Dynamic matrix perturbation; returns (perturbed, taint). healthy < 0 "
      "selects the lowest-index unflagged node.");

  py::class_<QkdSessionResult>(m, "QkdSessionResult")
      .def_readonly("sifted_tx", &QkdSessionResult::sifted_tx)
      .def_readonly("sifted_rx", &QkdSessionResult::sifted_rx)
      .def_readonly("qber_estimate", &QkdSessionResult::qber_estimate)
      .def_readonly("sacrificed", &QkdSessionResult::sacrificed)
      .def_readonly("discrepancies", &QkdSessionResult::discrepancies)
      .def_readonly("key_tx", &QkdSessionResult::key_tx)
      .def_readonly("key_rx", &QkdSessionResult::key_rx);

  m.def(
      "run_qkd_session",
      [](int n_raw, const std::string& eve_kind, double p_intercept, double p_noise,
         const std::string& mode, double sacrifice_fraction, std::uint64_t seed) {
        QkdParams params;
        params.n_raw = n_raw;
        params.p_noise = p_noise;
        params.sacrifice_fraction = sacrifice_fraction;
        EveModel eve;
        if (eve_kind == "intercept") {
          eve.kind = EveKind::intercept_resend;
          eve.p_intercept = p_intercept;
        } else if (eve_kind != "none") {
          throw py::value_error("eve must be 'none' or 'intercept'");
        }
        QkdMode qmode;
        if (mode == "baseline")
          qmode = QkdMode::baseline;
        else if (mode == "fortified")
          qmode = QkdMode::fortified;
        else
          throw py::value_error("mode must be 'baseline' or 'fortified'");
        RandomStream rng(seed, "qkd/python");
        return run_session(params, eve, qmode, rng);
      },
      py::arg("n_raw") = 512, py::arg("eve") = "none", py::arg("p_intercept") = 1.0,
      py::arg("p_noise") = 0.0, py::arg("mode") = "fortified",
      py::arg("sacrifice_fraction") = 0.25, py::arg("seed") = 1,
      "One BB84 key-establishment round.");

  py::class_<TriggerEvent>(m, "TriggerEvent")
      .def_readonly("t", &TriggerEvent::t)
      .def_readonly("dg", &TriggerEvent::dg)
      .def_readonly("sources", &TriggerEvent::sources);

  py::class_<RunSummary>(m, "RunSummary")
      .def_readonly("n_dg", &RunSummary::n_dg)
      .def_readonly("converged", &RunSummary::converged)
      .def_readonly("diverged", &RunSummary::diverged)
      .def_readonly("t_diverged", &RunSummary::t_diverged)
      .def_readonly("onset_t", &RunSummary::onset_t)
      .def_readonly("max_freq_dev_post_onset", &RunSummary::max_freq_dev_post_onset)
      .def_readonly("max_freq_dev_final", &RunSummary::max_freq_dev_final)
      .def_readonly("p_droop_spread", &RunSummary::p_droop_spread)
      .def_readonly("q_droop_spread", &RunSummary::q_droop_spread)
      .def_readonly("triggers", &RunSummary::triggers)
      .def_readonly("first_trigger_t", &RunSummary::first_trigger_t)
      .def_readonly("matrix_sequence", &RunSummary::matrix_sequence)
      .def_readonly("link_mean_qber", &RunSummary::link_mean_qber)
      .def_readonly("k1", &RunSummary::k1)
      .def_readonly("rows_per_dg", &RunSummary::rows_per_dg)
      .def_readonly("out_dir", &RunSummary::out_dir)
      .def("matrices", [](const RunSummary& s) {
        std::vector<std::pair<int, std::vector<std::vector<int>>>> out;
        for (const AdjacencyMatrix& m : s.matrix_registry)
          out.emplace_back(m.id, matrix_to_rows(m));
        return out;
      });

  m.def(
      "check_scenario",
      [](const std::string& text) {
        ScenarioConfig cfg = parse_config(text);
        py::dict out;
        out["duration"] = cfg.duration;
        out["n_dg"] = cfg.n_dg;
        out["mode"] = cfg.mode == QkdMode::baseline ? "baseline" : "fortified";
        out["seed"] = cfg.seed;
        out["eve_attacks"] = cfg.eve_attacks.size();
        out["node_attacks"] = cfg.node_attacks.size();
        return out;
      },
      py::arg("text"), "Parse and validate scenario text; raises ScenarioError.");

  m.def(
      "run_scenario",
      [](const std::string& text, const std::string& out_dir, long long seed,
         const std::string& mode, bool quiet) {
        ScenarioConfig cfg = parse_config(text);
        if (!out_dir.empty()) cfg.out_dir = out_dir;
        if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
        if (!mode.empty())
          cfg.mode = mode == "baseline" ? QkdMode::baseline : QkdMode::fortified;
        return run(cfg, quiet);
      },
      py::arg("text"), py::arg("out_dir") = "", py::arg("seed") = -1, py::arg("mode") = "",
      py::arg("quiet") = true, "Run a scenario from config text; returns the summary.");
}
