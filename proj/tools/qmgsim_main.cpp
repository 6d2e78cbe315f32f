#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "qmg/config.hpp"
#include "qmg/graph.hpp"
#include "qmg/qkd.hpp"
#include "qmg/rng.hpp"
#include "qmg/runner.hpp"

namespace {

int cmd_run(const std::string& scenario, const std::string& out_override, long long seed_override,
            const std::string& mode_override, bool quiet) {
  qmg::ScenarioConfig cfg = qmg::load_scenario_file(scenario);
  if (seed_override >= 0) cfg.seed = static_cast<std::uint64_t>(seed_override);
  if (!mode_override.empty())
    cfg.mode = mode_override == "baseline" ? qmg::QkdMode::baseline : qmg::QkdMode::fortified;
  if (!out_override.empty()) {
    cfg.out_dir = out_override;
  } else if (const char* env = std::getenv("QMGSIM_OUT_DIR"); env && *env) {
    cfg.out_dir = env;
  }

  qmg::RunSummary summary = qmg::run(cfg, quiet);
  if (!quiet) std::fprintf(stderr, "wrote %s\n", summary.out_dir.c_str());
  std::printf("converged=%d diverged=%d triggers=%zu matrices=", summary.converged ? 1 : 0,
              summary.diverged ? 1 : 0, summary.triggers.size());
  for (std::size_t i = 0; i < summary.matrix_sequence.size(); ++i)
    std::printf("%s%d", i ? ">" : "", summary.matrix_sequence[i]);
  std::printf("\n");
  return 0;
}

bool reaches_all_flagged(const qmg::AdjacencyMatrix& m, const std::vector<bool>& flags, int b) {
  std::vector<bool> reached(static_cast<std::size_t>(m.n), false);
  std::vector<int> stack{b};
  reached[static_cast<std::size_t>(b)] = true;
  while (!stack.empty()) {
    int y = stack.back();
    stack.pop_back();
    for (int x = 0; x < m.n; ++x)
      if (!reached[static_cast<std::size_t>(x)] && m.at(x, y)) {
        reached[static_cast<std::size_t>(x)] = true;
        stack.push_back(x);
      }
  }
  for (int a = 0; a < m.n; ++a)
    if (flags[static_cast<std::size_t>(a)] && !reached[static_cast<std::size_t>(a)]) return false;
  return true;
}

/// Exhaustive certification of the perturbation over every non-empty flag
/// subset of bounded size and every healthy choice.
int cmd_verify() {
  struct Case {
    int n;
    int max_flags;
  };
  const std::vector<Case> cases = {{4, 3}, {6, 5}};
  long total = 0, failures = 0;

  for (const Case& c : cases) {
    long checked = 0;
    for (unsigned mask = 1; mask < (1u << c.n); ++mask) {
      std::vector<bool> flags(static_cast<std::size_t>(c.n), false);
      int n_flags = 0;
      for (int i = 0; i < c.n; ++i)
        if (mask & (1u << i)) {
          flags[static_cast<std::size_t>(i)] = true;
          ++n_flags;
        }
      if (n_flags == 0 || n_flags > c.max_flags) continue;
      for (int b = 0; b < c.n; ++b) {
        if (flags[static_cast<std::size_t>(b)]) continue;
        qmg::AdjacencyMatrix base = qmg::AdjacencyMatrix::complete(c.n, 1);
        qmg::Perturbation pert = qmg::perturb_matrix(base, flags, b);
        ++checked;
        ++total;

        bool ok = true;
        for (int x = 0; x < c.n && ok; ++x)
          for (int y = 0; y < c.n && ok; ++y)
            if (pert.matrix.at(x, y) && pert.taint.at(x, y)) ok = false;
        if (!reaches_all_flagged(pert.matrix, flags, b)) ok = false;

        qmg::Perturbation again = qmg::perturb_matrix(pert.matrix, flags, b);
        if (!again.matrix.same_edges(pert.matrix)) ok = false;

        std::vector<double> lap = qmg::laplacian(pert.matrix);
        for (int x = 0; x < c.n; ++x) {
          double row = 0.0;
          for (int y = 0; y < c.n; ++y) row += lap[static_cast<std::size_t>(x) * c.n + y];
          if (std::abs(row) > 1e-12) ok = false;
        }

        if (!ok) {
          ++failures;
          std::printf("FAIL n=%d flags_mask=%u b=%d\n", c.n, mask, b);
        }
      }
    }
    std::printf("%s n=%d, flag subsets up to %d, %ld cases\n", failures == 0 ? "PASS" : "FAIL",
                c.n, c.max_flags, checked);
  }
  std::printf("%s matrix perturbation certification (%ld cases, %ld failures)\n",
              failures == 0 ? "PASS" : "FAIL", total, failures);
  return failures == 0 ? 0 : 1;
}

int cmd_qber(int n_raw, const std::string& eve_kind, double p_intercept, double p_noise,
             int sessions, long long seed) {
  qmg::QkdParams params;
  params.n_raw = n_raw;
  params.p_noise = p_noise;
  qmg::EveModel eve;
  if (eve_kind == "intercept") {
    eve.kind = qmg::EveKind::intercept_resend;
    eve.p_intercept = p_intercept;
  }

  qmg::RandomStream rng(static_cast<std::uint64_t>(seed), "qkd/report");
  long long sifted_total = 0, sampled_total = 0, mismatch_sampled = 0, mismatch_sifted = 0;
  for (int s = 0; s < sessions; ++s) {
    qmg::QkdSessionResult r = qmg::run_session(params, eve, qmg::QkdMode::baseline, rng);
    sifted_total += static_cast<long long>(r.sifted_tx.size());
    sampled_total += r.sacrificed;
    mismatch_sampled += r.discrepancies;
    for (std::size_t i = 0; i < r.sifted_tx.size(); ++i)
      if (r.sifted_tx[i] != r.sifted_rx[i]) ++mismatch_sifted;
  }

  double raw_total = static_cast<double>(sessions) * n_raw;
  double sift_fraction = static_cast<double>(sifted_total) / raw_total;
  double qber_sampled = sampled_total > 0
                            ? static_cast<double>(mismatch_sampled) / static_cast<double>(sampled_total)
                            : 0.0;
  double qber_true = sifted_total > 0
                         ? static_cast<double>(mismatch_sifted) / static_cast<double>(sifted_total)
                         : 0.0;

  std::printf("sessions:        %d x %d raw qubits\n", sessions, n_raw);
  std::printf("sift fraction:   %.6f  (expected 0.5)\n", sift_fraction);
  std::printf("sampled QBER:    %.6f  (%lld of %lld bits)\n", qber_sampled, mismatch_sampled,
              sampled_total);
  std::printf("sifted error:    %.6f  (%lld of %lld bits)\n", qber_true, mismatch_sifted,
              sifted_total);

  int rc = 0;
  double sigma_sift = 4.0 * std::sqrt(0.25 / raw_total);
  if (std::abs(sift_fraction - 0.5) > sigma_sift) {
    std::printf("FAIL sift fraction outside 0.5 +/- %.6f\n", sigma_sift);
    rc = 1;
  }
  if (p_noise == 0.0) {
    double expected = eve.kind == qmg::EveKind::none ? 0.0 : p_intercept / 4.0;
    double sigma = 4.0 * std::sqrt(std::max(expected * (1.0 - expected), 1e-12) /
                                   std::max(1.0, static_cast<double>(sampled_total)));
    std::printf("expected QBER:   %.6f +/- %.6f (4 sigma)\n", expected, sigma);
    if (std::abs(qber_sampled - expected) > (expected == 0.0 ? 1e-12 : sigma)) {
      std::printf("FAIL sampled QBER outside expectation\n");
      rc = 1;
    } else {
      std::printf("PASS within 4 sigma\n");
    }
  }
  return rc;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"QKD-secured microgrid co-simulator"};
  app.require_subcommand(1);

  std::string scenario, out_dir, mode;
  long long seed = -1;
  bool quiet = false;
  CLI::App* run_cmd = app.add_subcommand("run", "Execute a scenario file");
  run_cmd->add_option("--scenario", scenario, "Scenario config file")->required();
  run_cmd->add_option("--seed", seed, "Override the scenario seed");
  run_cmd->add_option("--out", out_dir, "Output directory (overrides QMGSIM_OUT_DIR and config)");
  run_cmd->add_option("--mode", mode, "Override the mode")
      ->check(CLI::IsMember({"baseline", "fortified"}));
  run_cmd->add_flag("--quiet", quiet, "Suppress progress output");

  CLI::App* verify_cmd =
      app.add_subcommand("verify", "Exhaustive certification of the matrix perturbation");

  int n_raw = 16384, sessions = 50;
  double p_intercept = 1.0, p_noise = 0.0;
  std::string eve_kind = "none";
  long long qber_seed = 42;
  CLI::App* qber_cmd = app.add_subcommand("qber", "QKD session statistics report");
  qber_cmd->add_option("--n", n_raw, "Raw qubits per session")->check(CLI::Range(16, 1 << 24));
  qber_cmd->add_option("--eve", eve_kind, "Eavesdropper model")
      ->check(CLI::IsMember({"none", "intercept"}));
  qber_cmd->add_option("--p-intercept", p_intercept, "Interception probability")
      ->check(CLI::Range(0.0, 1.0));
  qber_cmd->add_option("--p-noise", p_noise, "Intrinsic flip probability")
      ->check(CLI::Range(0.0, 1.0));
  qber_cmd->add_option("--sessions", sessions, "Number of sessions")->check(CLI::Range(1, 100000));
  qber_cmd->add_option("--seed", qber_seed, "Random seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run_cmd->parsed()) return cmd_run(scenario, out_dir, seed, mode, quiet);
    if (verify_cmd->parsed()) return cmd_verify();
    if (qber_cmd->parsed()) return cmd_qber(n_raw, eve_kind, p_intercept, p_noise, sessions, qber_seed);
  } catch (const qmg::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
